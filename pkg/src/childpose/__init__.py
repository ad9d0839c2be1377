"""Height-personalized focal length calibration for multi-person 3D pose
reconstruction, and evaluation of reconstructed skeletons."""

__version__ = "0.1.0"

from .body import Convention, Mesh, Role, Skeleton
from .calibration import (FocalSample, HeightFocalPoint, LinearModel, PersonProfile, RansacConfig,
                          focal_sample_from_window, predict_focal, ransac_fit, weight_from_depth,
                          weighted_loss, weighted_r2)
from .geometry import (BoundingBox, CameraIntrinsics, TiltModel, TranslationVector, WeakPerspectiveCam,
                       apply_tilt, bbox_geometry, depth_from_scale, fit_tilt, focal_from_known_depth,
                       project_point, translation_vector)

__all__ = [
    "BoundingBox", "CameraIntrinsics", "Convention", "FocalSample", "HeightFocalPoint", "LinearModel",
    "Mesh", "PersonProfile", "RansacConfig", "Role", "Skeleton", "TiltModel", "TranslationVector",
    "WeakPerspectiveCam", "apply_tilt", "bbox_geometry", "depth_from_scale", "fit_tilt",
    "focal_from_known_depth", "focal_sample_from_window", "predict_focal", "project_point", "ransac_fit",
    "translation_vector", "weight_from_depth", "weighted_loss", "weighted_r2",
]

"""Command-line entry point: ``childpose <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .calibration import (RansacConfig, LinearModel, focal_sample_from_window, load_model, personalize,
                          predict_focal, ransac_fit, save_model)
from .errors import ChildPoseError
from .io import (depth_svg, load_session, read_points_csv, save_session, write_depth_csv, write_eval_csv,
                 write_points_csv)
from .metrics import evaluate_sessions, fit_session_tilt, session_depth_trace
from .simulate import SimConfig, simulate, write_simulation
from .skeleton import retranslate_session

log = logging.getLogger("childpose")


def _parse_window(text: str):
    try:
        person, start, end, depth = text.rsplit(":", 3)
        return person, int(start), int(end), float(depth)
    except ValueError:
        raise argparse.ArgumentTypeError(f"window must be PERSON:START:END:DEPTH, got {text!r}") from None


def cmd_calibrate_focal(args) -> int:
    session = load_session(args.session)
    windows = list(args.window or [])
    if args.windows_file:
        for line in Path(args.windows_file).read_text(encoding="utf-8").splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                windows.append(_parse_window(line))
    if not windows:
        raise ChildPoseError("no calibration window given (--window or --windows-file)")
    rows = []
    for person, start, end, depth in windows:
        dets = [d for fr in session.frames if start <= fr.index <= end
                for d in fr.people if d.person_id == person]
        sample = focal_sample_from_window(dets, depth, session.camera.mu, person, (start, end))
        rows.append((sample, session.person(person).height))
        print(f"{person}\tZ={depth:.3f} m\tf={sample.measured_f:.2f} px\t({len(dets)} frames)")
    write_points_csv(rows, args.output)
    return 0


def _report(model: LinearModel, n_points: int) -> str:
    return "\n".join([
        f"{'R^2':>8} {'Slope':>10} {'Intercept':>10}",
        f"{model.r2:8.4f} {model.slope:10.2f} {model.intercept:10.2f}",
        f"inliers {len(model.inliers)}/{n_points}: {list(model.inliers)}",
    ])


def cmd_fit_height_model(args) -> int:
    points = read_points_csv(args.points)
    cfg = RansacConfig(args.threshold, args.max_iterations, args.seed)
    model = ransac_fit(points, cfg)
    save_model(model, args.output, cfg)
    print(_report(model, len(points)))
    return 0


def cmd_predict_focal(args) -> int:
    if args.model:
        model = load_model(args.model)
    elif args.slope is not None and args.intercept is not None:
        model = LinearModel(args.slope, args.intercept)
    else:
        raise ChildPoseError("give --model or both --slope and --intercept")
    for h in args.height:
        f = predict_focal(model, h)
        print(f"{f:.2f}" if len(args.height) == 1 else f"{h:g}\t{f:.2f}")
    return 0


def cmd_retranslate(args) -> int:
    session = load_session(args.session)
    profiles = session.persons
    if args.model:
        profiles = personalize(profiles, load_model(args.model))
    out = retranslate_session(session, profiles)
    save_session(out, args.output)
    for p in out.persons:
        if p.personalized_f is not None:
            print(f"{p.id}\t{p.role.value}\t{p.height:.2f} m\tf={p.personalized_f:.2f}")
    return 0


def cmd_eval(args) -> int:
    gt, est = load_session(args.gt), load_session(args.est)
    tilt = fit_session_tilt(gt, est) if args.fit_tilt else None
    if tilt is not None:
        print(f"tilt correction: y -= {tilt.slope_m:.6f} * z + {tilt.offset_b:.6f}")
    report = evaluate_sessions(gt, est, default_radius=args.default_radius,
                               centroid_compensation=not args.no_centroid, person=args.person, tilt=tilt)
    write_eval_csv(report, args.output)
    print(f"mean_rmse_m\t{report.mean_rmse:.6f}")
    print(f"mean_dice_therapist\t{report.mean_dice_therapist:.6f}")
    print(f"mean_dice_child\t{report.mean_dice_child:.6f}")
    print(f"detection_pct\t{report.detection_rate:.6f}")
    return 0


def cmd_depth_trace(args) -> int:
    session = load_session(args.session)
    frames, depths = session_depth_trace(session, args.person, args.joint)
    write_depth_csv(frames, depths, args.output)
    if args.svg:
        Path(args.svg).write_text(depth_svg(frames, depths), encoding="utf-8")
    return 0


def _sim_config(args) -> SimConfig:
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ChildPoseError(f"{args.config}: {exc}") from None
        if "persons" in doc:
            doc["persons"] = tuple((float(h), str(r)) for h, r in doc["persons"])
        if "waypoints" in doc:
            doc["waypoints"] = tuple(doc["waypoints"])
    overrides = {
        "seed": args.seed, "noise_s": args.noise_s, "noise_bbox": args.noise_bbox,
        "outlier_fraction": args.outlier_fraction, "frames_per_waypoint": args.frames_per_waypoint,
        "base_focal": args.base_focal,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if args.waypoints:
        doc["waypoints"] = tuple(float(z) for z in args.waypoints.split(","))
    if args.person:
        people = []
        for item in args.person:
            height, _, role = item.partition(":")
            people.append((float(height), role or "therapist"))
        doc["persons"] = tuple(people)
    try:
        return SimConfig(**doc)
    except TypeError as exc:
        raise ChildPoseError(f"bad simulation config: {exc}") from None


def cmd_simulate(args) -> int:
    cfg = _sim_config(args)
    frames = simulate(cfg)
    gt, est = write_simulation(frames, cfg, args.out_dir, dropout=args.dropout, dropout_seed=args.dropout_seed)
    print(f"wrote {len(frames)} frames: {gt} {est}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="childpose", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log info messages")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("calibrate-focal", help="focal samples from known-depth frame windows")
    s.add_argument("session")
    s.add_argument("--window", action="append", type=_parse_window, metavar="PERSON:START:END:DEPTH",
                   help="inclusive frame range where PERSON stands at DEPTH meters (repeatable)")
    s.add_argument("--windows-file", help="file with one PERSON:START:END:DEPTH per line")
    s.add_argument("-o", "--output", required=True, help="points CSV")
    s.set_defaults(func=cmd_calibrate_focal)

    s = sub.add_parser("fit-height-model", help="RANSAC fit of focal length against height")
    s.add_argument("points", help="CSV with height_m, focal_px and weight or known_depth_m")
    s.add_argument("-o", "--output", required=True, help="model JSON")
    s.add_argument("--threshold", type=float, default=20.0, help="inlier threshold in pixels")
    s.add_argument("--max-iterations", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_fit_height_model)

    s = sub.add_parser("predict-focal", help="personalized focal length for a height")
    s.add_argument("--model")
    s.add_argument("--slope", type=float)
    s.add_argument("--intercept", type=float)
    s.add_argument("--height", type=float, action="append", required=True, help="meters (repeatable)")
    s.set_defaults(func=cmd_predict_focal)

    s = sub.add_parser("retranslate", help="re-place skeletons with personalized focal lengths")
    s.add_argument("session")
    s.add_argument("--model", help="height model; without it, personalized_f from the session is used")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_retranslate)

    s = sub.add_parser("eval", help="RMSE, Dice and detection rate against ground truth")
    s.add_argument("gt")
    s.add_argument("est")
    s.add_argument("-o", "--output", required=True, help="per-frame CSV")
    s.add_argument("--default-radius", type=float, help="dilation radius (px) when gt has no neck radius")
    s.add_argument("--no-centroid", action="store_true", help="skip centroid compensation before Dice")
    s.add_argument("--person", help="restrict RMSE to one role or person id")
    s.add_argument("--fit-tilt", action="store_true", help="fit and remove a linear y-vs-z offset first")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("depth-trace", help="per-frame depth of one joint")
    s.add_argument("session")
    s.add_argument("--person", required=True, help="role name or person id")
    s.add_argument("--joint", default="hip")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--svg")
    s.set_defaults(func=cmd_depth_trace)

    s = sub.add_parser("simulate", help="synthetic two-person session with ground truth")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--config", help="JSON object of SimConfig fields")
    s.add_argument("--seed", type=int)
    s.add_argument("--noise-s", type=float)
    s.add_argument("--noise-bbox", type=float)
    s.add_argument("--outlier-fraction", type=float)
    s.add_argument("--frames-per-waypoint", type=int)
    s.add_argument("--base-focal", type=float)
    s.add_argument("--waypoints", help="comma-separated depths in meters")
    s.add_argument("--person", action="append", metavar="HEIGHT[:ROLE]")
    s.add_argument("--dropout", type=float, default=0.0, help="fraction of estimated frames to blank")
    s.add_argument("--dropout-seed", type=int)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ChildPoseError, OSError, KeyError, ValueError) as exc:
        print(f"childpose {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: synth, calibrate, extract, evaluate, sweep, handeye,
compare, and schema subcommands.

Exit codes: 0 success, 1 I/O or parse error, 2 solver precondition failure,
3 empty evaluation.  Errors are emitted as structured JSON on stderr so
pipelines can branch on the error kind.  Every command writes a run manifest
(<output>.manifest.json, or manifest.json inside directory outputs) recording
the resolved configuration, input hashes, seed, and timestamps; primary
outputs are byte-deterministic given flags plus seed, manifests are not
(they carry wall-clock timestamps).
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, dataio
from .beliefmap import PeakExtractConfig, extract_all, read_stack
from .errors import (
    CalibrationError,
    EmptyEvaluation,
    INPUT_ERRORS,
    PRECONDITION_ERRORS,
    ParseError,
    ValidationError,
)
from .geometry import CameraIntrinsics, Transform
from .kinematics import load_chain_file
from .metrics import (
    ADD_AUC_MAX_MM,
    ADD_THRESHOLDS_MM,
    PCK_AUC_MAX_PX,
    PCK_THRESHOLDS_PX,
    add,
    combination_sweep,
    curve_and_auc,
    pck,
    workspace_error_report,
)
from .pnp import PnpConfig, solve_frame, solve_multiframe
from .handeye import solve_eye_on_base
from .synth import (
    CameraShellConfig,
    MarkerNoiseConfig,
    NoiseConfig,
    generate_dataset,
    generate_handeye_samples,
)

# marker placement used when synthesizing hand-eye samples: 5 cm along the
# tool z axis of the last link frame
_MARKER_OFFSET = Transform.from_dict(
    {"rotation_quat_wxyz": [1.0, 0.0, 0.0, 0.0], "translation_m": [0.0, 0.0, 0.05]}
)

DEFAULT_M_VALUES = (1, 3, 6, 9, 12, 18)


def _utcnow() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


class _Manifest:
    def __init__(self, command: str, args: argparse.Namespace):
        self.doc = {
            "command": command,
            "tool_version": __version__,
            "config": {
                k: (str(v) if isinstance(v, Path) else v)
                for k, v in sorted(vars(args).items())
                if k != "func"
            },
            "inputs": {},
            "started_at": _utcnow(),
        }

    def add_input(self, path) -> None:
        if path is None:
            return
        p = Path(path)
        if p.is_dir():  # dataset directories hash their index file
            p = p / "dataset.json"
        self.doc["inputs"][str(p)] = dataio.sha256_file(p)

    def write(self, target) -> None:
        target = Path(target)
        self.doc["finished_at"] = _utcnow()
        if target.is_dir():
            dataio.dump_json(self.doc, target / "manifest.json")
        else:
            dataio.dump_json(self.doc, Path(str(target) + ".manifest.json"))


def _load_intrinsics(path) -> CameraIntrinsics:
    return CameraIntrinsics.from_dict(dataio.load_json(path))


def _pnp_config(args) -> PnpConfig:
    return PnpConfig(refine=args.refine)


def _dataset_frames(args, manifest: _Manifest):
    manifest.add_input(args.dataset)
    return dataio.read_dataset(args.dataset)


def _frame_detections(frame, belief_dir: Path | None):
    """Detections for one frame: dataset values, or extracted from its BMAP stack."""
    if belief_dir is None:
        return frame.detections
    if frame.belief_maps is None:
        raise ParseError("frame has no belief-map reference; regenerate with --emit-belief-maps")
    stack = read_stack(belief_dir / frame.belief_maps)
    return extract_all(stack, PeakExtractConfig())


def _parse_m_range(spec: str) -> list[int]:
    """Accepts '1,3,6' lists and 'lo..hi' ranges."""
    spec = spec.strip()
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(tok) for tok in spec.split(",") if tok]


# --- subcommands --------------------------------------------------------------


def cmd_synth(args) -> int:
    manifest = _Manifest("synth", args)
    manifest.add_input(args.chain)
    manifest.add_input(args.intrinsics)
    chain = load_chain_file(args.chain)
    intr = _load_intrinsics(args.intrinsics)
    shell = (
        CameraShellConfig.from_dict(dataio.load_json(args.shell_config))
        if args.shell_config
        else CameraShellConfig()
    )
    noise = (
        NoiseConfig.from_dict(dataio.load_json(args.noise_config))
        if args.noise_config
        else NoiseConfig()
    )
    if args.shell_config:
        manifest.add_input(args.shell_config)
    if args.noise_config:
        manifest.add_input(args.noise_config)

    dataset = generate_dataset(
        chain, intr, shell, noise,
        n_frames=args.frames, camera_mode=args.camera_mode, seed=args.seed,
    )
    dataset.meta["chain_path"] = str(args.chain)
    dataset.meta["chain_sha256"] = dataio.sha256_file(args.chain)

    out_dir = Path(args.out)
    dataio.write_dataset(
        dataset, out_dir,
        emit_belief_maps=args.emit_belief_maps, belief_scale=args.belief_scale,
    )
    if args.camera_mode == "static":
        # marker observations matched 1:1 with frames, for the hand-eye baseline
        samples = generate_handeye_samples(
            chain,
            hand_link=len(chain.joints),
            marker_offset=_MARKER_OFFSET,
            cam_from_base=dataset.frames[0].gt_cam_from_base,
            joint_configs=[f.joint_config for f in dataset.frames],
            noise=MarkerNoiseConfig(
                rotation_sigma_rad=np.radians(args.marker_rot_noise_deg),
                translation_sigma_m=args.marker_trans_noise_mm / 1000.0,
            ),
            seed=args.seed,
        )
        dataio.write_handeye_samples(samples, out_dir / "handeye_samples.json")
    manifest.write(out_dir)
    return 0


def cmd_calibrate(args) -> int:
    manifest = _Manifest("calibrate", args)
    manifest.add_input(args.chain)
    manifest.add_input(args.intrinsics)
    manifest.add_input(args.frames)
    _ = load_chain_file(args.chain)  # parse/validate; keypoints3d travel in the dataset
    intr = _load_intrinsics(args.intrinsics)
    dataset = dataio.read_dataset(args.frames)
    belief_dir = Path(args.belief_maps) if args.belief_maps else None

    cfg = _pnp_config(args)
    if args.multiframe:
        pairs = [
            (_frame_detections(f, belief_dir), f.keypoints3d) for f in dataset.frames
        ]
        solution = solve_multiframe(pairs, intr, cfg)
    else:
        frame = dataset.frames[args.frame_index]
        solution = solve_frame(_frame_detections(frame, belief_dir), frame.keypoints3d, intr, cfg)
    dataio.write_pose_solution(solution, args.out)
    manifest.write(args.out)
    return 0


def cmd_extract(args) -> int:
    manifest = _Manifest("extract", args)
    manifest.add_input(args.stack)
    stack = read_stack(args.stack)
    cfg = PeakExtractConfig(
        peak_threshold=args.threshold,
        smooth_sigma=args.smooth_sigma,
        window_radius=args.window_radius,
    )
    detections = extract_all(stack, cfg)
    doc = {
        "scale": stack.scale,
        "detections": {
            name: (
                None
                if det is None
                else {"pixel": [float(v) for v in det.pixel], "confidence": det.confidence}
            )
            for name, det in detections.items()
        },
    }
    dataio.dump_json(doc, args.out)
    manifest.write(args.out)
    return 0


def cmd_evaluate(args) -> int:
    manifest = _Manifest("evaluate", args)
    dataset = _dataset_frames(args, manifest)
    frames = dataset.frames
    if not frames:
        raise EmptyEvaluation("dataset contains no frames")

    if args.pose:
        manifest.add_input(args.pose)
        poses = [dataio.read_pose(args.pose)] * len(frames)
    else:
        manifest.add_input(args.per_frame_poses)
        doc = dataio.load_json(args.per_frame_poses)
        poses = [Transform.from_dict(p) for p in doc]
        if len(poses) != len(frames):
            raise ValidationError(
                f"{len(poses)} poses for {len(frames)} frames"
            )

    pck_curve = pck(
        [f.detections for f in frames],
        [f.gt_pixels for f in frames],
        thresholds=PCK_THRESHOLDS_PX,
        auc_max=PCK_AUC_MAX_PX,
    )
    add_per_frame = [
        add(pose, f.gt_cam_from_base, f.keypoints3d) for pose, f in zip(poses, frames)
    ]
    add_curve = curve_and_auc(add_per_frame, ADD_THRESHOLDS_MM, ADD_AUC_MAX_MM)

    report = {
        "pck": pck_curve.to_dict("px"),
        "add": add_curve.to_dict("mm"),
        "add_mean_mm": float(np.mean(add_per_frame)),
        "add_median_mm": float(np.median(add_per_frame)),
        "n_frames": len(frames),
    }
    dataio.dump_json(report, args.report)
    if args.csv:
        dataio.write_curves_csv({"pck_px": pck_curve, "add_mm": add_curve}, args.csv)
    manifest.write(args.report)
    return 0


def cmd_sweep(args) -> int:
    manifest = _Manifest("sweep", args)
    dataset = _dataset_frames(args, manifest)
    solver = {"dream": "dream-pnp", "hec": "handeye"}[args.solver]
    samples = None
    if solver == "handeye":
        if not args.hec_samples:
            raise ValidationError("--solver hec requires --hec-samples")
        manifest.add_input(args.hec_samples)
        samples = dataio.read_handeye_samples(args.hec_samples)
    result = combination_sweep(
        dataset.frames,
        _parse_m_range(args.m_range),
        solver,
        intrinsics=dataio.dataset_intrinsics(dataset),
        handeye_samples=samples,
        n_cap=args.n_cap,
        seed=args.seed,
        threads=args.threads,
    )
    dataio.write_sweep_csv(result, args.out)
    if args.json:
        dataio.dump_json(result.to_dict(), args.json)
    manifest.write(args.out)
    return 0


def cmd_handeye(args) -> int:
    manifest = _Manifest("handeye", args)
    manifest.add_input(args.samples)
    samples = dataio.read_handeye_samples(args.samples)
    solution = solve_eye_on_base(samples, all_pairs=args.all_pairs)
    dataio.dump_json(solution.to_dict(), args.out)
    manifest.write(args.out)
    return 0


def cmd_compare(args) -> int:
    manifest = _Manifest("compare", args)
    dataset = _dataset_frames(args, manifest)
    frames = dataset.frames
    intr = dataio.dataset_intrinsics(dataset)
    m_values = [m for m in _parse_m_range(args.m_range) if m <= len(frames)]

    report: dict = {
        "n_frames": len(frames),
        "m_values": m_values,
        "seed": args.seed,
        "n_cap": args.n_cap,
    }

    dream_sweep = combination_sweep(
        frames, m_values, "dream-pnp",
        intrinsics=intr, n_cap=args.n_cap, seed=args.seed, threads=args.threads,
    )
    dream_pose = solve_multiframe(
        [(f.detections, f.keypoints3d) for f in frames], intr
    ).pose
    estimates = {"dream": dream_pose}
    report["dream"] = {"sweep": dream_sweep.to_dict()}

    if args.hec_samples:
        manifest.add_input(args.hec_samples)
        samples = dataio.read_handeye_samples(args.hec_samples)
        hec_m = [m for m in m_values if m >= 3]
        hec_sweep = combination_sweep(
            frames, hec_m, "handeye",
            handeye_samples=samples, n_cap=args.n_cap, seed=args.seed, threads=args.threads,
        )
        estimates["hec"] = solve_eye_on_base(samples).cam_from_base
        report["hec"] = {"sweep": hec_sweep.to_dict()}
    else:
        report["hec"] = None
        report["warning"] = "hand-eye samples absent; DREAM-only comparison"

    # workspace check: reference points are the first frame's keypoints, targets
    # are their camera-frame positions under the ground-truth pose
    refs = np.stack(list(frames[0].keypoints3d.values()))
    targets = frames[0].gt_cam_from_base.apply(refs)
    report["workspace_error"] = workspace_error_report(estimates, targets, refs)
    report["gt_add_mm"] = {
        name: float(np.mean([add(est, f.gt_cam_from_base, f.keypoints3d) for f in frames]))
        for name, est in estimates.items()
    }

    dataio.dump_json(report, args.out)
    manifest.write(args.out)
    return 0


def cmd_schema(args) -> int:
    all_schemas = dataio.schemas()
    if args.name:
        if args.name not in all_schemas:
            raise ValidationError(
                f"unknown schema '{args.name}'; available: {', '.join(sorted(all_schemas))}"
            )
        print(json.dumps(all_schemas[args.name], indent=2))
    else:
        print(json.dumps(all_schemas, indent=2))
    return 0


# --- parser -------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="armcal",
        description="Markerless camera-to-robot extrinsics calibration toolkit.",
    )
    parser.add_argument("--version", action="version", version=f"armcal {__version__}")
    parser.add_argument(
        "--threads", type=int, default=1,
        help="cap on internal parallelism (sweeps); output is order-independent",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--chain", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--shell-config", default=None, help="camera shell JSON (defaults built in)")
    p.add_argument("--noise-config", default=None, help="detection noise JSON (defaults to none)")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--camera-mode", choices=["static", "per-frame"], default="static")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--emit-belief-maps", action="store_true")
    p.add_argument("--belief-scale", type=float, default=1.0, choices=[1.0, 0.5, 0.25])
    p.add_argument("--marker-rot-noise-deg", type=float, default=0.0)
    p.add_argument("--marker-trans-noise-mm", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="solve the camera-from-base pose from a dataset")
    p.add_argument("--chain", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--frames", required=True, help="dataset directory or dataset.json")
    p.add_argument("--belief-maps", default=None, help="extract detections from BMAP stacks under this directory")
    p.add_argument("--multiframe", action="store_true", help="one PnP call over every frame")
    p.add_argument("--frame-index", type=int, default=0, help="frame to solve in single-frame mode")
    p.add_argument("--refine", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("extract", help="extract subpixel detections from a belief-map stack")
    p.add_argument("--stack", required=True, help="path to a .bmap file")
    p.add_argument("--threshold", type=float, default=0.03)
    p.add_argument("--smooth-sigma", type=float, default=1.0)
    p.add_argument("--window-radius", type=int, default=6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("evaluate", help="PCK/ADD report for a pose against a dataset")
    p.add_argument("--chain", default=None, help="unused for scoring; accepted for symmetry")
    p.add_argument("--intrinsics", default=None)
    p.add_argument("--dataset", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--pose", help="single pose JSON applied to every frame")
    group.add_argument("--per-frame-poses", help="JSON array of poses, one per frame")
    p.add_argument("--report", required=True)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="C(M,m) combination sweep of ADD vs frames used")
    p.add_argument("--dataset", required=True)
    p.add_argument("--solver", choices=["dream", "hec"], required=True)
    p.add_argument("--hec-samples", default=None)
    p.add_argument("--m-range", required=True, help="'1,3,6' or '1..6'")
    p.add_argument("--n-cap", type=int, default=2500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--json", default=None, help="optional JSON result path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("handeye", help="eye-on-base AX=XB calibration from samples JSON")
    p.add_argument("--samples", required=True)
    p.add_argument("--all-pairs", action="store_true", help="use all sample pairs, not consecutive")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_handeye)

    p = sub.add_parser("compare", help="side-by-side DREAM vs hand-eye report")
    p.add_argument("--dataset", required=True)
    p.add_argument("--hec-samples", default=None)
    p.add_argument("--m-range", default="1,3,6,9,12,18")
    p.add_argument("--n-cap", type=int, default=2500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("schema", help="print JSON schemas for the file formats")
    p.add_argument("--name", default=None)
    p.set_defaults(func=cmd_schema)

    return parser


def _emit_error(kind: str, exc: Exception) -> None:
    print(json.dumps({"error": {"kind": kind, "message": str(exc)}}), file=sys.stderr)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EmptyEvaluation as e:
        _emit_error(type(e).__name__, e)
        return 3
    except PRECONDITION_ERRORS as e:
        _emit_error(type(e).__name__, e)
        return 2
    except INPUT_ERRORS as e:
        _emit_error(type(e).__name__, e)
        return 1
    except (OSError, json.JSONDecodeError) as e:
        _emit_error(type(e).__name__, e)
        return 1
    except CalibrationError as e:  # anything else from this package
        _emit_error(type(e).__name__, e)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()

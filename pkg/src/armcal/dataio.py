"""On-disk formats: dataset JSON, pose JSON, hand-eye samples, CSV emitters.

All JSON is written with indent=2 and trailing newline; floats serialize via
repr, so identical values always produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .beliefmap import BeliefMap, BeliefMapStack, render_gt, write_stack
from .errors import ParseError, ValidationError
from .geometry import CameraIntrinsics, Transform
from .handeye import HandEyeSample
from .pnp import PnpSolution, Correspondence
from .synth import Dataset, FrameRecord

DATASET_SCHEMA_ID = "armcal.dataset.v1"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2)
        f.write("\n")


def load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from e


def _named_vectors_to_dict(d: dict) -> dict:
    return {name: [float(x) for x in vec] for name, vec in d.items()}


def _named_vectors_from_dict(d: dict) -> dict:
    return {str(name): np.array(vec, dtype=float) for name, vec in d.items()}


def frame_to_dict(frame: FrameRecord) -> dict:
    out = {
        "joint_config": [float(v) for v in frame.joint_config],
        "gt_cam_from_base": frame.gt_cam_from_base.to_dict(),
        "keypoints3d": _named_vectors_to_dict(frame.keypoints3d),
        "gt_pixels": _named_vectors_to_dict(frame.gt_pixels),
        "detections": _named_vectors_to_dict(frame.detections),
    }
    if frame.belief_maps is not None:
        out["belief_maps"] = frame.belief_maps
    return out


def frame_from_dict(d: dict) -> FrameRecord:
    try:
        return FrameRecord(
            joint_config=np.array(d["joint_config"], dtype=float),
            gt_cam_from_base=Transform.from_dict(d["gt_cam_from_base"]),
            keypoints3d=_named_vectors_from_dict(d["keypoints3d"]),
            gt_pixels=_named_vectors_from_dict(d["gt_pixels"]),
            detections=_named_vectors_from_dict(d["detections"]),
            belief_maps=d.get("belief_maps"),
        )
    except KeyError as e:
        raise ParseError(f"frame record missing field {e}") from e


def validate_frame(frame: FrameRecord, keypoint_names) -> None:
    """Invariant check before writing: gt/detection names must belong to the chain."""
    names = set(keypoint_names)
    for label, mapping in (("gt_pixels", frame.gt_pixels), ("detections", frame.detections)):
        unknown = set(mapping) - names
        if unknown:
            raise ValidationError(f"{label} references unknown keypoints: {sorted(unknown)}")
    if set(frame.gt_pixels) - set(frame.keypoints3d):
        raise ValidationError("gt_pixels must be a subset of the frame's 3D keypoints")


def write_dataset(
    dataset: Dataset,
    out_dir,
    emit_belief_maps: bool = False,
    belief_scale: float = 1.0,
    belief_sigma: float = 2.0,
) -> Path:
    """Write dataset.json (plus optional per-frame BMAP stacks) under out_dir.

    Belief maps are rendered at the frame's detection coordinates, so they are
    the observation-space equivalent of the detection route; keypoints with no
    detection get an all-zero map.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = list(dataset.meta.get("keypoint_names", []))
    intr = CameraIntrinsics.from_dict(dataset.meta["intrinsics"])

    frames_json = []
    for idx, frame in enumerate(dataset.frames):
        validate_frame(frame, names)
        rel = None
        if emit_belief_maps:
            rel = f"frames/{idx:06d}.bmap"
            stack_dir = out_dir / "frames"
            stack_dir.mkdir(exist_ok=True)
            maps = []
            for name in names:
                det = frame.detections.get(name)
                if det is None:
                    mw, mh = int(belief_scale * intr.width), int(belief_scale * intr.height)
                    maps.append(BeliefMap(np.zeros((mh, mw)), belief_scale))
                else:
                    maps.append(render_gt(intr.width, intr.height, belief_scale, det, belief_sigma))
            write_stack(out_dir / rel, BeliefMapStack(tuple(names), tuple(maps)))
            frame = FrameRecord(
                joint_config=frame.joint_config,
                gt_cam_from_base=frame.gt_cam_from_base,
                keypoints3d=frame.keypoints3d,
                gt_pixels=frame.gt_pixels,
                detections=frame.detections,
                belief_maps=rel,
            )
        frames_json.append(frame_to_dict(frame))

    doc = {"schema": DATASET_SCHEMA_ID, "meta": dataset.meta, "frames": frames_json}
    path = out_dir / "dataset.json"
    dump_json(doc, path)
    return path


def read_dataset(path) -> Dataset:
    path = Path(path)
    if path.is_dir():
        path = path / "dataset.json"
    doc = load_json(path)
    if doc.get("schema") != DATASET_SCHEMA_ID:
        raise ParseError(f"{path}: expected schema '{DATASET_SCHEMA_ID}'")
    try:
        frames = tuple(frame_from_dict(f) for f in doc["frames"])
        return Dataset(meta=doc["meta"], frames=frames)
    except KeyError as e:
        raise ParseError(f"{path}: missing field {e}") from e


def dataset_intrinsics(dataset: Dataset) -> CameraIntrinsics:
    try:
        return CameraIntrinsics.from_dict(dataset.meta["intrinsics"])
    except KeyError as e:
        raise ParseError("dataset meta lacks intrinsics") from e


def write_pose_solution(solution: PnpSolution, path) -> None:
    dump_json(solution.to_dict(), path)


def read_pose(path) -> Transform:
    return Transform.from_dict(load_json(path))


def write_handeye_samples(samples, path) -> None:
    dump_json(
        [
            {
                "base_from_hand": s.base_from_hand.to_dict(),
                "cam_from_marker": s.cam_from_marker.to_dict(),
            }
            for s in samples
        ],
        path,
    )


def read_handeye_samples(path) -> list[HandEyeSample]:
    doc = load_json(path)
    if not isinstance(doc, list):
        raise ParseError(f"{path}: expected a JSON array of samples")
    try:
        return [
            HandEyeSample(
                base_from_hand=Transform.from_dict(s["base_from_hand"]),
                cam_from_marker=Transform.from_dict(s["cam_from_marker"]),
            )
            for s in doc
        ]
    except KeyError as e:
        raise ParseError(f"{path}: sample missing field {e}") from e


def curve_rows(curves: dict) -> list[str]:
    """CSV lines for one or more named threshold curves."""
    lines = ["metric,threshold,fraction"]
    for metric, curve in curves.items():
        for t, f in zip(curve.thresholds, curve.fractions):
            lines.append(f"{metric},{t!r},{f!r}")
    return lines


def write_curves_csv(curves: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(curve_rows(curves)) + "\n")


def write_sweep_csv(result, path) -> None:
    lines = ["m,mean,median,min,max"]
    for s in result.stats:
        lines.append(f"{s.m},{s.mean!r},{s.median!r},{s.min!r},{s.max!r}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


# --- JSON schemas (printed by the CLI for external validation) ---------------

_POSE_SCHEMA = {
    "type": "object",
    "properties": {
        "rotation_quat_wxyz": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
        "translation_m": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
    },
    "required": ["rotation_quat_wxyz", "translation_m"],
}


def schemas() -> dict[str, dict]:
    named_vec2 = {"type": "object", "additionalProperties": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}}
    named_vec3 = {"type": "object", "additionalProperties": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}}
    return {
        "intrinsics": {
            "type": "object",
            "properties": {
                "fx": {"type": "number"}, "fy": {"type": "number"},
                "cx": {"type": "number"}, "cy": {"type": "number"},
                "width": {"type": "integer"}, "height": {"type": "integer"},
            },
            "required": ["fx", "fy", "cx", "cy", "width", "height"],
        },
        "chain": {
            "type": "object",
            "properties": {
                "name": {"type": "string"},
                "joints": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {
                            "name": {"type": "string"},
                            "kind": {"enum": ["revolute", "prismatic", "fixed"]},
                            "origin": {
                                "type": "object",
                                "properties": {
                                    "xyz": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                                    "rpy": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                                },
                                "required": ["xyz", "rpy"],
                            },
                            "axis": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                            "limits": {"type": ["array", "null"], "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                        },
                        "required": ["name", "kind", "origin"],
                    },
                },
                "keypoints": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {
                            "name": {"type": "string"},
                            "link": {"type": "integer", "minimum": 0},
                            "offset": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                        },
                        "required": ["name", "link", "offset"],
                    },
                },
            },
            "required": ["joints", "keypoints"],
        },
        "pose": _POSE_SCHEMA,
        "pose_solution": {
            "allOf": [_POSE_SCHEMA],
            "properties": {
                "reprojection_rmse_px": {"type": "number"},
                "n_points": {"type": "integer"},
                "frames_used": {"type": "integer"},
            },
            "required": ["reprojection_rmse_px", "n_points", "frames_used"],
        },
        "handeye_samples": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"base_from_hand": _POSE_SCHEMA, "cam_from_marker": _POSE_SCHEMA},
                "required": ["base_from_hand", "cam_from_marker"],
            },
        },
        "dataset": {
            "type": "object",
            "properties": {
                "schema": {"const": DATASET_SCHEMA_ID},
                "meta": {"type": "object"},
                "frames": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {
                            "joint_config": {"type": "array", "items": {"type": "number"}},
                            "gt_cam_from_base": _POSE_SCHEMA,
                            "keypoints3d": named_vec3,
                            "gt_pixels": named_vec2,
                            "detections": named_vec2,
                            "belief_maps": {"type": "string"},
                        },
                        "required": ["joint_config", "gt_cam_from_base", "keypoints3d", "gt_pixels", "detections"],
                    },
                },
            },
            "required": ["schema", "meta", "frames"],
        },
        "detections": {
            "type": "object",
            "properties": {
                "scale": {"enum": [1.0, 0.5, 0.25]},
                "detections": {
                    "type": "object",
                    "additionalProperties": {
                        "type": ["object", "null"],
                        "properties": {
                            "pixel": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                            "confidence": {"type": "number"},
                        },
                        "required": ["pixel", "confidence"],
                    },
                },
            },
            "required": ["detections"],
        },
    }


def frame_correspondences(frame: FrameRecord) -> list[Correspondence]:
    """Convenience join of a frame's own detections against its 3D keypoints."""
    out = []
    for name in sorted(frame.keypoints3d):
        det = frame.detections.get(name)
        if det is not None:
            out.append(Correspondence(frame.keypoints3d[name], det))
    return out

"""Serial-chain forward kinematics with named keypoint attachments.

A chain is an ordered list of joints; each joint's parent is the previous
link.  Link frame 0 is the chain base (identity); link frame i is the frame
after joint i's static origin *and* its motion.  Keypoints attach to a link
frame with a fixed offset, so frame index 0..len(joints) is valid.

Chain documents are JSON (see ``CHAIN_SCHEMA`` in :mod:`armcal.dataio`):

    {"name": ..., "joints": [{"name", "kind", "origin": {"xyz", "rpy"},
     "axis", "limits"}, ...], "keypoints": [{"name", "link", "offset"}, ...]}

``rpy`` is extrinsic XYZ roll-pitch-yaw in radians, the URDF convention, so
translating a URDF by hand is mechanical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ParseError, ValidationError
from .geometry import Rotation, Transform, compose, so3_exp

JOINT_KINDS = ("revolute", "prismatic", "fixed")


@dataclass(frozen=True)
class JointSpec:
    name: str
    kind: str
    origin: Transform
    axis: np.ndarray | None = None  # unit vector, None for fixed joints
    limits: tuple[float, float] | None = None


@dataclass(frozen=True)
class Keypoint:
    name: str
    link: int
    offset: np.ndarray


@dataclass(frozen=True)
class KinematicChain:
    name: str
    joints: tuple[JointSpec, ...]
    keypoints: tuple[Keypoint, ...]

    @property
    def n_frames(self) -> int:
        return len(self.joints) + 1

    @property
    def movable_joints(self) -> tuple[JointSpec, ...]:
        return tuple(j for j in self.joints if j.kind != "fixed")

    @property
    def keypoint_names(self) -> tuple[str, ...]:
        return tuple(kp.name for kp in self.keypoints)


@dataclass(frozen=True)
class JointConfig:
    """Positions for the movable joints, in chain order (radians / meters)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1:
            raise DimensionMismatch("joint config must be a flat vector")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


def _req(obj: dict, key: str, path: str):
    if key not in obj:
        raise ParseError(f"{path}: missing required field '{key}'")
    return obj[key]


def _vec(raw, n: int, path: str) -> np.ndarray:
    try:
        a = np.array([float(x) for x in raw], dtype=float)
    except (TypeError, ValueError) as e:
        raise ParseError(f"{path}: expected {n} numbers") from e
    if a.shape != (n,):
        raise ParseError(f"{path}: expected {n} numbers, got {len(a)}")
    return a


def load_chain(document: str) -> KinematicChain:
    """Parse and validate a chain description (JSON text)."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as e:
        raise ParseError(f"chain document line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise ParseError("chain document must be a JSON object")

    name = str(doc.get("name", "chain"))
    raw_joints = _req(doc, "joints", "chain")
    raw_keypoints = _req(doc, "keypoints", "chain")
    if not isinstance(raw_joints, list) or not raw_joints:
        raise ParseError("chain.joints must be a non-empty array")
    if not isinstance(raw_keypoints, list):
        raise ParseError("chain.keypoints must be an array")

    joints: list[JointSpec] = []
    for i, rj in enumerate(raw_joints):
        path = f"joints[{i}]"
        jname = str(_req(rj, "name", path))
        kind = _req(rj, "kind", path)
        if kind not in JOINT_KINDS:
            raise ValidationError(f"{path}: kind '{kind}' is not one of {JOINT_KINDS}")
        origin_raw = _req(rj, "origin", path)
        xyz = _vec(_req(origin_raw, "xyz", f"{path}.origin"), 3, f"{path}.origin.xyz")
        rpy = _vec(_req(origin_raw, "rpy", f"{path}.origin"), 3, f"{path}.origin.rpy")
        origin = Transform(Rotation.from_rpy(*rpy), xyz)

        axis = None
        limits = None
        if kind != "fixed":
            axis = _vec(_req(rj, "axis", path), 3, f"{path}.axis")
            norm = float(np.linalg.norm(axis))
            if abs(norm - 1.0) > 1e-9:
                raise ValidationError(f"{path}.axis: norm {norm:.12g} is not unit within 1e-9")
            raw_limits = rj.get("limits")
            if raw_limits is not None:
                lo, hi = _vec(raw_limits, 2, f"{path}.limits")
                if lo > hi:
                    raise ValidationError(f"{path}.limits: lower {lo} exceeds upper {hi}")
                limits = (float(lo), float(hi))
        elif "limits" in rj and rj["limits"] is not None:
            raise ValidationError(f"{path}: fixed joints must not declare limits")
        joints.append(JointSpec(jname, kind, origin, axis, limits))

    if len({j.name for j in joints}) != len(joints):
        raise ValidationError("joint names must be unique")

    keypoints: list[Keypoint] = []
    for i, rk in enumerate(raw_keypoints):
        path = f"keypoints[{i}]"
        kname = str(_req(rk, "name", path))
        link = _req(rk, "link", path)
        if not isinstance(link, int) or not 0 <= link <= len(joints):
            raise ValidationError(
                f"{path}.link: {link!r} is not a frame index in [0, {len(joints)}]"
            )
        offset = _vec(_req(rk, "offset", path), 3, f"{path}.offset")
        keypoints.append(Keypoint(kname, link, offset))

    if len({k.name for k in keypoints}) != len(keypoints):
        raise ValidationError("keypoint names must be unique")

    return KinematicChain(name, tuple(joints), tuple(keypoints))


def load_chain_file(path) -> KinematicChain:
    with open(path, "r", encoding="utf-8") as f:
        return load_chain(f.read())


def chain_to_dict(chain: KinematicChain) -> dict:
    """Chain back to its document form (used for hashing and round trips)."""
    joints = []
    for j in chain.joints:
        rot = j.origin.rotation
        entry: dict = {
            "name": j.name,
            "kind": j.kind,
            "origin": {
                "xyz": [float(v) for v in j.origin.translation],
                "rpy": _rpy_from_rotation(rot),
            },
        }
        if j.kind != "fixed":
            entry["axis"] = [float(v) for v in j.axis]
            entry["limits"] = list(j.limits) if j.limits is not None else None
        joints.append(entry)
    return {
        "name": chain.name,
        "joints": joints,
        "keypoints": [
            {"name": k.name, "link": k.link, "offset": [float(v) for v in k.offset]}
            for k in chain.keypoints
        ],
    }


def _rpy_from_rotation(r: Rotation) -> list[float]:
    """Inverse of Rotation.from_rpy (extrinsic XYZ)."""
    m = r.as_matrix()
    pitch = np.arcsin(np.clip(-m[2, 0], -1.0, 1.0))
    if abs(m[2, 0]) < 1.0 - 1e-12:
        roll = np.arctan2(m[2, 1], m[2, 2])
        yaw = np.arctan2(m[1, 0], m[0, 0])
    else:  # gimbal lock: fold yaw into roll
        roll = np.arctan2(-m[1, 2], m[1, 1])
        yaw = 0.0
    return [float(roll), float(pitch), float(yaw)]


def _config_values(chain: KinematicChain, q) -> np.ndarray:
    values = q.values if isinstance(q, JointConfig) else np.asarray(q, dtype=float)
    n = len(chain.movable_joints)
    if values.ndim != 1 or len(values) != n:
        raise DimensionMismatch(
            f"chain '{chain.name}' has {n} movable joints, got config of length {values.size}"
        )
    return values


def forward_kinematics(chain: KinematicChain, q, validate_limits: bool = False) -> list[Transform]:
    """Base-frame pose of every link frame; entry 0 is the base itself."""
    values = _config_values(chain, q)
    if validate_limits:
        for joint, val in zip(chain.movable_joints, values):
            if joint.limits is not None and not joint.limits[0] <= val <= joint.limits[1]:
                raise ValidationError(
                    f"joint '{joint.name}' value {val} outside limits {joint.limits}"
                )
    poses = [Transform.identity()]
    qi = iter(values)
    for joint in chain.joints:
        pose = compose(poses[-1], joint.origin)
        if joint.kind == "revolute":
            pose = compose(pose, Transform(so3_exp(joint.axis * next(qi)), np.zeros(3)))
        elif joint.kind == "prismatic":
            pose = compose(pose, Transform(Rotation.identity(), joint.axis * next(qi)))
        poses.append(pose)
    return poses


def keypoint_positions(chain: KinematicChain, q, validate_limits: bool = False) -> dict[str, np.ndarray]:
    """Base-frame 3D position of each keypoint, in declaration order."""
    poses = forward_kinematics(chain, q, validate_limits)
    return {kp.name: poses[kp.link].apply(kp.offset) for kp in chain.keypoints}

"""SE(3)/SO(3) algebra and the pinhole camera model.

Conventions used throughout the package:

- Quaternions are (w, x, y, z), unit norm, canonicalized so w >= 0.
- A Transform maps child-frame points into the parent frame:
  ``T.apply(p) = R p + t``.  "cam_from_base" therefore takes robot-base
  coordinates to camera coordinates.
- Units are meters and radians.  The camera model is a pure pinhole with
  +z forward, +x right, +y down; no lens distortion.
- Pixel coordinates follow the sample-grid convention: integer coordinate
  (u, v) *is* the sample location (u along width, v along height).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AngleNearPi, BehindCamera, ValidationError


def _vec3(v) -> np.ndarray:
    a = np.array(v, dtype=float)
    if a.shape != (3,):
        raise ValidationError(f"expected a 3-vector, got shape {a.shape}")
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Rotation:
    """Unit quaternion, renormalized on construction, canonical w >= 0."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n2 = self.w**2 + self.x**2 + self.y**2 + self.z**2
        if not math.isfinite(n2) or n2 < 1e-24:
            raise ValidationError("quaternion norm is zero or not finite")
        # skip the rescale when the norm is already unit to ~1e-12: keeps
        # composition with the identity bit-exact while preserving the
        # unit-norm invariant
        s = 1.0 if abs(n2 - 1.0) <= 1e-12 else 1.0 / math.sqrt(n2)
        if self.w < 0.0:
            s = -s
        if s != 1.0:
            object.__setattr__(self, "w", self.w * s)
            object.__setattr__(self, "x", self.x * s)
            object.__setattr__(self, "y", self.y * s)
            object.__setattr__(self, "z", self.z * s)

    @staticmethod
    def identity() -> "Rotation":
        return Rotation(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_matrix(m) -> "Rotation":
        """Shepperd's method, branching on the largest diagonal term."""
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3):
            raise ValidationError("rotation matrix must be 3x3")
        t = m[0, 0] + m[1, 1] + m[2, 2]
        if t > 0:
            s = math.sqrt(t + 1.0) * 2.0
            return Rotation(
                0.25 * s,
                (m[2, 1] - m[1, 2]) / s,
                (m[0, 2] - m[2, 0]) / s,
                (m[1, 0] - m[0, 1]) / s,
            )
        i = int(np.argmax([m[0, 0], m[1, 1], m[2, 2]]))
        if i == 0:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            return Rotation(
                (m[2, 1] - m[1, 2]) / s,
                0.25 * s,
                (m[0, 1] + m[1, 0]) / s,
                (m[0, 2] + m[2, 0]) / s,
            )
        if i == 1:
            s = math.sqrt(1.0 - m[0, 0] + m[1, 1] - m[2, 2]) * 2.0
            return Rotation(
                (m[0, 2] - m[2, 0]) / s,
                (m[0, 1] + m[1, 0]) / s,
                0.25 * s,
                (m[1, 2] + m[2, 1]) / s,
            )
        s = math.sqrt(1.0 - m[0, 0] - m[1, 1] + m[2, 2]) * 2.0
        return Rotation(
            (m[1, 0] - m[0, 1]) / s,
            (m[0, 2] + m[2, 0]) / s,
            (m[1, 2] + m[2, 1]) / s,
            0.25 * s,
        )

    @staticmethod
    def from_rpy(roll: float, pitch: float, yaw: float) -> "Rotation":
        """Extrinsic XYZ roll-pitch-yaw (URDF convention): Rz(yaw) Ry(pitch) Rx(roll)."""
        qx = so3_exp([roll, 0.0, 0.0])
        qy = so3_exp([0.0, pitch, 0.0])
        qz = so3_exp([0.0, 0.0, yaw])
        return qz * qy * qx

    def as_quat_wxyz(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def as_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def apply(self, p) -> np.ndarray:
        """Rotate a (3,) vector or an (N, 3) batch."""
        p = np.asarray(p, dtype=float)
        qv = np.array([self.x, self.y, self.z])
        t = 2.0 * np.cross(qv, p)
        return p + self.w * t + np.cross(qv, t)

    def inverse(self) -> "Rotation":
        return Rotation(self.w, -self.x, -self.y, -self.z)

    def __mul__(self, other: "Rotation") -> "Rotation":
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Rotation(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def angle(self) -> float:
        """Rotation magnitude in [0, pi]."""
        s = math.sqrt(self.x**2 + self.y**2 + self.z**2)
        return 2.0 * math.atan2(s, abs(self.w))


def so3_exp(v) -> Rotation:
    """Axis-angle (radians) to Rotation."""
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValidationError("so3_exp expects a 3-vector")
    theta = float(np.linalg.norm(v))
    if theta < 1e-8:
        g = 0.5 - theta * theta / 48.0  # series for sin(t/2)/t
    else:
        g = math.sin(0.5 * theta) / theta
    return Rotation(math.cos(0.5 * theta), v[0] * g, v[1] * g, v[2] * g)


def so3_log(r: Rotation) -> np.ndarray:
    """Rotation to axis-angle; raises AngleNearPi within 1e-6 of the cut."""
    # construction canonicalizes w >= 0, so the angle is already in [0, pi]
    s = math.sqrt(r.x**2 + r.y**2 + r.z**2)
    angle = 2.0 * math.atan2(s, r.w)
    if angle >= math.pi - 1e-6:
        raise AngleNearPi(f"rotation angle {angle:.9f} is within 1e-6 of pi")
    if s < 1e-8:
        f = (2.0 / r.w) * (1.0 - s * s / (3.0 * r.w * r.w))
    else:
        f = angle / s
    return f * np.array([r.x, r.y, r.z])


def quaternion_distance(a: Rotation, b: Rotation) -> float:
    """Sign-invariant Euclidean distance between unit quaternions."""
    qa, qb = a.as_quat_wxyz(), b.as_quat_wxyz()
    return float(min(np.linalg.norm(qa - qb), np.linalg.norm(qa + qb)))


def rotation_angle_between(a: Rotation, b: Rotation) -> float:
    """Geodesic angle of the relative rotation, radians."""
    return (a.inverse() * b).angle()


@dataclass(frozen=True, eq=False)
class Transform:
    """Rigid SE(3) pose: rotation then translation (meters)."""

    rotation: Rotation
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "translation", _vec3(self.translation))

    def __eq__(self, other) -> bool:  # exact, for bit-identity checks
        if not isinstance(other, Transform):
            return NotImplemented
        return self.rotation == other.rotation and np.array_equal(
            self.translation, other.translation
        )

    @staticmethod
    def identity() -> "Transform":
        return Transform(Rotation.identity(), np.zeros(3))

    @staticmethod
    def from_matrix(m) -> "Transform":
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise ValidationError("homogeneous matrix must be 4x4")
        return Transform(Rotation.from_matrix(m[:3, :3]), m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.as_matrix()
        m[:3, 3] = self.translation
        return m

    def apply(self, p) -> np.ndarray:
        return self.rotation.apply(p) + self.translation

    def inverse(self) -> "Transform":
        rinv = self.rotation.inverse()
        return Transform(rinv, -rinv.apply(self.translation))

    def __matmul__(self, other: "Transform") -> "Transform":
        return compose(self, other)

    def to_dict(self) -> dict:
        return {
            "rotation_quat_wxyz": [self.rotation.w, self.rotation.x, self.rotation.y, self.rotation.z],
            "translation_m": [float(v) for v in self.translation],
        }

    @staticmethod
    def from_dict(d: dict) -> "Transform":
        q = d["rotation_quat_wxyz"]
        return Transform(Rotation(q[0], q[1], q[2], q[3]), d["translation_m"])


def compose(a: Transform, b: Transform) -> Transform:
    """Pose mapping a point through b, then a."""
    return Transform(a.rotation * b.rotation, a.rotation.apply(b.translation) + a.translation)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError("focal lengths must be positive")
        if not (self.width > 0 and self.height > 0):
            raise ValidationError("image dimensions must be positive")

    def to_dict(self) -> dict:
        return {
            "fx": float(self.fx),
            "fy": float(self.fy),
            "cx": float(self.cx),
            "cy": float(self.cy),
            "width": int(self.width),
            "height": int(self.height),
        }

    @staticmethod
    def from_dict(d: dict) -> "CameraIntrinsics":
        try:
            return CameraIntrinsics(
                fx=float(d["fx"]),
                fy=float(d["fy"]),
                cx=float(d["cx"]),
                cy=float(d["cy"]),
                width=int(d["width"]),
                height=int(d["height"]),
            )
        except KeyError as e:
            raise ValidationError(f"intrinsics document missing field {e}") from e


_MIN_DEPTH = 1e-9


def project(k: CameraIntrinsics, t_cam_from_robot: Transform, p_robot) -> np.ndarray:
    """Project a robot-frame point to pixel coordinates.

    Raises BehindCamera when the camera-frame depth is <= 1e-9.
    """
    q = t_cam_from_robot.apply(_vec3(p_robot))
    if q[2] <= _MIN_DEPTH:
        raise BehindCamera(f"point depth {q[2]:.3e} m is not in front of the camera")
    return np.array([k.fx * q[0] / q[2] + k.cx, k.fy * q[1] / q[2] + k.cy])


def project_points(k: CameraIntrinsics, t_cam_from_robot: Transform, pts) -> tuple[np.ndarray, np.ndarray]:
    """Batch pinhole projection; returns (pixels (N,2), depths (N,)) with no checks."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    q = t_cam_from_robot.apply(pts)
    z = q[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.column_stack([k.fx * q[:, 0] / z + k.cx, k.fy * q[:, 1] / z + k.cy])
    return uv, z


def in_frustum(k: CameraIntrinsics, t: Transform, p) -> bool:
    """True iff depth > 0 and the projection lands in [0, w) x [0, h).

    Occlusion is ignored; the bound is half-open so edge behavior is exact.
    """
    q = t.apply(_vec3(p))
    if q[2] <= _MIN_DEPTH:
        return False
    u = k.fx * q[0] / q[2] + k.cx
    v = k.fy * q[1] / q[2] + k.cy
    return 0.0 <= u < k.width and 0.0 <= v < k.height

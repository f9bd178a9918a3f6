"""Classic marker-based hand-eye calibration, eye-on-base configuration.

The camera is fixed in the world and a fiducial marker rides on the robot
hand.  Relative motions between sample pairs reduce the problem to AX = XB,
solved with the Park-Martin least squares: rotation from an orthogonal
Procrustes fit over rotation-log vectors, translation from a stacked linear
system.  Fiducial detection itself is out of scope; marker poses are inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import InsufficientMotion
from .geometry import (
    Rotation,
    Transform,
    compose,
    rotation_angle_between,
    so3_log,
)

SOLVER_NAME = "park_martin"


@dataclass(frozen=True, eq=False)
class HandEyeSample:
    base_from_hand: Transform  # from forward kinematics
    cam_from_marker: Transform  # fiducial measurement


@dataclass(frozen=True, eq=False)
class HandEyeSolution:
    cam_from_base: Transform
    hand_from_marker: Transform
    rotation_residual: float  # rad, mean over samples
    translation_residual: float  # m, mean over samples

    def to_dict(self) -> dict:
        return {
            "solver": SOLVER_NAME,
            "cam_from_base": self.cam_from_base.to_dict(),
            "hand_from_marker": self.hand_from_marker.to_dict(),
            "rotation_residual_rad": float(self.rotation_residual),
            "translation_residual_m": float(self.translation_residual),
        }


def solve_axxb(motions) -> Transform:
    """Least-squares X with A_i X = X B_i over motion pairs (A_i, B_i)."""
    motions = list(motions)
    if len(motions) < 2:
        raise InsufficientMotion(f"AX=XB needs at least 2 motion pairs, got {len(motions)}")

    log_a = [so3_log(a.rotation) for a, _ in motions]
    log_b = [so3_log(b.rotation) for _, b in motions]

    axes = [v / np.linalg.norm(v) for v in log_a if np.linalg.norm(v) > 1e-8]
    if len(axes) < 2:
        raise InsufficientMotion("fewer than 2 motion pairs carry usable rotation")
    max_angle = max(
        float(np.arccos(np.clip(abs(np.dot(u, v)), 0.0, 1.0)))
        for u, v in combinations(axes, 2)
    )
    if max_angle < 1e-6:
        raise InsufficientMotion("rotation axes are parallel within 1e-6 rad")

    # rotation: maximize tr(R N), N = sum log(R_B) log(R_A)^T
    n_mat = sum(np.outer(b, a) for a, b in zip(log_a, log_b))
    u, _, vt = np.linalg.svd(n_mat)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r_x = vt.T @ np.diag([1.0, 1.0, d]) @ u.T

    # translation: (R_Ai - I) t_X = R_X t_Bi - t_Ai
    lhs = np.vstack([a.rotation.as_matrix() - np.eye(3) for a, _ in motions])
    rhs = np.concatenate([r_x @ b.translation - a.translation for a, b in motions])
    t_x, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    return Transform(Rotation.from_matrix(r_x), t_x)


def _mean_rotation(rotations) -> Rotation:
    """Chordal mean: SVD projection of the averaged rotation matrix."""
    m = sum(r.as_matrix() for r in rotations) / len(rotations)
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return Rotation.from_matrix(u @ np.diag([1.0, 1.0, d]) @ vt)


def solve_eye_on_base(samples, all_pairs: bool = False) -> HandEyeSolution:
    """Recover cam_from_base and hand_from_marker from >= 3 samples.

    With the camera stationary, cam_from_marker_i = cam_from_base o
    base_from_hand_i o hand_from_marker for every sample; relative motions
    between sample pairs (consecutive by default, all pairs behind the flag)
    eliminate the camera and leave AX = XB in the marker-from-hand unknown.
    """
    samples = list(samples)
    if len(samples) < 3:
        raise InsufficientMotion(
            f"eye-on-base needs at least 3 samples (2 independent motions), got {len(samples)}"
        )
    if all_pairs:
        pairs = list(combinations(range(len(samples)), 2))
    else:
        pairs = [(i, i + 1) for i in range(len(samples) - 1)]

    motions = []
    for i, j in pairs:
        a = compose(samples[j].cam_from_marker.inverse(), samples[i].cam_from_marker)
        b = compose(samples[j].base_from_hand.inverse(), samples[i].base_from_hand)
        motions.append((a, b))
    marker_from_hand = solve_axxb(motions)
    hand_from_marker = marker_from_hand.inverse()

    per_sample = [
        compose(compose(s.cam_from_marker, marker_from_hand), s.base_from_hand.inverse())
        for s in samples
    ]
    cam_from_base = Transform(
        _mean_rotation([p.rotation for p in per_sample]),
        np.mean([p.translation for p in per_sample], axis=0),
    )

    rot_res = 0.0
    trans_res = 0.0
    for s in samples:
        predicted = compose(compose(cam_from_base, s.base_from_hand), hand_from_marker)
        rot_res += rotation_angle_between(predicted.rotation, s.cam_from_marker.rotation)
        trans_res += float(
            np.linalg.norm(predicted.translation - s.cam_from_marker.translation)
        )
    n = len(samples)
    return HandEyeSolution(cam_from_base, hand_from_marker, rot_res / n, trans_res / n)

"""PCK / ADD / AUC metrics, the combination-sweep protocol, and workspace error.

Thresholds follow the standard reporting grid: PCK at {2.5, 5, 10} px and ADD
at {20, 40, 60} mm.  AUC integration ranges are NOT standardized anywhere and
are explicit config values recorded in every report ([0, 12] px and
[0, 80] mm by default).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import (
    CalibrationError,
    DimensionMismatch,
    EmptyEvaluation,
    SolverUnavailableForM,
    ValidationError,
)
from .geometry import Transform
from .handeye import solve_eye_on_base
from .pnp import PnpConfig, solve_multiframe
from .rng import Rng

PCK_THRESHOLDS_PX = (2.5, 5.0, 10.0)
ADD_THRESHOLDS_MM = (20.0, 40.0, 60.0)
PCK_AUC_MAX_PX = 12.0
ADD_AUC_MAX_MM = 80.0

SOLVERS = ("dream-pnp", "handeye")


@dataclass(frozen=True)
class ThresholdCurve:
    """Fraction of samples with error <= threshold, plus normalized AUC."""

    thresholds: tuple[float, ...]
    fractions: tuple[float, ...]
    auc: float
    auc_max: float
    n_samples: int

    def to_dict(self, unit: str) -> dict:
        return {
            f"thresholds_{unit}": list(self.thresholds),
            "fractions": list(self.fractions),
            "auc": float(self.auc),
            f"auc_max_{unit}": float(self.auc_max),
            "n_samples": int(self.n_samples),
        }


PckCurve = ThresholdCurve
AddCurve = ThresholdCurve


def curve_and_auc(errors, thresholds, auc_max: float) -> ThresholdCurve:
    """Empirical threshold curve over error samples (inf = missed detection).

    AUC is the trapezoidal integral of the empirical CDF over [0, auc_max],
    normalized by auc_max, with breakpoints at every finite sample value.
    """
    errors = np.asarray(list(errors), dtype=float)
    if errors.size == 0:
        raise EmptyEvaluation("no error samples to evaluate")
    if not auc_max > 0:
        raise ValidationError("auc_max must be positive")
    thresholds = tuple(float(t) for t in thresholds)
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise ValidationError("thresholds must be sorted ascending")

    n = errors.size
    fractions = tuple(float((errors <= t).sum()) / n for t in thresholds)

    inside = np.sort(errors[errors <= auc_max])
    grid = np.concatenate([[0.0], inside, [auc_max]])
    cdf = np.searchsorted(np.sort(errors), grid, side="right") / n
    auc = float(np.trapezoid(cdf, grid) / auc_max)

    # CDFs are monotone by construction; guard against regressions anyway
    assert all(b >= a for a, b in zip(fractions, fractions[1:]))
    assert 0.0 <= auc <= 1.0
    return ThresholdCurve(thresholds, fractions, auc, float(auc_max), int(n))


def pck(
    detections_per_frame,
    gt_pixels_per_frame,
    thresholds=PCK_THRESHOLDS_PX,
    frustum_mask=None,
    auc_max: float = PCK_AUC_MAX_PX,
) -> ThresholdCurve:
    """Percentage of correct keypoints, pooled over frames.

    A keypoint counts iff its ground truth is inside the frustum (the mask,
    or simply its presence in gt_pixels when no mask is given).  Counted
    keypoints with no detection are incorrect at every threshold.
    """
    errors: list[float] = []
    for f_idx, (dets, gts) in enumerate(zip(detections_per_frame, gt_pixels_per_frame)):
        for name, gt_px in gts.items():
            if frustum_mask is not None and not frustum_mask[f_idx].get(name, False):
                continue
            det = dets.get(name)
            if det is None:
                errors.append(math.inf)
            else:
                det_px = det.pixel if hasattr(det, "pixel") else det
                errors.append(float(np.linalg.norm(np.asarray(det_px, float) - np.asarray(gt_px, float))))
    if not errors:
        raise EmptyEvaluation("no keypoints with in-frustum ground truth")
    return curve_and_auc(errors, thresholds, auc_max)


def add(est: Transform, gt: Transform, keypoints3d) -> float:
    """Average distance (mm) between keypoints mapped by the two poses.

    Symmetric in its pose arguments; uses all keypoints.
    """
    if isinstance(keypoints3d, dict):
        keypoints3d = list(keypoints3d.values())
    pts = np.atleast_2d(np.asarray(keypoints3d, dtype=float))
    if pts.size == 0:
        raise EmptyEvaluation("ADD needs at least one keypoint")
    d = np.linalg.norm(est.apply(pts) - gt.apply(pts), axis=1)
    return float(d.mean() * 1000.0)


@dataclass(frozen=True)
class SweepStats:
    m: int
    mean: float
    median: float
    min: float
    max: float
    n_combinations: int


@dataclass(frozen=True)
class SweepResult:
    solver: str
    stats: tuple[SweepStats, ...]
    n_cap: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "solver": self.solver,
            "n_cap": int(self.n_cap),
            "seed": int(self.seed),
            "per_m": [
                {
                    "m": s.m,
                    "mean_mm": s.mean,
                    "median_mm": s.median,
                    "min_mm": s.min,
                    "max_mm": s.max,
                    "n_combinations": s.n_combinations,
                }
                for s in self.stats
            ],
        }


def sample_combinations(n_frames: int, m: int, n_cap: int, rng: Rng) -> list[tuple[int, ...]]:
    """All C(n_frames, m) index tuples, or n_cap distinct seeded samples.

    The returned list is sorted lexicographically either way, so downstream
    aggregation order never depends on sampling order.
    """
    total = math.comb(n_frames, m)
    if total <= n_cap:
        return list(combinations(range(n_frames), m))
    seen: set[tuple[int, ...]] = set()
    while len(seen) < n_cap:
        combo = tuple(sorted(rng.sample_indices(n_frames, m)))
        seen.add(combo)
    return sorted(seen)


def _frame_add_evaluator(frames):
    """Precompiled version of mean-ADD-over-frames for the sweep hot loop."""
    pts = [np.stack(list(f.keypoints3d.values())) for f in frames]
    gt_mapped = np.vstack([f.gt_cam_from_base.apply(p) for f, p in zip(frames, pts)])
    all_pts = np.vstack(pts)
    counts = np.array([len(p) for p in pts])
    bounds = np.cumsum(counts)[:-1]

    def mean_add(est: Transform) -> float:
        d = np.linalg.norm(est.apply(all_pts) - gt_mapped, axis=1)
        per_frame = [seg.mean() for seg in np.split(d, bounds)]
        return float(np.mean(per_frame) * 1000.0)

    return mean_add


def combination_sweep(
    frames,
    m_values,
    solver: str = "dream-pnp",
    *,
    intrinsics=None,
    handeye_samples=None,
    M: int | None = None,
    n_cap: int = 2500,
    seed: int = 0,
    pnp_config: PnpConfig | None = None,
    threads: int = 1,
) -> SweepResult:
    """ADD statistics per subset size m over frame combinations.

    For every m, enumerates C(M, m) combinations when that count fits under
    n_cap, otherwise samples n_cap distinct combinations with the seeded
    generator (one stream per m).  Each combination is solved with the chosen
    solver and scored as the mean ADD against ground truth over all M frames.
    """
    frames = list(frames)
    if M is None:
        M = len(frames)
    if not 1 <= M <= len(frames):
        raise ValidationError(f"M={M} is not valid for {len(frames)} frames")
    frames = frames[:M]
    if solver not in SOLVERS:
        raise ValidationError(f"unknown solver '{solver}', expected one of {SOLVERS}")
    if solver == "dream-pnp" and intrinsics is None:
        raise ValidationError("dream-pnp solver requires camera intrinsics")
    if solver == "handeye" and handeye_samples is None:
        raise ValidationError("handeye solver requires handeye_samples aligned with frames")
    if handeye_samples is not None and len(handeye_samples) < M:
        raise DimensionMismatch("need one hand-eye sample per frame")
    m_values = sorted(set(int(m) for m in m_values))
    min_m = 3 if solver == "handeye" else 1
    for m in m_values:
        if not min_m <= m <= M:
            raise SolverUnavailableForM(
                f"solver '{solver}' needs {min_m} <= m <= {M}, got m={m}"
            )

    if solver == "dream-pnp":
        cfg = pnp_config or PnpConfig()

        def solve(combo: tuple[int, ...]) -> Transform:
            return solve_multiframe(
                [(frames[i].detections, frames[i].keypoints3d) for i in combo],
                intrinsics,
                cfg,
            ).pose

    else:

        def solve(combo: tuple[int, ...]) -> Transform:
            return solve_eye_on_base([handeye_samples[i] for i in combo]).cam_from_base

    mean_add = _frame_add_evaluator(frames)

    def evaluate(combo: tuple[int, ...]) -> float | None:
        try:
            return mean_add(solve(combo))
        except CalibrationError:
            return None  # degenerate subset: excluded from the statistics

    stats = []
    for m in m_values:
        combos = sample_combinations(M, m, n_cap, Rng(seed, stream=m))
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                values = list(pool.map(evaluate, combos))
        else:
            values = [evaluate(c) for c in combos]
        adds = np.array([v for v in values if v is not None])
        if adds.size == 0:
            raise EmptyEvaluation(f"every combination failed to solve at m={m}")
        stats.append(
            SweepStats(
                m=m,
                mean=float(adds.mean()),
                median=float(np.median(adds)),
                min=float(adds.min()),
                max=float(adds.max()),
                n_combinations=int(adds.size),
            )
        )
    return SweepResult(solver, tuple(stats), int(n_cap), int(seed))


def workspace_error_report(
    cam_pose_estimates: dict[str, Transform],
    target_points_cam,
    reference_points_base,
) -> dict[str, dict]:
    """Per-method workspace error statistics (mm).

    Camera-frame targets are mapped into the base frame with each method's
    estimate and compared against the reference base-frame positions.
    """
    targets = np.atleast_2d(np.asarray(target_points_cam, dtype=float))
    refs = np.atleast_2d(np.asarray(reference_points_base, dtype=float))
    if targets.shape != refs.shape or targets.shape[1] != 3:
        raise DimensionMismatch(
            f"point lists must be equal-length (N, 3), got {targets.shape} vs {refs.shape}"
        )
    report = {}
    for name, est in cam_pose_estimates.items():
        in_base = est.inverse().apply(targets)
        d_mm = np.linalg.norm(in_base - refs, axis=1) * 1000.0
        report[name] = {
            "min_mm": float(d_mm.min()),
            "max_mm": float(d_mm.max()),
            "mean_mm": float(d_mm.mean()),
            "std_mm": float(d_mm.std()),
        }
    return report

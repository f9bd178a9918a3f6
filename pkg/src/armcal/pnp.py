"""Camera-from-robot pose recovery from 2D-3D correspondences.

Initialization is EPnP (four control points, barycentric coordinates,
eigenvectors of the 12x12 normal matrix, beta-case selection by reprojection
error) with a homography-based fallback for planar point sets.  A damped
Gauss-Newton pass then minimizes weighted squared reprojection error over the
6-DoF pose; steps are accepted only if the cost decreases.

Correspondences are canonically sorted before solving, so the result is
invariant to input ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import (
    AllPointsBehindCamera,
    DegenerateConfiguration,
    InsufficientPoints,
    ValidationError,
)
from .geometry import CameraIntrinsics, Rotation, Transform, compose, so3_exp

_MIN_DEPTH = 1e-9


@dataclass(frozen=True, eq=False)
class Correspondence:
    p3d: np.ndarray  # robot base frame, meters
    p2d: np.ndarray  # pixels
    weight: float = 1.0

    def __post_init__(self):
        p3 = np.array(self.p3d, dtype=float)
        p2 = np.array(self.p2d, dtype=float)
        if p3.shape != (3,) or p2.shape != (2,):
            raise ValidationError("correspondence needs a 3-vector and a 2-vector")
        if not (np.isfinite(p3).all() and np.isfinite(p2).all() and np.isfinite(self.weight)):
            raise ValidationError("correspondence contains non-finite values")
        if not self.weight > 0:
            raise ValidationError("correspondence weight must be positive")
        p3.flags.writeable = False
        p2.flags.writeable = False
        object.__setattr__(self, "p3d", p3)
        object.__setattr__(self, "p2d", p2)


@dataclass(frozen=True)
class PnpConfig:
    refine: bool = True
    confidence_weighting: bool = False
    huber_delta: float | None = None  # robust loss off by default
    max_iters: int = 50
    tol: float = 1e-10


@dataclass(frozen=True, eq=False)
class PnpSolution:
    pose: Transform  # camera-from-robot
    reprojection_rmse: float
    n_points: int
    refined: bool
    frames_used: int = 1

    def to_dict(self) -> dict:
        d = self.pose.to_dict()
        d["reprojection_rmse_px"] = float(self.reprojection_rmse)
        d["n_points"] = int(self.n_points)
        d["frames_used"] = int(self.frames_used)
        return d


def _canonical(corrs) -> list[Correspondence]:
    return sorted(
        corrs, key=lambda c: (tuple(c.p3d), tuple(c.p2d), c.weight)
    )


def _arrays(corrs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pts = np.stack([c.p3d for c in corrs])
    uv = np.stack([c.p2d for c in corrs])
    w = np.array([c.weight for c in corrs])
    return pts, uv, w


def _project_cam(k: CameraIntrinsics, q: np.ndarray) -> np.ndarray:
    return np.column_stack(
        [k.fx * q[:, 0] / q[:, 2] + k.cx, k.fy * q[:, 1] / q[:, 2] + k.cy]
    )


def reprojection_rmse(pose: Transform, corrs, k: CameraIntrinsics) -> float:
    """Weighted RMS pixel distance; inf if any point is behind the camera."""
    pts, uv, w = _arrays(list(corrs))
    q = pose.apply(pts)
    if (q[:, 2] <= _MIN_DEPTH).any():
        return float("inf")
    r = _project_cam(k, q) - uv
    return float(np.sqrt((w * (r**2).sum(axis=1)).sum() / w.sum()))


def _rms_unweighted(k, pose_r, pose_t, pts, uv) -> float:
    q = pts @ pose_r.T + pose_t
    if (q[:, 2] <= _MIN_DEPTH).any():
        return float("inf")
    r = _project_cam(k, q) - uv
    return float(np.sqrt((r**2).sum(axis=1).mean()))


def _procrustes(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rigid R, t with R src + t ~= dst in least squares."""
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return r, cd - r @ cs


# --- EPnP ------------------------------------------------------------------

_PAIRS = tuple(combinations(range(4), 2))


def _control_points(pts: np.ndarray, sv: np.ndarray, axes: np.ndarray) -> np.ndarray:
    c0 = pts.mean(axis=0)
    scales = sv / np.sqrt(len(pts))
    return np.vstack([c0, c0 + scales[:, None] * axes])


def _beta_case(kernel: np.ndarray, n_case: int, dw: np.ndarray) -> np.ndarray:
    """Closed-form beta initialization for the 1/2/3-vector kernel cases."""
    vs = [kernel[:, i].reshape(4, 3) for i in range(n_case)]
    dv = [np.stack([v[a] - v[b] for a, b in _PAIRS]) for v in vs]
    betas = np.zeros(4)
    if n_case == 1:
        num = sum(np.linalg.norm(d) * w for d, w in zip(dv[0], dw))
        den = sum(np.linalg.norm(d) ** 2 for d in dv[0])
        betas[0] = num / den
        return betas
    if n_case == 2:
        ell = np.column_stack(
            [
                (dv[0] ** 2).sum(axis=1),
                2.0 * (dv[0] * dv[1]).sum(axis=1),
                (dv[1] ** 2).sum(axis=1),
            ]
        )
        x, *_ = np.linalg.lstsq(ell, dw**2, rcond=None)
        betas[0] = np.sqrt(max(x[0], 0.0))
        betas[1] = np.copysign(np.sqrt(max(x[2], 0.0)), x[1])
        return betas
    ell = np.column_stack(
        [
            (dv[0] ** 2).sum(axis=1),
            2.0 * (dv[0] * dv[1]).sum(axis=1),
            2.0 * (dv[0] * dv[2]).sum(axis=1),
            (dv[1] ** 2).sum(axis=1),
            2.0 * (dv[1] * dv[2]).sum(axis=1),
            (dv[2] ** 2).sum(axis=1),
        ]
    )
    x, *_ = np.linalg.lstsq(ell, dw**2, rcond=None)
    betas[0] = np.sqrt(max(x[0], 0.0))
    betas[1] = np.copysign(np.sqrt(max(x[3], 0.0)), x[1])
    betas[2] = np.copysign(np.sqrt(max(x[5], 0.0)), x[2])
    return betas


def _refine_betas(kernel: np.ndarray, betas: np.ndarray, n_case: int, dw: np.ndarray, iters: int = 5) -> np.ndarray:
    """Gauss-Newton on the control-point distance constraints, within the case subspace."""
    dv = np.stack(
        [
            np.stack([kernel[:, i].reshape(4, 3)[a] - kernel[:, i].reshape(4, 3)[b] for a, b in _PAIRS])
            for i in range(n_case)
        ],
        axis=2,
    )  # (6 pairs, 3, n_case kernel vectors)
    b = betas[:n_case].copy()
    for _ in range(iters):
        diff = dv @ b  # (6, 3)
        f = (diff**2).sum(axis=1) - dw**2
        jac = 2.0 * np.einsum("pk,pkv->pv", diff, dv)
        try:
            step, *_ = np.linalg.lstsq(jac, -f, rcond=None)
        except np.linalg.LinAlgError:
            break
        b = b + step
        if np.linalg.norm(step) < 1e-14:
            break
    out = np.zeros(4)
    out[:n_case] = b
    return out


def solve_epnp(corrs, k: CameraIntrinsics) -> Transform:
    """Non-iterative pose estimate from >= 4 correspondences.

    Falls back to a plane-homography initialization when the 3D points are
    (near-)coplanar; raises DegenerateConfiguration when they are collinear.
    """
    corrs = _canonical(corrs)
    if len(corrs) < 4:
        raise InsufficientPoints(f"PnP needs at least 4 correspondences, got {len(corrs)}")
    pts, uv, _ = _arrays(corrs)

    centered = pts - pts.mean(axis=0)
    _, sv, vt = np.linalg.svd(centered, full_matrices=False)
    if sv[1] <= 1e-9 * max(sv[0], 1e-12):
        raise DegenerateConfiguration("3D points are collinear")
    if sv[2] <= 1e-4 * sv[0]:
        return _solve_planar(pts, uv, k, vt)

    cw = _control_points(pts, sv, vt)
    hom = np.column_stack([cw, np.ones(4)])
    alphas = np.column_stack([pts, np.ones(len(pts))]) @ np.linalg.inv(hom)

    m = np.zeros((2 * len(pts), 12))
    for j in range(4):
        m[0::2, 3 * j + 0] = alphas[:, j] * k.fx
        m[0::2, 3 * j + 2] = alphas[:, j] * (k.cx - uv[:, 0])
        m[1::2, 3 * j + 1] = alphas[:, j] * k.fy
        m[1::2, 3 * j + 2] = alphas[:, j] * (k.cy - uv[:, 1])

    _, vecs = np.linalg.eigh(m.T @ m)
    kernel = vecs[:, :4]  # ascending eigenvalues: 4 smallest first
    dw = np.array([np.linalg.norm(cw[a] - cw[b]) for a, b in _PAIRS])

    best: tuple[float, np.ndarray, np.ndarray] | None = None
    for n_case in (1, 2, 3):
        betas = _beta_case(kernel, n_case, dw)
        betas = _refine_betas(kernel, betas, n_case, dw)
        cc = (kernel @ betas).reshape(4, 3)
        pc = alphas @ cc
        if (pc[:, 2] < 0).sum() * 2 > len(pts):
            pc = -pc
        r, t = _procrustes(pts, pc)
        err = _rms_unweighted(k, r, t, pts, uv)
        if best is None or err < best[0]:
            best = (err, r, t)
    _, r, t = best
    return Transform(Rotation.from_matrix(r), t)


def _normalize_2d(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hartley normalization: similarity moving points to mean 0, rms sqrt(2)."""
    c = x.mean(axis=0)
    scale = np.sqrt(2.0) / max(np.sqrt(((x - c) ** 2).sum(axis=1).mean()), 1e-12)
    t = np.array([[scale, 0, -scale * c[0]], [0, scale, -scale * c[1]], [0, 0, 1.0]])
    xh = np.column_stack([x, np.ones(len(x))]) @ t.T
    return xh[:, :2], t


def _solve_planar(pts: np.ndarray, uv: np.ndarray, k: CameraIntrinsics, vt: np.ndarray) -> Transform:
    """Pose from a plane-to-image homography (points coplanar, not collinear)."""
    c = pts.mean(axis=0)
    basis = vt[:3]  # rows: e1, e2, n
    plane_xy = (pts - c) @ basis[:2].T
    img = np.column_stack([(uv[:, 0] - k.cx) / k.fx, (uv[:, 1] - k.cy) / k.fy])

    s_xy, t1 = _normalize_2d(plane_xy)
    s_img, t2 = _normalize_2d(img)
    a = np.zeros((2 * len(pts), 9))
    for i, ((x, y), (u, v)) in enumerate(zip(s_xy, s_img)):
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y, -u]
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y, -v]
    _, _, avt = np.linalg.svd(a)
    h_norm = avt[-1].reshape(3, 3)
    h = np.linalg.inv(t2) @ h_norm @ t1

    h1, h2, h3 = h[:, 0], h[:, 1], h[:, 2]
    s = 2.0 / (np.linalg.norm(h1) + np.linalg.norm(h2))
    r1, r2, t = s * h1, s * h2, s * h3
    if t[2] < 0:  # homography sign ambiguity: plane origin must be in front
        r1, r2, t = -r1, -r2, -t
    r0 = np.column_stack([r1, r2, np.cross(r1, r2)])
    u_m, _, vt_m = np.linalg.svd(r0)
    r0 = u_m @ np.diag([1.0, 1.0, np.sign(np.linalg.det(u_m @ vt_m))]) @ vt_m

    r = r0 @ basis
    return Transform(Rotation.from_matrix(r), t - r @ c)


# --- refinement --------------------------------------------------------------


def _residuals_jacobian(k, pose: Transform, pts, uv):
    """Stacked residuals (2m,), Jacobian (2m, 6) wrt left increment (w, t), front mask."""
    q = pose.apply(pts)
    front = q[:, 2] > _MIN_DEPTH
    qf = q[front]
    res = _project_cam(k, qf) - uv[front]
    z = qf[:, 2]
    jp = np.zeros((len(qf), 2, 3))
    jp[:, 0, 0] = k.fx / z
    jp[:, 0, 2] = -k.fx * qf[:, 0] / z**2
    jp[:, 1, 1] = k.fy / z
    jp[:, 1, 2] = -k.fy * qf[:, 1] / z**2
    jq = np.zeros((len(qf), 3, 6))
    # d q / d omega = -[q]_x ; d q / d t = I
    jq[:, 0, 1] = qf[:, 2]
    jq[:, 0, 2] = -qf[:, 1]
    jq[:, 1, 0] = -qf[:, 2]
    jq[:, 1, 2] = qf[:, 0]
    jq[:, 2, 0] = qf[:, 1]
    jq[:, 2, 1] = -qf[:, 0]
    jq[:, :, 3:] = np.eye(3)
    jac = np.einsum("nij,njk->nik", jp, jq)
    return res.reshape(-1), jac.reshape(-1, 6), front


def _cost(k, pose, pts, uv, w, huber_delta) -> tuple[float, int]:
    """(weighted cost over in-front points, number in front)."""
    q = pose.apply(pts)
    front = q[:, 2] > _MIN_DEPTH
    if not front.any():
        return float("inf"), 0
    r = _project_cam(k, q[front]) - uv[front]
    dist = np.sqrt((r**2).sum(axis=1))
    if huber_delta is None:
        rho = dist**2
    else:
        d = huber_delta
        rho = np.where(dist <= d, dist**2, 2.0 * d * dist - d * d)
    return float((w[front] * rho).sum()), int(front.sum())


def refine(
    initial: Transform,
    corrs,
    k: CameraIntrinsics,
    max_iters: int = 50,
    tol: float = 1e-10,
    huber_delta: float | None = None,
    frames_used: int = 1,
    cost_trace: list | None = None,
) -> PnpSolution:
    """Damped Gauss-Newton on the 6-DoF pose, monotone in the weighted cost.

    The increment is applied on the left (rotation via so3_exp), damping is
    doubled whenever a step fails to decrease the cost, and iteration stops
    on a small gradient or max_iters.  If cost_trace is a list, the cost
    after every accepted step (including the start) is appended to it.
    """
    corrs = _canonical(corrs)
    pts, uv, w = _arrays(corrs)
    pose = initial
    cost, n_front = _cost(k, pose, pts, uv, w, huber_delta)
    if n_front == 0:
        raise AllPointsBehindCamera("no correspondence is in front of the initial pose")
    if cost_trace is not None:
        cost_trace.append(cost)

    lam = 1e-6
    for _ in range(max_iters):
        res, jac, front = _residuals_jacobian(k, pose, pts, uv)
        wc = np.repeat(w[front], 2)
        if huber_delta is not None:
            dist = np.sqrt((res.reshape(-1, 2) ** 2).sum(axis=1))
            factor = np.minimum(1.0, huber_delta / np.maximum(dist, 1e-300))
            wc = wc * np.repeat(factor, 2)
        grad = jac.T @ (wc * res)
        if np.abs(grad).max() < tol:
            break
        jtj = jac.T @ (wc[:, None] * jac)

        accepted = False
        while lam < 1e12:
            try:
                delta = np.linalg.solve(jtj + lam * np.eye(6), -grad)
            except np.linalg.LinAlgError:
                lam *= 2.0
                continue
            candidate = compose(Transform(so3_exp(delta[:3]), delta[3:]), pose)
            cand_cost, cand_front = _cost(k, candidate, pts, uv, w, huber_delta)
            if cand_front >= min(4, len(pts)) and cand_cost < cost:
                improvement = cost - cand_cost
                pose, cost = candidate, cand_cost
                if cost_trace is not None:
                    cost_trace.append(cost)
                lam = max(lam * 0.5, 1e-12)
                accepted = improvement > 1e-12 * max(cost, 1e-300)
                break
            lam *= 2.0
        if not accepted:  # converged: no step, or only a negligible one, remains
            break

    return PnpSolution(
        pose=pose,
        reprojection_rmse=reprojection_rmse(pose, corrs, k),
        n_points=len(corrs),
        refined=True,
        frames_used=frames_used,
    )


# --- named-join front ends ---------------------------------------------------


def _pixel_and_confidence(det) -> tuple[np.ndarray, float | None]:
    if hasattr(det, "pixel"):  # KeypointDetection
        return np.asarray(det.pixel, dtype=float), float(det.confidence)
    return np.asarray(det, dtype=float), None


def _join(detections: dict, keypoints3d: dict, cfg: PnpConfig) -> list[Correspondence]:
    corrs = []
    for name in sorted(keypoints3d):
        det = detections.get(name)
        if det is None:
            continue
        pixel, conf = _pixel_and_confidence(det)
        weight = conf if (cfg.confidence_weighting and conf is not None) else 1.0
        corrs.append(Correspondence(np.asarray(keypoints3d[name], dtype=float), pixel, weight))
    return corrs


def _solve(corrs, k, cfg, frames_used) -> PnpSolution:
    if len(corrs) < 4:
        raise InsufficientPoints(f"only {len(corrs)} usable correspondences after the join")
    pose = solve_epnp(corrs, k)
    if cfg.refine:
        return refine(
            pose, corrs, k,
            max_iters=cfg.max_iters, tol=cfg.tol,
            huber_delta=cfg.huber_delta, frames_used=frames_used,
        )
    return PnpSolution(
        pose=pose,
        reprojection_rmse=reprojection_rmse(pose, corrs, k),
        n_points=len(corrs),
        refined=False,
        frames_used=frames_used,
    )


def solve_frame(detections: dict, keypoints3d: dict, k: CameraIntrinsics, cfg: PnpConfig | None = None) -> PnpSolution:
    """Join detections to 3D keypoints by name and solve a single frame.

    Absent detections (None or missing) are dropped, not imputed.
    """
    cfg = cfg or PnpConfig()
    return _solve(_join(detections, keypoints3d, cfg), k, cfg, frames_used=1)


def solve_multiframe(frames, k: CameraIntrinsics, cfg: PnpConfig | None = None) -> PnpSolution:
    """One PnP call over all frames' correspondences (static camera and base).

    Each frame contributes 3D keypoints from its own joint configuration.
    """
    cfg = cfg or PnpConfig()
    corrs: list[Correspondence] = []
    n_frames = 0
    for detections, keypoints3d in frames:
        corrs.extend(_join(detections, keypoints3d, cfg))
        n_frames += 1
    return _solve(corrs, k, cfg, frames_used=n_frames)

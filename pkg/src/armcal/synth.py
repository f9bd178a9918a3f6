"""Synthetic dataset generation and detection-space noise injection.

Camera poses are sampled in a truncated hemispherical shell around the robot
base: azimuth measured from the base +x axis, elevation from the horizontal
plane, distance along the ray to the base origin.  The camera looks at the
base origin (world +z as the up hint, y-down image convention) and its
optical axis is then tilted by a rotation drawn uniformly within a small
cone.  No images are rendered here; NoiseConfig stands in for detector error
so multi-frame accuracy trends are testable.

Randomness comes from the package's counter-based generator: stream 0 is the
dataset-level stream, stream i+1 belongs to frame i, so generation is
deterministic and order-independent.  Per-keypoint noise always consumes a
fixed number of draws, keeping streams aligned regardless of visibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientPoints, MissingLimits, ValidationError
from .geometry import (
    CameraIntrinsics,
    Rotation,
    Transform,
    compose,
    project_points,
    so3_exp,
)
from .handeye import HandEyeSample
from .kinematics import KinematicChain, forward_kinematics, keypoint_positions
from .rng import Rng

CAMERA_MODES = ("static", "per-frame")


@dataclass(frozen=True)
class CameraShellConfig:
    azimuth_deg: tuple[float, float] = (-135.0, 135.0)
    elevation_deg: tuple[float, float] = (-10.0, 75.0)
    distance_m: tuple[float, float] = (0.75, 1.20)
    jitter_deg: float = 5.0  # half-angle of the optical-axis cone

    def __post_init__(self):
        for name in ("azimuth_deg", "elevation_deg", "distance_m"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValidationError(f"{name}: lower bound {lo} exceeds upper {hi}")
        if self.distance_m[0] <= 0:
            raise ValidationError("distance must be positive")
        if self.jitter_deg < 0:
            raise ValidationError("jitter must be non-negative")

    def to_dict(self) -> dict:
        return {
            "azimuth_deg": list(self.azimuth_deg),
            "elevation_deg": list(self.elevation_deg),
            "distance_m": list(self.distance_m),
            "jitter_deg": float(self.jitter_deg),
        }

    @staticmethod
    def from_dict(d: dict) -> "CameraShellConfig":
        kwargs = {}
        for key in ("azimuth_deg", "elevation_deg", "distance_m"):
            if key in d:
                kwargs[key] = (float(d[key][0]), float(d[key][1]))
        if "jitter_deg" in d:
            kwargs["jitter_deg"] = float(d["jitter_deg"])
        return CameraShellConfig(**kwargs)


@dataclass(frozen=True)
class NoiseConfig:
    pixel_sigma: float = 0.0
    dropout_prob: float = 0.0
    outlier_prob: float = 0.0
    outlier_radius_px: float = 0.0

    def __post_init__(self):
        if self.pixel_sigma < 0 or self.outlier_radius_px < 0:
            raise ValidationError("noise magnitudes must be non-negative")
        for p in (self.dropout_prob, self.outlier_prob):
            if not 0.0 <= p <= 1.0:
                raise ValidationError("probabilities must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "pixel_sigma": float(self.pixel_sigma),
            "dropout_prob": float(self.dropout_prob),
            "outlier_prob": float(self.outlier_prob),
            "outlier_radius_px": float(self.outlier_radius_px),
        }

    @staticmethod
    def from_dict(d: dict) -> "NoiseConfig":
        return NoiseConfig(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class MarkerNoiseConfig:
    """Pose noise for synthetic fiducial measurements (right perturbation)."""

    rotation_sigma_rad: float = 0.0
    translation_sigma_m: float = 0.0

    def __post_init__(self):
        if self.rotation_sigma_rad < 0 or self.translation_sigma_m < 0:
            raise ValidationError("noise magnitudes must be non-negative")


@dataclass(frozen=True, eq=False)
class FrameRecord:
    """One observation unit: joints, ground truth, and (noisy) detections."""

    joint_config: np.ndarray
    gt_cam_from_base: Transform
    keypoints3d: dict[str, np.ndarray]
    gt_pixels: dict[str, np.ndarray]  # in-frustum keypoints only
    detections: dict[str, np.ndarray]
    belief_maps: str | None = None  # relative path to a BMAP stack


@dataclass(frozen=True, eq=False)
class Dataset:
    meta: dict = field(default_factory=dict)
    frames: tuple[FrameRecord, ...] = ()


def sample_camera_pose(cfg: CameraShellConfig, rng: Rng) -> Transform:
    """One cam_from_base draw from the shell; consumes exactly five uniforms."""
    az = math.radians(rng.uniform(*cfg.azimuth_deg))
    el = math.radians(rng.uniform(*cfg.elevation_deg))
    dist = rng.uniform(*cfg.distance_m)
    jitter_phi = rng.uniform(0.0, 2.0 * math.pi)
    # sqrt keeps the tilt magnitude uniform over the cone's solid angle
    jitter_mag = math.radians(cfg.jitter_deg) * math.sqrt(rng.uniform())

    pos = dist * np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
    z_cam = -pos / np.linalg.norm(pos)  # optical axis aims at the base origin
    up = np.array([0.0, 0.0, 1.0])
    x_cam = np.cross(z_cam, up)
    if np.linalg.norm(x_cam) < 1e-9:  # looking straight up/down
        x_cam = np.cross(z_cam, np.array([1.0, 0.0, 0.0]))
    x_cam = x_cam / np.linalg.norm(x_cam)
    y_cam = np.cross(z_cam, x_cam)

    r_base_cam = np.column_stack([x_cam, y_cam, z_cam])
    tilt_axis = math.cos(jitter_phi) * x_cam + math.sin(jitter_phi) * y_cam
    r_base_cam = so3_exp(tilt_axis * jitter_mag).as_matrix() @ r_base_cam
    base_from_cam = Transform(Rotation.from_matrix(r_base_cam), pos)
    return base_from_cam.inverse()


def sample_joint_config(chain: KinematicChain, rng: Rng) -> np.ndarray:
    """Independent uniform draw per movable joint within its limits."""
    values = []
    for joint in chain.movable_joints:
        if joint.limits is None:
            raise MissingLimits(f"joint '{joint.name}' has no limits to sample within")
        values.append(rng.uniform(joint.limits[0], joint.limits[1]))
    return np.array(values)


def _noisy_detections(
    gt_pixels: dict[str, np.ndarray],
    keypoint_names,
    noise: NoiseConfig,
    intrinsics: CameraIntrinsics,
    rng: Rng,
) -> dict[str, np.ndarray]:
    detections = {}
    for name in keypoint_names:
        # fixed draw count per keypoint keeps the stream aligned
        u_drop = rng.uniform()
        n_x, n_y = rng.normal(), rng.normal()
        u_outlier = rng.uniform()
        angle = rng.uniform(0.0, 2.0 * math.pi)
        gt = gt_pixels.get(name)
        if gt is None or u_drop < noise.dropout_prob:
            continue
        if u_outlier < noise.outlier_prob:
            det = gt + noise.outlier_radius_px * np.array([math.cos(angle), math.sin(angle)])
        else:
            det = gt + noise.pixel_sigma * np.array([n_x, n_y])
        if 0.0 <= det[0] < intrinsics.width and 0.0 <= det[1] < intrinsics.height:
            detections[name] = det  # noise can push a detection out of frame
    return detections


def generate_frame(
    chain: KinematicChain,
    intrinsics: CameraIntrinsics,
    cam_from_base: Transform,
    joint_config: np.ndarray,
    noise: NoiseConfig,
    rng: Rng,
) -> FrameRecord:
    kps = keypoint_positions(chain, joint_config)
    names = list(kps.keys())
    pts = np.stack([kps[n] for n in names])
    uv, z = project_points(intrinsics, cam_from_base, pts)
    gt_pixels = {}
    for i, name in enumerate(names):
        if (
            z[i] > 1e-9
            and 0.0 <= uv[i, 0] < intrinsics.width
            and 0.0 <= uv[i, 1] < intrinsics.height
        ):
            gt_pixels[name] = uv[i]
    detections = _noisy_detections(gt_pixels, names, noise, intrinsics, rng)
    return FrameRecord(
        joint_config=np.asarray(joint_config, dtype=float),
        gt_cam_from_base=cam_from_base,
        keypoints3d=kps,
        gt_pixels=gt_pixels,
        detections=detections,
    )


def generate_dataset(
    chain: KinematicChain,
    intrinsics: CameraIntrinsics,
    shell_cfg: CameraShellConfig | None = None,
    noise_cfg: NoiseConfig | None = None,
    n_frames: int = 1,
    camera_mode: str = "static",
    seed: int = 0,
) -> Dataset:
    """Seeded synthetic dataset; static mode shares one camera pose across frames."""
    shell_cfg = shell_cfg or CameraShellConfig()
    noise_cfg = noise_cfg or NoiseConfig()
    if len(chain.keypoints) < 4:
        raise InsufficientPoints(
            f"chain '{chain.name}' has {len(chain.keypoints)} keypoints; calibration needs >= 4"
        )
    if camera_mode not in CAMERA_MODES:
        raise ValidationError(f"camera_mode must be one of {CAMERA_MODES}")
    if n_frames < 1:
        raise ValidationError("n_frames must be at least 1")

    static_pose = sample_camera_pose(shell_cfg, Rng(seed, stream=0)) if camera_mode == "static" else None

    frames = []
    for i in range(n_frames):
        rng = Rng(seed, stream=i + 1)
        cam = sample_camera_pose(shell_cfg, rng) if static_pose is None else static_pose
        q = sample_joint_config(chain, rng)
        frames.append(generate_frame(chain, intrinsics, cam, q, noise_cfg, rng))

    meta = {
        "chain_name": chain.name,
        "keypoint_names": list(chain.keypoint_names),
        "intrinsics": intrinsics.to_dict(),
        "shell_config": shell_cfg.to_dict(),
        "noise_config": noise_cfg.to_dict(),
        "camera_mode": camera_mode,
        "seed": int(seed),
        "n_frames": int(n_frames),
    }
    return Dataset(meta=meta, frames=tuple(frames))


def generate_handeye_samples(
    chain: KinematicChain,
    hand_link: int,
    marker_offset: Transform,
    cam_from_base: Transform,
    joint_configs,
    noise: MarkerNoiseConfig | None = None,
    seed: int = 0,
) -> list[HandEyeSample]:
    """Synthetic fiducial observations for the hand-eye baseline.

    base_from_hand comes from FK of the given link; cam_from_marker is the
    exact composition, optionally perturbed in the marker frame by the
    configured rotation/translation noise (one stream per sample).
    """
    noise = noise or MarkerNoiseConfig()
    if not 0 <= hand_link <= len(chain.joints):
        raise ValidationError(f"hand_link {hand_link} is not a frame of chain '{chain.name}'")
    samples = []
    for i, q in enumerate(joint_configs):
        base_from_hand = forward_kinematics(chain, q)[hand_link]
        cam_from_marker = compose(compose(cam_from_base, base_from_hand), marker_offset)
        if noise.rotation_sigma_rad > 0 or noise.translation_sigma_m > 0:
            rng = Rng(seed, stream=i)
            axis = np.array([rng.normal(), rng.normal(), rng.normal()])
            axis_norm = np.linalg.norm(axis)
            axis = axis / axis_norm if axis_norm > 1e-12 else np.array([1.0, 0.0, 0.0])
            angle = rng.normal(0.0, noise.rotation_sigma_rad)
            dt = np.array([rng.normal(0.0, noise.translation_sigma_m) for _ in range(3)])
            cam_from_marker = compose(cam_from_marker, Transform(so3_exp(axis * angle), dt))
        samples.append(HandEyeSample(base_from_hand, cam_from_marker))
    return samples

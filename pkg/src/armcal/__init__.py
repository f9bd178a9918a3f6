"""armcal: markerless camera-to-robot extrinsics calibration toolkit.

Turns 2D robot-keypoint observations (pixels or belief maps), joint
configurations, and camera intrinsics into the camera-from-robot-base SE(3)
pose via PnP, with a classic hand-eye baseline, PCK/ADD/AUC evaluation, and a
synthetic-data generator for end-to-end verification.
"""

__version__ = "0.1.0"

from . import errors
from .beliefmap import (
    BeliefMap,
    BeliefMapStack,
    KeypointDetection,
    PeakExtractConfig,
    extract_all,
    extract_peak,
    read_stack,
    render_gt,
    smooth,
    write_stack,
)
from .geometry import (
    CameraIntrinsics,
    Rotation,
    Transform,
    compose,
    in_frustum,
    project,
    quaternion_distance,
    rotation_angle_between,
    so3_exp,
    so3_log,
)
from .handeye import HandEyeSample, HandEyeSolution, solve_axxb, solve_eye_on_base
from .kinematics import (
    JointConfig,
    JointSpec,
    Keypoint,
    KinematicChain,
    forward_kinematics,
    keypoint_positions,
    load_chain,
    load_chain_file,
)
from .metrics import (
    SweepResult,
    ThresholdCurve,
    add,
    combination_sweep,
    curve_and_auc,
    pck,
    workspace_error_report,
)
from .pnp import (
    Correspondence,
    PnpConfig,
    PnpSolution,
    refine,
    reprojection_rmse,
    solve_epnp,
    solve_frame,
    solve_multiframe,
)
from .rng import Rng
from .synth import (
    CameraShellConfig,
    Dataset,
    FrameRecord,
    MarkerNoiseConfig,
    NoiseConfig,
    generate_dataset,
    generate_handeye_samples,
    sample_camera_pose,
    sample_joint_config,
)

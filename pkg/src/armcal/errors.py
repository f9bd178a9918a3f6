"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: input/parse problems exit 1, solver
precondition failures exit 2, empty evaluations exit 3.
"""


class CalibrationError(Exception):
    """Base class for every error raised by this package."""


class ParseError(CalibrationError):
    """A document could not be parsed (malformed JSON, missing/mistyped field)."""


class ValidationError(CalibrationError):
    """Parsed data violates an invariant (non-unit axis, bad limits, ...)."""


class AngleNearPi(CalibrationError):
    """Rotation logarithm requested too close to the pi singularity."""


class BehindCamera(CalibrationError):
    """Point has non-positive depth and cannot be projected."""


class DimensionMismatch(CalibrationError):
    """Vector length does not match what the chain or point lists require."""


class InsufficientPoints(CalibrationError):
    """Fewer than the minimum usable 2D-3D correspondences (or keypoints)."""


class DegenerateConfiguration(CalibrationError):
    """3D points are collinear or otherwise rank-deficient for pose solving."""


class AllPointsBehindCamera(CalibrationError):
    """Refinement started from a pose that puts every point behind the camera."""


class InsufficientMotion(CalibrationError):
    """Too few motion pairs, or rotation axes too parallel, for AX=XB."""


class MissingLimits(CalibrationError):
    """A movable joint has no declared limits but sampling requires them."""


class SolverUnavailableForM(CalibrationError):
    """The requested solver cannot run with this few frames per combination."""


class EmptyEvaluation(CalibrationError):
    """A metric was requested over zero counted samples."""


INPUT_ERRORS = (ParseError, ValidationError)

PRECONDITION_ERRORS = (
    AngleNearPi,
    BehindCamera,
    DimensionMismatch,
    InsufficientPoints,
    DegenerateConfiguration,
    AllPointsBehindCamera,
    InsufficientMotion,
    MissingLimits,
    SolverUnavailableForM,
)

"""Tag-based on-manifold EKF localization with tag installation error modeling."""

from .camera import Intrinsics, PixelPoint, project, projection_jacobian
from .estimator import (
    ExtrinsicCalib,
    FilterState,
    Mode,
    MotionInput,
    TagObservation,
    correct,
    predict,
)
from .lie import Pose, UncertainPose, adjoint, exp_se3, log_se3
from .tags import PerturbationSpec, Tag, TagMap, build_sigma, perturb_map

__version__ = "0.1.0"

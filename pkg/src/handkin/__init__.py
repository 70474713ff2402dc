"""Hand posture estimation from an exoskeleton glove by kinematic modeling.

Glove sensor counts are calibrated to joint angles, pushed through a
kinematic model of the glove to fingertip poses, registered into the palm
frame and solved back to finger joint angles on a model of the wearer's hand.
"""

__version__ = "0.1.0"

from .calibration import Alignment, SensorCalibration, align_spaces, apply_calibration, linear_calibration
from .exceptions import (
    DegenerateError,
    HandkinError,
    MissingJointError,
    ModelValidationError,
    ParseError,
    UnknownChannelError,
    UnknownLinkError,
    Unreachable,
)
from .ik import ESTIMATION_IK_CONFIG, FingerAngles, IkConfig, IkResult, analytic_finger_ik, solve_ik
from .kinematics import (
    JointSpec,
    KinematicModel,
    chain,
    forward_kinematics,
    geometric_jacobian,
    load_model,
    serialize_model,
)
from .models import (
    FingerDimensions,
    GloveGeometry,
    HandDimensions,
    build_glove_model,
    build_hand_model,
    default_hand_dimensions,
    fit_glove_geometry,
    hand_of_length,
)
from .pipeline import NoiseConfig, Pipeline, PipelineState, SensorFrame, estimate_frame, process_stream, simulate_glove
from .transform import Transform

__all__ = [
    "Alignment", "DegenerateError", "ESTIMATION_IK_CONFIG", "FingerAngles", "FingerDimensions",
    "GloveGeometry", "HandDimensions", "HandkinError", "IkConfig", "IkResult", "JointSpec",
    "KinematicModel", "MissingJointError", "ModelValidationError", "NoiseConfig", "ParseError",
    "Pipeline", "PipelineState", "SensorCalibration", "SensorFrame", "Transform", "UnknownChannelError",
    "UnknownLinkError", "Unreachable", "align_spaces", "analytic_finger_ik", "apply_calibration",
    "build_glove_model", "build_hand_model", "chain", "default_hand_dimensions", "estimate_frame",
    "fit_glove_geometry", "forward_kinematics", "geometric_jacobian", "hand_of_length", "linear_calibration",
    "load_model", "process_stream", "serialize_model", "simulate_glove", "solve_ik",
]

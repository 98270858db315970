"""Digital twin of a pneumatically actuated four-section soft gripper."""

from .calibration import (
    CameraIntrinsics,
    CubicFit,
    DistortionCoeffs,
    PressureSample,
    fit_cubic,
    predict_thetas,
)
from .controller import ControllerServer, ControllerState
from .http_api import TwinApiServer
from .kinematics import (
    ArcParams,
    DEFAULT_LENGTHS_MM,
    FlangePose,
    GripperConfig,
    GripperMount,
    arc_transform,
    chain_transform,
    end_effector,
    thetas_to_config,
)
from .twin import (
    TwinConfig,
    TwinEngine,
    TwinState,
    evaluate_pose_error,
    load_twin_config,
    pipeline_step,
)

__version__ = "0.1.0"

__all__ = [
    "ArcParams",
    "CameraIntrinsics",
    "ControllerServer",
    "ControllerState",
    "CubicFit",
    "DEFAULT_LENGTHS_MM",
    "DistortionCoeffs",
    "FlangePose",
    "GripperConfig",
    "GripperMount",
    "PressureSample",
    "TwinApiServer",
    "TwinConfig",
    "TwinEngine",
    "TwinState",
    "arc_transform",
    "chain_transform",
    "end_effector",
    "evaluate_pose_error",
    "fit_cubic",
    "load_twin_config",
    "pipeline_step",
    "predict_thetas",
    "thetas_to_config",
]

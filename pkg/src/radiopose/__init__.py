"""radiopose: 6D localization error bounds and manifold tracking filters
for multi-anchor MIMO-OFDM radio systems."""

from . import bounds, channel, errors, lie, simkit, tracking
from .bounds import IcrbReport, measurement_covariance, pose_error_bounds
from .channel import AnchorConfig, ArrayGeometry, BeamSet, ChannelParams, SignalConfig, draw_beams
from .lie import Pose, se3_exp, se3_log, so3_exp, so3_log
from .simkit import ScenarioConfig, TrajectorySegment, default_scenario, run_monte_carlo
from .tracking import FilterState, MotionCommand, PoseMeasurement, eskf_update, fusion_update, predict

__all__ = [
    "AnchorConfig",
    "ArrayGeometry",
    "BeamSet",
    "ChannelParams",
    "FilterState",
    "IcrbReport",
    "MotionCommand",
    "Pose",
    "PoseMeasurement",
    "ScenarioConfig",
    "SignalConfig",
    "TrajectorySegment",
    "bounds",
    "channel",
    "default_scenario",
    "draw_beams",
    "errors",
    "eskf_update",
    "fusion_update",
    "lie",
    "measurement_covariance",
    "pose_error_bounds",
    "predict",
    "run_monte_carlo",
    "se3_exp",
    "se3_log",
    "simkit",
    "so3_exp",
    "so3_log",
    "tracking",
]

__version__ = "0.1.0"

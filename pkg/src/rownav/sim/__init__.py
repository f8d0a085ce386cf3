from .camera import CameraModel, CameraPose, FrameObservation, camera_pose, render
from .episode import EpisodeLog, Rates, run_episode
from .kinematics import RobotPose, step_kinematics, wrap_angle
from .world import Crop, World, WorldConfig, generate_world, ground_truth_centerline

__all__ = [
    "CameraModel",
    "CameraPose",
    "Crop",
    "EpisodeLog",
    "FrameObservation",
    "Rates",
    "RobotPose",
    "World",
    "WorldConfig",
    "camera_pose",
    "generate_world",
    "ground_truth_centerline",
    "render",
    "run_episode",
    "step_kinematics",
    "wrap_angle",
]

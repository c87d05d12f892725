"""Cable-aware dual-arm planning for tethered tools.

One arm carries the tool while the other places a slider on the tool cable
so that the cable does not wrap around the gripper.
"""
from .geometry import Box, Pose, Segment, compose
from .cable import CableState, AccumulationTracker
from .scene import ConfigError, Scene, load_scene
from .rrt import PlanningError
from .omms import MotionSequence, PlanState, plan_omms, plan_handover
from .cmms import plan_cmms
from .runner import RunReport, run_benchmark, run_obstacle_trials, analyze_workspace

__version__ = "0.1.0"

__all__ = [
    "Box", "Pose", "Segment", "compose", "CableState", "AccumulationTracker",
    "ConfigError", "Scene", "load_scene", "PlanningError", "MotionSequence", "PlanState",
    "plan_omms", "plan_handover", "plan_cmms", "RunReport", "run_benchmark",
    "run_obstacle_trials", "analyze_workspace",
]

"""Robot simulation domains: arenas, sensors, kinematics and fitness."""

from .config import DOMAINS, DomainConfig, default_config
from .environment import Environment, EnvironmentFormatError, default_environments
from .evaluate import (
    EvalResult,
    RobotState,
    Trace,
    evaluate_domain,
    evaluate_dual_task,
    evaluate_lone_patrol,
    evaluate_team_patrol,
    evaluate_two_rooms,
    read_trace,
    rescore,
    sense,
    step,
    write_trace,
)
from .scoring import normalized_distance

__all__ = [
    "DOMAINS", "DomainConfig", "default_config", "Environment", "EnvironmentFormatError",
    "default_environments", "EvalResult", "RobotState", "Trace", "evaluate_domain",
    "evaluate_dual_task", "evaluate_lone_patrol", "evaluate_team_patrol", "evaluate_two_rooms",
    "read_trace", "rescore", "sense", "step", "write_trace", "normalized_distance",
]

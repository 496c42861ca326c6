from __future__ import annotations

import math
from dataclasses import dataclass, replace

DOMAINS = ("team_patrol", "lone_patrol", "dual_task", "two_rooms")
PATROL_SPEED = 0.5


@dataclass(frozen=True)
class DomainConfig:
    """Timing, kinematics and sensor settings of one domain.

    For the dual task ``seconds`` is the length of each of the two tasks.
    """

    name: str
    seconds: float
    steps_per_second: int
    rangefinders: int
    pie_slices: bool = False
    signal_input: bool = False
    collision_ends: bool = False
    forward_speed: float = 2.0
    turn_rate: float = math.radians(12.0)
    ray_span_degrees: float = 180.0
    max_range: float = 60.0
    waypoint_radius: float = 10.0
    stop_distance: float = 0.5
    num_tasks: int = 1

    @property
    def total_steps(self) -> int:
        return int(round(self.seconds * self.steps_per_second))

    @property
    def num_sensors(self) -> int:
        return self.rangefinders + 4 * int(self.pie_slices) + int(self.signal_input)

    def with_(self, **changes) -> "DomainConfig":
        return replace(self, **changes)


def default_config(domain: str, signal_input: bool = False) -> DomainConfig:
    # patrol domains step 30 times a second, so their per-step speed is lower
    # to keep a similar speed per simulated second across domains
    if domain == "team_patrol":
        return DomainConfig(domain, 45, 30, 6, signal_input=signal_input, num_tasks=2,
                            forward_speed=PATROL_SPEED)
    if domain == "lone_patrol":
        return DomainConfig(domain, 80, 30, 6, num_tasks=4, forward_speed=PATROL_SPEED)
    if domain == "dual_task":
        return DomainConfig(domain, 45, 5, 5, pie_slices=True, num_tasks=2)
    if domain == "two_rooms":
        return DomainConfig(domain, 200, 10, 5, pie_slices=True, collision_ends=True, num_tasks=2)
    raise ValueError(f"unknown domain {domain!r}; expected one of {list(DOMAINS)}")

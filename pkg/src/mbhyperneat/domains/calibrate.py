"""Check that robot speed and turn rate fit each domain's time budget.

For every domain the longest straight leg between consecutive targets is
compared with the distance a robot covers in the evaluation time.
"""

from __future__ import annotations

import math

from .config import DOMAINS, DomainConfig, default_config
from .environment import default_environments


def _legs(env):
    pts = [tuple(env.starts[0][:2])] + [tuple(p) for p in env.target_points()]
    return [math.dist(a, b) for a, b in zip(pts, pts[1:])]


def calibrate(domain: str, config: DomainConfig | None = None, envs=None) -> dict:
    """Budget figures for ``domain``.

    ``ratio`` is the number of steps in one evaluation divided by the steps
    needed to drive the whole target sequence in straight lines plus a
    half turn at every target; values well above 1 leave room for detours.
    """
    config = config or default_config(domain)
    envs = envs if envs is not None else default_environments(domain)
    legs = [leg for env in envs for leg in _legs(env)]
    if domain == "team_patrol":
        env = envs[0]
        start = env.starts[0][:2]
        legs = [max(math.dist(start, w) for w in env.waypoints)] * 2
    drive = sum(legs) / config.forward_speed
    turns = len(legs) * math.pi / config.turn_rate
    steps = config.total_steps * (2 if domain == "dual_task" else 1)
    needed = drive + turns
    return {
        "domain": domain,
        "steps": steps,
        "longest_leg": max(legs),
        "longest_leg_steps": max(legs) / config.forward_speed,
        "needed_steps": needed,
        "ratio": steps / needed,
    }


def calibrate_all() -> list[dict]:
    return [calibrate(d) for d in DOMAINS]

"""Fitness formulas of the four domains, plus re-scoring from emitted traces.

Re-scoring walks a trace in plain Python with the same arithmetic as the
simulation kernels, so a trace and its reported fitness can be checked
against each other exactly.
"""

from __future__ import annotations

import logging
import math

import numpy as np

log = logging.getLogger(__name__)

LONE_PATROL_GOALS = 4
DUAL_FORAGE_WAYPOINTS = 4
TWO_ROOMS_TARGETS = 15
TEAM_PENALTY = 10.0
TEAM_RETURN_PENALTY = 100.0
TEAM_MOVE_THRESHOLD = 1.0


def normalized_distance(D: float, d: float) -> float:
    """Proximity ``(D - d) / D``; 1 at the point of interest, 0 at distance ``D``."""
    if D <= 0:
        raise ValueError(f"maximum distance must be positive, got {D}")
    if d > D:
        log.warning("distance %.3f exceeds the domain maximum %.3f; clamping to 0", d, D)
        return 0.0
    return (D - d) / D


def lone_patrol_increment(reached: int, proximity: float, goals: int = LONE_PATROL_GOALS) -> float:
    """Per-step reward: proximity to the next goal plus one per goal already reached."""
    if reached >= goals:
        return float(goals)
    return reached + proximity


def forage_fitness(n: int, d_f: float, total: int = DUAL_FORAGE_WAYPOINTS) -> float:
    """``(n + (1 - d_f)) / total`` capped at 1.

    ``d_f`` is the distance to the next waypoint as a fraction of the domain's
    maximum distance (0 when no waypoint remains).
    """
    return min(1.0, (n + (1.0 - d_f)) / total)


def two_rooms_fitness(n: int, d_f: float) -> float:
    return forage_fitness(n, d_f, TWO_ROOMS_TARGETS)


def dual_task_fitness(f_nav: float, f_food: float) -> float:
    return (f_nav + f_food) / 2.0


def team_patrol_fitness(advance: float, ret: float, all_reached: bool, all_moved: bool) -> float:
    """Combine the advance and return sums with the two penalty rules."""
    if not all_reached:
        ret = ret / TEAM_RETURN_PENALTY
    total = advance + ret
    if not (all_reached and all_moved):
        total = total / TEAM_PENALTY
    return total


def team_patrol_increment(d: float, D: float, radius: float) -> float:
    if d <= radius:
        return 1.0
    return max(0.0, (D - d) / D)


def _dist(ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    return math.sqrt(dx * dx + dy * dy)


def _prox(D, d):
    return max(0.0, (D - d) / D)


def remaining_fraction(D: float, d: float) -> float:
    return min(1.0, d / D)


def rescore_sequence(poses, targets, radius, D, total_steps=None, accrue=False):
    """Replay in-order target visits along ``poses`` (rows ``x, y, heading``).

    Returns ``(reached, fitness_sum)`` where the sum is the lone-patrol
    per-step accrual when ``accrue`` is set (including credit for steps cut
    off after completion) and 0 otherwise.
    """
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    n_t = targets.shape[0]
    count = 0
    total = 0.0
    steps = len(poses) - 1
    for t in range(steps):
        x, y = float(poses[t + 1][0]), float(poses[t + 1][1])
        if count < n_t and _dist(x, y, targets[count, 0], targets[count, 1]) <= radius:
            count += 1
        if accrue:
            if count >= n_t:
                total += float(n_t)
            else:
                total += count + _prox(D, _dist(x, y, targets[count, 0], targets[count, 1]))
    if accrue and count >= n_t and total_steps is not None:
        total += float(n_t) * (total_steps - steps)
    return count, total


def end_distance_fraction(pose, targets, reached, D) -> float:
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    if reached >= targets.shape[0]:
        return 0.0
    tx, ty = targets[reached]
    return remaining_fraction(D, _dist(float(pose[0]), float(pose[1]), tx, ty))


def rescore_team_patrol(poses, waypoints, starts, radius, D, steps_per_second, switch_step):
    """Recompute team patrol fitness from robot poses ``(steps + 1, robots, 3)``."""
    poses = np.asarray(poses, dtype=float)
    waypoints = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    n_steps = poses.shape[0] - 1
    n_robots = poses.shape[1]
    claimed = [-1] * waypoints.shape[0]
    advance = 0.0
    ret = 0.0
    for t in range(n_steps):
        pos = poses[t + 1]
        returning = t >= switch_step
        if not returning:
            for r in range(n_robots):
                for w in range(waypoints.shape[0]):
                    if claimed[w] < 0 and _dist(pos[r, 0], pos[r, 1], waypoints[w, 0], waypoints[w, 1]) <= radius:
                        claimed[w] = r
        if (t + 1) % steps_per_second != 0:
            continue
        for r in range(n_robots):
            x, y = pos[r, 0], pos[r, 1]
            if returning:
                d = _dist(x, y, starts[r][0], starts[r][1])
                ret += team_patrol_increment(d, D, radius)
            else:
                d = nearest_goal_distance(x, y, r, waypoints, claimed)
                advance += team_patrol_increment(d, D, radius)
    all_reached = all(c >= 0 for c in claimed)
    moved = True
    if n_steps > switch_step:
        for r in range(n_robots):
            a = poses[switch_step, r]
            b = poses[n_steps, r]
            if _dist(a[0], a[1], b[0], b[1]) < TEAM_MOVE_THRESHOLD:
                moved = False
    else:
        moved = False
    if n_steps == 0:
        return 0.0, advance, ret, all_reached, moved
    return team_patrol_fitness(advance, ret, all_reached, moved), advance, ret, all_reached, moved


def nearest_goal_distance(x, y, robot, waypoints, claimed) -> float:
    """Distance to the nearest waypoint not claimed by another robot."""
    best = math.inf
    for w in range(waypoints.shape[0]):
        if claimed[w] < 0 or claimed[w] == robot:
            d = _dist(x, y, waypoints[w, 0], waypoints[w, 1])
            if d < best:
                best = d
    if best == math.inf:
        for w in range(waypoints.shape[0]):
            best = min(best, _dist(x, y, waypoints[w, 0], waypoints[w, 1]))
    return best

"""Domain evaluations: run controllers in an environment and score them."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..controller import MultiBrainController, PackedBrains, brains_used
from ..substrate import ConfigurationError
from . import scoring
from .config import DomainConfig, default_config
from .environment import Environment
from .geometry import pie_slices, ray_angles, rangefinders
from .sim import TASK_BY_COUNT, TASK_BY_REGION, TASK_CONSTANT, _move, run_single, run_team

# Task ids used by human task divisions in each domain.
LONE_PATROL_TASKS = {0: "west", 1: "east", 2: "north", 3: "home"}
DUAL_TASKS = {0: "hallway", 1: "forage"}
TWO_ROOMS_TASKS = {0: "hallway", 1: "room"}
TEAM_TASKS = {0: "advance", 1: "return"}


@dataclass
class RobotState:
    x: float
    y: float
    heading: float
    alive: bool = True


@dataclass
class Trace:
    """Per-step records of one or more consecutive episodes.

    ``poses[e]`` has shape ``(steps + 1, robots, 3)`` with the start pose in
    row 0; ``chosen[e]`` is ``(steps, robots)``; ``tasks[e]`` and
    ``cumulative[e]`` are ``(steps,)``.
    """

    poses: list[np.ndarray] = field(default_factory=list)
    chosen: list[np.ndarray] = field(default_factory=list)
    tasks: list[np.ndarray] = field(default_factory=list)
    cumulative: list[np.ndarray] = field(default_factory=list)

    def add(self, poses, chosen, tasks, cumulative):
        poses = np.asarray(poses, dtype=float)
        if poses.ndim == 2:
            poses = poses[:, None, :]
            chosen = np.asarray(chosen)[:, None]
        self.poses.append(poses)
        self.chosen.append(np.asarray(chosen, dtype=np.int64))
        self.tasks.append(np.asarray(tasks, dtype=np.int64))
        self.cumulative.append(np.asarray(cumulative, dtype=float))

    @property
    def num_steps(self) -> int:
        return sum(len(t) for t in self.tasks)

    def all_chosen(self) -> np.ndarray:
        if not self.chosen:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([c.reshape(-1) for c in self.chosen])

    def equals(self, other: "Trace") -> bool:
        parts = ("poses", "chosen", "tasks", "cumulative")
        return all(
            len(getattr(self, p)) == len(getattr(other, p))
            and all(np.array_equal(a, b) for a, b in zip(getattr(self, p), getattr(other, p)))
            for p in parts
        )


@dataclass
class EvalResult:
    fitness: float
    components: dict
    trace: Trace
    brains_used: int
    usage: list[int]


def sense(env: Environment, robot: RobotState, config: DomainConfig,
          next_waypoint=None, signal: float | None = None) -> np.ndarray:
    """Sensor vector: rangefinders, then pie slices, then the signal input."""
    angles = ray_angles(config.rangefinders, config.ray_span_degrees)
    out = np.zeros(config.rangefinders + 4 * config.pie_slices + (signal is not None))
    rangefinders(env.walls, robot.x, robot.y, robot.heading, angles, config.max_range, out, 0)
    if config.pie_slices and next_waypoint is not None:
        pie_slices(robot.x, robot.y, robot.heading, float(next_waypoint[0]),
                   float(next_waypoint[1]), out, config.rangefinders)
    if signal is not None:
        out[-1] = signal
    return out


def step(env: Environment, robot: RobotState, action: int, config: DomainConfig) -> RobotState:
    if not robot.alive:
        raise ValueError("cannot step a robot that is no longer alive")
    x, y, h, touched = _move(env.walls, robot.x, robot.y, robot.heading, int(action),
                             config.forward_speed, config.turn_rate, config.stop_distance)
    return RobotState(x, y, h, not (touched and config.collision_ends))


def _check_arity(packed: PackedBrains, config: DomainConfig, signal: bool = False):
    expected = config.rangefinders + 4 * config.pie_slices + int(signal)
    found = packed.w_ih.shape[2]
    if found != expected:
        raise ConfigurationError(f"controller expects {found} sensor inputs, "
                                 f"domain {config.name!r} provides {expected}")


def _check_tasks(packed: PackedBrains, num_tasks: int):
    if packed.use_pref:
        return
    if packed.task_map.shape[0] < num_tasks or np.any(packed.task_map[:num_tasks] < 0):
        raise ConfigurationError(f"task division must cover task ids 0..{num_tasks - 1}")


def _record_usage(controller: MultiBrainController, chosen: np.ndarray):
    counts = np.bincount(chosen.reshape(-1), minlength=len(controller.brains))
    for b, c in enumerate(counts):
        controller.usage[b] += int(c)


def _episode(env, config, packed, *, task_mode=TASK_CONSTANT, task_const=0,
             task_by_count=None, region="", accrue=False, n_steps=None):
    angles = ray_angles(config.rangefinders, config.ray_span_degrees)
    targets = env.target_points()
    visible = env.target_visible()
    verts, ptr = env.region_arrays(region) if region else (np.zeros((0, 2)), np.zeros(1, np.int64))
    if task_by_count is None:
        task_by_count = np.zeros(targets.shape[0] + 1, dtype=np.int64)
    sx, sy, sh = env.starts[0]
    return run_single(
        env.walls, targets, visible, float(sx), float(sy), float(sh), angles,
        float(config.max_range), bool(config.pie_slices),
        int(config.total_steps if n_steps is None else n_steps),
        float(config.forward_speed), float(config.turn_rate), float(config.waypoint_radius),
        float(config.stop_distance), bool(config.collision_ends), float(env.max_distance),
        int(task_mode), int(task_const), np.asarray(task_by_count, dtype=np.int64),
        verts, ptr, bool(accrue), *packed.args(),
    )


LONE_PATROL_TASK_BY_COUNT = np.array([0, 1, 2, 3, 3], dtype=np.int64)


def evaluate_lone_patrol(controller: MultiBrainController, env: Environment,
                         config: DomainConfig | None = None) -> EvalResult:
    """Task id is the index of the next goal (west, east, north, home)."""
    config = config or default_config("lone_patrol")
    packed = controller.packed
    _check_arity(packed, config)
    _check_tasks(packed, 4)
    poses, chosen, tasks, cum, steps, reached, _ = _episode(
        env, config, packed, task_mode=TASK_BY_COUNT,
        task_by_count=LONE_PATROL_TASK_BY_COUNT, accrue=True)
    n_t = env.target_points().shape[0]
    fitness = float(cum[-1]) if steps else 0.0
    if reached >= n_t:
        fitness += float(n_t) * (config.total_steps - steps)
    trace = Trace()
    trace.add(poses, chosen, tasks, cum)
    _record_usage(controller, chosen)
    return EvalResult(fitness, {"reached": int(reached), "steps": int(steps)}, trace,
                      brains_used(chosen, len(controller.brains)), _usage(chosen, controller))


def _usage(chosen, controller):
    return [int(c) for c in np.bincount(np.asarray(chosen).reshape(-1),
                                        minlength=len(controller.brains))]


def evaluate_dual_task(controller: MultiBrainController, envs: Sequence[Environment],
                       config: DomainConfig | None = None) -> EvalResult:
    """Hallway (task 0) then foraging (task 1), with the same controller.

    The hallway episode stops when the goal is reached; ``f_nav`` is then 1.
    """
    config = config or default_config("dual_task")
    hallway, forage = envs
    packed = controller.packed
    _check_arity(packed, config)
    _check_tasks(packed, 2)
    trace = Trace()

    poses, chosen_h, tasks, cum, steps, reached, _ = _episode(hallway, config, packed, task_const=0)
    goal = hallway.target_points()[0]
    if reached:
        f_nav = 1.0
    else:
        d = scoring._dist(poses[-1, 0], poses[-1, 1], goal[0], goal[1])
        f_nav = scoring.normalized_distance(hallway.max_distance, d)
    trace.add(poses, chosen_h, tasks, np.full(steps, f_nav / 2.0))

    poses, chosen_f, tasks, cum, steps, n, _ = _episode(forage, config, packed, task_const=1)
    d_f = scoring.end_distance_fraction(poses[-1], forage.target_points(), n, forage.max_distance)
    f_food = scoring.forage_fitness(n, d_f, forage.target_points().shape[0])
    fitness = scoring.dual_task_fitness(f_nav, f_food)
    trace.add(poses, chosen_f, tasks, np.full(steps, fitness))

    chosen = np.concatenate([chosen_h, chosen_f])
    _record_usage(controller, chosen)
    comps = {"f_nav": f_nav, "f_food": f_food, "n": int(n), "d_f": d_f}
    return EvalResult(fitness, comps, trace, brains_used(chosen, len(controller.brains)),
                      _usage(chosen, controller))


def evaluate_two_rooms(controller: MultiBrainController, env: Environment,
                       config: DomainConfig | None = None) -> EvalResult:
    """Task 0 inside the hallway region, 1 in the rooms; ends on wall contact."""
    config = config or default_config("two_rooms")
    packed = controller.packed
    _check_arity(packed, config)
    _check_tasks(packed, 2)
    poses, chosen, tasks, cum, steps, n, alive = _episode(
        env, config, packed, task_mode=TASK_BY_REGION, region="hallway")
    targets = env.target_points()
    d_f = scoring.end_distance_fraction(poses[-1], targets, n, env.max_distance)
    fitness = scoring.forage_fitness(n, d_f, targets.shape[0])
    trace = Trace()
    trace.add(poses, chosen, tasks, np.full(steps, fitness))
    _record_usage(controller, chosen)
    comps = {"n": int(n), "d_f": d_f, "collided": not alive, "steps": int(steps)}
    return EvalResult(fitness, comps, trace, brains_used(chosen, len(controller.brains)),
                      _usage(chosen, controller))


def evaluate_team_patrol(controllers: Sequence[MultiBrainController], env: Environment,
                         config: DomainConfig | None = None) -> EvalResult:
    """Three robots sharing one genome (decoded with team coordinates -1, 0, 1)."""
    config = config or default_config("team_patrol")
    if len(controllers) != len(env.starts):
        raise ConfigurationError(f"team patrol needs {len(env.starts)} controllers, "
                                 f"got {len(controllers)}")
    packs = [c.packed for c in controllers]
    for pk in packs:
        _check_arity(pk, config, config.signal_input)
        _check_tasks(pk, 2)
    shapes = {tuple(a.shape for a in pk.args()[:8]) for pk in packs}
    if len(shapes) != 1 or len({pk.use_pref for pk in packs}) != 1:
        raise ConfigurationError("team controllers must share one brain layout")
    stacked = [np.ascontiguousarray(np.stack([pk.args()[i] for pk in packs])) for i in range(8)]
    n_steps = config.total_steps
    switch = n_steps // 2
    angles = ray_angles(config.rangefinders, config.ray_span_degrees)
    starts = np.array(env.starts, dtype=float).reshape(-1, 3)
    waypoints = np.array(env.waypoints, dtype=float).reshape(-1, 2)
    poses, chosen, tasks, cum, adv, ret, claimed = run_team(
        env.walls, waypoints, starts, angles, float(config.max_range), bool(config.signal_input),
        int(n_steps), int(switch), int(config.steps_per_second), float(config.forward_speed),
        float(config.turn_rate), float(config.waypoint_radius), float(config.stop_distance),
        float(env.max_distance), *stacked, packs[0].task_map, packs[0].use_pref,
    )
    all_reached = bool(np.all(claimed >= 0))
    moved = n_steps > switch and all(
        scoring._dist(poses[switch, r, 0], poses[switch, r, 1],
                      poses[n_steps, r, 0], poses[n_steps, r, 1]) >= scoring.TEAM_MOVE_THRESHOLD
        for r in range(starts.shape[0]))
    fitness = scoring.team_patrol_fitness(adv, ret, all_reached, moved) if n_steps else 0.0
    trace = Trace()
    trace.add(poses, chosen, tasks, cum)
    for r, c in enumerate(controllers):
        _record_usage(c, chosen[:, r])
    used = brains_used(chosen.reshape(-1), len(controllers[0].brains))
    usage = [int(v) for v in np.bincount(chosen.reshape(-1), minlength=len(controllers[0].brains))]
    comps = {"advance": adv, "return": ret, "all_reached": all_reached, "all_moved": moved}
    return EvalResult(float(fitness), comps, trace, used, usage)


def evaluate_domain(domain: str, controllers, envs: Sequence[Environment],
             config: DomainConfig | None = None) -> EvalResult:
    """Dispatch by domain name. ``controllers`` is a list (three for team patrol)."""
    if domain == "team_patrol":
        return evaluate_team_patrol(controllers, envs[0], config)
    if domain == "lone_patrol":
        return evaluate_lone_patrol(controllers[0], envs[0], config)
    if domain == "dual_task":
        return evaluate_dual_task(controllers[0], envs, config)
    if domain == "two_rooms":
        return evaluate_two_rooms(controllers[0], envs[0], config)
    raise ValueError(f"unknown domain {domain!r}")


def rescore(domain: str, trace: Trace, envs: Sequence[Environment],
            config: DomainConfig | None = None) -> float:
    """Recompute the fitness of an evaluation from its trace alone."""
    config = config or default_config(domain)
    if domain == "team_patrol":
        env = envs[0]
        poses = trace.poses[0]
        return scoring.rescore_team_patrol(poses, env.waypoints, env.starts, config.waypoint_radius,
                                           env.max_distance, config.steps_per_second,
                                           config.total_steps // 2)[0]
    if domain == "lone_patrol":
        env = envs[0]
        _, total = scoring.rescore_sequence(trace.poses[0][:, 0], env.target_points(),
                                            config.waypoint_radius, env.max_distance,
                                            config.total_steps, accrue=True)
        return total
    if domain == "dual_task":
        hallway, forage = envs
        reached, _ = scoring.rescore_sequence(trace.poses[0][:, 0], hallway.target_points(),
                                              config.waypoint_radius, hallway.max_distance)
        end = trace.poses[0][-1, 0]
        goal = hallway.target_points()[0]
        f_nav = 1.0 if reached else scoring.normalized_distance(
            hallway.max_distance, scoring._dist(end[0], end[1], goal[0], goal[1]))
        n, _ = scoring.rescore_sequence(trace.poses[1][:, 0], forage.target_points(),
                                        config.waypoint_radius, forage.max_distance)
        targets = forage.target_points()
        d_f = scoring.end_distance_fraction(trace.poses[1][-1, 0], targets, n, forage.max_distance)
        return scoring.dual_task_fitness(f_nav, scoring.forage_fitness(n, d_f, targets.shape[0]))
    if domain == "two_rooms":
        env = envs[0]
        targets = env.target_points()
        n, _ = scoring.rescore_sequence(trace.poses[0][:, 0], targets, config.waypoint_radius,
                                        env.max_distance)
        d_f = scoring.end_distance_fraction(trace.poses[0][-1, 0], targets, n, env.max_distance)
        return scoring.forage_fitness(n, d_f, targets.shape[0])
    raise ValueError(f"unknown domain {domain!r}")


def write_trace(trace: Trace, path) -> None:
    """CSV with one row per step; row ``step 0`` of each episode is the start pose."""
    robots = trace.poses[0].shape[1] if trace.poses else 1
    header = ["episode", "step", "task"]
    for r in range(robots):
        header += [f"x{r}", f"y{r}", f"heading{r}", f"brain{r}"]
    header.append("cumulative_fitness")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for e, poses in enumerate(trace.poses):
            for t in range(poses.shape[0]):
                row = [e, t, trace.tasks[e][t - 1] if t else -1]
                for r in range(robots):
                    brain = trace.chosen[e][t - 1, r] if t else -1
                    row += [repr(float(v)) for v in poses[t, r]] + [int(brain)]
                row.append(repr(float(trace.cumulative[e][t - 1])) if t else "0.0")
                w.writerow(row)


def read_trace(path) -> Trace:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    robots = (len(header) - 4) // 4
    trace = Trace()
    episodes: dict[int, list] = {}
    for row in body:
        episodes.setdefault(int(row[0]), []).append(row)
    for e in sorted(episodes):
        rs = episodes[e]
        poses = np.array([[[float(r[3 + 4 * k + j]) for j in range(3)] for k in range(robots)]
                          for r in rs])
        chosen = np.array([[int(r[6 + 4 * k]) for k in range(robots)] for r in rs[1:]],
                          dtype=np.int64).reshape(-1, robots)
        tasks = np.array([int(r[2]) for r in rs[1:]], dtype=np.int64)
        cum = np.array([float(r[-1]) for r in rs[1:]])
        trace.add(poses, chosen, tasks, cum)
    return trace

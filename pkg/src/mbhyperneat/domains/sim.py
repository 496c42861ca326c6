"""Compiled episode loops.

Each step: pick the task id, sense, let the controller act, move, then
update in-order target visits and fitness.  Trace arrays record the pose
after every step (row 0 is the start pose).
"""

import math

import numpy as np
from numba import njit

from ..controller import choose_action
from .geometry import advance, distance, pie_slices, point_in_polygons, rangefinders_cs, wrap_angle

TASK_CONSTANT, TASK_BY_COUNT, TASK_BY_REGION = 0, 1, 2


@njit(cache=True)
def _move(walls, x, y, h, action, speed, turn, stop_distance):
    if action == 0:
        return x, y, wrap_angle(h + turn), False
    if action == 2:
        return x, y, wrap_angle(h - turn), False
    nx, ny, touched = advance(walls, x, y, h, speed, stop_distance)
    return nx, ny, h, touched


@njit(cache=True)
def run_single(walls, targets, visible, sx, sy, sh, ray_angles, max_range, use_pie,
               n_steps, speed, turn, radius, stop_distance, collision_ends, D,
               task_mode, task_const, task_by_count, region_verts, region_ptr, accrue,
               w_ih, b_h, w_ho, w_io, b_o, p_in, p_h, p_b, task_map, use_pref):
    """One robot; stops early once every target is reached or on a fatal collision.

    Returns ``(poses, chosen, tasks, cum, steps_run, reached, alive)``.
    """
    n_t = targets.shape[0]
    n_rays = ray_angles.shape[0]
    n_in = w_ih.shape[2]
    poses = np.zeros((n_steps + 1, 3))
    chosen = np.zeros(n_steps, dtype=np.int64)
    tasks = np.zeros(n_steps, dtype=np.int64)
    cum = np.zeros(n_steps)
    x, y, h = sx, sy, sh
    poses[0, 0], poses[0, 1], poses[0, 2] = x, y, h
    sensors = np.zeros(n_in)
    ray_cos = np.cos(ray_angles)
    ray_sin = np.sin(ray_angles)
    out = np.empty(b_o.shape[1])
    hid = np.empty(b_h.shape[1])
    count = 0
    total = 0.0
    alive = True
    steps = 0
    for t in range(n_steps):
        if count >= n_t or not alive:
            break
        if task_mode == TASK_BY_COUNT:
            task = task_by_count[count]
        elif task_mode == TASK_BY_REGION:
            task = 0 if point_in_polygons(x, y, region_verts, region_ptr) else 1
        else:
            task = task_const
        rangefinders_cs(walls, x, y, math.cos(h), math.sin(h), ray_cos, ray_sin, max_range, sensors, 0)
        if use_pie:
            k = count
            while k < n_t and not visible[k]:
                k += 1
            if k < n_t:
                pie_slices(x, y, h, targets[k, 0], targets[k, 1], sensors, n_rays)
            else:
                for i in range(4):
                    sensors[n_rays + i] = 0.0
        action, brain = choose_action(sensors, task, w_ih, b_h, w_ho, w_io, b_o,
                                      p_in, p_h, p_b, task_map, use_pref, out, hid)
        x, y, h, touched = _move(walls, x, y, h, action, speed, turn, stop_distance)
        if touched and collision_ends:
            alive = False
        if count < n_t and distance(x, y, targets[count, 0], targets[count, 1]) <= radius:
            count += 1
        if accrue:
            if count >= n_t:
                total += float(n_t)
            else:
                d = distance(x, y, targets[count, 0], targets[count, 1])
                total += count + max(0.0, (D - d) / D)
        poses[t + 1, 0], poses[t + 1, 1], poses[t + 1, 2] = x, y, h
        chosen[t] = brain
        tasks[t] = task
        cum[t] = total
        steps = t + 1
    return poses[:steps + 1], chosen[:steps], tasks[:steps], cum[:steps], steps, count, alive


@njit(cache=True)
def _nearest_goal(x, y, r, waypoints, claimed):
    best = np.inf
    for w in range(waypoints.shape[0]):
        if claimed[w] < 0 or claimed[w] == r:
            d = distance(x, y, waypoints[w, 0], waypoints[w, 1])
            if d < best:
                best = d
    if best == np.inf:
        for w in range(waypoints.shape[0]):
            best = min(best, distance(x, y, waypoints[w, 0], waypoints[w, 1]))
    return best


@njit(cache=True)
def _team_increment(d, D, radius):
    if d <= radius:
        return 1.0
    return max(0.0, (D - d) / D)


@njit(cache=True)
def run_team(walls, waypoints, starts, ray_angles, max_range, signal_input,
             n_steps, switch_step, steps_per_second, speed, turn, radius, stop_distance, D,
             w_ih, b_h, w_ho, w_io, b_o, p_in, p_h, p_b, task_map, use_pref):
    """Team patrol with one packed controller per robot (leading robot axis).

    Returns ``(poses, chosen, tasks, cum, advance_sum, return_sum, claimed)``.
    """
    n_r = starts.shape[0]
    n_rays = ray_angles.shape[0]
    n_in = w_ih.shape[3]
    poses = np.zeros((n_steps + 1, n_r, 3))
    chosen = np.zeros((n_steps, n_r), dtype=np.int64)
    tasks = np.zeros(n_steps, dtype=np.int64)
    cum = np.zeros(n_steps)
    for r in range(n_r):
        poses[0, r, 0] = starts[r, 0]
        poses[0, r, 1] = starts[r, 1]
        poses[0, r, 2] = starts[r, 2]
    claimed = np.full(waypoints.shape[0], -1, dtype=np.int64)
    sensors = np.zeros(n_in)
    ray_cos = np.cos(ray_angles)
    ray_sin = np.sin(ray_angles)
    out = np.empty(b_o.shape[2])
    hid = np.empty(b_h.shape[2])
    adv = 0.0
    ret = 0.0
    for t in range(n_steps):
        returning = t >= switch_step
        task = 1 if returning else 0
        for r in range(n_r):
            x = poses[t, r, 0]
            y = poses[t, r, 1]
            h = poses[t, r, 2]
            rangefinders_cs(walls, x, y, math.cos(h), math.sin(h), ray_cos, ray_sin, max_range, sensors, 0)
            if signal_input:
                sensors[n_rays] = 1.0 if returning else 0.0
            action, brain = choose_action(sensors, task, w_ih[r], b_h[r], w_ho[r], w_io[r],
                                          b_o[r], p_in[r], p_h[r], p_b[r], task_map, use_pref, out, hid)
            x, y, h, touched = _move(walls, x, y, h, action, speed, turn, stop_distance)
            poses[t + 1, r, 0] = x
            poses[t + 1, r, 1] = y
            poses[t + 1, r, 2] = h
            chosen[t, r] = brain
        if not returning:
            for r in range(n_r):
                for w in range(waypoints.shape[0]):
                    if claimed[w] < 0 and distance(poses[t + 1, r, 0], poses[t + 1, r, 1],
                                                   waypoints[w, 0], waypoints[w, 1]) <= radius:
                        claimed[w] = r
        if (t + 1) % steps_per_second == 0:
            for r in range(n_r):
                x = poses[t + 1, r, 0]
                y = poses[t + 1, r, 1]
                if returning:
                    d = distance(x, y, starts[r, 0], starts[r, 1])
                    ret += _team_increment(d, D, radius)
                else:
                    d = _nearest_goal(x, y, r, waypoints, claimed)
                    adv += _team_increment(d, D, radius)
        tasks[t] = task
        cum[t] = adv + ret
    return poses, chosen, tasks, cum, adv, ret, claimed

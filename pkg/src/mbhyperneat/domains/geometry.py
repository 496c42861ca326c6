"""Ray casting, point-robot motion and compass sensing on wall segments.

Walls are an ``(n, 4)`` float array of segments ``x1, y1, x2, y2``.
Headings are radians, counter-clockwise from +x; positive relative angles
are to the robot's left.
"""

import math

import numpy as np
from numba import njit

_PARALLEL_EPS = 1e-12
_ENDPOINT_EPS = 1e-9


@njit(cache=True)
def cast_ray(walls, px, py, dx, dy):
    """Distance along unit direction ``(dx, dy)`` to the nearest wall (inf if none)."""
    best = np.inf
    for k in range(walls.shape[0]):
        x1 = walls[k, 0]
        y1 = walls[k, 1]
        sx = walls[k, 2] - x1
        sy = walls[k, 3] - y1
        denom = dx * sy - dy * sx
        if abs(denom) < _PARALLEL_EPS:
            continue
        qx = x1 - px
        qy = y1 - py
        tn = qx * sy - qy * sx
        un = qx * dy - qy * dx
        # compare numerators against the positive denominator to avoid dividing
        if denom < 0.0:
            denom = -denom
            tn = -tn
            un = -un
        if tn < 0.0 or un < -_ENDPOINT_EPS * denom or un > (1.0 + _ENDPOINT_EPS) * denom:
            continue
        t = tn / denom
        if t < best:
            best = t
    return best


@njit(cache=True)
def wrap_angle(a):
    while a > math.pi:
        a -= 2.0 * math.pi
    while a <= -math.pi:
        a += 2.0 * math.pi
    return a


@njit(cache=True)
def rangefinders(walls, px, py, heading, ray_angles, max_range, out, offset):
    rangefinders_cs(walls, px, py, math.cos(heading), math.sin(heading),
                    np.cos(ray_angles), np.sin(ray_angles), max_range, out, offset)


@njit(cache=True)
def rangefinders_cs(walls, px, py, ch, sh, ray_cos, ray_sin, max_range, out, offset):
    """Rangefinders with the heading and ray angles given as cosines and sines."""
    for i in range(ray_cos.shape[0]):
        ca = ray_cos[i]
        sa = ray_sin[i]
        d = cast_ray(walls, px, py, ch * ca - sh * sa, sh * ca + ch * sa)
        out[offset + i] = 1.0 - min(d, max_range) / max_range


@njit(cache=True)
def pie_slices(px, py, heading, tx, ty, out, offset):
    """Quadrant indicator toward ``(tx, ty)``: front-left, front-right, back-left, back-right."""
    for i in range(4):
        out[offset + i] = 0.0
    rel = wrap_angle(math.atan2(ty - py, tx - px) - heading)
    half = 0.5 * math.pi
    if 0.0 <= rel < half:
        out[offset] = 1.0
    elif -half <= rel < 0.0:
        out[offset + 1] = 1.0
    elif rel >= half:
        out[offset + 2] = 1.0
    else:
        out[offset + 3] = 1.0


@njit(cache=True)
def advance(walls, px, py, heading, speed, stop_distance):
    """Move forward; returns ``(x, y, touched)``.

    Movement is truncated ``stop_distance`` short of the first wall on the path;
    ``touched`` reports that truncation happened.
    """
    dx = math.cos(heading)
    dy = math.sin(heading)
    t = cast_ray(walls, px, py, dx, dy)
    if t - stop_distance < speed:
        move = max(0.0, t - stop_distance)
        return px + move * dx, py + move * dy, True
    return px + speed * dx, py + speed * dy, False


@njit(cache=True)
def distance(ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    return math.sqrt(dx * dx + dy * dy)


@njit(cache=True)
def point_in_polygons(px, py, verts, ptr):
    """True if the point lies inside any polygon (even-odd rule)."""
    for p in range(ptr.shape[0] - 1):
        inside = False
        lo = ptr[p]
        hi = ptr[p + 1]
        j = hi - 1
        for i in range(lo, hi):
            xi = verts[i, 0]
            yi = verts[i, 1]
            xj = verts[j, 0]
            yj = verts[j, 1]
            if (yi > py) != (yj > py):
                xc = (xj - xi) * (py - yi) / (yj - yi) + xi
                if px < xc:
                    inside = not inside
            j = i
        if inside:
            return True
    return False


def polygon_to_walls(points) -> np.ndarray:
    """Closed polygon vertex list to wall segments."""
    pts = list(points)
    return np.array(
        [(*pts[i], *pts[(i + 1) % len(pts)]) for i in range(len(pts))], dtype=float
    )


def ray_angles(n: int, span_degrees: float = 180.0) -> np.ndarray:
    """``n`` rays evenly spanning ``span`` degrees, ordered left to right."""
    half = math.radians(span_degrees) / 2.0
    if n == 1:
        return np.zeros(1)
    return np.array([half - 2.0 * half * i / (n - 1) for i in range(n)])

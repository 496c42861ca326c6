"""Arena layouts and the plain-text environment file format.

Default geometry (world units):

* plus sign: four 100 x 40 arms around a 40 x 40 centre, waypoints 10 units
  from each arm end;
* dual task: a 200 x 30 hallway and a 150 x 150 foraging room with four
  waypoints;
* two rooms: two 150 x 150 rooms joined by an S-shaped corridor of width 30
  carrying five breadcrumbs, five waypoints per room.

File format: ``[section]`` headers followed by whitespace-separated records::

    [meta]
    name lone_patrol
    max_distance 339.411...
    [walls]
    x1 y1 x2 y2
    [waypoints]
    x y
    [breadcrumbs]
    x y
    [targets]
    kind index        # scoring order; kind is waypoint or breadcrumb
    [starts]
    x y heading
    [regions]
    name x1 y1 x2 y2 ... xn yn
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import polygon_to_walls

SECTIONS = ("meta", "walls", "waypoints", "breadcrumbs", "targets", "starts", "regions")


class EnvironmentFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(eq=False)
class Environment:
    """Walls, scoring targets and start poses of one arena.

    ``targets`` is the scoring sequence as ``(kind, index)`` pairs into
    ``waypoints`` or ``breadcrumbs``; breadcrumbs score but are never sensed.
    """

    name: str
    walls: np.ndarray
    waypoints: list[tuple[float, float]]
    starts: list[tuple[float, float, float]]
    max_distance: float
    breadcrumbs: list[tuple[float, float]] = field(default_factory=list)
    targets: list[tuple[str, int]] | None = None
    regions: dict[str, list[list[tuple[float, float]]]] = field(default_factory=dict)

    def __post_init__(self):
        self.walls = np.ascontiguousarray(self.walls, dtype=float).reshape(-1, 4)
        if self.targets is None:
            self.targets = [("waypoint", i) for i in range(len(self.waypoints))]

    def target_points(self) -> np.ndarray:
        pts = [self.waypoints[i] if k == "waypoint" else self.breadcrumbs[i] for k, i in self.targets]
        return np.array(pts, dtype=float).reshape(-1, 2)

    def target_visible(self) -> np.ndarray:
        return np.array([k == "waypoint" for k, _ in self.targets], dtype=np.bool_)

    def region_arrays(self, name: str):
        """Polygons of region ``name`` packed as (vertices, offsets)."""
        polys = self.regions.get(name, [])
        verts = [v for poly in polys for v in poly]
        ptr = np.zeros(len(polys) + 1, dtype=np.int64)
        for i, poly in enumerate(polys):
            ptr[i + 1] = ptr[i] + len(poly)
        return np.array(verts, dtype=float).reshape(-1, 2), ptr

    def bounding_diagonal(self) -> float:
        xs = np.concatenate([self.walls[:, 0], self.walls[:, 2]])
        ys = np.concatenate([self.walls[:, 1], self.walls[:, 3]])
        return math.sqrt((xs.max() - xs.min()) ** 2 + (ys.max() - ys.min()) ** 2)

    def mirrored(self) -> "Environment":
        """Reflection across the vertical axis x = 0."""
        w = self.walls.copy()
        w[:, 0] *= -1.0
        w[:, 2] *= -1.0
        return Environment(
            self.name + "_mirrored", w,
            [(-x, y) for x, y in self.waypoints],
            [(-x, y, math.pi - h) for x, y, h in self.starts],
            self.max_distance,
            [(-x, y) for x, y in self.breadcrumbs],
            list(self.targets),
            {k: [[(-x, y) for x, y in poly] for poly in v] for k, v in self.regions.items()},
        )


# --------------------------------------------------------------------------
# built-in layouts

ARM_LENGTH = 100.0
ARM_WIDTH = 40.0


def plus_walls() -> np.ndarray:
    c = ARM_WIDTH / 2.0
    e = c + ARM_LENGTH
    return polygon_to_walls([
        (-c, -e), (c, -e), (c, -c), (e, -c), (e, c), (c, c),
        (c, e), (-c, e), (-c, c), (-e, c), (-e, -c), (-c, -c),
    ])


def _plus_points():
    g = ARM_WIDTH / 2.0 + ARM_LENGTH - 10.0
    return {"west": (-g, 0.0), "north": (0.0, g), "east": (g, 0.0), "south": (0.0, -g)}


def team_patrol_env() -> Environment:
    p = _plus_points()
    walls = plus_walls()
    env = Environment(
        "team_patrol", walls,
        [p["west"], p["north"], p["east"]],
        [(-10.0, p["south"][1], math.pi / 2), (0.0, p["south"][1], math.pi / 2),
         (10.0, p["south"][1], math.pi / 2)],
        0.0,
    )
    env.max_distance = env.bounding_diagonal()
    return env


def lone_patrol_env() -> Environment:
    # left at the centre (west), straight (east), right (north), then home
    p = _plus_points()
    env = Environment(
        "lone_patrol", plus_walls(),
        [p["west"], p["east"], p["north"], p["south"]],
        [(p["south"][0], p["south"][1], math.pi / 2)],
        0.0,
    )
    env.max_distance = env.bounding_diagonal()
    return env


def hallway_env() -> Environment:
    env = Environment(
        "dual_task_hallway",
        polygon_to_walls([(0.0, 0.0), (200.0, 0.0), (200.0, 30.0), (0.0, 30.0)]),
        [(190.0, 15.0)],
        [(10.0, 15.0, 0.0)],
        0.0,
    )
    env.max_distance = env.bounding_diagonal()
    return env


def forage_env() -> Environment:
    env = Environment(
        "dual_task_forage",
        polygon_to_walls([(0.0, 0.0), (150.0, 0.0), (150.0, 150.0), (0.0, 150.0)]),
        [(40.0, 55.0), (110.0, 55.0), (110.0, 125.0), (40.0, 125.0)],
        [(75.0, 15.0, math.pi / 2)],
        0.0,
    )
    env.max_distance = env.bounding_diagonal()
    return env


def two_rooms_env() -> Environment:
    # lower room [0,150]^2, upper room [0,150]x[230,380]; corridor spine
    # (120,150) -> (120,190) -> (30,190) -> (30,230), width 30
    outline = [
        (0.0, 0.0), (150.0, 0.0), (150.0, 150.0), (135.0, 150.0), (135.0, 205.0),
        (45.0, 205.0), (45.0, 230.0), (150.0, 230.0), (150.0, 380.0), (0.0, 380.0),
        (0.0, 230.0), (15.0, 230.0), (15.0, 175.0), (105.0, 175.0), (105.0, 150.0),
        (0.0, 150.0),
    ]
    hallway = [
        [(105.0, 150.0), (135.0, 150.0), (135.0, 175.0), (105.0, 175.0)],
        [(15.0, 175.0), (135.0, 175.0), (135.0, 205.0), (15.0, 205.0)],
        [(15.0, 205.0), (45.0, 205.0), (45.0, 230.0), (15.0, 230.0)],
    ]
    spine = [(120.0, 150.0), (120.0, 190.0), (30.0, 190.0), (30.0, 230.0)]
    breadcrumbs = _spaced_along(spine, 5)
    room_a = [(30.0, 40.0), (120.0, 40.0), (75.0, 80.0), (30.0, 120.0), (110.0, 125.0)]
    room_b = [(40.0, 265.0), (115.0, 265.0), (115.0, 340.0), (40.0, 340.0), (75.0, 300.0)]
    targets = ([("waypoint", i) for i in range(5)] + [("breadcrumb", i) for i in range(5)]
               + [("waypoint", 5 + i) for i in range(5)])
    env = Environment(
        "two_rooms", polygon_to_walls(outline), room_a + room_b,
        [(75.0, 15.0, math.pi / 2)], 0.0, breadcrumbs, targets, {"hallway": hallway},
    )
    env.max_distance = env.bounding_diagonal()
    return env


def _spaced_along(path, n):
    """``n`` points at the midpoints of ``n`` equal arc-length pieces of a polyline."""
    seg = [math.dist(path[i], path[i + 1]) for i in range(len(path) - 1)]
    total = sum(seg)
    out = []
    for k in range(n):
        s = total * (k + 0.5) / n
        for i, length in enumerate(seg):
            if s <= length:
                f = s / length
                (x0, y0), (x1, y1) = path[i], path[i + 1]
                out.append((x0 + f * (x1 - x0), y0 + f * (y1 - y0)))
                break
            s -= length
    return out


BUILTIN = {
    "team_patrol": lambda: [team_patrol_env()],
    "lone_patrol": lambda: [lone_patrol_env()],
    "dual_task": lambda: [hallway_env(), forage_env()],
    "two_rooms": lambda: [two_rooms_env()],
}


def default_environments(domain: str) -> list[Environment]:
    try:
        return BUILTIN[domain]()
    except KeyError:
        raise ValueError(f"unknown domain {domain!r}; expected one of {sorted(BUILTIN)}") from None


# --------------------------------------------------------------------------
# file format


def _fmt(x: float) -> str:
    return repr(float(x))


def dumps(envs: list[Environment]) -> str:
    """Serialize one or more environments; each starts with its own ``[meta]``."""
    out = []
    for env in envs:
        out.append("[meta]")
        out.append(f"name {env.name}")
        out.append(f"max_distance {_fmt(env.max_distance)}")
        out.append("[walls]")
        out.extend(" ".join(_fmt(v) for v in w) for w in env.walls)
        out.append("[waypoints]")
        out.extend(f"{_fmt(x)} {_fmt(y)}" for x, y in env.waypoints)
        out.append("[breadcrumbs]")
        out.extend(f"{_fmt(x)} {_fmt(y)}" for x, y in env.breadcrumbs)
        out.append("[targets]")
        out.extend(f"{k} {i}" for k, i in env.targets)
        out.append("[starts]")
        out.extend(f"{_fmt(x)} {_fmt(y)} {_fmt(h)}" for x, y, h in env.starts)
        out.append("[regions]")
        for name, polys in env.regions.items():
            for poly in polys:
                out.append(name + " " + " ".join(f"{_fmt(x)} {_fmt(y)}" for x, y in poly))
    return "\n".join(out) + "\n"


def loads(text: str) -> list[Environment]:
    envs = []
    cur = None
    section = None

    def finish():
        if cur is None:
            return
        if cur["name"] is None:
            raise EnvironmentFormatError("environment is missing its name")
        env = Environment(
            cur["name"], np.array(cur["walls"], dtype=float).reshape(-1, 4), cur["waypoints"],
            cur["starts"], cur["max_distance"] or 0.0, cur["breadcrumbs"],
            cur["targets"] or None, cur["regions"],
        )
        if not env.max_distance:
            env.max_distance = env.bounding_diagonal()
        envs.append(env)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            name = line.strip("[]").strip()
            if name not in SECTIONS:
                raise EnvironmentFormatError(f"unknown section {name!r}", lineno)
            if name == "meta":
                finish()
                cur = {"name": None, "max_distance": None, "walls": [], "waypoints": [],
                       "breadcrumbs": [], "targets": [], "starts": [], "regions": {}}
            elif cur is None:
                raise EnvironmentFormatError("records before the first [meta] section", lineno)
            section = name
            continue
        if section is None:
            raise EnvironmentFormatError("record outside any section", lineno)
        parts = line.split()
        try:
            if section == "meta":
                if parts[0] == "name":
                    cur["name"] = parts[1]
                elif parts[0] == "max_distance":
                    cur["max_distance"] = float(parts[1])
                else:
                    raise EnvironmentFormatError(f"unknown meta key {parts[0]!r}", lineno)
            elif section == "walls":
                _arity(parts, 4, lineno)
                cur["walls"].append([float(v) for v in parts])
            elif section in ("waypoints", "breadcrumbs"):
                _arity(parts, 2, lineno)
                cur[section].append((float(parts[0]), float(parts[1])))
            elif section == "targets":
                _arity(parts, 2, lineno)
                if parts[0] not in ("waypoint", "breadcrumb"):
                    raise EnvironmentFormatError(f"unknown target kind {parts[0]!r}", lineno)
                cur["targets"].append((parts[0], int(parts[1])))
            elif section == "starts":
                _arity(parts, 3, lineno)
                cur["starts"].append(tuple(float(v) for v in parts))
            elif section == "regions":
                coords = [float(v) for v in parts[1:]]
                if len(coords) < 6 or len(coords) % 2:
                    raise EnvironmentFormatError("region needs at least three x y pairs", lineno)
                cur["regions"].setdefault(parts[0], []).append(
                    list(zip(coords[0::2], coords[1::2])))
        except EnvironmentFormatError:
            raise
        except (ValueError, IndexError) as exc:
            raise EnvironmentFormatError(f"malformed {section} record ({exc})", lineno) from None
    finish()
    if not envs:
        raise EnvironmentFormatError("no environments in file")
    return envs


def _arity(parts, n, lineno):
    if len(parts) != n:
        raise EnvironmentFormatError(f"expected {n} fields, got {len(parts)}", lineno)


def load(path) -> list[Environment]:
    return loads(Path(path).read_text())


def save(envs: list[Environment], path) -> None:
    Path(path).write_text(dumps(envs))

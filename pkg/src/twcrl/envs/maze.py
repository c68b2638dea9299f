"""Point-mass mazes with absorbing goal and trap discs.

Map characters::

    #  wall            S  start cell
    .  free            G  designated goal cell (the first one is used in ``one`` mode)
    X  trap cell       g  extra goal cell, used by the ``three`` goal mode

Cell ``(r, c)`` covers ``x in [c, c+1) * cell_size`` and
``y in [r, r+1) * cell_size``. Observations are ``(x, y, gx, gy)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import MapError

WALL, FREE, START, GOAL, EXTRA_GOAL, TRAP = "#", ".", "S", "G", "g", "X"
MAP_CHARS = frozenset(WALL + FREE + START + GOAL + EXTRA_GOAL + TRAP)
BUILTIN_MAPS = ("umaze", "trapmaze1", "trapmaze2")

OBS_LAYOUT = ("x", "y", "gx", "gy")
OBS_DIM = 4
ACTION_DIM = 2


class GoalMode(str, enum.Enum):
    ONE = "one"
    THREE = "three"
    ANY = "any"


class Frozen(str, enum.Enum):
    MOBILE = "mobile"
    AT_GOAL = "at_goal"
    IN_TRAP = "in_trap"


@dataclass(frozen=True)
class MazeSpec:
    grid: tuple
    cell_size: float = 1.0
    goal_radius: float = 0.45
    trap_radius: float = 0.5
    horizon: int = 300
    goal_cells_mode: GoalMode = GoalMode.ONE
    step_scale: float = 0.2
    start_jitter: float = 0.1
    name: str = ""
    walls: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        grid = tuple(self.grid)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "goal_cells_mode", GoalMode(self.goal_cells_mode))
        _validate_grid(grid)
        walls = np.array([[ch == WALL for ch in row] for row in grid])
        walls.setflags(write=False)
        object.__setattr__(self, "walls", walls)
        if self.goal_cells_mode is GoalMode.THREE and len(self.listed_goal_cells) < 3:
            raise MapError(
                f"'three' goal mode needs 3 goal cells (G plus g), map has "
                f"{len(self.listed_goal_cells)}"
            )
        if self.horizon < 1:
            raise MapError("horizon must be >= 1")

    @property
    def shape(self) -> tuple:
        return len(self.grid), len(self.grid[0])

    @property
    def width(self) -> float:
        return self.shape[1] * self.cell_size

    @property
    def height(self) -> float:
        return self.shape[0] * self.cell_size

    def cells(self, kinds) -> list:
        return [(r, c) for r, row in enumerate(self.grid)
                for c, ch in enumerate(row) if ch in kinds]

    @property
    def start_cells(self) -> list:
        return self.cells(START)

    @property
    def trap_cells(self) -> list:
        return self.cells(TRAP)

    @property
    def listed_goal_cells(self) -> list:
        return self.cells(GOAL) + self.cells(EXTRA_GOAL)

    @property
    def goal_cells(self) -> list:
        """Cells the goal may be sampled in under the current goal mode."""
        if self.goal_cells_mode is GoalMode.ONE:
            return self.cells(GOAL)[:1]
        if self.goal_cells_mode is GoalMode.THREE:
            return self.listed_goal_cells[:3]
        return self.cells(FREE + GOAL + EXTRA_GOAL)

    def cell_center(self, cell) -> tuple:
        r, c = cell
        return (c + 0.5) * self.cell_size, (r + 0.5) * self.cell_size

    def cell_of(self, x: float, y: float) -> tuple:
        return int(math.floor(y / self.cell_size)), int(math.floor(x / self.cell_size))

    def is_wall_cell(self, r: int, c: int) -> bool:
        rows, cols = self.shape
        if not (0 <= r < rows and 0 <= c < cols):
            return True
        return bool(self.walls[r, c])

    @property
    def trap_centers(self) -> list:
        return [self.cell_center(cell) for cell in self.trap_cells]

    def in_trap(self, x: float, y: float) -> bool:
        return any(math.hypot(x - cx, y - cy) <= self.trap_radius
                   for cx, cy in self.trap_centers)

    def with_mode(self, mode) -> "MazeSpec":
        return replace(self, goal_cells_mode=GoalMode(mode))

    def with_horizon(self, horizon: int) -> "MazeSpec":
        return replace(self, horizon=int(horizon))


def _validate_grid(grid):
    if not grid:
        raise MapError("empty map")
    width = len(grid[0])
    for r, row in enumerate(grid):
        if len(row) != width:
            raise MapError(f"ragged row (length {len(row)}, expected {width})", (r, 0))
        for c, ch in enumerate(row):
            if ch not in MAP_CHARS:
                raise MapError(f"unknown character {ch!r}", (r, c))
    rows = len(grid)
    for r, row in enumerate(grid):
        for c, ch in enumerate(row):
            on_border = r in (0, rows - 1) or c in (0, width - 1)
            if on_border and ch != WALL:
                raise MapError("outer boundary must be wall", (r, c))
    flat = "".join(grid)
    if START not in flat:
        raise MapError("map has no start cell 'S'")
    if GOAL not in flat:
        raise MapError("map has no goal cell 'G'")


def parse_map(text: str, **kwargs) -> MazeSpec:
    """Parse an ASCII map; blank lines and trailing whitespace are ignored."""
    rows = [line.rstrip() for line in text.splitlines()]
    rows = [row for row in rows if row]
    return MazeSpec(tuple(rows), **kwargs)


def load_map(name_or_path, **kwargs) -> MazeSpec:
    """Load a built-in map by name (``umaze``...) or a map file by path."""
    name = str(name_or_path)
    if name in BUILTIN_MAPS:
        text = resources.files("twcrl.envs").joinpath("maps", f"{name}.map").read_text()
    else:
        path = Path(name)
        text = path.read_text(encoding="utf-8")
        name = path.stem
    kwargs.setdefault("name", name)
    return parse_map(text, **kwargs)


@dataclass(frozen=True)
class MazeState:
    x: float
    y: float
    gx: float
    gy: float
    frozen: Frozen = Frozen.MOBILE
    t: int = 0

    @property
    def position(self) -> tuple:
        return self.x, self.y

    @property
    def goal(self) -> tuple:
        return self.gx, self.gy

    @property
    def observation(self) -> np.ndarray:
        return np.array([self.x, self.y, self.gx, self.gy])


def goal_reached(spec: MazeSpec, obs) -> bool:
    """Goal-disc membership of an observation ``(x, y, gx, gy)``."""
    return math.hypot(float(obs[0]) - float(obs[2]),
                      float(obs[1]) - float(obs[3])) <= spec.goal_radius


def _status(spec: MazeSpec, x, y, gx, gy) -> Frozen:
    if math.hypot(x - gx, y - gy) <= spec.goal_radius:
        return Frozen.AT_GOAL
    if spec.in_trap(x, y):
        return Frozen.IN_TRAP
    return Frozen.MOBILE


def reset(spec: MazeSpec, seed=None) -> MazeState:
    rng = np.random.default_rng(seed)
    starts = spec.start_cells
    start = starts[int(rng.integers(len(starts)))] if len(starts) > 1 else starts[0]
    cx, cy = spec.cell_center(start)
    j = spec.start_jitter * spec.cell_size
    x = cx + rng.uniform(-j, j)
    y = cy + rng.uniform(-j, j)
    cells = spec.goal_cells
    gr, gc = cells[int(rng.integers(len(cells)))]
    gx = (gc + rng.random()) * spec.cell_size
    gy = (gr + rng.random()) * spec.cell_size
    return MazeState(x, y, gx, gy, _status(spec, x, y, gx, gy), 0)


def _slide(spec: MazeSpec, pos: float, delta: float, fixed: float, axis: int) -> float:
    """Move one coordinate by ``delta``, stopping at the first wall face.

    ``axis`` 0 moves x within row ``floor(fixed)``; axis 1 moves y within
    column ``floor(fixed)``. The result always lies in a non-wall cell.
    """
    cs = spec.cell_size
    lane = int(math.floor(fixed / cs))
    target = pos + delta
    cur = int(math.floor(pos / cs))
    end = int(math.floor(target / cs))
    step = 1 if end > cur else -1
    while cur != end:
        nxt = cur + step
        blocked = spec.is_wall_cell(lane, nxt) if axis == 0 else spec.is_wall_cell(nxt, lane)
        if blocked:
            if step > 0:
                return math.nextafter(nxt * cs, -math.inf)
            return cur * cs
        cur = nxt
    return target


def _trap_entry(spec: MazeSpec, p0, p1):
    """Earliest point of segment p0->p1 inside a trap disc, or None."""
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    a = dx * dx + dy * dy
    r = spec.trap_radius
    best = None
    for cx, cy in spec.trap_centers:
        fx, fy = p0[0] - cx, p0[1] - cy
        c = fx * fx + fy * fy - r * r
        if c <= 0.0:
            s = 0.0
        elif a == 0.0:
            continue
        else:
            b = 2.0 * (fx * dx + fy * dy)
            disc = b * b - 4.0 * a * c
            if disc < 0.0:
                continue
            s = (-b - math.sqrt(disc)) / (2.0 * a)
            if not 0.0 <= s <= 1.0:
                continue
        if best is None or s < best[0]:
            best = (s, cx, cy)
    if best is None:
        return None
    s, cx, cy = best
    ex, ey = p0[0] + s * dx, p0[1] + s * dy
    d = math.hypot(ex - cx, ey - cy)
    if d > r * (1.0 - 1e-9):
        # pull the contact point just inside the disc
        k = r * (1.0 - 1e-9) / d
        ex, ey = cx + (ex - cx) * k, cy + (ey - cy) * k
    return ex, ey


def step(spec: MazeSpec, state: MazeState, action):
    """Advance one timestep. Returns ``(next_state, env_reward, truncated)``."""
    t = state.t + 1
    x, y, frozen = state.x, state.y, state.frozen
    if frozen is Frozen.MOBILE:
        ax = min(1.0, max(-1.0, float(action[0]))) * spec.step_scale
        ay = min(1.0, max(-1.0, float(action[1]))) * spec.step_scale
        nx = _slide(spec, x, ax, y, axis=0)
        hit = _trap_entry(spec, (x, y), (nx, y))
        if hit is None:
            ny = _slide(spec, y, ay, nx, axis=1)
            hit = _trap_entry(spec, (nx, y), (nx, ny))
        if hit is not None:
            x, y, frozen = hit[0], hit[1], Frozen.IN_TRAP
        else:
            x, y = nx, ny
        # a contact point that is also inside the goal disc counts as the goal
        if math.hypot(x - state.gx, y - state.gy) <= spec.goal_radius:
            frozen = Frozen.AT_GOAL
    nxt = MazeState(x, y, state.gx, state.gy, frozen, t)
    reward = 1.0 if frozen is Frozen.AT_GOAL else 0.0
    return nxt, reward, t >= spec.horizon


class MazeEnv:
    """Mutable single-owner wrapper around ``reset``/``step``."""

    obs_dim = OBS_DIM
    action_dim = ACTION_DIM

    def __init__(self, spec: MazeSpec):
        self.spec = spec
        self.state = None

    @property
    def horizon(self) -> int:
        return self.spec.horizon

    def reset(self, seed=None) -> np.ndarray:
        self.state = reset(self.spec, seed)
        return self.state.observation

    def step(self, action):
        """Returns ``(obs, env_reward, absorbed, truncated)``."""
        self.state, reward, truncated = step(self.spec, self.state, action)
        return (self.state.observation, reward,
                self.state.frozen is not Frozen.MOBILE, truncated)

    def goal_reached(self, obs) -> bool:
        return goal_reached(self.spec, obs)

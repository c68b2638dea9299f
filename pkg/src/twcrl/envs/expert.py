"""Scripted waypoint-following expert used to synthesize demonstrations."""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from ..core import Trajectory, TerminalGoal, make_trajectory
from ..errors import ExpertStuck, MapError
from .maze import TRAP, Frozen, MazeSpec, goal_reached, reset, step

# Hand-drawn main routes (start cell excluded); the trap mazes' shortcut
# through the middle wall is deliberately not part of them.
MAIN_PATHS = {
    "umaze": [(1, 2), (1, 3), (2, 3), (3, 3), (3, 2), (3, 1)],
    "trapmaze1": [(1, 2), (1, 3), (1, 4), (1, 5), (2, 5), (3, 5),
                  (3, 4), (3, 3), (3, 2), (3, 1)],
    "trapmaze2": [(1, 2), (1, 3), (1, 4), (1, 5), (2, 5), (3, 5),
                  (3, 4), (3, 3), (3, 2), (3, 1)],
}


def shortest_path(spec: MazeSpec, start, goal) -> list:
    """BFS over free, non-trap cells; returns the cells after ``start``."""
    rows, cols = spec.shape
    prev = {start: None}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        if cell == goal:
            break
        r, c = cell
        for nb in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if nb in prev or spec.is_wall_cell(*nb) or spec.grid[nb[0]][nb[1]] == TRAP:
                continue
            prev[nb] = cell
            queue.append(nb)
    if goal not in prev:
        raise MapError("goal cell is unreachable from the start", goal)
    path = []
    cell = goal
    while cell != start:
        path.append(cell)
        cell = prev[cell]
    return path[::-1]


def default_path(spec: MazeSpec) -> list:
    if spec.name in MAIN_PATHS:
        return list(MAIN_PATHS[spec.name])
    return shortest_path(spec, spec.start_cells[0], spec.goal_cells[0])


def validate_path(spec: MazeSpec, path) -> list:
    path = [tuple(int(v) for v in cell) for cell in path]
    if not path:
        raise MapError("empty waypoint path")
    for cell in path:
        if spec.is_wall_cell(*cell):
            raise MapError("waypoint is a wall cell", cell)
        if spec.grid[cell[0]][cell[1]] == TRAP:
            raise MapError("waypoint is a trap cell", cell)
    prev = spec.start_cells[0]
    for cell in path:
        if cell != prev and abs(cell[0] - prev[0]) + abs(cell[1] - prev[1]) != 1:
            raise MapError(f"waypoint does not neighbour {prev}", cell)
        prev = cell
    if path[-1] not in spec.listed_goal_cells and path[-1] not in spec.goal_cells:
        raise MapError("waypoint path must end in a goal-candidate cell", path[-1])
    return path


class WaypointExpert:
    """Greedy follower: head for each waypoint centre, then for the goal itself.

    Per-axis proportional control, clipped to the action bound, so the
    distance to the current target never increases within a leg.
    """

    def __init__(self, spec: MazeSpec, path=None, switch_tol: float = 0.1):
        self.spec = spec
        self.path = validate_path(spec, path if path is not None else default_path(spec))
        self.switch_tol = switch_tol * spec.cell_size
        self.index = 0

    def reset(self):
        self.index = 0

    def target(self, obs) -> tuple:
        if self.index >= len(self.path) - 1:
            return float(obs[2]), float(obs[3])
        return self.spec.cell_center(self.path[self.index])

    def __call__(self, obs) -> np.ndarray:
        x, y = float(obs[0]), float(obs[1])
        tx, ty = self.target(obs)
        while (self.index < len(self.path) - 1
               and math.hypot(tx - x, ty - y) <= self.switch_tol):
            self.index += 1
            tx, ty = self.target(obs)
        s = self.spec.step_scale
        return np.clip([(tx - x) / s, (ty - y) / s], -1.0, 1.0)


def scripted_expert(spec: MazeSpec, seed=None, waypoint_path=None) -> Trajectory:
    """Roll out the waypoint expert for a full episode; must end at the goal."""
    expert = WaypointExpert(spec, waypoint_path)
    state = reset(spec, seed)
    states, actions, rewards = [state.observation], [], []
    truncated = False
    while not truncated:
        if state.frozen is Frozen.MOBILE:
            action = expert(state.observation)
        else:
            action = np.zeros(2)
        state, reward, truncated = step(spec, state, action)
        states.append(state.observation)
        actions.append(action)
        rewards.append(reward)
    if state.frozen is not Frozen.AT_GOAL:
        raise ExpertStuck(
            f"expert ended {state.frozen.value} at ({state.x:.3f}, {state.y:.3f}) "
            f"after {spec.horizon} steps"
        )
    rule = TerminalGoal(lambda obs: goal_reached(spec, obs))
    return make_trajectory(states, actions, rewards, spec.horizon, rule)

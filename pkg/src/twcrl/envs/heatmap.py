"""Reward surfaces over a maze, with CSV and PGM export."""

from __future__ import annotations

import math

import numpy as np

from .maze import MazeSpec


def lattice(spec: MazeSpec, resolution: int):
    """Cell-centred sample points; returns ``(xs, ys, wall_mask)``."""
    xs = (np.arange(resolution) + 0.5) / resolution * spec.width
    ys = (np.arange(resolution) + 0.5) / resolution * spec.height
    cols = np.floor(xs / spec.cell_size).astype(int)
    rows = np.floor(ys / spec.cell_size).astype(int)
    wall = spec.walls[rows[:, None], cols[None, :]]
    return xs, ys, wall


def reward_heatmap(spec: MazeSpec, scorer, resolution: int, goal) -> np.ndarray:
    """Evaluate ``scorer`` on a ``resolution x resolution`` lattice.

    ``scorer`` maps an ``(n, 4)`` batch of observations ``(x, y, gx, gy)``
    to ``n`` scores. Row ``i`` of the result is the i-th y sample; wall
    points are NaN.
    """
    if resolution < 8:
        raise ValueError(f"resolution must be >= 8, got {resolution}")
    xs, ys, wall = lattice(spec, resolution)
    X, Y = np.meshgrid(xs, ys)
    free = ~wall
    obs = np.column_stack([
        X[free], Y[free],
        np.full(free.sum(), float(goal[0])), np.full(free.sum(), float(goal[1])),
    ])
    out = np.full((resolution, resolution), np.nan)
    out[free] = np.asarray(scorer(obs), dtype=np.float64).reshape(-1)
    return out


def region_means(spec: MazeSpec, heat: np.ndarray, goal) -> dict:
    """Mean heatmap value over the goal disc and over all trap discs."""
    res = heat.shape[0]
    xs, ys, _ = lattice(spec, res)
    X, Y = np.meshgrid(xs, ys)
    in_goal = np.hypot(X - goal[0], Y - goal[1]) <= spec.goal_radius
    in_trap = np.zeros_like(in_goal)
    for cx, cy in spec.trap_centers:
        in_trap |= np.hypot(X - cx, Y - cy) <= spec.trap_radius
    finite = np.isfinite(heat)

    def mean(mask):
        mask = mask & finite
        return float(heat[mask].mean()) if mask.any() else math.nan

    return {"goal": mean(in_goal), "trap": mean(in_trap)}


def save_csv(heat: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in heat:
            fh.write(",".join("nan" if not np.isfinite(v) else repr(float(v)) for v in row))
            fh.write("\n")


def load_csv(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return np.array([[float(v) for v in line.strip().split(",")]
                         for line in fh if line.strip()])


def to_pgm_bytes(heat: np.ndarray) -> bytes:
    """8-bit binary PGM, linearly min-max scaled; walls (NaN) are black."""
    finite = np.isfinite(heat)
    img = np.zeros(heat.shape, dtype=np.uint8)
    if finite.any():
        lo, hi = float(heat[finite].min()), float(heat[finite].max())
        span = hi - lo if hi > lo else 1.0
        img[finite] = np.round((heat[finite] - lo) / span * 255.0).astype(np.uint8)
    rows, cols = heat.shape
    return f"P5\n{cols} {rows}\n255\n".encode("ascii") + img.tobytes()


def save_pgm(heat: np.ndarray, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_pgm_bytes(heat))


def load_pgm(path) -> np.ndarray:
    data = open(path, "rb").read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    cols, rows = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(rows, cols)

"""Measurement and clutter models."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CLUTTER = -1  # truth tag for clutter points


@dataclass(frozen=True)
class MeasurementScan:
    """One unordered scan of 2D position measurements.

    ``tags`` holds the generating object id (or ``CLUTTER``) for scoring;
    filters only ever read ``points``.
    """

    step: int
    points: np.ndarray
    tags: tuple = field(default=())

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "points", pts)
        if self.tags and len(self.tags) != len(pts):
            raise ValueError("tags must match points")

    def __len__(self) -> int:
        return len(self.points)

    def check_inside(self, area) -> None:
        for x, y in self.points:
            if not area.contains(x, y):
                raise ValueError(f"measurement ({x}, {y}) lies outside the mission area")


def generate_clutter(rate: float, area, rng: np.random.Generator) -> np.ndarray:
    """Poisson(rate) points uniform over the area; shape (n, 2)."""
    if rate < 0:
        raise ValueError("clutter rate must be non-negative")
    n = int(rng.poisson(rate))
    u = rng.random((n, 2))
    x = area.x_min + u[:, 0] * (area.x_max - area.x_min)
    y = area.y_min + u[:, 1] * (area.y_max - area.y_min)
    return np.column_stack([x, y])


def generate_measurements(positions, p_detect: float, R, rng: np.random.Generator):
    """Detect each object with probability ``p_detect`` and add N(0, R) noise.

    Draws per object in input order: one uniform, then (if detected) one
    2D normal. Returns (points (k, 2), indices of the detected objects).
    """
    if not 0.0 <= p_detect <= 1.0:
        raise ValueError("detection probability must be in [0, 1]")
    R = np.asarray(R, dtype=float)
    L = np.linalg.cholesky(R) if np.any(R) else np.zeros((2, 2))
    pts, idx = [], []
    for i, pos in enumerate(positions):
        if rng.random() < p_detect:
            pts.append(np.asarray(pos, dtype=float) + L @ rng.standard_normal(2))
            idx.append(i)
    return np.array(pts, dtype=float).reshape(-1, 2), idx

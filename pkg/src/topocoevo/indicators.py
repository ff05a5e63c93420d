"""Front quality indicators in the unit-normalized maximization space."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import DomainError


@dataclass(frozen=True)
class ObjectiveBounds:
    """Per-objective ``(lo, hi)`` in maximization orientation.

    Fixed at run start so hypervolume values are comparable across
    generations.
    """

    accuracy: tuple[float, float] = (0.0, 1.0)
    neg_cost: tuple[float, float] = (-10_000.0, 0.0)
    neg_log_complexity: tuple[float, float] = (-math.log1p(32), 0.0)

    def __post_init__(self):
        for lo, hi in self.as_list():
            if not lo < hi:
                raise DomainError(f"bounds need lo < hi, got ({lo}, {hi})")

    @classmethod
    def from_budget(cls, cost_budget: float, k_max: int) -> "ObjectiveBounds":
        return cls((0.0, 1.0), (-float(cost_budget), 0.0), (-math.log1p(k_max), 0.0))

    def as_list(self) -> list[tuple[float, float]]:
        return [self.accuracy, self.neg_cost, self.neg_log_complexity]

    def to_dict(self) -> dict:
        return {"accuracy": list(self.accuracy), "neg_cost": list(self.neg_cost),
                "neg_log_complexity": list(self.neg_log_complexity)}

    @classmethod
    def from_dict(cls, d) -> "ObjectiveBounds":
        return cls(tuple(d["accuracy"]), tuple(d["neg_cost"]), tuple(d["neg_log_complexity"]))


def normalize(front, bounds: ObjectiveBounds | Sequence[tuple[float, float]]) -> np.ndarray:
    """Map maximization triples into ``[0, 1]^3``, clamping outliers."""
    pts = np.asarray(front, dtype=float).reshape(-1, 3)
    b = bounds.as_list() if isinstance(bounds, ObjectiveBounds) else list(bounds)
    lo = np.array([x[0] for x in b], dtype=float)
    hi = np.array([x[1] for x in b], dtype=float)
    if np.any(lo >= hi):
        raise DomainError("bounds need lo < hi per objective")
    return np.clip((pts - lo) / (hi - lo), 0.0, 1.0)


def hv2d(points: np.ndarray) -> float:
    """Area dominated by 2-D maximization points relative to the origin."""
    if len(points) == 0:
        return 0.0
    order = np.lexsort((-points[:, 1], -points[:, 0]))
    area, y_best = 0.0, 0.0
    for x, y in points[order]:
        if y > y_best:
            area += x * (y - y_best)
            y_best = y
    return area


def hv_unit(points) -> float:
    """Exact hypervolume of points in ``[0,1]^3`` with the origin as reference.

    Sweeps the third objective from the top: between consecutive distinct
    levels the dominated cross-section is the 2-D area of all points at or
    above the slab.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        return 0.0
    levels = np.unique(pts[:, 2])[::-1]
    volume = 0.0
    for i, z in enumerate(levels):
        below = levels[i + 1] if i + 1 < len(levels) else 0.0
        if z <= 0:
            break
        volume += hv2d(pts[pts[:, 2] >= z, :2]) * (z - below)
    return float(volume)


def normalized_hv(front, bounds: ObjectiveBounds | Sequence[tuple[float, float]] = ObjectiveBounds()) -> float:
    """Hypervolume of maximization triples after normalization; 0 for an empty front."""
    if len(front) == 0:
        return 0.0
    return hv_unit(normalize(front, bounds))


def _nn_distances(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    pts = pts.reshape(len(pts), -1)
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(d, np.inf)
    return d.min(axis=1)


def spacing(points) -> float:
    """Schott spacing: sample standard deviation of nearest-neighbour distances."""
    if len(points) < 2:
        return 0.0
    nn = _nn_distances(points)
    return float(np.std(nn, ddof=1)) if len(nn) > 1 else 0.0


def max_gap(points) -> float:
    """Largest nearest-neighbour distance on the front."""
    if len(points) < 2:
        return 0.0
    return float(_nn_distances(points).max())


def occupied_cells(points, n_bins: int = 4) -> set[tuple[int, int]]:
    """Grid cells over normalized (cost, complexity), columns 1 and 2."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    idx = np.minimum((pts[:, 1:3] * n_bins).astype(int), n_bins - 1)
    idx = np.maximum(idx, 0)
    return {(int(a), int(b)) for a, b in idx}


def coverage(points, n_bins: int = 4) -> float:
    if len(points) == 0:
        return 0.0
    return len(occupied_cells(points, n_bins)) / n_bins**2

"""
One-dimensional grid searches and the exponential-weighting recursion.

Objective functions are vectorized: they take an array of candidate areas and
return an array of objective values.  Argmin ties resolve to the smallest
candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MM2 = 1e-6  # m^2 per mm^2


@dataclass(frozen=True)
class SearchBounds:
    a_lb: float = 1e-3 * MM2
    a_ub: float = 1.0 * MM2

    def __post_init__(self):
        if not 0.0 < self.a_lb < self.a_ub:
            raise ValueError(f"need 0 < a_lb < a_ub, got [{self.a_lb}, {self.a_ub}]")

    @property
    def width(self) -> float:
        return self.a_ub - self.a_lb

    def grid(self, n: int) -> np.ndarray:
        return np.linspace(self.a_lb, self.a_ub, n + 1)


def _as_interval(bounds):
    if isinstance(bounds, SearchBounds):
        return bounds.a_lb, bounds.a_ub
    lo, hi = bounds
    if not lo < hi:
        raise ValueError(f"empty search interval [{lo}, {hi}]")
    return float(lo), float(hi)


def ew_update(s_prev, f_t, alpha: float):
    """Exponentially weighted objective: alpha * f_t + (1 - alpha) * s_prev."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * f_t + (1.0 - alpha) * s_prev


def _checked(values, grid):
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ValueError(f"objective returned shape {values.shape}, expected {grid.shape}")
    bad = ~np.isfinite(values)
    if bad.any():
        j = int(np.argmax(bad))
        raise FloatingPointError(
            f"non-finite objective value {values[j]} at candidate {grid[j]:.6e}")
    return values


def full_bfs(objective_fn, bounds, n0: int):
    """
    Exhaustive search on an inclusive uniform grid of ``n0 + 1`` points.

    Returns ``(a_min, evaluations)``.
    """
    if n0 < 2:
        raise ValueError(f"n0 must be >= 2, got {n0}")
    lo, hi = _as_interval(bounds)
    grid = np.linspace(lo, hi, n0 + 1)
    values = _checked(objective_fn(grid), grid)
    return float(grid[np.argmin(values)]), grid.size


def refine(objective_fn, a_star: float, delta: float, bounds, n_grid: int, epsilon: float):
    """
    Continue an adaptively refined search from a coarse minimum.

    Starting from ``a_star`` found on a grid of spacing ``delta``, re-grid
    ``[a_star - delta, a_star + delta]`` (clipped to `bounds`) with ``n_grid + 1``
    points until the spacing drops to `epsilon`.

    Returns ``(a_star, value_at_a_star, evaluations, levels)``; the coarse level
    that produced the starting point is not counted.  ``value_at_a_star`` is
    None when no refinement level ran.
    """
    lo0, hi0 = _as_interval(bounds)
    evaluations = levels = 0
    best = None
    while delta > epsilon:
        lo = max(a_star - delta, lo0)
        hi = min(a_star + delta, hi0)
        grid = np.linspace(lo, hi, n_grid + 1)
        delta = (hi - lo) / n_grid
        values = _checked(objective_fn(grid), grid)
        j = int(np.argmin(values))
        a_star, best = float(grid[j]), float(values[j])
        evaluations += grid.size
        levels += 1
    return a_star, best, evaluations, levels


def ars(objective_fn, bounds, n_grid: int, epsilon: float):
    """
    Adaptively refined search.

    A uniform grid of ``n_grid + 1`` points is searched, then the bracket
    ``[A* - delta, A* + delta]`` around its minimum is re-gridded, until the grid
    spacing delta is at most `epsilon`.  Convergence to the global minimum
    requires a unimodal objective.

    Returns ``(a_star, evaluations, levels)``.
    """
    if n_grid < 3:
        raise ValueError(f"n_grid must be >= 3, got {n_grid}")
    if not epsilon > 0.0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    lo, hi = _as_interval(bounds)
    grid = np.linspace(lo, hi, n_grid + 1)
    values = _checked(objective_fn(grid), grid)
    a_star = float(grid[np.argmin(values)])
    a_star, _, evaluations, levels = refine(
        objective_fn, a_star, (hi - lo) / n_grid, (lo, hi), n_grid, epsilon)
    return a_star, evaluations + grid.size, levels + 1


def ars_levels(width: float, n_grid: int, epsilon: float) -> int:
    """Refinement levels ARS needs for an interior minimum."""
    ratio = width / (n_grid * epsilon)
    if ratio <= 1.0:
        return 1
    return math.ceil(math.log(ratio) / math.log(n_grid / 2.0)) + 1

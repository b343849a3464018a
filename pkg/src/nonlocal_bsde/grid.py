"""Spatial grids, piecewise Lagrange interpolation, and adaptive hierarchies."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import InvalidParameterError, NumericalFailureError

EXTERIOR_MODES = ("exact_extension", "clamp_to_boundary", "linear_extrapolation")


@dataclass(frozen=True)
class UniformGrid:
    x_min: float
    x_max: float
    count: int

    def __post_init__(self) -> None:
        if int(self.count) < 2:
            raise InvalidParameterError(f"a grid needs at least 2 points, got {self.count}")
        if not float(self.x_min) < float(self.x_max):
            raise InvalidParameterError(f"empty grid interval [{self.x_min}, {self.x_max}]")
        object.__setattr__(self, "count", int(self.count))

    @classmethod
    def from_spacing(cls, x_min: float, x_max: float, dx: float) -> "UniformGrid":
        n = (x_max - x_min) / dx
        count = int(round(n)) + 1
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise InvalidParameterError(f"dx={dx} does not divide [{x_min}, {x_max}]")
        return cls(x_min, x_max, count)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.count - 1)

    @property
    def points(self) -> np.ndarray:
        i = np.arange(self.count, dtype=float)
        pts = self.x_min + i * self.dx
        pts[-1] = self.x_max
        return pts


@dataclass(frozen=True)
class ExteriorPolicy:
    """How a field is evaluated outside its grid.

    ``exact_extension`` calls ``callback(t, x)`` with the field's time stamp.
    """

    mode: str = "clamp_to_boundary"
    callback: Optional[Callable[[float, np.ndarray], np.ndarray]] = None

    def __post_init__(self) -> None:
        if self.mode not in EXTERIOR_MODES:
            raise InvalidParameterError(f"unknown exterior mode {self.mode!r}")
        if self.mode == "exact_extension" and self.callback is None:
            raise InvalidParameterError("exact_extension needs a callback(t, x)")


def _grid_points(grid) -> np.ndarray:
    return grid.points


def nearest_stencil(grid, x, p: int) -> np.ndarray:
    """Start-to-end indices of the p+1 contiguous grid points nearest to x.

    Among windows that bracket x, the one minimizing the largest distance to
    x wins; ties go to the window with smaller indices. Windows are clamped
    to the grid. Returns shape ``(p+1,)`` for scalar x, else ``(n, p+1)``.
    """
    pts = _grid_points(grid)
    starts = _stencil_starts(pts, np.atleast_1d(np.asarray(x, dtype=float)), p)
    idx = starts[:, None] + np.arange(p + 1)
    return idx[0] if np.ndim(x) == 0 else idx


def _stencil_starts(pts: np.ndarray, x: np.ndarray, p: int) -> np.ndarray:
    n = pts.size
    if p < 1 or p + 1 > n:
        raise InvalidParameterError(f"stencil of {p + 1} points does not fit a grid of {n}")
    last_start = n - p - 1
    cell = np.clip(np.searchsorted(pts, x, side="right") - 1, 0, n - 2)
    if p == 1:
        return cell
    best = None
    best_cost = None
    for s in range(p):
        start = np.clip(cell - (p - 1) + s, 0, last_start)
        cost = np.maximum(np.abs(x - pts[start]), np.abs(pts[start + p] - x))
        if best is None:
            best, best_cost = start, cost
        else:
            better = cost < best_cost
            best = np.where(better, start, best)
            best_cost = np.where(better, cost, best_cost)
    return best


def _lagrange_weights(pts: np.ndarray, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
    nodes = pts[idx]
    k = idx.shape[1]
    w = np.ones_like(nodes)
    for j in range(k):
        for m in range(k):
            if m != j:
                w[:, j] *= (x - nodes[:, m]) / (nodes[:, j] - nodes[:, m])
    return w


class StencilPlan:
    """Precomputed interpolation stencils for a fixed set of query points.

    Built once per (grid, points, p) and reused at every time level, so each
    evaluation is a gather plus a short weighted sum.
    """

    def __init__(self, grid, x: np.ndarray, p: int):
        pts = _grid_points(grid)
        x = np.asarray(x, dtype=float)
        self.shape = x.shape
        flat = x.ravel()
        self.x = flat
        self.x_min, self.x_max = pts[0], pts[-1]
        inside = (flat >= self.x_min) & (flat <= self.x_max)
        self.inside = inside
        self.inside_pos = np.flatnonzero(inside)
        self.outside_pos = np.flatnonzero(~inside)
        xi = flat[inside]
        starts = _stencil_starts(pts, xi, p)
        self.idx = starts[:, None] + np.arange(p + 1)
        self.weights = _lagrange_weights(pts, self.idx, xi)
        self.p = p
        self._pts = pts

    def evaluate(self, values: np.ndarray, exterior: "ExteriorPolicy", time: float) -> np.ndarray:
        out = np.empty(self.x.size)
        out[self.inside_pos] = np.sum(values[self.idx] * self.weights, axis=1)
        if self.outside_pos.size:
            out[self.outside_pos] = _exterior_values(
                self.x[self.outside_pos], self._pts, values, exterior, time
            )
        return out.reshape(self.shape)


def _exterior_values(x, pts, values, exterior: ExteriorPolicy, time: float) -> np.ndarray:
    if exterior.mode == "exact_extension":
        return np.asarray(exterior.callback(time, x), dtype=float) * np.ones_like(x)
    if exterior.mode == "clamp_to_boundary":
        return np.where(x < pts[0], values[0], values[-1])
    left_slope = (values[1] - values[0]) / (pts[1] - pts[0])
    right_slope = (values[-1] - values[-2]) / (pts[-1] - pts[-2])
    return np.where(
        x < pts[0],
        values[0] + left_slope * (x - pts[0]),
        values[-1] + right_slope * (x - pts[-1]),
    )


@dataclass(frozen=True, eq=False)
class PointSet:
    """Arbitrary increasing nodes, for fields that gain points mid-march."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2 or np.any(np.diff(pts) <= 0):
            raise InvalidParameterError("a point set needs at least two strictly increasing nodes")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class SolutionField:
    """Nodal values of a discrete solution with an interpolation rule.

    ``time`` is the backward time of the level; exterior callbacks receive it.
    """

    grid: Union[UniformGrid, "AdaptiveGrid", PointSet]
    values: np.ndarray
    order_p: int = 1
    exterior: ExteriorPolicy = field(default_factory=ExteriorPolicy)
    time: float = 0.0

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        pts = _grid_points(self.grid)
        if values.shape != pts.shape:
            raise InvalidParameterError(f"{values.size} values for {pts.size} grid points")
        if not np.all(np.isfinite(values)):
            raise NumericalFailureError("solution field contains non-finite values")
        if self.order_p not in (1, 2, 3):
            raise InvalidParameterError(f"interpolation order must be 1, 2 or 3, got {self.order_p}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def points(self) -> np.ndarray:
        return _grid_points(self.grid)

    def plan(self, x) -> StencilPlan:
        return StencilPlan(self.grid, x, self.order_p)

    def __call__(self, x):
        return interpolate(self, x)


def interpolate(field: SolutionField, x):
    """Evaluate the piecewise Lagrange interpolant of ``field`` at ``x``."""
    x_arr = np.asarray(x, dtype=float)
    out = StencilPlan(field.grid, x_arr, field.order_p).evaluate(field.values, field.exterior, field.time)
    return float(out) if x_arr.ndim == 0 else out


class AdaptiveGrid:
    """Dyadic hierarchy of points on [x_min, x_max] with hat-function surpluses.

    Level 0 holds the two endpoints; level l >= 1 holds the odd multiples of
    (x_max - x_min) / 2^l. All points up to ``base_level`` are always present.
    A point at level l >= base_level spawns its two level-(l+1) children when
    the magnitude of its hierarchical surplus exceeds ``tolerance``.
    """

    def __init__(
        self,
        x_min: float,
        x_max: float,
        tolerance: float,
        max_level: int,
        base_level: int = 2,
    ):
        if not tolerance > 0:
            raise InvalidParameterError(f"adaptive tolerance must be positive, got {tolerance}")
        if max_level < 1 or base_level < 1 or base_level > max_level:
            raise InvalidParameterError("need 1 <= base_level <= max_level")
        if not x_min < x_max:
            raise InvalidParameterError("empty adaptive interval")
        self.x_min = float(x_min)
        self.x_max = float(x_max)
        self.tolerance = float(tolerance)
        self.max_level = int(max_level)
        self.base_level = int(base_level)
        # keys are integer positions on the finest dyadic lattice
        self._scale = 2**self.max_level
        self.levels: dict[int, int] = {}
        self.values: dict[int, float] = {}
        self.surpluses: dict[int, float] = {}

    def copy_empty(self) -> "AdaptiveGrid":
        return AdaptiveGrid(self.x_min, self.x_max, self.tolerance, self.max_level, self.base_level)

    def _coord(self, key) -> np.ndarray:
        key = np.asarray(key, dtype=float)
        return self.x_min + (self.x_max - self.x_min) * key / self._scale

    @property
    def keys(self) -> np.ndarray:
        return np.array(sorted(self.levels), dtype=np.int64)

    @property
    def points(self) -> np.ndarray:
        return self._coord(self.keys)

    @property
    def count(self) -> int:
        return len(self.levels)

    @property
    def nodal_values(self) -> np.ndarray:
        return np.array([self.values[k] for k in sorted(self.levels)])

    @property
    def min_spacing(self) -> float:
        return float(np.min(np.diff(self.points)))

    def level_points(self, level: int) -> np.ndarray:
        return self._coord(np.array(sorted(k for k, l in self.levels.items() if l == level), dtype=np.int64))

    def parent_key(self, key: int) -> Optional[int]:
        level = self.levels[key]
        if level <= 1:
            return None
        h = self._scale >> level
        left, right = key - h, key + h
        return left if self.levels.get(left, -1) == level - 1 else right

    def _add(self, keys: list[int], level: int, sampler) -> None:
        if not keys:
            return
        vals = np.asarray(sampler(self._coord(np.array(keys, dtype=np.int64))), dtype=float)
        if vals.shape != (len(keys),) or not np.all(np.isfinite(vals)):
            raise NumericalFailureError("adaptive sampler returned invalid values")
        for k, v in zip(keys, vals):
            self.levels[k] = level
            self.values[k] = float(v)
            if level == 0:
                self.surpluses[k] = float(v)
            else:
                h = self._scale >> level
                self.surpluses[k] = float(v) - 0.5 * (self.values[k - h] + self.values[k + h])


def refine(
    grid: AdaptiveGrid,
    sampler: Callable[[np.ndarray], np.ndarray],
    keep: Optional[AdaptiveGrid] = None,
) -> AdaptiveGrid:
    """Sample ``sampler`` on a fresh hierarchy and refine by surplus.

    Levels 0..base_level are always sampled. Afterwards, level by level, the
    children of every point whose |surplus| exceeds the tolerance are added,
    until ``max_level`` is reached or no point qualifies. Points of ``keep``
    (a hierarchy on the same lattice) are always retained, so a grid carried
    through time never loses resolution it already had. The sampler is
    called once per level with all new coordinates.
    """
    out = grid.copy_empty()
    scale = out._scale
    kept: dict[int, set[int]] = {}
    if keep is not None:
        if keep._scale != scale or (keep.x_min, keep.x_max) != (out.x_min, out.x_max):
            raise InvalidParameterError("kept hierarchy lives on a different lattice")
        for k, l in keep.levels.items():
            kept.setdefault(l, set()).add(k)
    out._add([0, scale], 0, sampler)
    for level in range(1, out.base_level + 1):
        h = scale >> level
        out._add(list(range(h, scale, 2 * h)), level, sampler)
    level = out.base_level
    while level < out.max_level:
        h_child = scale >> (level + 1)
        children: set[int] = set(kept.get(level + 1, ()))
        for k, l in out.levels.items():
            if l == level and abs(out.surpluses[k]) > out.tolerance:
                children.update((k - h_child, k + h_child))
        new = sorted(c for c in children if c not in out.levels)
        if not new:
            if any(l > level for l in kept):
                level += 1
                continue
            break
        out._add(new, level + 1, sampler)
        level += 1
    return out

"""Backward time march of the fully discrete theta-scheme.

At every node x_i of level n the update is

    A   = E_My[Y_{n+1}](x_i) + (1 - theta) dt E_Mf[f(t_{n+1}, X, Y_{n+1}(X))](x_i)
    y   = A + theta dt f(t_n, x_i, y)

where the expectations are truncated jump expansions of the compound Poisson
increment over one step. The implicit equation is scalar per node and is
solved by fixed-point iteration, which contracts when theta dt L < 1.
Nodes never couple, so a level is an embarrassingly parallel map.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, InvalidParameterError, NumericalFailureError
from .expectation import ExpectationOperator, NodalExpectation
from .grid import AdaptiveGrid, ExteriorPolicy, PointSet, SolutionField, UniformGrid, refine
from .kernels import Problem
from .quadrature import density_weighted

logger = logging.getLogger(__name__)

THREAD_ENV = "NONLOCAL_BSDE_THREADS"
LIPSCHITZ_FLOOR = 1e-12


@dataclass(frozen=True)
class AdaptiveSpec:
    """Surplus-driven dyadic refinement, redone at every time level.

    A node that first appears at level n has no value at level n+1. With
    ``replay_history`` it gets one by replaying the march at that node from
    the terminal condition instead of reading the coarse interpolant, which
    near a discontinuity would smear the jump into it and stall refinement.
    With ``carry_points`` the previous level's points are always kept.
    """

    tolerance: float = 1e-3
    max_level: int = 12
    base_level: int = 3
    carry_points: bool = True
    replay_history: bool = True

    def __post_init__(self) -> None:
        if not self.tolerance > 0:
            raise ConfigurationError("adaptive tolerance must be positive")
        if not 1 <= self.base_level <= self.max_level:
            raise ConfigurationError("need 1 <= base_level <= max_level")


@dataclass(frozen=True)
class SolverConfig:
    """Discretization parameters of one solve.

    ``exterior`` is ``"auto"`` (exact extension when the problem has an exact
    solution, clamping otherwise) or one of the explicit policy modes.
    ``quadrature_family=None`` picks the family from the kernel. The
    trapezoid lattice spacing defaults to the grid spacing (finest spacing
    for adaptive grids).
    """

    theta: float = 0.5
    N: int = 16
    M_y: int = 2
    M_f: int = 1
    Q: int = 16
    p: int = 3
    x_min: float = 0.0
    x_max: float = 1.0
    N_x: int = 65
    quadrature_family: Optional[str] = None
    trapezoid_spacing: Optional[float] = None
    fixed_point_tol: float = 1e-13
    fixed_point_max_iter: int = 100
    exterior: str = "auto"
    threads: str = "serial"
    workers: Optional[int] = None
    collapse: bool = False
    adaptive: Optional[AdaptiveSpec] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigurationError(f"theta must lie in [0, 1], got {self.theta}")
        if self.N < 1:
            raise ConfigurationError(f"N must be positive, got {self.N}")
        if self.M_y < 0 or self.M_f < 0:
            raise ConfigurationError("jump counts M_y, M_f must be nonnegative")
        if self.p not in (1, 2, 3):
            raise ConfigurationError(f"p must be 1, 2 or 3, got {self.p}")
        if self.threads not in ("serial", "parallel"):
            raise ConfigurationError(f"threads must be 'serial' or 'parallel', got {self.threads!r}")
        if self.fixed_point_tol <= 0 or self.fixed_point_max_iter < 1:
            raise ConfigurationError("fixed-point tolerance and iteration cap must be positive")
        if self.adaptive is not None and self.p != 1:
            raise ConfigurationError("adaptive grids use piecewise-linear hats; set p = 1")

    @property
    def grid(self) -> UniformGrid:
        return UniformGrid(self.x_min, self.x_max, self.N_x)

    def with_dx(self, dx: float) -> "SolverConfig":
        return replace(self, N_x=UniformGrid.from_spacing(self.x_min, self.x_max, dx).count)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TimeLevelResult:
    n: int
    field: SolutionField
    iterations: np.ndarray
    wall_time: float

    @property
    def max_iterations(self) -> int:
        return int(self.iterations.max()) if self.iterations.size else 0


@dataclass
class SolveResult:
    field: SolutionField
    levels: list[TimeLevelResult]
    config: SolverConfig
    metadata: dict = field(default_factory=dict)

    @property
    def max_iterations(self) -> int:
        return max((lvl.max_iterations for lvl in self.levels), default=0)

    @property
    def wall_time(self) -> float:
        return sum(lvl.wall_time for lvl in self.levels)


def _resolve_exterior(problem: Problem, config: SolverConfig) -> ExteriorPolicy:
    mode = config.exterior
    if mode == "auto":
        mode = "exact_extension" if problem.exact_solution is not None else "clamp_to_boundary"
    if mode == "exact_extension":
        return ExteriorPolicy(mode, problem.exact_at_bsde_time)
    return ExteriorPolicy(mode)


def _worker_count(config: SolverConfig) -> int:
    if config.threads == "serial":
        return 1
    env = os.environ.get(THREAD_ENV)
    if env:
        return max(1, int(env))
    return config.workers or (os.cpu_count() or 1)


class ThetaScheme:
    """Holds the step-independent pieces of a solve (rules, operators, stencils)."""

    def __init__(self, problem: Problem, config: SolverConfig):
        self.problem = problem
        self.config = config
        self.dt = problem.horizon_T / config.N
        L = max(problem.lipschitz_L, LIPSCHITZ_FLOOR)
        if config.theta * self.dt * L >= 1.0:
            raise ConfigurationError(
                f"theta*dt*L = {config.theta * self.dt * L:.3g} >= 1: the implicit nodal solve does not contract"
            )
        self.contraction = config.theta * self.dt * problem.lipschitz_L
        self.exterior = _resolve_exterior(problem, config)
        kernel = problem.kernel
        spacing = config.trapezoid_spacing
        if spacing is None and config.quadrature_family == "trapezoid":
            if config.adaptive is not None:
                spacing = (config.x_max - config.x_min) / 2**config.adaptive.max_level
            else:
                spacing = config.grid.dx
        self.rule = density_weighted(kernel, config.Q, config.quadrature_family, spacing)
        lam_dt = kernel.lam * self.dt
        self.op_y = ExpectationOperator(self.rule, lam_dt, config.M_y, config.collapse)
        self.op_f = ExpectationOperator(self.rule, lam_dt, config.M_f, config.collapse)
        self.workers = _worker_count(config)
        self._chunks: Optional[list[tuple[np.ndarray, NodalExpectation, NodalExpectation]]] = None
        self._chunk_grid = None

    # -- grid handling -------------------------------------------------
    def _nodal(self, grid, nodes: np.ndarray) -> tuple[NodalExpectation, NodalExpectation]:
        p = self.config.p
        ny = NodalExpectation(self.op_y, nodes, grid, p)
        nf = ny if self.config.M_f <= self.config.M_y else NodalExpectation(self.op_f, nodes, grid, p)
        return ny, nf

    def _chunks_for(self, grid):
        """Stencil plans for a grid that stays fixed across levels (cached)."""
        if self._chunks is None or not (self._chunk_grid is grid or self._chunk_grid == grid):
            nodes = grid.points
            parts = np.array_split(np.arange(nodes.size), min(self.workers, nodes.size))
            self._chunks = [(idx, *self._nodal(grid, nodes[idx])) for idx in parts]
            self._chunk_grid = grid
        return self._chunks

    def terminal_field(self, grid=None) -> SolutionField:
        T = self.problem.horizon_T
        if self.config.adaptive is not None and grid is None:
            spec = self.config.adaptive
            base = AdaptiveGrid(self.config.x_min, self.config.x_max, spec.tolerance, spec.max_level, spec.base_level)
            grid = refine(base, self.problem.terminal)
        elif grid is None:
            grid = self.config.grid
        values = np.asarray(self.problem.terminal(grid.points), dtype=float) * np.ones(grid.points.size)
        return SolutionField(grid, values, self.config.p, self.exterior, time=T)

    # -- one level -----------------------------------------------------
    def _explicit_part(self, ny, nf, field_next: SolutionField, t_next: float) -> np.ndarray:
        cfg = self.config
        cols = ny.field_values(field_next.values, field_next.exterior, t_next)
        A = self.op_y.combine(cols)
        if cfg.theta < 1.0:
            if nf is ny:
                ycols = cols[: cfg.M_f + 1]
            else:
                ycols = nf.field_values(field_next.values, field_next.exterior, t_next)
            fcols = [
                np.asarray(self.problem.forcing(t_next, pts, y), dtype=float) * np.ones_like(y)
                for pts, y in zip(nf.points, ycols)
            ]
            A = A + (1.0 - cfg.theta) * self.dt * self.op_f.combine(fcols)
        return A

    def _implicit_solve(self, A: np.ndarray, x: np.ndarray, t_n: float) -> tuple[np.ndarray, np.ndarray]:
        cfg = self.config
        iters = np.zeros(A.size, dtype=np.int64)
        if cfg.theta == 0.0:
            return A, iters
        h = cfg.theta * self.dt
        forcing = self.problem.forcing
        y = A.copy()
        q = self.contraction
        active = np.arange(A.size)
        for k in range(1, cfg.fixed_point_max_iter + 1):
            y_new = A[active] + h * np.asarray(forcing(t_n, x[active], y[active]), dtype=float)
            step = np.abs(y_new - y[active])
            y[active] = y_new
            iters[active] = k
            if q == 0.0:
                done = np.ones(active.size, dtype=bool)
            else:
                done = (step <= cfg.fixed_point_tol) | (q / (1.0 - q) * step <= cfg.fixed_point_tol)
            active = active[~done]
            if active.size == 0:
                break
        else:
            raise NumericalFailureError(
                f"fixed-point solve did not converge in {cfg.fixed_point_max_iter} iterations "
                f"at node x={x[active[0]]!r}, t={t_n!r}"
            )
        if not np.all(np.isfinite(y)):
            raise NumericalFailureError("non-finite value in nodal solve")
        return y, iters

    def _values_at(self, field_next: SolutionField, n: int, x: np.ndarray, chunks=None):
        t_n, t_next = n * self.dt, (n + 1) * self.dt
        if chunks is None:
            ny, nf = self._nodal(field_next.grid, x)
            chunks = [(np.arange(x.size), ny, nf)]

        def work(chunk):
            idx, ny, nf = chunk
            A = self._explicit_part(ny, nf, field_next, t_next)
            return self._implicit_solve(A, x[idx], t_n)

        if len(chunks) == 1:
            results = [work(chunks[0])]
        else:
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                results = list(pool.map(work, chunks))
        y = np.empty(x.size)
        iters = np.empty(x.size, dtype=np.int64)
        for (idx, _, _), (yc, ic) in zip(chunks, results):
            y[idx] = yc
            iters[idx] = ic
        return y, iters

    def _replayed_values(self, history: dict, n: int, x: np.ndarray):
        """Values at level n of nodes missing from the stored levels.

        Marches x alone from the terminal condition, splicing the running
        values into each stored level before it is read.
        """
        y = np.asarray(self.problem.terminal(x), dtype=float) * np.ones(x.size)
        iters = np.zeros(x.size, dtype=np.int64)
        for k in range(self.config.N - 1, n - 1, -1):
            stored = history[k + 1]
            pts = stored.points
            fresh = ~np.isin(x, pts)
            if np.any(fresh):
                merged = np.concatenate((pts, x[fresh]))
                order = np.argsort(merged, kind="stable")
                vals = np.concatenate((stored.values, y[fresh]))[order]
                stored = SolutionField(PointSet(merged[order]), vals, 1, stored.exterior, stored.time)
            y, iters = self._values_at(stored, k, x)
        return y, iters

    def step_back(self, field_next: SolutionField, n: int, history: Optional[dict] = None) -> TimeLevelResult:
        """Level n from level n+1. ``history`` maps level index to the fields
        already computed (n+1..N); adaptive grids need it to replay new nodes."""
        if not 0 <= n < self.config.N:
            raise InvalidParameterError(f"level index {n} outside [0, {self.config.N - 1}]")
        start = time.perf_counter()
        t_n = n * self.dt
        if self.config.adaptive is None:
            x = field_next.grid.points
            chunks = self._chunks_for(field_next.grid) if field_next.grid == self.config.grid else None
            y, iters = self._values_at(field_next, n, x, chunks)
            out = SolutionField(field_next.grid, y, self.config.p, self.exterior, time=t_n)
        else:
            counts: list[np.ndarray] = []

            def sampler(pts):
                pts = np.asarray(pts, dtype=float)
                if history is None or not self.config.adaptive.replay_history:
                    vals, it = self._values_at(field_next, n, pts)
                    counts.append(it)
                    return vals
                vals = np.empty(pts.size)
                known = np.isin(pts, field_next.points)
                if np.any(known):
                    vals[known], it = self._values_at(field_next, n, pts[known])
                    counts.append(it)
                if not np.all(known):
                    vals[~known], it = self._replayed_values(history, n, pts[~known])
                    counts.append(it)
                return vals

            spec = self.config.adaptive
            base = AdaptiveGrid(self.config.x_min, self.config.x_max, spec.tolerance, spec.max_level, spec.base_level)
            keep = field_next.grid if spec.carry_points and isinstance(field_next.grid, AdaptiveGrid) else None
            grid = refine(base, sampler, keep)
            iters = np.concatenate(counts)
            out = SolutionField(grid, grid.nodal_values, 1, self.exterior, time=t_n)
        return TimeLevelResult(n, out, iters, time.perf_counter() - start)

    def solve(self, on_level: Optional[Callable[[TimeLevelResult], None]] = None) -> SolveResult:
        field_ = self.terminal_field()
        levels = []
        history = {self.config.N: field_} if self.config.adaptive is not None else None
        for n in range(self.config.N - 1, -1, -1):
            level = self.step_back(field_, n, history)
            if history is not None:
                history[n] = level.field
            levels.append(level)
            field_ = level.field
            if on_level is not None:
                on_level(level)
            logger.debug("level %d: max_iter=%d wall=%.4fs", n, level.max_iterations, level.wall_time)
        meta = {
            "exterior": self.exterior.mode,
            "quadrature_family": self.rule.family,
            "quadrature_nodes": self.rule.Q,
            "lambda": self.problem.kernel.lam,
            "dt": self.dt,
            "workers": self.workers,
        }
        return SolveResult(field_, levels, self.config, meta)


def terminal_field(problem: Problem, config: SolverConfig, grid=None) -> SolutionField:
    """phi(x_i) at every grid point."""
    return ThetaScheme(problem, config).terminal_field(grid)


def step_back(field_next: SolutionField, n: int, problem: Problem, config: SolverConfig) -> SolutionField:
    """One backward level; builds the operators on every call (use ThetaScheme to reuse them)."""
    return ThetaScheme(problem, config).step_back(field_next, n).field


def solve(problem: Problem, config: SolverConfig, on_level=None) -> SolveResult:
    """March from the terminal condition to t_0; ``result.field`` approximates u(T, .)."""
    return ThetaScheme(problem, config).solve(on_level)


def iteration_bound(contraction: float, tol: float) -> int:
    """Upper bound on fixed-point updates for an O(1) initial defect."""
    if contraction <= 0.0:
        return 1
    return math.ceil(math.log(tol) / math.log(contraction)) + 1

"""Error norms, rate fitting, convergence sweeps and their CSV form."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidParameterError, NonlocalBSDEError
from .grid import AdaptiveGrid, SolutionField, interpolate
from .kernels import Problem, benchmark_problem
from .stepper import AdaptiveSpec, SolverConfig, solve

NORMS = ("Linf", "L2")
ERROR_MODES = ("nodal", "dense")
VARYING = ("time", "space", "adaptive", "adaptive_dx")
CSV_COLUMNS = (
    "sweep_value",
    "error_Linf",
    "error_L2",
    "rate_running",
    "iters_max",
    "wall_ms",
    "n_points",
    "rate_Linf",
    "rate_L2",
    "series",
)
DENSE_PER_CELL = 16


# -- norms ---------------------------------------------------------------

def _kept_cells(pts: np.ndarray, exclusion) -> np.ndarray:
    """Mask of cells (pts[i], pts[i+1]] that survive the exclusion window.

    A cell is dropped when it meets [c0, c1] with the half-open convention
    a < c1 and b >= c0, so an excluded grid point removes only the cell to
    its left.
    """
    a, b = pts[:-1], pts[1:]
    if exclusion is None:
        return np.ones(a.size, dtype=bool)
    c0, c1 = float(exclusion[0]), float(exclusion[1])
    if c0 == c1:
        return ~((a < c1) & (b >= c0))
    return ~((a < c1) & (b > c0))


def error_norms(
    approx: SolutionField,
    exact: Callable[[np.ndarray], np.ndarray],
    window: Optional[tuple[float, float]] = None,
    exclusion: Optional[tuple[float, float]] = None,
    mode: str = "nodal",
    per_cell: int = DENSE_PER_CELL,
) -> tuple[float, float]:
    """(Linf, L2) error of ``approx`` against ``exact`` over ``window``.

    ``nodal`` uses the grid values only: Linf is the largest nodal error and
    L2 the composite trapezoid rule on the same points. ``dense`` measures the
    interpolant itself, sampling ``per_cell`` subintervals in every element.
    Elements meeting ``exclusion`` are skipped in both modes.
    """
    if mode not in ERROR_MODES:
        raise InvalidParameterError(f"unknown error mode {mode!r}")
    pts = approx.points
    lo, hi = (pts[0], pts[-1]) if window is None else (float(window[0]), float(window[1]))
    if lo < pts[0] - 1e-12 or hi > pts[-1] + 1e-12 or not lo < hi:
        raise InvalidParameterError(f"window [{lo}, {hi}] is not inside the grid [{pts[0]}, {pts[-1]}]")
    tol = 1e-12 * max(1.0, abs(hi))
    inside = (pts >= lo - tol) & (pts <= hi + tol)
    sel = np.flatnonzero(inside)
    if sel.size < 2:
        raise InvalidParameterError("error window holds fewer than two grid points")
    cell_pts = pts[sel]
    keep = _kept_cells(cell_pts, exclusion)
    if not keep.any():
        raise InvalidParameterError("exclusion removes every element of the window")
    a, b = cell_pts[:-1][keep], cell_pts[1:][keep]

    if mode == "nodal":
        vals = np.asarray(approx.values)[sel]
        diff = vals - np.asarray(exact(cell_pts), dtype=float)
        left, right = diff[:-1][keep], diff[1:][keep]
        used = np.zeros(cell_pts.size, dtype=bool)
        used[:-1] |= keep
        used[1:] |= keep
        linf = float(np.max(np.abs(diff[used])))
        l2 = math.sqrt(math.fsum(0.5 * (b - a) * (left**2 + right**2)))
        return linf, l2

    s = np.linspace(0.0, 1.0, per_cell + 1)
    x = a[:, None] + (b - a)[:, None] * s[None, :]
    # sample just inside each element so a jump at an end node is attributed correctly
    x[:, 0] = np.nextafter(a, b)
    x[:, -1] = b
    diff = np.asarray(interpolate(approx, x.ravel()), dtype=float) - np.asarray(exact(x.ravel()), dtype=float)
    diff = diff.reshape(x.shape)
    linf = float(np.max(np.abs(diff)))
    sq = diff**2
    h = (b - a)[:, None] / per_cell
    l2 = math.sqrt(math.fsum(np.sum(0.5 * h * (sq[:, :-1] + sq[:, 1:]), axis=1)))
    return linf, l2


def fit_rate(steps: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(step)."""
    s = np.asarray(steps, dtype=float)
    e = np.asarray(errors, dtype=float)
    if s.shape != e.shape or s.size < 3:
        raise InvalidParameterError("rate fitting needs at least three (step, error) pairs")
    if np.any(s <= 0) or np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise InvalidParameterError("steps and errors must be positive")
    slope, _ = np.polyfit(np.log(s), np.log(e), 1)
    return float(slope)


def local_rates(steps: Sequence[float], errors: Sequence[float]) -> np.ndarray:
    """Pairwise rates; the first entry is NaN."""
    s = np.log(np.asarray(steps, dtype=float))
    e = np.log(np.asarray(errors, dtype=float))
    out = np.full(s.size, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:] = np.diff(e) / np.diff(s)
    return out


# -- sweeps --------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    """One row of a convergence table.

    ``values`` are N for time sweeps, dx for space sweeps, refinement
    tolerances for adaptive sweeps and starting-grid spacings (fixed
    tolerance) for adaptive_dx sweeps. ``window_trim_right`` drops that many
    grid spacings from the right end of the error window, which is how the
    time-step tables measure errors.
    """

    varying: str
    values: tuple
    problem_id: str = "ex1"
    delta: float = 1.0
    T: Optional[float] = None
    config: SolverConfig = field(default_factory=SolverConfig)
    norms: tuple = NORMS
    primary_norm: str = "Linf"
    window: Optional[tuple[float, float]] = None
    window_trim_right: int = 0
    exclusion: Optional[tuple[float, float]] = None
    error_mode: str = "nodal"
    name: str = "sweep"
    reference: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.varying not in VARYING:
            raise InvalidParameterError(f"sweep must vary one of {VARYING}, got {self.varying!r}")
        if len(self.values) < 1:
            raise InvalidParameterError("a sweep needs at least one value")
        vals = np.asarray(self.values, dtype=float)
        if vals.size > 1 and not (np.all(np.diff(vals) > 0) or np.all(np.diff(vals) < 0)):
            raise InvalidParameterError("sweep values must be strictly monotone")
        if self.error_mode not in ERROR_MODES:
            raise InvalidParameterError(f"unknown error mode {self.error_mode!r}")
        if self.primary_norm not in NORMS or not set(self.norms) <= set(NORMS):
            raise InvalidParameterError(f"norms must be drawn from {NORMS}")

    def problem(self) -> Problem:
        return benchmark_problem(self.problem_id, self.delta, self.T)

    def config_at(self, value) -> SolverConfig:
        cfg = self.config
        if self.varying == "time":
            return replace(cfg, N=int(value))
        if self.varying == "space":
            return cfg.with_dx(float(value))
        base = cfg.adaptive or AdaptiveSpec()
        if self.varying == "adaptive":
            return replace(cfg, adaptive=replace(base, tolerance=float(value)))
        level = math.log2((cfg.x_max - cfg.x_min) / float(value))
        if abs(level - round(level)) > 1e-9:
            raise InvalidParameterError(f"starting spacing {value} is not a dyadic fraction of the domain")
        return replace(cfg, adaptive=replace(base, base_level=int(round(level))))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["config"] = self.config.to_dict()
        return d


@dataclass
class SweepPoint:
    sweep_value: float
    error_Linf: float
    error_L2: float
    iters_max: int
    wall_ms: float
    n_points: int
    step: float


@dataclass
class SweepResult:
    spec_name: str
    points: list[SweepPoint]
    rate_Linf: Optional[float]
    rate_L2: Optional[float]
    metadata: dict = field(default_factory=dict)

    def errors(self, norm: str) -> np.ndarray:
        return np.array([getattr(p, f"error_{norm}") for p in self.points])

    @property
    def steps(self) -> np.ndarray:
        return np.array([p.step for p in self.points])

    def rate(self, norm: str) -> Optional[float]:
        return self.rate_Linf if norm == "Linf" else self.rate_L2


def _step_of(spec: SweepSpec, cfg: SolverConfig, problem: Problem, field_: SolutionField) -> float:
    if spec.varying == "time":
        return problem.horizon_T / cfg.N
    if spec.varying == "space":
        return cfg.grid.dx
    if spec.varying == "adaptive_dx":
        return (cfg.x_max - cfg.x_min) / 2**cfg.adaptive.base_level
    # adaptive: mean spacing of the final grid
    return (cfg.x_max - cfg.x_min) / (field_.points.size - 1)


def run_point(spec: SweepSpec, value) -> SweepPoint:
    problem = spec.problem()
    cfg = spec.config_at(value)
    start = time.perf_counter()
    try:
        result = solve(problem, cfg)
    except NonlocalBSDEError as exc:
        raise type(exc)(f"sweep {spec.name!r} at {spec.varying}={value}: {exc}") from exc
    wall = (time.perf_counter() - start) * 1e3
    field_ = result.field
    T = problem.horizon_T
    window = spec.window
    if spec.window_trim_right:
        pts = field_.points
        lo = pts[0] if window is None else window[0]
        hi = (pts[-1] if window is None else window[1]) - spec.window_trim_right * (pts[-1] - pts[-2])
        window = (lo, hi)
    linf, l2 = error_norms(
        field_, lambda x: problem.exact_solution(T, x), window, spec.exclusion, spec.error_mode
    )
    return SweepPoint(
        sweep_value=float(value),
        error_Linf=linf,
        error_L2=l2,
        iters_max=result.max_iterations,
        wall_ms=wall,
        n_points=int(field_.points.size),
        step=_step_of(spec, cfg, problem, field_),
    )


def _config_hash(spec: SweepSpec) -> str:
    blob = json.dumps(spec.to_dict(), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def run_sweep(spec: SweepSpec, workers: int = 1) -> SweepResult:
    """Solve at every sweep value, measure errors and fit rates.

    Points may run concurrently; results are assembled in sweep order.
    """
    if workers > 1 and len(spec.values) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(lambda v: run_point(spec, v), spec.values))
    else:
        points = [run_point(spec, v) for v in spec.values]
    rates = {}
    for norm in NORMS:
        errs = [getattr(p, f"error_{norm}") for p in points]
        ok = len(points) >= 3 and all(e > 0 for e in errs)
        rates[norm] = fit_rate([p.step for p in points], errs) if ok else None
    meta = {
        "name": spec.name,
        "config_hash": _config_hash(spec),
        "spec": spec.to_dict(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "l2_rule": "composite trapezoid" + (" on the solution grid" if spec.error_mode == "nodal" else f" on {DENSE_PER_CELL} subcells per element"),
    }
    return SweepResult(spec.name, points, rates["Linf"], rates["L2"], meta)


# -- CSV -----------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def _row_values(result: SweepResult, primary: str) -> list[dict]:
    steps = result.steps
    rates = {n: local_rates(steps, result.errors(n)) if len(steps) > 1 else np.full(len(steps), np.nan) for n in NORMS}
    rows = []
    for i, p in enumerate(result.points):
        rows.append(
            {
                "sweep_value": _fmt(p.sweep_value),
                "error_Linf": _fmt(p.error_Linf),
                "error_L2": _fmt(p.error_L2),
                "rate_running": _fmt(rates[primary][i]),
                "iters_max": _fmt(p.iters_max),
                "wall_ms": _fmt(p.wall_ms),
                "n_points": _fmt(p.n_points),
                "rate_Linf": _fmt(rates["Linf"][i]),
                "rate_L2": _fmt(rates["L2"][i]),
                "series": result.spec_name,
            }
        )
    rows.append(
        {
            "sweep_value": "CR",
            "error_Linf": _fmt(result.rate_Linf),
            "error_L2": _fmt(result.rate_L2),
            "rate_running": "",
            "iters_max": "",
            "wall_ms": "",
            "n_points": "",
            "rate_Linf": "",
            "rate_L2": "",
            "series": result.spec_name,
        }
    )
    return rows


def write_csv(results: Sequence[SweepResult], stream, primary: str = "Linf", header_meta: Optional[dict] = None) -> None:
    """Header comments carry the resolved configs; one row per point plus a CR row per series."""
    if header_meta:
        stream.write("# run: " + json.dumps(header_meta, sort_keys=True, default=str) + "\n")
    for r in results:
        stream.write("# series: " + json.dumps(r.metadata, sort_keys=True, default=str) + "\n")
        stream.write("# steps " + r.spec_name + ": " + ",".join(_fmt(s) for s in r.steps) + "\n")
    writer = csv.DictWriter(stream, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in results:
        for row in _row_values(r, primary):
            writer.writerow(row)


def to_csv(results: Sequence[SweepResult], primary: str = "Linf") -> str:
    buf = io.StringIO()
    write_csv(results, buf, primary)
    return buf.getvalue()


def _parse_float(s: str) -> Optional[float]:
    return None if s == "" else float(s)


def read_csv(text: str) -> list[SweepResult]:
    """Inverse of ``write_csv``: rebuilds the sweep results from their CSV form."""
    meta: dict[str, dict] = {}
    steps: dict[str, list[float]] = {}
    body = []
    for line in text.splitlines():
        if line.startswith("# series: "):
            m = json.loads(line[len("# series: "):])
            meta[m["name"]] = m
        elif line.startswith("# steps "):
            name, _, vals = line[len("# steps "):].rpartition(": ")
            steps[name] = [float(v) for v in vals.split(",")] if vals else []
        elif not line.startswith("#"):
            body.append(line)
    results: dict[str, SweepResult] = {}
    order: list[str] = []
    for row in csv.DictReader(body):
        name = row["series"]
        if name not in results:
            results[name] = SweepResult(name, [], None, None, meta.get(name, {}))
            order.append(name)
        res = results[name]
        if row["sweep_value"] == "CR":
            res.rate_Linf = _parse_float(row["error_Linf"])
            res.rate_L2 = _parse_float(row["error_L2"])
            continue
        i = len(res.points)
        res.points.append(
            SweepPoint(
                sweep_value=float(row["sweep_value"]),
                error_Linf=float(row["error_Linf"]),
                error_L2=float(row["error_L2"]),
                iters_max=int(row["iters_max"]),
                wall_ms=float(row["wall_ms"]),
                n_points=int(row["n_points"]),
                step=steps[name][i],
            )
        )
    return [results[n] for n in order]

"""Monte Carlo and brute-force reference values.

Both routines are deliberately independent of the deterministic solver:
paths are simulated from the jump law directly, and the brute-force
expectation uses its own dense Simpson rule instead of the solver's
quadrature.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidParameterError, UnsupportedProblemError
from .expectation import poisson_weights
from .kernels import KernelSpec, Problem
from .quadrature import gauss_legendre

GL_POINTS = 32
DEFAULT_BATCH = 100_000


def _generator(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for (seed, stream); streams never overlap."""
    child = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(child))


@dataclass(frozen=True)
class PathSample:
    """One compound Poisson path on [0, T] started at ``x0``."""

    jump_times: np.ndarray
    jump_sizes: np.ndarray
    x0: float
    T: float

    @property
    def jump_count(self) -> int:
        return int(self.jump_times.size)

    def position(self, t: float) -> float:
        k = int(np.searchsorted(self.jump_times, t, side="right"))
        return float(self.x0 + np.sum(self.jump_sizes[:k]))

    @property
    def terminal(self) -> float:
        return float(self.x0 + np.sum(self.jump_sizes))


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    samples: int
    seed: int

    def agrees_with(self, value: float, n_sigma: float = 3.0) -> bool:
        return abs(value - self.mean) <= n_sigma * self.std_error


def sample_path(kernel: KernelSpec, T: float, x0: float, rng_seed: int) -> PathSample:
    """Jump count ~ Poisson(lam T), sorted uniform times, inverse-CDF sizes."""
    if not T > 0:
        raise InvalidParameterError(f"horizon must be positive, got {T}")
    rng = _generator(rng_seed)
    k = int(rng.poisson(kernel.lam * T))
    times = np.sort(rng.uniform(0.0, T, size=k))
    sizes = kernel.sample_jumps(rng.uniform(size=k))
    return PathSample(times, sizes, float(x0), float(T))


def _batch_paths(kernel: KernelSpec, T: float, n: int, rng: np.random.Generator):
    """Flattened inter-jump intervals for n paths started at 0.

    Returns (path index, start, end, offset) per interval plus terminal offsets.
    """
    counts = rng.poisson(kernel.lam * T, size=n)
    total = int(counts.sum())
    times = rng.uniform(0.0, T, size=total)
    sizes = kernel.sample_jumps(rng.uniform(size=total))
    owner = np.repeat(np.arange(n), counts)
    # sort times within each path; owner is already grouped
    order = np.lexsort((times, owner))
    times = times[order]
    sizes = sizes[order]
    first = np.concatenate(([0], np.cumsum(counts)[:-1]))

    # intervals: path i has counts[i] + 1 pieces
    n_int = n + total
    int_owner = np.repeat(np.arange(n), counts + 1)
    int_first = np.concatenate(([0], np.cumsum(counts + 1)[:-1]))
    local = np.arange(n_int) - int_first[int_owner]
    start = np.zeros(n_int)
    end = np.full(n_int, float(T))
    jump_idx = first[int_owner] + local  # index of the jump ending this interval
    has_end = local < counts[int_owner]
    end[has_end] = times[jump_idx[has_end]]
    has_start = local > 0
    start[has_start] = times[jump_idx[has_start] - 1]

    cum = np.cumsum(sizes)
    before = np.where(first > 0, cum[first - 1], 0.0) if total else np.zeros(n)
    offset = np.zeros(n_int)
    idx = jump_idx[has_start] - 1
    offset[has_start] = cum[idx] - before[int_owner[has_start]]
    terminal = np.where(counts > 0, cum[np.maximum(first + counts - 1, 0)] - before, 0.0) if total else np.zeros(n)
    return int_owner, start, end, offset, terminal


def _path_functional(problem: Problem, source, x0s: np.ndarray, batch) -> np.ndarray:
    """phi(X_T) + int_0^T f(s, X_s) ds for each path and each start point."""
    owner, start, end, offset, terminal = batch
    n = terminal.size
    t_ref, w_ref = gauss_legendre(GL_POINTS, (0.0, 1.0))
    s = start[:, None] + (end - start)[:, None] * t_ref[None, :]
    w = (end - start)[:, None] * w_ref[None, :]
    out = np.empty((x0s.size, n))
    for j, x0 in enumerate(x0s):
        vals = np.asarray(source(s, x0 + offset[:, None]), dtype=float) * np.ones_like(s)
        piece = np.sum(vals * w, axis=1)
        integral = np.bincount(owner, weights=piece, minlength=n)
        out[j] = np.asarray(problem.terminal(x0 + terminal), dtype=float) + integral
    return out


def feynman_kac_estimates(
    problem: Problem,
    x0s: Sequence[float],
    samples: int,
    seed: int,
    batch_size: int = DEFAULT_BATCH,
    workers: int = 1,
) -> list[McEstimate]:
    """Estimates of u(T, x0) at several start points from shared paths.

    Path increments do not depend on the start point, so every probe reuses
    the same batches. Batches are seeded by (seed, batch index) and reduced
    in batch order, so results do not depend on ``workers``.
    """
    if samples < 2:
        raise InvalidParameterError("need at least two samples for a standard error")
    try:
        source = problem.source_along_exact()
    except InvalidParameterError as exc:
        raise UnsupportedProblemError(
            "Feynman-Kac estimation needs y-independent forcing or an exact solution to eliminate y"
        ) from exc
    x0s = np.atleast_1d(np.asarray(x0s, dtype=float))
    sizes = [batch_size] * (samples // batch_size)
    if samples % batch_size:
        sizes.append(samples % batch_size)

    def run(b: int):
        rng = _generator(seed, b)
        vals = _path_functional(problem, source, x0s, _batch_paths(problem.kernel, problem.horizon_T, sizes[b], rng))
        mean = vals.mean(axis=1)
        m2 = np.sum((vals - mean[:, None]) ** 2, axis=1)
        return sizes[b], mean, m2

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(b) for b in range(len(sizes))]

    # pairwise (Chan) merge in fixed batch order
    n_tot, mean, m2 = parts[0]
    for n_b, mean_b, m2_b in parts[1:]:
        n_new = n_tot + n_b
        delta = mean_b - mean
        mean = mean + delta * (n_b / n_new)
        m2 = m2 + m2_b + delta**2 * (n_tot * n_b / n_new)
        n_tot = n_new
    std = np.sqrt(m2 / (n_tot - 1))
    return [McEstimate(float(m), float(sd / math.sqrt(n_tot)), int(n_tot), int(seed)) for m, sd in zip(mean, std)]


def feynman_kac_estimate(problem: Problem, x0: float, samples: int, seed: int, **kwargs) -> McEstimate:
    """Monte Carlo estimate of u(T, x0) = E[phi(X_T) + int_0^T f(s, X_s) ds]."""
    return feynman_kac_estimates(problem, [x0], samples, seed, **kwargs)[0]


def _simpson(a: float, b: float, panels: int) -> tuple[np.ndarray, np.ndarray]:
    if panels % 2:
        panels += 1
    x = np.linspace(a, b, panels + 1)
    w = np.full(panels + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return x, w * (b - a) / (3.0 * panels)


def dense_jump_rule(kernel: KernelSpec, dense_Q: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Simpson rule for integrals against rho, 10 * dense_Q panels.

    For the inverse-sqrt kernel each half is mapped through e = +-s^2, which
    turns rho(e) de into a bounded density in s.
    """
    if dense_Q < 1:
        raise InvalidParameterError("dense_Q must be positive")
    panels = 10 * int(dense_Q)
    lo, hi = kernel.support
    if kernel.singularity == "inverse_sqrt_at_zero":
        xs, ws = [], []
        for side, length in ((-1.0, -lo), (1.0, hi)):
            if length <= 0:
                continue
            s, w = _simpson(0.0, math.sqrt(length), panels)
            # rho(e) de = rho(s^2) 2 s ds is bounded; its s = 0 value is extrapolated
            e = side * s * s
            dens = np.empty_like(s)
            dens[1:] = np.asarray(kernel.rho(e[1:]), dtype=float) * 2.0 * s[1:]
            dens[0] = 2.0 * dens[1] - dens[2]
            xs.append(e)
            ws.append(w * dens)
        return np.concatenate(xs), np.concatenate(ws)
    x, w = _simpson(lo, hi, panels)
    return x, w * np.asarray(kernel.rho(x), dtype=float)


def brute_force_expectation(
    field: Callable[[np.ndarray], np.ndarray],
    kernel: KernelSpec,
    lambda_dt: float,
    M: int,
    dense_Q: int,
    x0: float,
) -> float:
    """Truncated jump expansion of E[field(x0 + S)] with a dense Simpson rule."""
    if M > 3:
        raise InvalidParameterError("brute-force expectation supports at most 3 jumps")
    pi = poisson_weights(lambda_dt, M)
    e, w = dense_jump_rule(kernel, dense_Q)
    total = pi[0] * float(np.asarray(field(np.array([float(x0)])), dtype=float)[0])
    disp = np.zeros(1)
    weight = np.ones(1)
    for m in range(1, M + 1):
        disp = np.add.outer(disp, e).ravel()
        weight = np.multiply.outer(weight, w).ravel()
        vals = np.asarray(field(x0 + disp), dtype=float)
        total += pi[m] * math.fsum(weight * vals)
    return float(total)

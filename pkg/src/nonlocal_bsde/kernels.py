"""Integrable jump kernels, derived jump-process coefficients, and problems.

A kernel gamma with finite mass lam = int gamma turns the nonlocal operator
into the generator of a compound Poisson process with intensity lam and jump
density rho = gamma / lam. Problems store their forcing in backward time,
f(t, x, y) = g(T - t, x, y), so the time stepper never reverses time itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParameterError

ArrayFn = Callable[..., np.ndarray]

SYMMETRIES = ("symmetric", "nonsymmetric")
SINGULARITIES = ("none", "inverse_sqrt_at_zero")
BENCHMARKS = ("ex1", "ex2", "ex3")


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0.0 and math.isfinite(value)):
        raise InvalidParameterError(f"{name} must be positive and finite, got {value!r}")
    return value


def _indicator(lo: float, hi: float, e: np.ndarray) -> np.ndarray:
    return ((e >= lo) & (e <= hi)).astype(float)


@dataclass(frozen=True)
class KernelSpec:
    """Jump kernel plus the compound Poisson coefficients derived from it.

    ``gamma`` and ``rho`` accept numpy arrays and vanish off ``support``.
    ``drift_b`` is the compensator rate lam * E[e]; the deterministic scheme
    never uses it because it cancels against the compensated jump measure.
    """

    gamma: ArrayFn
    support: tuple[float, float]
    lam: float
    rho: ArrayFn
    drift_b: float
    symmetry: str = "symmetric"
    singularity: str = "none"
    name: str = "custom"
    delta: Optional[float] = None

    def __post_init__(self) -> None:
        lo, hi = (float(v) for v in self.support)
        if not lo < hi:
            raise InvalidParameterError(f"kernel support must be a proper interval, got {self.support}")
        object.__setattr__(self, "support", (lo, hi))
        _positive("lam", self.lam)
        if self.symmetry not in SYMMETRIES:
            raise InvalidParameterError(f"unknown symmetry {self.symmetry!r}")
        if self.singularity not in SINGULARITIES:
            raise InvalidParameterError(f"unknown singularity {self.singularity!r}")

    @property
    def mean_jump(self) -> float:
        return self.drift_b / self.lam

    def jump_cdf(self, e: np.ndarray) -> np.ndarray:
        """Closed-form CDF of the jump size for the built-in kernels."""
        e = np.asarray(e, dtype=float)
        lo, hi = self.support
        if self.singularity == "inverse_sqrt_at_zero":
            d = hi
            s = np.sqrt(np.clip(np.abs(e), 0.0, d) / d)
            return np.clip(0.5 + 0.5 * np.sign(e) * s, 0.0, 1.0)
        return np.clip((e - lo) / (hi - lo), 0.0, 1.0)

    def sample_jumps(self, uniforms: np.ndarray) -> np.ndarray:
        """Inverse-CDF transform of U(0,1) draws into jump sizes."""
        u = np.asarray(uniforms, dtype=float)
        lo, hi = self.support
        if self.singularity == "inverse_sqrt_at_zero":
            # |e| = delta * V^2 with a fair sign; V = |2U - 1| is again uniform
            v = 2.0 * u - 1.0
            return np.sign(v) * hi * v * v
        return lo + (hi - lo) * u


def build_symmetric_constant(delta: float) -> KernelSpec:
    """gamma = 1/delta^3 on [-delta, delta]."""
    d = _positive("delta", delta)
    lo, hi = -d, d
    return KernelSpec(
        gamma=lambda e: _indicator(lo, hi, np.asarray(e, dtype=float)) / d**3,
        support=(lo, hi),
        lam=2.0 / d**2,
        rho=lambda e: _indicator(lo, hi, np.asarray(e, dtype=float)) / (2.0 * d),
        drift_b=0.0,
        symmetry="symmetric",
        singularity="none",
        name="symmetric_constant",
        delta=d,
    )


def build_singular_sqrt(delta: float) -> KernelSpec:
    """gamma = 1 / (delta^2 sqrt(delta |e|)) on [-delta, delta]."""
    d = _positive("delta", delta)
    lo, hi = -d, d

    def gamma(e):
        e = np.asarray(e, dtype=float)
        with np.errstate(divide="ignore"):
            return _indicator(lo, hi, e) / (d**2 * np.sqrt(d * np.abs(e)))

    def rho(e):
        e = np.asarray(e, dtype=float)
        with np.errstate(divide="ignore"):
            return _indicator(lo, hi, e) / (4.0 * np.sqrt(d * np.abs(e)))

    return KernelSpec(
        gamma=gamma,
        support=(lo, hi),
        lam=4.0 / d**2,
        rho=rho,
        drift_b=0.0,
        symmetry="symmetric",
        singularity="inverse_sqrt_at_zero",
        name="singular_sqrt",
        delta=d,
    )


def build_nonsymmetric_constant(delta: float) -> KernelSpec:
    """gamma = 1 on [-delta, 2 delta]."""
    d = _positive("delta", delta)
    lo, hi = -d, 2.0 * d
    return KernelSpec(
        gamma=lambda e: _indicator(lo, hi, np.asarray(e, dtype=float)),
        support=(lo, hi),
        lam=3.0 * d,
        rho=lambda e: _indicator(lo, hi, np.asarray(e, dtype=float)) / (3.0 * d),
        drift_b=1.5 * d**2,
        symmetry="nonsymmetric",
        singularity="none",
        name="nonsymmetric_constant",
        delta=d,
    )


def kernel_from_gamma(
    gamma: ArrayFn,
    support: tuple[float, float],
    *,
    singularity: str = "none",
    symmetry: Optional[str] = None,
    Q: int = 64,
    name: str = "custom",
) -> KernelSpec:
    """Build a kernel from a user-supplied density by numerical integration."""
    from .quadrature import gauss_jacobi_sqrt, gauss_legendre

    lo, hi = float(support[0]), float(support[1])
    if singularity == "inverse_sqrt_at_zero":
        parts = []
        if lo < 0:
            x, w = gauss_jacobi_sqrt(Q, (0.0, -lo))
            parts.append((-x, w * np.sqrt(x)))
        if hi > 0:
            x, w = gauss_jacobi_sqrt(Q, (0.0, hi))
            parts.append((x, w * np.sqrt(x)))
        e = np.concatenate([p[0] for p in parts])
        w = np.concatenate([p[1] for p in parts])
    else:
        e, w = gauss_legendre(Q, (lo, hi))
    g = np.asarray(gamma(e), dtype=float)
    if np.any(g < 0):
        raise InvalidParameterError("kernel must be nonnegative")
    lam = math.fsum(w * g)
    drift = math.fsum(w * g * e)
    if symmetry is None:
        symmetry = "symmetric" if np.allclose(gamma(e), gamma(-e)) and lo == -hi else "nonsymmetric"
    if symmetry == "symmetric":
        drift = 0.0
    return KernelSpec(
        gamma=gamma,
        support=(lo, hi),
        lam=lam,
        rho=lambda x: np.asarray(gamma(x), dtype=float) / lam,
        drift_b=drift,
        symmetry=symmetry,
        singularity=singularity,
        name=name,
    )


@dataclass(frozen=True)
class Problem:
    """Nonlocal Cauchy problem expressed in backward (BSDE) time.

    ``forcing(t, x, y)`` is f(t, x, y) = g(T - t, x, y); ``terminal`` is the
    initial condition u_0 of the forward problem; ``exact_solution(t, x)``,
    when present, is u(t, x) of the forward problem. ``lipschitz_L = 0``
    declares a forcing that does not depend on y.
    """

    kernel: KernelSpec
    forcing: ArrayFn
    terminal: ArrayFn
    horizon_T: float
    lipschitz_L: float
    exact_solution: Optional[ArrayFn] = None
    name: str = "custom"
    discontinuities: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        _positive("horizon_T", self.horizon_T)
        if not (self.lipschitz_L >= 0.0 and math.isfinite(self.lipschitz_L)):
            raise InvalidParameterError(f"lipschitz_L must be nonnegative, got {self.lipschitz_L!r}")

    @property
    def y_independent(self) -> bool:
        return self.lipschitz_L == 0.0

    def exact_at_bsde_time(self, t: float, x: np.ndarray) -> np.ndarray:
        """u(T - t, x): the value Y_t would take at position x."""
        if self.exact_solution is None:
            raise InvalidParameterError(f"problem {self.name!r} has no exact solution")
        return self.exact_solution(self.horizon_T - t, x)

    def source_along_exact(self) -> ArrayFn:
        """Forcing f(t, x) with y already eliminated.

        For y-independent problems this is the forcing itself; otherwise the
        exact solution is substituted for y.
        """
        T = self.horizon_T
        if self.y_independent:
            return lambda t, x: self.forcing(t, x, 0.0)
        if self.exact_solution is None:
            raise InvalidParameterError("y-dependent forcing needs an exact solution to eliminate y")
        return lambda t, x: self.forcing(t, x, self.exact_solution(T - t, x))


def _ex1(delta: float, T: float) -> Problem:
    kernel = build_symmetric_constant(delta)

    def exact(t, x):
        x = np.asarray(x, dtype=float)
        return (-(x**3) + x**2) * np.exp(-np.asarray(t, dtype=float) / 10.0)

    # g(t, x, u) = -u/10 + (2x - 2/3) exp(-t/10), linear in u with slope -1/10
    def forcing(t, x, y):
        x = np.asarray(x, dtype=float)
        s = T - np.asarray(t, dtype=float)
        return -np.asarray(y, dtype=float) / 10.0 + (2.0 * x - 2.0 / 3.0) * np.exp(-s / 10.0)

    return Problem(
        kernel=kernel,
        forcing=forcing,
        terminal=lambda x: exact(0.0, x),
        horizon_T=T,
        lipschitz_L=0.1,
        exact_solution=exact,
        name="ex1",
    )


def _ex2(delta: float, T: float) -> Problem:
    kernel = build_singular_sqrt(delta)

    def exact(t, x):
        return (np.asarray(x, dtype=float) + np.asarray(t, dtype=float)) ** 2

    def forcing(t, x, y):
        s = T - np.asarray(t, dtype=float)
        return 2.0 * (np.asarray(x, dtype=float) + s) - 0.8 + 0.0 * np.asarray(y, dtype=float)

    return Problem(
        kernel=kernel,
        forcing=forcing,
        terminal=lambda x: exact(0.0, x),
        horizon_T=T,
        lipschitz_L=0.0,
        exact_solution=exact,
        name="ex2",
    )


def ex3_source(t, x, delta: float) -> np.ndarray:
    """Four-branch forcing g(t, x) of the discontinuous benchmark (forward time).

    Branches are half-open, [lower, upper), matching the inequality signs of
    the printed formula.
    """
    d = delta
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    st, ct = np.sin(t), np.cos(t)
    p = (x + 2.0 * d)
    m = (x - d)
    b1 = st * (-(p**2) / 2.0 + m**2 / 2.0 + 3.0 * d * x) + x * ct
    b2 = st * (-1.0 / 12.0 - p**3 / 3.0 + m**2 / 2.0 + 3.0 * d * x) + x * ct
    b3 = st * (-1.0 / 12.0 - p**3 / 3.0 + m**2 / 2.0 + 3.0 * d * x**2) + x**2 * ct
    b4 = st * (-(p**3) / 3.0 + m**3 / 3.0 + 3.0 * d * x**2) + x**2 * ct
    return np.where(
        x < 0.5 - 2.0 * d,
        b1,
        np.where(x < 0.5, b2, np.where(x < 0.5 + d, b3, b4)),
    )


def _ex3(delta: float, T: float) -> Problem:
    kernel = build_nonsymmetric_constant(delta)

    def exact(t, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0.5, x, x**2) * np.sin(np.asarray(t, dtype=float))

    def forcing(t, x, y):
        return ex3_source(T - np.asarray(t, dtype=float), x, delta) + 0.0 * np.asarray(y, dtype=float)

    return Problem(
        kernel=kernel,
        forcing=forcing,
        terminal=lambda x: exact(0.0, x),
        horizon_T=T,
        lipschitz_L=0.0,
        exact_solution=exact,
        name="ex3",
        discontinuities=(0.5,),
    )


_BUILDERS = {"ex1": _ex1, "ex2": _ex2, "ex3": _ex3}

DEFAULT_HORIZON = {"ex1": 1.0, "ex2": 0.25, "ex3": 0.5}


def benchmark_problem(id: str, delta: float = 1.0, T: Optional[float] = None) -> Problem:
    """One of the three manufactured benchmarks, addressable as ex1/ex2/ex3."""
    if id not in _BUILDERS:
        raise InvalidParameterError(f"unknown benchmark {id!r}; expected one of {BENCHMARKS}")
    if T is None:
        T = DEFAULT_HORIZON[id]
    return _BUILDERS[id](_positive("delta", delta), _positive("T", T))

"""One-dimensional quadrature rules and density-weighted jump rules.

Gauss nodes are found by Newton iteration on the three-term recurrence of the
Jacobi polynomials (Legendre is the case alpha = beta = 0), so no external
root finder is involved and repeated calls are bitwise reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import InvalidParameterError

if TYPE_CHECKING:
    from .kernels import KernelSpec

FAMILIES = ("gauss_legendre", "gauss_jacobi_sqrt", "trapezoid")

_NEWTON_TOL = 1e-15
_NEWTON_MAX_ITER = 100


def _jacobi_and_derivative(n: int, alpha: float, beta: float, x: float) -> tuple[float, float]:
    """Value and derivative of P_n^{(alpha, beta)} at ``x``."""
    return _jacobi(n, alpha, beta, x), 0.5 * (n + alpha + beta + 1.0) * _jacobi(
        n - 1, alpha + 1.0, beta + 1.0, x
    )


def _jacobi(n: int, a: float, b: float, x: float) -> float:
    if n < 0:
        return 0.0
    p_prev = 1.0
    if n == 0:
        return p_prev
    p = 0.5 * (a - b) + 0.5 * (a + b + 2.0) * x
    for k in range(2, n + 1):
        c = 2.0 * k + a + b
        a1 = 2.0 * k * (k + a + b) * (c - 2.0)
        a2 = (c - 1.0) * (a * a - b * b)
        a3 = (c - 2.0) * (c - 1.0) * c
        a4 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * c
        p_prev, p = p, ((a2 + a3 * x) * p - a4 * p_prev) / a1
    return p


def _gauss_jacobi_reference(n: int, alpha: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Jacobi rule on [-1, 1] for the weight (1-t)^alpha (1+t)^beta."""
    roots: list[float] = []
    for k in range(n):
        # Chebyshev-angle guess, pulled toward the previous root
        r = -math.cos((2.0 * k + 1.0) * math.pi / (2.0 * n))
        if k > 0:
            r = 0.5 * (r + roots[k - 1])
        for _ in range(_NEWTON_MAX_ITER):
            f, fp = _jacobi_and_derivative(n, alpha, beta, r)
            deflation = sum(1.0 / (r - q) for q in roots)
            step = f / (fp - f * deflation)
            r -= step
            if abs(step) <= _NEWTON_TOL:
                break
        roots.append(r)
    x = np.array(sorted(roots))
    log_c = (
        (alpha + beta + 1.0) * math.log(2.0)
        + math.lgamma(n + alpha + 1.0)
        + math.lgamma(n + beta + 1.0)
        - math.lgamma(n + alpha + beta + 1.0)
        - math.lgamma(n + 1.0)
    )
    c = math.exp(log_c)
    w = np.array(
        [c / ((1.0 - t * t) * _jacobi_and_derivative(n, alpha, beta, t)[1] ** 2) for t in x]
    )
    return x, w


def _check_count(Q: int) -> None:
    if not isinstance(Q, (int, np.integer)) or Q < 1:
        raise InvalidParameterError(f"quadrature node count must be a positive integer, got {Q!r}")


def gauss_legendre(Q: int, interval: tuple[float, float] = (-1.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """Q-point Gauss-Legendre rule on ``interval``.

    Exact for polynomials of degree at most 2Q-1; the weights sum to b - a.
    """
    _check_count(Q)
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise InvalidParameterError(f"degenerate interval [{a}, {b}]")
    t, w = _gauss_jacobi_reference(int(Q), 0.0, 0.0)
    half = 0.5 * (b - a)
    return a + half * (t + 1.0), half * w


def gauss_jacobi_sqrt(Q: int, interval: tuple[float, float] = (0.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """Q-point rule for the weight x^{-1/2} on [0, b].

    ``sum(w * psi(x))`` approximates the integral of psi(x) / sqrt(x) over
    [0, b]; exact for polynomial psi of degree at most 2Q-1.
    """
    _check_count(Q)
    a, b = float(interval[0]), float(interval[1])
    if a != 0.0 or not b > 0.0:
        raise InvalidParameterError(f"interval must be [0, b] with b > 0, got [{a}, {b}]")
    t, w = _gauss_jacobi_reference(int(Q), 0.0, -0.5)
    # x = b (1 + t) / 2 and x^{-1/2} dx = sqrt(b / 2) (1 + t)^{-1/2} dt
    return 0.5 * b * (t + 1.0), math.sqrt(0.5 * b) * w


def composite_trapezoid(nodes: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Composite trapezoid weights on an arbitrary increasing node set."""
    x = np.asarray(nodes, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise InvalidParameterError("composite trapezoid needs at least two nodes")
    h = np.diff(x)
    if np.any(h <= 0):
        raise InvalidParameterError("trapezoid nodes must be strictly increasing")
    w = np.zeros_like(x)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return x.copy(), w


def lattice_nodes(support: tuple[float, float], spacing: float, origin: float = 0.0) -> np.ndarray:
    """Support endpoints plus every point ``origin + k * spacing`` strictly inside.

    Used for the trapezoid family so that jump displacements line up with a
    uniform spatial grid of the same spacing.
    """
    lo, hi = float(support[0]), float(support[1])
    if not spacing > 0:
        raise InvalidParameterError(f"lattice spacing must be positive, got {spacing}")
    k_lo = math.ceil((lo - origin) / spacing)
    k_hi = math.floor((hi - origin) / spacing)
    inner = origin + spacing * np.arange(k_lo, k_hi + 1, dtype=float)
    snap = 1e-12 * max(1.0, abs(lo), abs(hi))
    inner = inner[(inner > lo + snap) & (inner < hi - snap)]
    return np.concatenate(([lo], inner, [hi]))


@dataclass(frozen=True)
class WeightedQuadrature:
    """Nodes and probability weights approximating integrals against rho.

    ``sum(weights * psi(nodes))`` approximates the integral of psi(e) rho(e)
    over the kernel support.
    """

    nodes: np.ndarray
    weights: np.ndarray
    family: str

    def __post_init__(self) -> None:
        nodes = np.array(self.nodes, dtype=float)
        weights = np.array(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1 or nodes.size == 0:
            raise InvalidParameterError("nodes and weights must be equal-length 1D arrays")
        if np.any(np.diff(nodes) <= 0):
            raise InvalidParameterError("quadrature nodes must be strictly increasing")
        if np.any(weights < 0):
            raise InvalidParameterError("quadrature weights must be nonnegative")
        if self.family not in FAMILIES:
            raise InvalidParameterError(f"unknown quadrature family {self.family!r}")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def Q(self) -> int:
        return int(self.nodes.size)

    @property
    def mass(self) -> float:
        return math.fsum(self.weights)

    def integrate(self, psi) -> float:
        return math.fsum(self.weights * np.asarray(psi(self.nodes), dtype=float))


def density_weighted(
    kernel: "KernelSpec",
    Q: int,
    family: str | None = None,
    spacing: float | None = None,
) -> WeightedQuadrature:
    """Quadrature for integrals against the jump density of ``kernel``.

    Parameters
    ----------
    kernel : KernelSpec
    Q : int
        Points per Gauss rule. The inverse-sqrt kernel gets one rule on each
        side of the singularity, so 2Q nodes in total. Ignored for trapezoid.
    family : str, optional
        Defaults to ``gauss_jacobi_sqrt`` for the singular kernel and
        ``gauss_legendre`` otherwise.
    spacing : float, optional
        Lattice spacing for the trapezoid family (normally the grid dx).
    """
    _check_count(Q)
    if family is None:
        family = "gauss_jacobi_sqrt" if kernel.singularity == "inverse_sqrt_at_zero" else "gauss_legendre"
    lo, hi = kernel.support

    if family == "gauss_jacobi_sqrt":
        if not lo < 0.0 < hi and not (lo == 0.0 or hi == 0.0):
            raise InvalidParameterError("Gauss-Jacobi rule needs the singularity at a support endpoint or at 0")
        pieces_x, pieces_w = [], []
        if lo < 0.0:
            x, w = gauss_jacobi_sqrt(Q, (0.0, -lo))
            pieces_x.append(-x[::-1])
            pieces_w.append(w[::-1])
        if hi > 0.0:
            x, w = gauss_jacobi_sqrt(Q, (0.0, hi))
            pieces_x.append(x)
            pieces_w.append(w)
        e = np.concatenate(pieces_x)
        # fold the smooth part rho(e) * sqrt(|e|) into the weights
        w = np.concatenate(pieces_w) * np.asarray(kernel.rho(e), dtype=float) * np.sqrt(np.abs(e))
        return WeightedQuadrature(e, w, family)

    if family == "gauss_legendre":
        if kernel.singularity != "none":
            raise InvalidParameterError("Gauss-Legendre cannot be used on a singular density")
        e, w = gauss_legendre(Q, (lo, hi))
        return WeightedQuadrature(e, w * np.asarray(kernel.rho(e), dtype=float), family)

    if family == "trapezoid":
        if kernel.singularity != "none":
            raise InvalidParameterError("trapezoid rule cannot be used on a singular density")
        if spacing is None:
            spacing = (hi - lo) / max(Q - 1, 1)
        e, w = composite_trapezoid(lattice_nodes((lo, hi), spacing))
        return WeightedQuadrature(e, w * np.asarray(kernel.rho(e), dtype=float), family)

    raise InvalidParameterError(f"unknown quadrature family {family!r}")

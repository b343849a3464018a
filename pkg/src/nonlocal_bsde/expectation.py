"""Truncated compound-Poisson conditional expectation.

For a step of length dt the number of jumps is Poisson(lam * dt). Keeping
the outcomes with at most M jumps and replacing each m-fold jump integral
by the m-fold tensor product of a density-weighted rule gives

    E[v(x + S)] ~ sum_{m=0}^{M} pi_m sum_{q_1..q_m} w_{q_1}..w_{q_m} v(x + a_{q_1} + .. + a_{q_m})

with pi_m = exp(-lam dt) (lam dt)^m / m!.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import ConfigurationError, InvalidParameterError, NumericalFailureError
from .grid import ExteriorPolicy, SolutionField, StencilPlan
from .quadrature import WeightedQuadrature

MAX_TUPLES = 10_000_000


def poisson_weights(lambda_dt: float, M: int) -> np.ndarray:
    if not (lambda_dt >= 0 and math.isfinite(lambda_dt)):
        raise InvalidParameterError(f"lambda*dt must be nonnegative, got {lambda_dt}")
    if M < 0:
        raise InvalidParameterError(f"jump count must be nonnegative, got {M}")
    base = math.exp(-lambda_dt)
    return np.array([base * lambda_dt**m / math.factorial(m) for m in range(M + 1)])


def _tensor_law(rule: WeightedQuadrature, m: int) -> tuple[np.ndarray, np.ndarray]:
    """All Q^m tuples in lexicographic order, displacement summed left to right."""
    if rule.Q**m > MAX_TUPLES:
        raise ConfigurationError(
            f"{rule.Q}^{m} = {rule.Q**m} quadrature tuples per node exceeds the cap of {MAX_TUPLES}; "
            "lower Q or M, or enable collapse"
        )
    disp = np.zeros(1)
    weight = np.ones(1)
    for _ in range(m):
        disp = (disp[:, None] + rule.nodes[None, :]).ravel()
        weight = (weight[:, None] * rule.weights[None, :]).ravel()
    return disp, weight


def _lattice_law(rule: WeightedQuadrature, m: int, quantum: float, max_cosets: int = 4):
    """m-fold convolution for nodes lying on a few shifted copies of a lattice.

    Trapezoid rules are a uniform lattice plus the two support endpoints,
    so each coset is convolved as a dense weight array instead of forming
    the Q^m tensor. Returns None when the nodes do not fit that shape.
    """
    nodes, weights = rule.nodes, rule.weights
    if nodes.size < 3:
        return None
    step = float(np.median(np.diff(nodes)))
    index = np.floor(nodes / step + 0.5).astype(np.int64)
    shift = nodes - index * step
    labels, member = np.unique(np.round(shift / quantum).astype(np.int64), return_inverse=True)
    if labels.size > max_cosets:
        return None
    base = {}
    for g, label in enumerate(labels):
        sel = member.ravel() == g
        lo = int(index[sel].min())
        if int(index[sel].max()) - lo > 64 * nodes.size:
            return None
        dense = np.zeros(int(index[sel].max()) - lo + 1)
        np.add.at(dense, index[sel] - lo, weights[sel])
        base[int(label)] = (lo, dense, float(shift[sel][0]))

    law = base
    for _ in range(m - 1):
        nxt: dict[int, tuple[int, np.ndarray, float]] = {}
        for la, (lo_a, da, sa) in law.items():
            for lb, (lo_b, db, sb) in base.items():
                lo, dense = lo_a + lo_b, np.convolve(da, db)
                if la + lb in nxt:
                    lo0, d0, _ = nxt[la + lb]
                    start, stop = min(lo0, lo), max(lo0 + d0.size, lo + dense.size)
                    merged = np.zeros(stop - start)
                    merged[lo0 - start : lo0 - start + d0.size] += d0
                    merged[lo - start : lo - start + dense.size] += dense
                    lo, dense = start, merged
                nxt[la + lb] = (lo, dense, sa + sb)
        law = nxt

    disp, wts = [], []
    for lo, dense, offset in law.values():
        k = np.flatnonzero(dense)
        disp.append((lo + k) * step + offset)
        wts.append(dense[k])
    disp = np.concatenate(disp)
    wts = np.concatenate(wts)
    keys = np.round(disp / quantum).astype(np.int64)
    uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    return disp[first], np.bincount(inverse.ravel(), weights=wts, minlength=uniq.size)


def _collapsed_law(rule: WeightedQuadrature, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Distinct displacement sums with merged weights.

    Convolves the one-jump law with itself, merging sums that coincide up to
    rounding. Exact reordering of the tensor sum, so only roundoff differs
    from the reference path; lattice-aligned rules shrink from Q^m to O(mQ)
    points.
    """
    span = max(abs(rule.nodes[0]), abs(rule.nodes[-1]), 1e-300)
    quantum = 1e-11 * span
    lattice = _lattice_law(rule, m, quantum)
    if lattice is not None:
        return lattice
    disp = np.zeros(1)
    weight = np.ones(1)
    for _ in range(m):
        d = (disp[:, None] + rule.nodes[None, :]).ravel()
        w = (weight[:, None] * rule.weights[None, :]).ravel()
        keys = np.round(d / quantum).astype(np.int64)
        uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        disp = d[first]
        weight = np.bincount(inverse.ravel(), weights=w, minlength=uniq.size)
    return disp, weight


@dataclass(frozen=True)
class ExpectationOperator:
    """Truncated expectation over at most ``M`` jumps in one time step."""

    rule: WeightedQuadrature
    lambda_dt: float
    M: int
    collapse: bool = False
    poisson: np.ndarray = field(init=False, repr=False)
    laws: tuple = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "poisson", poisson_weights(self.lambda_dt, int(self.M)))
        build = _collapsed_law if self.collapse else _tensor_law
        laws = tuple(build(self.rule, m) for m in range(1, int(self.M) + 1))
        object.__setattr__(self, "laws", laws)

    @property
    def poisson_weights(self) -> np.ndarray:
        return self.poisson

    @property
    def points_per_node(self) -> int:
        return 1 + sum(d.size for d, _ in self.laws)

    def displacements(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened displacements and effective weights (pi_m folded in), m ascending."""
        disp = [np.zeros(1)] + [d for d, _ in self.laws]
        wts = [np.array([self.poisson[0]])] + [self.poisson[m + 1] * w for m, (_, w) in enumerate(self.laws)]
        return np.concatenate(disp), np.concatenate(wts)

    def combine(self, values_by_m: list[np.ndarray]) -> np.ndarray:
        """Sum pi_m * (jump-law average) over m with Kahan compensation.

        ``values_by_m[m]`` has shape (n_nodes, K_m) holding the integrand at
        the displacements of ``laws[m-1]`` (m = 0 is the no-jump column).
        """
        total = self.poisson[0] * values_by_m[0][:, 0]
        comp = np.zeros_like(total)
        with np.errstate(invalid="ignore", over="ignore"):
            for m, (_, w) in enumerate(self.laws, start=1):
                term = self.poisson[m] * np.sum(values_by_m[m] * w[None, :], axis=1)
                y = term - comp
                t = total + y
                comp = (t - total) - y
                total = t
        if not np.all(np.isfinite(total)):
            raise NumericalFailureError("non-finite value in truncated expectation")
        return total


Field = Union[SolutionField, Callable[[np.ndarray], np.ndarray]]


def apply(op: ExpectationOperator, field: Field, x0):
    """Truncated expectation of ``field`` started from ``x0`` (scalar or array)."""
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    if not np.all(np.isfinite(x)):
        raise InvalidParameterError("starting points must be finite")
    cols = [np.asarray(field(x), dtype=float).reshape(x.size, 1)]
    for disp, _ in op.laws:
        pts = x[:, None] + disp[None, :]
        cols.append(np.asarray(field(pts), dtype=float).reshape(pts.shape))
    out = op.combine(cols)
    return float(out[0]) if np.ndim(x0) == 0 else out


def truncated_mass(op: ExpectationOperator) -> float:
    return math.fsum(op.poisson)


class NodalExpectation:
    """Expectation at a fixed node set against fields on a fixed grid.

    Interpolation stencils for every (node, displacement) pair are built once;
    each evaluation is then a gather and weighted row sums.
    """

    def __init__(self, op: ExpectationOperator, nodes: np.ndarray, grid, p: int):
        self.op = op
        self.nodes = np.asarray(nodes, dtype=float)
        self.plans = [StencilPlan(grid, self.nodes[:, None], p)]
        self.points = [self.nodes[:, None]]
        for disp, _ in op.laws:
            pts = self.nodes[:, None] + disp[None, :]
            self.points.append(pts)
            self.plans.append(StencilPlan(grid, pts, p))

    def field_values(self, values: np.ndarray, exterior: ExteriorPolicy, time: float) -> list[np.ndarray]:
        return [plan.evaluate(values, exterior, time) for plan in self.plans]

    def expect(self, columns: list[np.ndarray]) -> np.ndarray:
        return self.op.combine(columns)

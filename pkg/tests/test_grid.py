import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonlocal_bsde import (
    AdaptiveGrid,
    ExteriorPolicy,
    InvalidParameterError,
    NumericalFailureError,
    SolutionField,
    UniformGrid,
    interpolate,
    nearest_stencil,
    refine,
)
from nonlocal_bsde.grid import PointSet


def _field(grid, f, p, **kw):
    return SolutionField(grid, f(grid.points), p, **kw)


# -- uniform grids and stencils -------------------------------------------------

def test_uniform_grid_from_spacing():
    g = UniformGrid.from_spacing(0.0, 1.0, 0.125)
    assert g.count == 9 and g.dx == 0.125
    assert g.points[-1] == 1.0
    with pytest.raises(InvalidParameterError):
        UniformGrid.from_spacing(0.0, 1.0, 0.3)
    with pytest.raises(InvalidParameterError):
        UniformGrid(1.0, 0.0, 5)
    with pytest.raises(InvalidParameterError):
        UniformGrid(0.0, 1.0, 1)


def test_nearest_stencil_examples():
    g = UniformGrid(0.0, 1.0, 9)
    np.testing.assert_array_equal(g.points[nearest_stencil(g, 0.51, 3)], [0.375, 0.5, 0.625, 0.75])
    np.testing.assert_array_equal(nearest_stencil(g, 0.0, 3), [0, 1, 2, 3])
    np.testing.assert_array_equal(nearest_stencil(g, 1.0, 3), [5, 6, 7, 8])
    assert 4 in nearest_stencil(g, 0.5, 1)


def test_nearest_stencil_against_window_enumeration():
    # brute force: every contiguous window that brackets x, minimise the max distance
    g = UniformGrid(0.0, 1.0, 9)
    pts = g.points
    for p in (1, 2, 3):
        for x in np.linspace(0.0, 1.0, 97):
            best, cost = None, np.inf
            for s in range(pts.size - p):
                w = pts[s : s + p + 1]
                if w[0] <= x <= w[-1] or (s == 0 and x < w[0]) or (s == pts.size - p - 1 and x > w[-1]):
                    c = max(abs(x - w[0]), abs(w[-1] - x))
                    if c < cost - 1e-15:
                        best, cost = s, c
            got = nearest_stencil(g, x, p)
            assert max(abs(x - pts[got[0]]), abs(pts[got[-1]] - x)) <= cost + 1e-15


@settings(max_examples=50, deadline=None)
@given(
    x=st.lists(st.floats(min_value=-0.5, max_value=1.5), min_size=1, max_size=30),
    p=st.integers(min_value=1, max_value=3),
    n=st.integers(min_value=4, max_value=40),
)
def test_nearest_stencil_is_contiguous_and_in_bounds(x, p, n):
    g = UniformGrid(0.0, 1.0, n)
    idx = nearest_stencil(g, np.array(x), p)
    assert idx.shape == (len(x), p + 1)
    assert np.all(np.diff(idx, axis=1) == 1)
    assert idx.min() >= 0 and idx.max() < n


def test_stencil_larger_than_grid_is_rejected():
    with pytest.raises(InvalidParameterError):
        nearest_stencil(UniformGrid(0.0, 1.0, 3), 0.5, 3)


# -- interpolation --------------------------------------------------------------

def test_cubic_reproduced_exactly():
    g = UniformGrid(-1.0, 2.0, 13)
    f = _field(g, lambda x: x**3, 3)
    assert abs(interpolate(f, 0.377) - 0.377**3) < 1e-13


def test_linear_interpolation_error_of_x_squared():
    g = UniformGrid(0.0, 1.0, 9)
    f = _field(g, lambda x: x**2, 1)
    probes = np.linspace(0.0, 1.0, 8001)
    # the bound h^2/8 * max|f''| with f'' = 2, attained at every cell midpoint
    assert np.max(np.abs(f(probes) - probes**2)) == pytest.approx(0.125**2 / 4, rel=1e-12)


def test_nodes_are_reproduced_exactly():
    g = UniformGrid(0.0, 1.0, 17)
    vals = np.random.default_rng(0).normal(size=17)
    for p in (1, 2, 3):
        f = SolutionField(g, vals, p)
        np.testing.assert_array_equal(f(g.points), vals)


@settings(max_examples=40, deadline=None)
@given(
    p=st.integers(min_value=1, max_value=3),
    coeffs=st.lists(st.floats(min_value=-10, max_value=10), min_size=4, max_size=4),
    n=st.integers(min_value=5, max_value=30),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_degree_p_polynomials_are_reproduced(p, coeffs, n, seed):
    c = np.array(coeffs[: p + 1])
    poly = lambda x: np.polynomial.polynomial.polyval(x, c)  # noqa: E731
    g = UniformGrid(-0.3, 1.7, n)
    probes = np.random.default_rng(seed).uniform(-0.3, 1.7, 100)
    f = _field(g, poly, p)
    scale = max(1.0, np.max(np.abs(poly(probes))))
    assert np.max(np.abs(f(probes) - poly(probes))) <= 1e-12 * scale


def test_linear_interpolant_is_continuous_at_knots():
    g = UniformGrid(0.0, 1.0, 33)
    f = _field(g, np.sin, 1)
    knots = g.points[1:-1]
    left, right = f(np.nextafter(knots, -np.inf)), f(np.nextafter(knots, np.inf))
    assert np.max(np.abs(left - right)) <= 1e-12


def test_exterior_policies():
    g = UniformGrid(0.0, 1.0, 5)
    vals = g.points**2
    clamp = SolutionField(g, vals, 1, ExteriorPolicy("clamp_to_boundary"))
    assert clamp(1.5) == 1.0 and clamp(-0.5) == 0.0
    lin = SolutionField(g, vals, 1, ExteriorPolicy("linear_extrapolation"))
    assert lin(1.5) == pytest.approx(1.0 + 1.75 * 0.5)
    exact = SolutionField(g, vals, 1, ExteriorPolicy("exact_extension", lambda t, x: x**2 + t), time=0.25)
    assert exact(2.0) == pytest.approx(4.25)
    np.testing.assert_allclose(exact(np.array([0.5, 3.0])), [0.25, 9.25])


def test_exterior_policy_validation():
    with pytest.raises(InvalidParameterError):
        ExteriorPolicy("reflect")
    with pytest.raises(InvalidParameterError):
        ExteriorPolicy("exact_extension")


def test_field_validation():
    g = UniformGrid(0.0, 1.0, 5)
    with pytest.raises(InvalidParameterError):
        SolutionField(g, np.zeros(4))
    with pytest.raises(InvalidParameterError):
        SolutionField(g, np.zeros(5), 4)
    with pytest.raises(NumericalFailureError):
        SolutionField(g, np.array([0, 1, np.nan, 0, 0]))
    f = SolutionField(g, np.zeros(5))
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_point_set_fields():
    pts = np.array([0.0, 0.1, 0.15, 0.6, 1.0])
    f = SolutionField(PointSet(pts), 2 * pts + 1, 1)
    np.testing.assert_allclose(f(np.array([0.05, 0.3, 0.8])), [1.1, 1.6, 2.6])
    with pytest.raises(InvalidParameterError):
        PointSet(np.array([0.0, 0.5, 0.5]))
    with pytest.raises(InvalidParameterError):
        PointSet(np.array([0.0]))


# -- adaptive hierarchy ----------------------------------------------------------

def _adaptive(sampler, tol=0.01, max_level=10, base_level=2):
    return refine(AdaptiveGrid(0.0, 1.0, tol, max_level, base_level), sampler)


def _step(x):
    return np.where(np.asarray(x) < 0.5, 0.0, 1.0)


def test_linear_sampler_is_not_refined():
    g = _adaptive(lambda x: 3.0 * x - 1.0)
    assert g.count == 5
    assert max(g.levels.values()) == 2


def test_step_refinement_concentrates_at_the_jump():
    g = _adaptive(_step, tol=0.01, max_level=10)
    added = [(g._coord(k), l) for k, l in g.levels.items() if l > g.base_level]
    near = [x for x, l in added if abs(x - 0.5) <= 2.0 ** -(l - 2)]
    assert added and len(near) >= 0.8 * len(added)
    assert g.min_spacing == pytest.approx(2.0**-10)


def test_surpluses_reconstruct_nodal_values():
    g = _adaptive(lambda x: np.sin(6 * x), tol=1e-3)
    for k, l in g.levels.items():
        if l >= 1:
            h = g._scale >> l
            assert g.surpluses[k] == pytest.approx(g.values[k] - 0.5 * (g.values[k - h] + g.values[k + h]), abs=1e-15)


@pytest.mark.parametrize("tol", [1e-2, 1e-3, 1e-4])
def test_adaptive_interpolant_error_is_bounded_by_tolerance(tol):
    probes = np.linspace(0.0, 1.0, 20001)
    smooth = lambda x: np.exp(-20 * (np.asarray(x) - 0.3) ** 2)  # noqa: E731
    g = _adaptive(smooth, tol=tol, max_level=14)
    f = SolutionField(PointSet(g.points), g.nodal_values, 1)
    assert np.max(np.abs(f(probes) - smooth(probes))) <= 4 * tol
    # a jump cannot be resolved inside the finest cell that straddles it
    g = _adaptive(_step, tol=tol, max_level=14)
    f = SolutionField(PointSet(g.points), g.nodal_values, 1)
    pts = g.points
    cell = np.searchsorted(pts, 0.5)
    away = (probes <= pts[cell - 1]) | (probes >= pts[cell])
    assert pts[cell] - pts[cell - 1] == 2.0**-14
    assert np.max(np.abs(f(probes[away]) - _step(probes[away]))) <= 4 * tol


def test_refine_keeps_carried_points():
    first = _adaptive(_step, tol=0.01, max_level=8)
    second = refine(first.copy_empty(), lambda x: np.zeros_like(x), keep=first)
    assert set(first.levels) <= set(second.levels)
    with pytest.raises(InvalidParameterError):
        refine(AdaptiveGrid(0.0, 2.0, 0.01, 8, 2), np.sin, keep=first)


def test_adaptive_grid_validation():
    with pytest.raises(InvalidParameterError):
        AdaptiveGrid(0.0, 1.0, 0.0, 8)
    with pytest.raises(InvalidParameterError):
        AdaptiveGrid(0.0, 1.0, 0.1, 3, base_level=4)
    with pytest.raises(NumericalFailureError):
        _adaptive(lambda x: np.full_like(x, np.inf))

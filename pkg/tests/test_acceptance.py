"""Acceptance criteria: table regressions, the Monte Carlo cross-check and
the property suites.

Each test checks one criterion at its stated tolerance and prints a single
PASS/FAIL line; the lines are repeated in the terminal summary. Some
published magnitudes are not reproduced and those checks fail on purpose
(see the project notes for the analysis).
"""

import functools
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from nonlocal_bsde import SolverConfig, benchmark_problem, feynman_kac_estimates, run_sweep, solve
from nonlocal_bsde.tables import adaptive_study, table1, table2, table3, table4, table5

pytestmark = pytest.mark.acceptance

TESTS = Path(__file__).parent


@functools.lru_cache(maxsize=None)
def _run(table: str, **kw):
    """Run every row of a table once per session; returns ({name: result}, seconds)."""
    specs = {"1": table1, "2": table2, "3": table3, "4": table4, "5": table5, "adaptive": adaptive_study}[table](**kw)
    t0 = time.perf_counter()
    results = {s.name: run_sweep(s) for s in specs}
    return results, time.perf_counter() - t0


def _within(value, centre, band):
    return value is not None and abs(value - centre) <= band


def _fmt(values):
    return "[" + ", ".join(f"{v:.3e}" for v in values) + "]"


def test_criterion_1_theta_scheme_in_time(acceptance_report):
    res, secs = _run("1")
    cn = res["theta=0.5,M_y=2,M_f=1"]
    published = np.array(table1()[[s.name for s in table1()].index(cn.spec_name)].reference["Linf"])
    ratio = cn.errors("Linf") / published
    checks = [
        ("CN M2/1 CR", _within(cn.rate_Linf, 1.98, 0.15), f"{cn.rate_Linf:.3f} vs 1.98+-0.15"),
        (
            "CN M2/1 Linf within 3x of published",
            bool(np.all((ratio >= 1 / 3) & (ratio <= 3))),
            f"ours {_fmt(cn.errors('Linf'))}, ratio {np.round(ratio, 2).tolist()}",
        ),
    ]
    for theta in ("0", "1"):
        r = res[f"theta={theta},M_y=1,M_f=0"]
        checks.append((f"theta={theta} M_y=1 CR", _within(r.rate_Linf, 1.0, 0.15), f"{r.rate_Linf:.3f} vs 1.0+-0.15"))
    for theta in ("0", "1", "0.5"):
        e = res[f"theta={theta},M_y=0,M_f=0"].errors("Linf")[-1]
        checks.append((f"theta={theta} M=0 Linf at N=64", e >= 0.1, f"{e:.3f} >= 0.1"))
    checks.append(("runtime", secs <= 60, f"{secs:.1f}s <= 60s"))
    acceptance_report(1, "ex1 time convergence", checks)


_SPACE_LINES: dict[int, tuple] = {}


@pytest.mark.parametrize("N", [1024, 256], ids=["full", "reduced"])
def test_criterion_2_spatial_interpolation(N, acceptance_report):
    res, secs = _run("2", N=N)
    lin, quad = res["p=1"], res["p=2"]
    _SPACE_LINES[N] = (
        (f"N={N} p=1 Linf CR", _within(lin.rate_Linf, 2.0, 0.15), f"{lin.rate_Linf:.3f} vs 2.0+-0.15"),
        (f"N={N} p=2 L2 CR", _within(quad.rate_L2, 3.0, 0.2), f"{quad.rate_L2:.3f} vs 3.0+-0.2"),
        (f"N={N} runtime", secs <= 600, f"{secs:.1f}s <= 600s"),
    )
    # both modes share one criterion line
    checks = [c for key in (1024, 256) if key in _SPACE_LINES for c in _SPACE_LINES[key]]
    acceptance_report(2, "ex1 spatial convergence", checks)


def test_criterion_3_singular_kernel_in_time(acceptance_report):
    res, _ = _run("3")
    cn, impl = res["theta=0.5,M_y=3,M_f=2"], res["theta=1,M_y=1,M_f=0"]
    checks = [
        ("CN M3/2 CR", _within(cn.rate_Linf, 2.03, 0.15), f"{cn.rate_Linf:.3f} vs 2.03+-0.15"),
        ("implicit M_y=1 CR", _within(impl.rate_Linf, 0.95, 0.15), f"{impl.rate_Linf:.3f} vs 0.95+-0.15"),
    ]
    acceptance_report(3, "ex2 time convergence", checks)


def test_criterion_4_singular_kernel_in_space(acceptance_report):
    res, secs = _run("4")
    wide, narrow = res["delta=1"], res["delta=0.1"]
    checks = [
        ("delta=1 L2 CR", _within(wide.rate_L2, 2.05, 0.2), f"{wide.rate_L2:.3f} vs 2.05+-0.2"),
        (
            "delta=0.1 L2 CR",
            _within(narrow.rate_L2, 2.2, 0.25),
            f"{narrow.rate_L2:.3f} vs 2.2+-0.25, errors {_fmt(narrow.errors('L2'))}",
        ),
        ("runtime", secs <= 600, f"{secs:.1f}s"),
    ]
    acceptance_report(4, "ex2 spatial convergence", checks)


def test_criterion_5_discontinuous_solution(acceptance_report):
    uniform, _ = _run("5")
    adaptive, _ = _run("adaptive")
    checks = []
    for name, r in uniform.items():
        checks.append((f"uniform {name} L2 CR", _within(r.rate_L2, 0.52, 0.1), f"{r.rate_L2:.3f} vs 0.52+-0.1"))
        checks.append((f"uniform {name} Linf CR", r.rate_Linf <= 0.1, f"{r.rate_Linf:.3f} <= 0.1"))
    plain = adaptive["adaptive"]
    hits = [p for p in plain.points if p.n_points <= 40 and p.error_L2 <= 2e-3]
    best = min(plain.points, key=lambda p: p.error_L2)
    checks.append(
        (
            "adaptive L2 <= 2e-3 with <= 40 points",
            bool(hits),
            f"{hits[0].error_L2:.3e} at {hits[0].n_points} points" if hits else f"best {best.error_L2:.3e} at {best.n_points} points",
        )
    )
    excl = adaptive["adaptive,excluded"]
    checks.append(("adaptive excluded Linf CR", excl.rate_Linf >= 1.7, f"{excl.rate_Linf:.3f} >= 1.7"))
    acceptance_report(5, "ex3 uniform and adaptive grids", checks)


def test_ex3_finest_uniform_row_magnitude():
    # published last row: L2 7.045e-3, Linf 1.221e-1; the L2 value depends on
    # how densely the jump is sampled, hence the loose relative tolerance
    uniform, _ = _run("5")
    last = uniform["delta=1"].points[-1]
    assert last.step == 2.0**-7
    assert last.error_L2 == pytest.approx(7.045e-3, rel=0.3)
    assert last.error_Linf == pytest.approx(1.221e-1, rel=0.3)


_ORACLE_CASES = {
    "ex1": SolverConfig(N=64, M_y=3, M_f=2),
    "ex2": SolverConfig(N=64, M_y=3, M_f=2),
    # grid-aligned trapezoid lattice: Gauss rules would integrate across the jump
    "ex3": SolverConfig(N=64, M_y=3, M_f=2, p=1, N_x=129, quadrature_family="trapezoid", collapse=True),
}
_PROBES = [0.1, 0.3, 0.5, 0.7, 0.9]
_ORACLE_LINES: dict[str, tuple] = {}


@pytest.mark.parametrize("name", list(_ORACLE_CASES))
def test_criterion_6_monte_carlo_cross_check(name, acceptance_report):
    problem = benchmark_problem(name)
    t0 = time.perf_counter()
    u = solve(problem, _ORACLE_CASES[name]).field(np.array(_PROBES))
    est = feynman_kac_estimates(problem, _PROBES, 1_000_000, seed=20240101)
    secs = time.perf_counter() - t0
    z = [(e.mean - v) / e.std_error for e, v in zip(est, u)]
    se = max(e.std_error for e in est)
    _ORACLE_LINES[name] = (
        (f"{name} agreement", all(e.agrees_with(float(v), 3.0) for e, v in zip(est, u)), f"z={np.round(z, 2).tolist()}"),
        (f"{name} std error", se <= 5e-3, f"max {se:.1e} <= 5e-3"),
        (f"{name} runtime", secs <= 120, f"{secs:.0f}s <= 120s"),
    )
    # report on every benchmark seen so far so the line covers all three
    checks = [c for key in _ORACLE_CASES if key in _ORACLE_LINES for c in _ORACLE_LINES[key]]
    acceptance_report(6, "Monte Carlo cross-check", checks)


_PROPERTY_TESTS = {
    "expectation brute force": ["test_expectation.py::test_matches_nested_loop_reference"],
    "quadrature exactness": [
        "test_quadrature.py::test_gauss_rules_exact_for_random_polynomials",
        "test_quadrature.py::test_five_point_legendre_integrates_x8",
        "test_quadrature.py::test_four_point_jacobi_sqrt_cubic",
    ],
    "interpolation reproduction": [
        "test_grid.py::test_degree_p_polynomials_are_reproduced",
        "test_grid.py::test_cubic_reproduced_exactly",
    ],
    "truncated mass": [
        "test_expectation.py::test_truncated_mass_examples",
        "test_expectation.py::test_poisson_weights_positive_and_tail_bounded",
    ],
    "serial vs parallel": [
        "test_stepper.py::test_serial_and_parallel_are_bitwise_identical",
        "test_harness.py::test_parallel_and_serial_sweeps_write_the_same_csv",
        "test_quadrature.py::test_rules_are_bitwise_deterministic",
    ],
    "fixed-point iterations": ["test_stepper.py::test_fixed_point_iterations_within_contraction_bound"],
}


def test_criterion_7_property_suites(acceptance_report):
    # a fresh interpreter, so no table regression has run beforehand
    checks = []
    for label, ids in _PROPERTY_TESTS.items():
        proc = subprocess.run(
            [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *[str(TESTS / i) for i in ids]],
            capture_output=True,
            text=True,
            cwd=TESTS.parent,
        )
        summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
        checks.append((label, proc.returncode == 0, summary))
    acceptance_report(7, "property suites", checks)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))

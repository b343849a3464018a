"""Sweep definitions for the five published convergence tables.

Each table is a list of SweepSpec rows. ``reference`` holds the published
error columns (and fitted rate) so reports can print them side by side.
Time-step tables measure nodal errors on [0, 1 - dx]; grid tables measure
the interpolant itself (dense mode).
"""

from __future__ import annotations

from dataclasses import replace

from .harness import SweepSpec
from .stepper import AdaptiveSpec, SolverConfig

N_VALUES = (4, 8, 16, 32, 64)
DX_VALUES = tuple(2.0**-k for k in range(3, 8))

_SCHEMES = ((0.0, 0, 0), (0.0, 1, 0), (0.0, 2, 1), (1.0, 0, 0), (1.0, 1, 0), (1.0, 2, 1),
            (0.5, 0, 0), (0.5, 1, 0), (0.5, 2, 1), (0.5, 3, 2))

_T1 = (
    ((1.932e-1, 1.978e-1, 2.000e-1, 2.012e-1, 2.017e-1), -0.015),
    ((7.958e-2, 3.435e-2, 1.572e-2, 7.487e-3, 3.649e-3), 1.109),
    ((3.673e-2, 1.849e-2, 9.279e-3, 4.675e-3, 2.326e-3), 0.995),
    ((2.111e-1, 2.067e-1, 2.045e-1, 2.034e-1, 2.028e-1), 0.014),
    ((4.891e-2, 2.581e-2, 1.328e-2, 6.736e-3, 3.393e-3), 0.964),
    ((6.170e-2, 3.007e-2, 1.468e-2, 7.231e-3, 3.585e-3), 1.027),
    ((2.030e-1, 2.025e-1, 2.023e-1, 2.023e-1, 2.023e-1), 0.001),
    ((2.623e-2, 1.326e-2, 6.666e-3, 3.342e-3, 1.674e-3), 0.993),
    ((3.207e-3, 8.258e-4, 2.094e-4, 5.271e-5, 1.322e-5), 1.981),
    ((3.330e-3, 8.632e-4, 2.196e-4, 5.538e-5, 1.391e-5), 1.977),
)

_T3 = (
    ((9.732e-1, 9.554e-1, 9.461e-1, 9.413e-1, 9.390e-1), 0.013),
    ((2.099e-1, 1.108e-1, 5.698e-2, 2.890e-2, 1.456e-2), 0.964),
    ((8.618e-2, 4.131e-2, 2.013e-2, 9.925e-3, 4.926e-3), 1.032),
    ((8.958e-1, 9.167e-1, 9.267e-1, 9.317e-1, 9.341e-1), -0.014),
    ((1.239e-1, 6.669e-2, 3.461e-2, 1.763e-2, 8.900e-3), 0.952),
    ((8.485e-2, 5.274e-2, 2.959e-2, 1.577e-2, 8.149e-3), 0.950),
    ((9.345e-1, 9.360e-1, 9.364e-1, 9.365e-1, 9.365e-1), -0.001),
    ((1.669e-1, 8.874e-2, 4.579e-2, 2.327e-2, 1.173e-2), 0.959),
    ((1.634e-2, 4.386e-3, 1.136e-3, 2.889e-4, 7.286e-5), 1.954),
    ((4.476e-3, 1.079e-3, 2.634e-4, 6.498e-5, 1.613e-5), 2.029),
)

_T2 = {
    1: {"L2": ((1.227e-3, 3.266e-4, 6.586e-5, 1.651e-5, 4.167e-6), 2.071),
        "Linf": ((2.816e-3, 7.356e-4, 1.772e-4, 4.481e-5, 1.103e-5), 2.001)},
    2: {"L2": ((1.862e-4, 2.278e-5, 2.792e-6, 3.491e-7, 4.738e-8), 2.991),
        "Linf": ((2.969e-4, 3.881e-5, 4.661e-6, 6.252e-7, 9.188e-8), 2.927)},
}

_T4 = {
    1.0: {"L2": ((3.912e-3, 9.934e-4, 2.647e-4, 6.062e-5, 1.318e-5), 2.046),
          "Linf": ((5.232e-3, 1.318e-3, 3.482e-4, 8.057e-5, 1.862e-5), 2.030)},
    0.1: {"L2": ((7.892e-3, 2.030e-3, 4.893e-4, 1.269e-4, 1.498e-5), 2.208),
          "Linf": ((1.046e-2, 2.618e-3, 5.787e-4, 1.180e-4, 2.541e-5), 2.184)},
}

_T5 = {
    1.0: {"L2": ((3.001e-2, 2.287e-2, 1.467e-2, 1.107e-2, 7.045e-3), 0.523),
          "Linf": ((1.323e-1, 1.317e-1, 1.257e-1, 1.254e-1, 1.221e-1), 0.030)},
    0.1: {"L2": ((2.503e-2, 1.751e-2, 1.231e-2, 8.676e-3, 6.126e-3), 0.507),
          "Linf": ((1.215e-1, 1.207e-1, 1.201e-1, 1.197e-1, 1.192e-1), 0.007)},
}


def _ref(linf=None, l2=None) -> dict:
    out = {}
    if linf is not None:
        out["Linf"], out["CR_Linf"] = list(linf[0]), linf[1]
    if l2 is not None:
        out["L2"], out["CR_L2"] = list(l2[0]), l2[1]
    return out


def _dt_table(problem_id: str, delta: float, T: float, published) -> list[SweepSpec]:
    rows = []
    for (theta, my, mf), ref in zip(_SCHEMES, published):
        cfg = SolverConfig(theta=theta, M_y=my, M_f=mf, Q=16, p=3, N_x=65)
        rows.append(
            SweepSpec(
                varying="time",
                values=N_VALUES,
                problem_id=problem_id,
                delta=delta,
                T=T,
                config=cfg,
                primary_norm="Linf",
                window_trim_right=1,
                error_mode="nodal",
                name=f"theta={theta:g},M_y={my},M_f={mf}",
                reference=_ref(linf=ref),
            )
        )
    return rows


def table1() -> list[SweepSpec]:
    return _dt_table("ex1", 1.0, 1.0, _T1)


def table3() -> list[SweepSpec]:
    return _dt_table("ex2", 1.0, 0.25, _T3)


def table2(N: int = 1024) -> list[SweepSpec]:
    rows = []
    for p in (1, 2):
        cfg = SolverConfig(theta=0.5, N=N, M_y=3, M_f=2, Q=16, p=p, collapse=True)
        ref = _T2[p]
        rows.append(
            SweepSpec(
                varying="space",
                values=DX_VALUES,
                problem_id="ex1",
                delta=1.0,
                T=1.0,
                config=cfg,
                primary_norm="Linf" if p == 1 else "L2",
                error_mode="dense",
                name=f"p={p}",
                reference=_ref(ref["Linf"], ref["L2"]),
            )
        )
    return rows


def table4(N: int = 1024) -> list[SweepSpec]:
    rows = []
    for delta, ref in _T4.items():
        cfg = SolverConfig(theta=0.5, N=N, M_y=3, M_f=2, Q=16, p=1, collapse=True)
        rows.append(
            SweepSpec(
                varying="space",
                values=DX_VALUES,
                problem_id="ex2",
                delta=delta,
                T=0.25,
                config=cfg,
                primary_norm="L2",
                error_mode="dense",
                name=f"delta={delta:g}",
                reference=_ref(ref["Linf"], ref["L2"]),
            )
        )
    return rows


def table5(N: int = 512) -> list[SweepSpec]:
    rows = []
    for delta, ref in _T5.items():
        cfg = SolverConfig(
            theta=0.5, N=N, M_y=3, M_f=2, p=1, quadrature_family="trapezoid", collapse=True
        )
        rows.append(
            SweepSpec(
                varying="space",
                values=DX_VALUES,
                problem_id="ex3",
                delta=delta,
                T=0.5,
                config=cfg,
                primary_norm="L2",
                error_mode="dense",
                name=f"delta={delta:g}",
                reference=_ref(ref["Linf"], ref["L2"]),
            )
        )
    return rows


def adaptive_study(
    tolerance: float = 1e-2,
    delta: float = 0.1,
    N: int = 64,
    max_level: int = 12,
    starts=DX_VALUES,
) -> list[SweepSpec]:
    """Adaptive-grid sweeps for the discontinuous benchmark.

    The sweep variable is the starting (base-level) spacing at a fixed
    tolerance; rows report the plain errors and the errors with the final
    cell containing the discontinuity excluded.
    """
    cfg = SolverConfig(
        theta=0.5,
        N=N,
        M_y=2,
        M_f=1,
        p=1,
        quadrature_family="trapezoid",
        collapse=True,
        adaptive=AdaptiveSpec(tolerance=tolerance, max_level=max_level),
    )
    base = SweepSpec(
        varying="adaptive_dx",
        values=tuple(starts),
        problem_id="ex3",
        delta=delta,
        T=0.5,
        config=cfg,
        primary_norm="L2",
        error_mode="dense",
        name="adaptive",
    )
    return [base, replace(base, exclusion=(0.5, 0.5), primary_norm="Linf", name="adaptive,excluded")]


TABLES = {1: table1, 2: table2, 3: table3, 4: table4, 5: table5}

"""Figures for CLI reports.

The delimited output is the contract; these plots are a convenience that
renders the same numbers to image files. The non-interactive Agg backend is
selected so nothing needs a display.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import SweepResult  # noqa: E402

_AXIS_LABEL = {
    "time": r"$\Delta t$",
    "space": r"$\Delta x$",
    "adaptive": "mean spacing",
    "adaptive_dx": r"starting $\Delta x$",
}


def _reference_slope(ax, steps: np.ndarray, errors: np.ndarray, rate: float) -> None:
    """Dashed guide of the given slope anchored at the last point."""
    s = np.array([steps.min(), steps.max()])
    anchor_s, anchor_e = steps[np.argmin(steps)], errors[np.argmin(steps)]
    ax.loglog(s, anchor_e * (s / anchor_s) ** rate, "k--", lw=0.8, alpha=0.6)


def plot_sweeps(
    results: Sequence[SweepResult],
    path: str,
    norm: str = "Linf",
    varying: str = "time",
    title: Optional[str] = None,
    guide_rate: Optional[float] = None,
) -> str:
    """Log-log error against step, one line per series."""
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for r in results:
        steps, errs = r.steps, r.errors(norm)
        ok = errs > 0
        if not np.any(ok):
            continue
        rate = r.rate(norm)
        label = r.spec_name + (f" (CR {rate:.2f})" if rate is not None else "")
        ax.loglog(steps[ok], errs[ok], "o-", ms=4, label=label)
        if guide_rate is not None and np.count_nonzero(ok) > 1:
            _reference_slope(ax, steps[ok], errs[ok], guide_rate)
    ax.set_xlabel(_AXIS_LABEL.get(varying, "step"))
    ax.set_ylabel(f"{norm} error")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_solution(
    points: np.ndarray,
    values: np.ndarray,
    path: str,
    exact: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    title: Optional[str] = None,
) -> str:
    """Nodal values (markers) against the exact solution (line) when known."""
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    if exact is not None:
        xs = np.linspace(points[0], points[-1], 2001)
        ax.plot(xs, exact(xs), "k-", lw=1.0, label="exact")
    ax.plot(points, values, "o-", ms=3, lw=0.8, label=f"computed ({points.size} points)")
    ax.set_xlabel("x")
    ax.set_ylabel("u(T, x)")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path

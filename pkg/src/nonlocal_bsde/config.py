"""Flat ``key = value`` run configuration.

Keys are namespaced by dots (``scheme.theta``, ``grid.dx``, ...). A file
may be given and individual keys overridden from the command line; later
sources win. ``#`` and ``;`` start comments. Unknown keys are an error so a
typo never silently falls back to a default.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable, Mapping, Optional

from .errors import ConfigurationError, InvalidParameterError
from .stepper import THREAD_ENV, AdaptiveSpec, SolverConfig


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _optional(conv: Callable[[str], object]) -> Callable[[str], object]:
    def parse(text: str):
        return None if text.strip().lower() in ("", "none", "auto") else conv(text)

    return parse


KEYS: dict[str, Callable[[str], object]] = {
    "problem.id": str,
    "problem.delta": float,
    "problem.T": _optional(float),
    "scheme.theta": float,
    "scheme.N": int,
    "scheme.M_y": int,
    "scheme.M_f": int,
    "scheme.collapse": _bool,
    "quadrature.family": _optional(str),
    "quadrature.Q": int,
    "quadrature.spacing": _optional(float),
    "grid.x_min": float,
    "grid.x_max": float,
    "grid.N_x": int,
    "grid.dx": _optional(float),
    "grid.p": int,
    "adaptive.enabled": _bool,
    "adaptive.tolerance": float,
    "adaptive.max_level": int,
    "adaptive.base_level": int,
    "adaptive.replay_history": _bool,
    "solver.fixed_point_tol": float,
    "solver.fixed_point_max_iter": int,
    "solver.exterior": str,
    "solver.threads": str,
    "solver.workers": _optional(int),
    "oracle.samples": int,
    "oracle.seed": int,
    "oracle.probes": _floats,
    "oracle.batch_size": int,
}


@dataclass(frozen=True)
class OracleSettings:
    samples: int = 1_000_000
    seed: int = 20240101
    probes: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    batch_size: int = 100_000


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs: problem choice, solver, oracle."""

    problem_id: str = "ex1"
    delta: float = 1.0
    T: Optional[float] = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    oracle: OracleSettings = field(default_factory=OracleSettings)

    def to_dict(self) -> dict:
        return asdict(self)


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw key/value pairs from config text (no type conversion)."""
    parser = configparser.ConfigParser(
        interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"), inline_comment_prefixes=("#",)
    )
    parser.optionxform = str  # keys are case-sensitive (M_y, T)
    try:
        parser.read_string("[run]\n" + text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse {source}: {exc}") from exc
    return dict(parser["run"])


def parse_overrides(items: Iterable[str]) -> dict[str, str]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"override must look like key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _typed(raw: Mapping[str, str]) -> dict[str, object]:
    out = {}
    for key, text in raw.items():
        if key not in KEYS:
            raise ConfigurationError(f"unknown config key {key!r}; known keys: {', '.join(sorted(KEYS))}")
        try:
            out[key] = KEYS[key](text)
        except ValueError as exc:
            raise ConfigurationError(f"bad value for {key}: {text!r} ({exc})") from exc
    return out


def build(raw: Mapping[str, str], base: Optional[RunConfig] = None) -> RunConfig:
    """Apply raw key/value pairs on top of ``base`` (defaults when None)."""
    values = _typed(raw)
    base = base or RunConfig()
    s = base.solver
    solver_fields = {
        "scheme.theta": "theta",
        "scheme.N": "N",
        "scheme.M_y": "M_y",
        "scheme.M_f": "M_f",
        "scheme.collapse": "collapse",
        "quadrature.family": "quadrature_family",
        "quadrature.Q": "Q",
        "quadrature.spacing": "trapezoid_spacing",
        "grid.x_min": "x_min",
        "grid.x_max": "x_max",
        "grid.N_x": "N_x",
        "grid.p": "p",
        "solver.fixed_point_tol": "fixed_point_tol",
        "solver.fixed_point_max_iter": "fixed_point_max_iter",
        "solver.exterior": "exterior",
        "solver.threads": "threads",
        "solver.workers": "workers",
    }
    changes = {attr: values[key] for key, attr in solver_fields.items() if key in values}
    try:
        s = replace(s, **changes)
        if values.get("grid.dx") is not None:
            s = s.with_dx(values["grid.dx"])
        adaptive_keys = {k: v for k, v in values.items() if k.startswith("adaptive.") and k != "adaptive.enabled"}
        enabled = values.get("adaptive.enabled", s.adaptive is not None or bool(adaptive_keys))
        if enabled:
            spec = s.adaptive or AdaptiveSpec()
            spec = replace(spec, **{k.split(".", 1)[1]: v for k, v in adaptive_keys.items()})
            s = replace(s, adaptive=spec, p=1 if "grid.p" not in values else s.p)
        else:
            s = replace(s, adaptive=None)
    except InvalidParameterError as exc:
        raise ConfigurationError(str(exc)) from exc

    o = base.oracle
    o = replace(o, **{k.split(".", 1)[1]: v for k, v in values.items() if k.startswith("oracle.")})
    return RunConfig(
        problem_id=values.get("problem.id", base.problem_id),
        delta=values.get("problem.delta", base.delta),
        T=values.get("problem.T", base.T),
        solver=s,
        oracle=o,
    )


def load(path: Optional[str] = None, overrides: Iterable[str] = (), env: Optional[Mapping[str, str]] = None) -> RunConfig:
    """File, then ``key=value`` overrides, then the thread-count environment variable."""
    raw: dict[str, str] = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw.update(parse_text(fh.read(), source=path))
        except OSError as exc:
            raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    raw.update(parse_overrides(overrides))
    cfg = build(raw)
    env = os.environ if env is None else env
    threads = env.get(THREAD_ENV)
    if threads:
        try:
            count = int(threads)
        except ValueError as exc:
            raise ConfigurationError(f"{THREAD_ENV} must be an integer, got {threads!r}") from exc
        if count < 1:
            raise ConfigurationError(f"{THREAD_ENV} must be positive, got {count}")
        cfg = replace(cfg, solver=replace(cfg.solver, threads="parallel" if count > 1 else "serial", workers=count))
    return cfg

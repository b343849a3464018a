import pytest

from nonlocal_bsde import ConfigurationError
from nonlocal_bsde.config import KEYS, RunConfig, build, load, parse_overrides, parse_text


def test_parse_text_with_comments():
    raw = parse_text(
        """
        # leading comment
        problem.id = ex2
        scheme.M_y = 3   # inline
        ; semicolon comment
        oracle.probes = 0.1, 0.5 0.9
        """
    )
    assert raw == {"problem.id": "ex2", "scheme.M_y": "3", "oracle.probes": "0.1, 0.5 0.9"}


def test_defaults():
    cfg = build({})
    assert cfg == RunConfig()
    assert cfg.solver.adaptive is None and cfg.oracle.samples == 1_000_000


def test_typed_keys_reach_the_solver_config():
    cfg = build(
        {
            "problem.id": "ex3",
            "problem.delta": "0.1",
            "problem.T": "0.5",
            "scheme.theta": "1",
            "scheme.N": "32",
            "scheme.collapse": "yes",
            "quadrature.family": "trapezoid",
            "grid.dx": "0.0625",
            "oracle.probes": "0.2 0.4",
            "oracle.samples": "1000",
        }
    )
    s = cfg.solver
    assert (cfg.problem_id, cfg.delta, cfg.T) == ("ex3", 0.1, 0.5)
    assert (s.theta, s.N, s.collapse, s.quadrature_family, s.N_x) == (1.0, 32, True, "trapezoid", 17)
    assert cfg.oracle.probes == (0.2, 0.4) and cfg.oracle.samples == 1000


def test_adaptive_keys_enable_refinement_with_linear_hats():
    cfg = build({"adaptive.tolerance": "0.01", "adaptive.base_level": "4"})
    assert cfg.solver.adaptive.tolerance == 0.01 and cfg.solver.adaptive.base_level == 4
    assert cfg.solver.p == 1
    assert build({"adaptive.enabled": "false"}).solver.adaptive is None


SAMPLE_VALUES = {
    "problem.id": "ex2",
    "problem.delta": "0.5",
    "problem.T": "auto",
    "scheme.theta": "1",
    "scheme.N": "8",
    "scheme.M_y": "3",
    "scheme.M_f": "2",
    "scheme.collapse": "on",
    "quadrature.family": "gauss_legendre",
    "quadrature.Q": "8",
    "quadrature.spacing": "0.01",
    "grid.x_min": "-1",
    "grid.x_max": "2",
    "grid.N_x": "33",
    "grid.dx": "0.125",
    "grid.p": "2",
    "adaptive.enabled": "no",
    "adaptive.tolerance": "1e-3",
    "adaptive.max_level": "8",
    "adaptive.base_level": "2",
    "adaptive.replay_history": "false",
    "solver.fixed_point_tol": "1e-12",
    "solver.fixed_point_max_iter": "50",
    "solver.exterior": "clamp_to_boundary",
    "solver.threads": "parallel",
    "solver.workers": "2",
    "oracle.samples": "1000",
    "oracle.seed": "3",
    "oracle.probes": "0.1 0.2",
    "oracle.batch_size": "500",
}


def test_every_documented_key_parses():
    assert set(SAMPLE_VALUES) == set(KEYS)
    for key, text in SAMPLE_VALUES.items():
        build({key: text})
    build(SAMPLE_VALUES)


@pytest.mark.parametrize(
    "raw",
    [
        {"scheme.thetta": "0.5"},
        {"scheme.N": "many"},
        {"scheme.theta": "2"},
        {"scheme.collapse": "perhaps"},
        {"grid.dx": "0.3"},
        {"adaptive.tolerance": "-1"},
    ],
)
def test_bad_config_is_rejected(raw):
    with pytest.raises(ConfigurationError):
        build(raw)


def test_override_syntax():
    assert parse_overrides(["a.b=1", " c = x=y "]) == {"a.b": "1", "c": "x=y"}
    with pytest.raises(ConfigurationError):
        parse_overrides(["novalue"])


def test_load_layers_file_overrides_and_environment(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("scheme.N = 8\nscheme.M_y = 3\n")
    cfg = load(str(path), ["scheme.N=16"], env={})
    assert cfg.solver.N == 16 and cfg.solver.M_y == 3 and cfg.solver.threads == "serial"
    cfg = load(str(path), [], env={"NONLOCAL_BSDE_THREADS": "3"})
    assert cfg.solver.threads == "parallel" and cfg.solver.workers == 3
    with pytest.raises(ConfigurationError):
        load(str(path), [], env={"NONLOCAL_BSDE_THREADS": "zero"})
    with pytest.raises(ConfigurationError):
        load(str(tmp_path / "missing.cfg"))


def test_round_trip_through_dict():
    d = build({"scheme.N": "4"}).to_dict()
    assert d["solver"]["N"] == 4 and d["problem_id"] == "ex1"

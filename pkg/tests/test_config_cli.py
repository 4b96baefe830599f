import math

import pytest
import yaml

from nabif import cli
from nabif.config import ConfigError, env_overrides, load


def write(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def body(path):
    return "".join(l for l in open(path) if not l.startswith("# generated:"))


def test_defaults_resolve():
    exp = load(None, environ={})
    assert exp.model.L == pytest.approx(math.pi) and exp.model.lam == 0.9
    assert exp.integrator.blowup_threshold == 1e6 and exp.truncation.rho == 0.08
    assert exp.lambdas == [0.95, 1.0, 1.02, 1.05, 1.1] and exp.seed == 0


def test_file_env_and_override_precedence(tmp_path):
    path = write(tmp_path, {"model": {"lambda": 0.95, "L": "2*pi"}, "seed": 3})
    exp = load(path, environ={"NABIF_MODEL__LAMBDA": "0.97", "NABIF_SEED": "5", "OTHER": "x"},
               overrides={"seed": 9})
    assert exp.model.lam == 0.97 and exp.model.L == pytest.approx(2 * math.pi) and exp.seed == 9
    assert env_overrides({"NABIF_LP__RHO": "0.05"}) == {"lp": {"rho": 0.05}}


@pytest.mark.parametrize("data,field", [
    ({"model": {"bogus": 1}}, "model.bogus"),
    ({"lp": {"n_grid": 20}}, "lp.n_grid"),
    ({"integrator": {"scheme": "rk4"}}, "integrator"),
    ({"model": {"L": "three"}}, "model.L"),
    ({"simulate": {"fiber": [0.0, 1.0]}}, "simulate.fiber"),
    ({"spectral": {"k": 0}}, "spectral.k"),
    ({"seed": -1}, "seed"),
])
def test_validation_names_field(tmp_path, data, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        load(write(tmp_path, data), environ={})


def test_cli_bad_config_exits_nonzero(tmp_path, capsys):
    assert cli.main(["simulate", "--config", write(tmp_path, {"lp": {"tol": -1}}), "--out", str(tmp_path)]) == 2
    assert "lp.tol" in capsys.readouterr().err


def test_cli_simulate_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["simulate", "--out", str(a), "--seed", "4"]) == 0
    assert cli.main(["simulate", "--out", str(b), "--seed", "4"]) == 0
    text = body(a / "trajectory.csv")
    assert text == body(b / "trajectory.csv")
    assert '"seed": 4' in text and "t,a_1" in text


def test_cli_manifold_gate(tmp_path, capsys):
    path = write(tmp_path, {"lp": {"rho": 0.5}})
    assert cli.main(["manifold", "--config", path, "--out", str(tmp_path)]) != 0
    assert "M_ρ ≥ 1" in capsys.readouterr().err


def test_cli_manifold_report(tmp_path):
    assert cli.main(["manifold", "--out", str(tmp_path)]) == 0
    rep = (tmp_path / "certification.txt").read_text()
    for key in ("k(rho)", "M_rho", "L1 bound", "L1 empirical", "L2 empirical"):
        assert key in rep
    assert "# schema: manifold-graph/1" in (tmp_path / "manifold.csv").read_text()


def test_cli_attractor_small(tmp_path):
    path = write(tmp_path, {"pullback": {"cloud_size": 8, "n_fibers": 2, "n_stages": 9}})
    assert cli.main(["attractor", "--config", path, "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "traces.csv").read_text().count("\n") > 4
    again = tmp_path / "p"
    assert cli.main(["attractor", "--config", path, "--out", str(again)]) == 0
    assert body(tmp_path / "o" / "attractor.csv") == body(again / "attractor.csv")


def test_cli_bifurcate_small(tmp_path):
    path = write(tmp_path, {"sweep": {"lambdas": [0.95, 1.1], "n_fibers": 1, "phase_nodes": 4, "n_grid": 21,
                                      "n_stages": 14}})
    assert cli.main(["bifurcate", "--config", path, "--out", str(tmp_path)]) == 0
    diagram = (tmp_path / "diagram.csv").read_text()
    assert "# config:" in diagram and "H_alpha" in diagram
    assert (tmp_path / "plot_fiber0.csv").read_text().splitlines()[-1].startswith("1.1,")
    assert (tmp_path / "timings.csv").exists()


def test_cli_verify_default(tmp_path, capsys):
    assert cli.main(["verify", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("[PASS]") == 6

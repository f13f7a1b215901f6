"""Command-line interface: config validation, subcommands, exit codes,
and output layout.  Everything runs in-process through cli.main."""

import json
import math
import pathlib

import numpy as np
import pytest

from magloop import cli
from magloop.continuation import (ConvergedExtremal, DivergingLengths,
                                  Inconclusive)
from magloop.dynamics import ResidualReport
from magloop.errors import ConfigError
from magloop.loops import load_loop_csv, make_circle


def _base_config(n_steps=7, output_dir="run_out"):
    return {
        "geometry": {"kind": "plane_constant_B", "B": 1.0},
        "E": 1.0,
        "w_shape": "path",
        "discretization": {"n_vertices": 48, "family_size": 9, "m_p": 4},
        "action": {"eps0": 1e-2, "tau0": 1e-2, "rho": 0.5,
                   "n_steps": n_steps},
        "solver": {},
        "output_dir": output_dir,
        "seed": 0,
    }


def _write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_config_round_trip():
    cfg = cli.parse_config_dict(_base_config())
    again = cli.parse_config_dict(json.loads(cli.serialize_config(cfg)))
    assert again == cfg


def test_bundled_configs_parse():
    # The example configs shipped in configs/ must stay valid as the
    # schema evolves.  Parse only; the full runs take seconds to minutes.
    root = pathlib.Path(__file__).resolve().parents[1] / "configs"
    expected = {
        "plane_larmor.json": "plane_constant_B",
        "torus_sine.json": "flat_torus_sine",
    }
    for name, kind in expected.items():
        obj = json.loads((root / name).read_text())
        cfg = cli.parse_config_dict(obj)
        assert cfg.geometry.kind.value == kind
        assert cfg.schedule.n_steps >= 3


def test_config_defaults():
    obj = _base_config()
    del obj["discretization"]
    del obj["solver"]
    del obj["seed"]
    cfg = cli.parse_config_dict(obj)
    assert cfg.n_vertices == 128 and cfg.family_size == 33 and cfg.m_p == 8
    assert cfg.solver.max_iters == 400 and cfg.solver.grad_tol == 1e-6
    assert cfg.seed == 0 and cfg.delta == 1e-9 and cfg.beta_frac == 0.1
    assert cfg.nested is False


def test_config_error_messages():
    with pytest.raises(ConfigError, match="unknown keys.*bogus"):
        cli.parse_config_dict({**_base_config(), "bogus": 1})
    with pytest.raises(ConfigError, match="config.action.*unknown keys"):
        bad = _base_config()
        bad["action"]["extra"] = 2
        cli.parse_config_dict(bad)
    with pytest.raises(ConfigError,
                       match="tau must satisfy 0 <= tau < 1"):
        bad = _base_config()
        bad["action"]["tau0"] = 1.5
        cli.parse_config_dict(bad)
    with pytest.raises(ConfigError, match="config.E"):
        cli.parse_config_dict({**_base_config(), "E": -1.0})
    with pytest.raises(ConfigError, match="w_shape"):
        cli.parse_config_dict({**_base_config(), "w_shape": "sphere"})
    with pytest.raises(ConfigError, match="missing required key 'action'"):
        bad = _base_config()
        del bad["action"]
        cli.parse_config_dict(bad)


def test_malformed_json_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "geometry": {,}\n}')
    with pytest.raises(ConfigError, match=r"line 2 column 16"):
        cli.load_config(path)
    assert cli.main(["run", "--config", str(path)]) == cli.EXIT_CONFIG


def test_missing_config_file_is_config_error(tmp_path):
    rc = cli.main(["run", "--config", str(tmp_path / "nope.json")])
    assert rc == cli.EXIT_CONFIG


def test_classification_exit_codes():
    loop = make_circle((0.0, 0.0), 1.0, -1, 8)
    rep = ResidualReport(per_vertex=np.zeros(1), max_res=0.0, mean_res=0.0,
                         speed_cv=0.0)
    assert cli.classification_exit_code(
        ConvergedExtremal(loop, rep)) == cli.EXIT_OK
    assert cli.classification_exit_code(
        DivergingLengths((), (), ())) == cli.EXIT_OK
    assert cli.classification_exit_code(
        Inconclusive("nope")) == cli.EXIT_INCONCLUSIVE
    with pytest.raises(TypeError):
        cli.classification_exit_code("bogus")


def test_threads_validation(capsys):
    assert cli.main(["--threads", "0", "gradcheck", "--loops", "1"]) == \
        cli.EXIT_CONFIG


def test_run_experiment_outputs(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
    cpath = _write_config(tmp_path, _base_config(n_steps=7))
    rc = cli.main(["run", "--config", cpath])
    assert rc == cli.EXIT_OK
    out = tmp_path / "run_out"
    result = json.loads((out / "result.json").read_text())
    assert set(result) == {"version", "config", "c_ref", "beta", "records",
                           "classification", "timings"}
    assert "seed" not in result["config"]
    assert result["classification"]["case"] == "ConvergedExtremal"
    assert len(result["records"]) == 7
    assert abs(result["beta"] - 0.1 * result["c_ref"]) < 1e-15
    for rec in result["records"]:
        csv_path = out / rec["loop_csv"]
        assert csv_path.exists()
        loop = load_loop_csv(csv_path)
        assert loop.n == 48
    summary = (out / "summary.txt").read_text()
    assert "classification: ConvergedExtremal" in summary
    assert "seed 0" in summary


def test_run_inconclusive_exit_code(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
    cpath = _write_config(tmp_path, _base_config(n_steps=3))
    assert cli.main(["run", "--config", cpath]) == cli.EXIT_INCONCLUSIVE
    result = json.loads((tmp_path / "run_out" / "result.json").read_text())
    assert result["classification"]["case"] == "Inconclusive"


def test_run_output_dir_override(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
    cpath = _write_config(tmp_path, _base_config(n_steps=3))
    rc = cli.main(["run", "--config", cpath, "--output-dir", "elsewhere"])
    assert rc == cli.EXIT_INCONCLUSIVE
    assert (tmp_path / "elsewhere" / "result.json").exists()
    assert not (tmp_path / "run_out").exists()


def test_mpass_subcommand(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
    cpath = _write_config(tmp_path, _base_config())
    rc = cli.main(["mpass", "--config", cpath, "--eps", "1e-2",
                   "--tau", "1e-2"])
    assert rc == cli.EXIT_OK
    payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert payload["converged"] is True
    # by symmetry the level must match the best circle at the same (eps, tau)
    from magloop import GeometryKind, GeometrySpec, action_S_eps_tau
    from magloop.action import ActionParams
    spec = GeometrySpec(GeometryKind.PLANE_CONSTANT_B, B=1.0)
    params = ActionParams(E=1.0, eps=1e-2, tau=1e-2)
    scan = max(action_S_eps_tau(spec, make_circle((0.0, 0.0), float(r),
                                                  -1, 48), params)
               for r in np.linspace(0.8, 1.4, 2001))
    assert abs(payload["level"] - scan) < 1e-5 * scan
    saved = json.loads((tmp_path / "run_out" / "mpass_result.json")
                       .read_text())
    assert saved["level"] == payload["level"]
    assert (tmp_path / "run_out" / "mpass_loop.csv").exists()


def test_mpass_zero_field_exits_4(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
    cfg = _base_config()
    cfg["geometry"] = {"kind": "flat_torus_sine", "a": 0.0, "k": 1}
    cpath = _write_config(tmp_path, cfg)
    assert cli.main(["mpass", "--config", cpath]) == \
        cli.EXIT_NO_NEGATIVE_LOOP


def test_flow_subcommand(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
    rc = cli.main(["flow", "--kind", "plane_constant_B", "--B", "1.0",
                   "--speed", "1.0", "--T", str(2.0 * math.pi),
                   "--steps", "4000", "--output-dir", "flow_out"])
    assert rc == cli.EXIT_OK
    payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert payload["closure_residual"] < 1e-5
    assert payload["energy_drift"] < 1e-9
    assert (tmp_path / "flow_out" / "trajectory.csv").exists()


def test_flow_rejects_bad_speed():
    assert cli.main(["flow", "--speed", "-1.0", "--T", "1.0"]) == \
        cli.EXIT_CONFIG


def test_gradcheck_subcommand(capsys):
    rc = cli.main(["gradcheck", "--loops", "6", "--n", "24", "--seed", "3"])
    assert rc == cli.EXIT_OK
    payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert payload["loops"] == 6
    assert payload["max_rel_error"] < 1e-5


def test_oracle_larmor_subcommand(capsys):
    rc = cli.main(["oracle", "larmor", "--E", "4.0", "--B", "2.0"])
    assert rc == cli.EXIT_OK
    payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert payload["radius"] == 1.0
    assert abs(payload["level"] - 2.0 * math.pi) < 1e-15


def test_oracle_profile_subcommand(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
    rc = cli.main(["oracle", "profile", "--E", "1.0", "--B", "1.0",
                   "--r-max", "2.0", "--points", "401", "--n", "256",
                   "--output-dir", "oracle_out"])
    assert rc == cli.EXIT_OK
    payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert abs(payload["r_max"] - 1.0) < 0.01
    assert abs(payload["level"] - math.pi) < 1e-3
    lines = (tmp_path / "oracle_out" / "profile.csv").read_text().splitlines()
    assert lines[0] == "r,S"
    assert len(lines) == 402

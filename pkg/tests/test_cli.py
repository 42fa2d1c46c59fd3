import json
import logging
from pathlib import Path

import numpy as np
import pytest

from measrad import cli
from measrad import polarization as pol

SCENARIO_PRESETS = [p.name for p in cli.preset_paths() if p.name != "oracle_verify.yaml"]


def small_spin_cfg(**photons):
    cfg = cli.load_config("stimulated_spin.yaml")
    cfg["photons"] = {"k0": [0.001], "theta": [0.3, 1.2], "phi": [0.0], **photons}
    cfg["quadrature"] = {"order": 6}
    return cli.validate_config(cfg)


def test_presets_are_valid():
    names = {p.name for p in cli.preset_paths()}
    assert len(names) == 10
    kinds = {cli.load_config(n)["kind"] for n in names}
    assert kinds == set(cli.KINDS)


@pytest.mark.parametrize("patch, msg", [
    ({"kind": "nonsense"}, "kind"),
    ({"extra": 1}, "Additional"),
    ({"measurement": {"zeta": [0, 0, 2.0]}}, "unit"),
    ({"photons": {"k0": [], "theta": [0.5]}}, "photons.k0.*non-empty"),
    ({"photons": {"k0": {"min": 1e-3, "max": 2e-3, "n": 0}, "theta": [0.5]}}, "photons.k0.n"),
    ({"photons": {"k0": [-1e-3], "theta": [0.5]}}, "positive"),
    ({"particle": {"type": "pair", "packet1": {"p0": [0, 0, 0], "sigma": 0.1}}}, "packet2"),
])
def test_schema_rejects(patch, msg):
    cfg = cli.load_config("stimulated_spin.yaml")
    cfg.update(patch)
    with pytest.raises(cli.ConfigError, match=msg):
        cli.validate_config(cfg)


def test_kind_needs_measurement():
    with pytest.raises(cli.ConfigError, match="measurement.p_r"):
        cli.validate_config({"kind": "stimulated-momentum",
                             "particle": {"type": "packet", "p0": [0, 0, 0], "sigma": 0.1},
                             "photons": {"k0": [1e-3], "theta": [0.5]}})


def test_empty_grid_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    text = Path(cli.preset_paths()[0]).read_text().replace("n: 6", "n: 0")
    cfg.write_text(text)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err
    assert cli.main(["run", str(tmp_path / "missing.yaml")]) == 2


def test_stimulated_spin_preset_matches_closed_form():
    t = cli.run_scenario(cli.load_config("stimulated_spin.yaml"))
    ref = np.array([pol.stokes_stimulated_nonrel(x).b for x in t.column("theta")])
    got = np.array([t.column(c) for c in ("b1", "b2", "b3")]).T
    assert np.abs(got - ref).max() < 1e-8
    assert t.summary["quadrature_converged"]


def test_echo_round_trip(tmp_path):
    cfg = small_spin_cfg()
    table = cli.run_scenario(cfg)
    paths = cli.write_outputs(cfg, table, tmp_path)
    text = paths["csv"].read_text()
    again = cli.read_config_text(text)
    assert cli.validate_config(again) == cfg
    table2 = cli.run_scenario(again)
    assert cli.render_csv(again, table2) == text
    summary = json.loads(paths["summary"].read_text())
    assert summary["rows"] == 2 and "t_f" in summary and "normalization" in summary


def test_csv_dialect(tmp_path):
    cfg = small_spin_cfg()
    text = cli.render_csv(cfg, cli.run_scenario(cfg))
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert body[0].split(",") == cli.STIM_COLUMNS
    assert all(len(r.split(",")) == len(cli.STIM_COLUMNS) for r in body[1:])
    assert "A1_re" in body[0] and "A1_im" in body[0]


def test_threads_do_not_change_output(monkeypatch):
    cfg = small_spin_cfg(theta=[0.2, 0.9, 1.7, 2.6])
    monkeypatch.setenv("MEASRAD_THREADS", "1")
    a = cli.render_csv(cfg, cli.run_scenario(cfg))
    monkeypatch.setenv("MEASRAD_THREADS", "4")
    b = cli.render_csv(cfg, cli.run_scenario(cfg))
    assert a == b
    monkeypatch.setenv("MEASRAD_THREADS", "many")
    with pytest.raises(cli.ConfigError):
        cli.run_scenario(cfg)


def test_sweep_stacks_blocks():
    cfg = small_spin_cfg()
    t = cli.sweep(cfg, "measurement.tau", [0, 500.0, 5000.0])
    assert len(t.rows) == 6
    assert t.columns[0] == "measurement.tau"
    col = t.column("window_mod")
    assert col[0] == 1 and np.all(col[2:] < 1)


def test_sweep_errors(caplog):
    cfg = small_spin_cfg()
    with pytest.raises(cli.ConfigError, match="scalar"):
        cli.sweep(cfg, "measurement.zeta", [1])
    with pytest.raises(cli.ConfigError, match="unknown"):
        cli.sweep(cfg, "measurement.nothing", [1])
    with caplog.at_level(logging.WARNING, logger="measrad"):
        assert cli.sweep(cfg, "measurement.tau", []) is None
    assert "no values" in caplog.text


def test_parse_values():
    assert cli.parse_values(["1,2", "3.5", "true"]) == [1, 2, 3.5, True]
    assert cli.parse_values([]) == []


def test_sweep_command(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    import yaml
    cfg.write_text(yaml.safe_dump(small_spin_cfg()))
    rc = cli.main(["sweep", str(cfg), "--param", "measurement.tau", "--values", "0,100",
                   "--out", str(tmp_path / "o")])
    assert rc == 0
    text = (tmp_path / "o" / "stimulated_spin_sweep.csv").read_text()
    assert "# sweep: measurement.tau = [0, 100]" in text
    assert cli.main(["sweep", str(cfg), "--param", "measurement.tau"]) == 0


def test_scenario_error_has_context(monkeypatch):
    cfg = small_spin_cfg()

    def boom(*a, **k):
        raise ZeroDivisionError("bad")
    monkeypatch.setattr(cli.stm, "amplitude_spin_measurement", boom)
    with pytest.raises(cli.ScenarioError, match="stimulated-spin: ZeroDivisionError"):
        cli.run_scenario(cfg)


def test_oracle_verify_preset(tmp_path, capsys):
    cfg = cli.load_config("oracle_verify.yaml")
    cfg["scale"] = 0.05
    t = cli.run_scenario(cfg)
    assert t.summary["all_passed"]
    assert set(t.column_names() if hasattr(t, "column_names") else t.columns) >= {"status"}
    assert all(r[-1] == "PASS" for r in t.rows)


@pytest.mark.parametrize("name", SCENARIO_PRESETS)
def test_order_doubling_on_presets(name):
    cfg = cli.load_config(name)
    t = cli.run_scenario(cfg)
    od = cli.order_doubling(cfg, t, 1e-6)
    assert od["passed"], od

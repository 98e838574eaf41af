"""Config parsing and the command-line subcommands."""
import csv
import io
import json

import pytest

from covertnet import cli
from covertnet.config import (
    ConfigError,
    SweepSpec,
    build,
    canonical_key,
    parse_lines,
    resolve,
    sweep_values,
)
from covertnet.params import ParameterError


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


# --- parsing ----------------------------------------------------------------


def test_parse_lines():
    raw = parse_lines(["# header", "pd_dbm = 15  # trailing", "", "lambda_d=0.2"])
    assert raw == {"pd_dbm": "15", "lambda_d": "0.2"}
    with pytest.raises(ConfigError, match="duplicate key"):
        parse_lines(["a = 1", "a = 2"])
    with pytest.raises(ConfigError, match=":1: expected"):
        parse_lines(["no equals sign"])


def test_canonical_keys():
    assert canonical_key("pd_dbm") == ("pd", "power", "_dbm")
    assert canonical_key("noise_u_dbw") == ("noise_u", "power", "_dbw")
    assert canonical_key("theta_d_db") == ("theta_d", "ratio", "_db")
    assert canonical_key("alpha") == ("alpha", "param", None)
    assert canonical_key("sim.n_trials") == ("sim.n_trials", "option", None)
    with pytest.raises(ConfigError, match="needs a unit suffix"):
        canonical_key("pd")
    with pytest.raises(ConfigError, match="unknown config key 'bogus'"):
        canonical_key("bogus")


def test_resolve_units():
    v = resolve({"pd_dbm": "0", "pc_dbw": "10", "noise_a_watt": "2e-12", "theta_d_db": "-10", "sim.n_trials": "50"})
    assert v["pd"] == pytest.approx(1e-3)
    assert v["pc"] == pytest.approx(10.0)
    assert v["noise_a"] == 2e-12
    assert v["theta_d"] == pytest.approx(0.1)
    assert v["sim.n_trials"] == 50
    with pytest.raises(ConfigError, match="same quantity"):
        resolve({"pd_dbm": "0", "pd_watt": "1e-3"})
    with pytest.raises(ConfigError, match="expected an integer"):
        resolve({"sim.n_trials": "1.5"})
    with pytest.raises(ConfigError, match="finite"):
        resolve({"alpha": "nan"})


def test_build_defaults_and_errors():
    cfg = build({"pd_dbm": "15", "pc_dbm": "20"})
    assert cfg.params.alpha == 4.0
    assert cfg.t_max == pytest.approx(1e-6)
    assert cfg.sim.censor_at == cfg.t_max
    assert cfg.theta_c == 1.0
    assert build({}).powers is None
    with pytest.raises(ConfigError, match="missing required key pc_dbm"):
        build({"pd_dbm": "15"})
    with pytest.raises(ParameterError, match="alpha must exceed 2"):
        build({"alpha": "2"})
    with pytest.raises(ConfigError):
        build({"sim.n_trials": "0"})


def test_digest_ignores_workers():
    a = build({"pd_dbm": "15", "pc_dbm": "20"}, seed=3, workers=1)
    b = build({"pd_dbm": "15", "pc_dbm": "20"}, seed=3, workers=4)
    c = build({"pd_dbm": "15", "pc_dbm": "20"}, seed=4)
    assert a.digest() == b.digest() != c.digest()


def test_with_overrides_replaces_same_quantity():
    cfg = build({"pd_dbm": "15", "pc_dbm": "20"}).with_overrides([("pd_watt", "0.01")])
    assert cfg.powers.pd == 0.01


def test_sweep_values():
    assert sweep_values(1, 3, 3, "linear") == (1.0, 2.0, 3.0)
    assert sweep_values(1, 100, 3, "log") == pytest.approx((1.0, 10.0, 100.0))
    assert sweep_values(1, 100, 3, "db") == pytest.approx((1.0, 10.0, 100.0))
    assert sweep_values(0, 20, 3, "db", db_valued=True) == (0.0, 10.0, 20.0)
    with pytest.raises(ConfigError):
        sweep_values(0, 1, 3, "log")
    with pytest.raises(ConfigError):
        sweep_values(1, 2, 3, "cubic")


def test_sweep_spec_checks():
    with pytest.raises(ConfigError, match="monotone"):
        SweepSpec("lambda_b", (0.01, 0.02, 0.015))
    with pytest.raises(ConfigError, match="no values"):
        SweepSpec("lambda_b", ())
    cfg = build({"sweep.variable": "link_dist", "sweep.values": "0.5, 1, 2",
                 "sweep.series": "eps_qos=0.04; eps_qos=0.05,eps_covert=0.02"})
    assert cfg.sweep.values == (0.5, 1.0, 2.0)
    assert cfg.sweep.series == ((("eps_qos", "0.04"),), (("eps_qos", "0.05"), ("eps_covert", "0.02")))
    with pytest.raises(ConfigError, match="unknown config key"):
        build({"sweep.variable": "nonsense", "sweep.values": "1"})


# --- command line -----------------------------------------------------------

BASE = "pd_dbm = 15\npc_dbm = 20\n"


def test_metrics_row(tmp_path, capsys):
    path = _write(tmp_path, BASE)
    assert cli.main(["metrics", "--config", path]) == 0
    rows = _rows(capsys.readouterr().out)
    assert len(rows) == 1
    r = rows[0]
    assert list(r) == cli.METRIC_COLUMNS
    assert 0 < float(r["d2d_success"]) < 1
    assert float(r["detection_error"]) == pytest.approx(float(r["fa"]) + float(r["md"]))


def test_metrics_deterministic_bytes(tmp_path):
    path = _write(tmp_path, BASE)
    outs = []
    for i in range(2):
        out = tmp_path / f"m{i}.csv"
        assert cli.main(["metrics", "--config", path, "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    meta = json.loads((tmp_path / "m0.csv.meta.json").read_text())
    assert meta["command"] == "metrics"
    assert len(meta["config_hash"]) == 64
    assert {"covertnet", "numpy", "scipy", "python", "kernels"} <= set(meta["versions"])
    assert "wall_clock_s" in meta


def test_missing_key_names_it(tmp_path, capsys):
    path = _write(tmp_path, "pd_dbm = 15\n")
    assert cli.main(["metrics", "--config", path]) == 2
    assert "pc_dbm" in capsys.readouterr().err


def test_unknown_override(tmp_path, capsys):
    path = _write(tmp_path, BASE)
    assert cli.main(["metrics", "--config", path, "--set", "warp=9"]) == 2
    assert "unknown config key 'warp'" in capsys.readouterr().err


def test_set_overrides_other_suffix(tmp_path, capsys):
    path = _write(tmp_path, BASE)
    assert cli.main(["metrics", "--config", path, "--set", "pd_watt=0.01"]) == 0
    assert float(_rows(capsys.readouterr().out)[0]["pd_watt"]) == 0.01


def test_seed_required(tmp_path, capsys):
    path = _write(tmp_path, BASE)
    for cmd in ("simulate", "validate"):
        assert cli.main([cmd, "--config", path]) == 2
        assert "requires --seed" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert cli.main(["metrics", "--config", str(tmp_path / "none.cfg")]) == 2


def test_detect_marks_best(tmp_path, capsys):
    path = _write(tmp_path, BASE + "detect.points = 40\n")
    assert cli.main(["detect", "--config", path]) == 0
    rows = _rows(capsys.readouterr().out)
    best = [r for r in rows if r["is_best"] == "1"]
    assert len(best) == 1 and len(rows) == 41
    assert float(best[0]["detection_error"]) <= min(float(r["detection_error"]) for r in rows)
    taus = [float(r["tau_watt"]) for r in rows]
    assert taus == sorted(taus)


def test_simulate_worker_invariant(tmp_path):
    path = _write(tmp_path, BASE + "sim.n_trials = 20000\nsim.tau_points = 4\n")
    outs = []
    for w in ("1", "3"):
        out = tmp_path / f"s{w}.csv"
        assert cli.main(["simulate", "--config", path, "--seed", "5", "--workers", w, "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    rows = _rows(outs[0].decode())
    assert {r["metric"] for r in rows} >= {"d2d_success", "fa", "md", "rate_with", "mean_interference"}


def test_validate_passes_and_negative_control(tmp_path, capsys):
    path = _write(tmp_path, BASE + "sim.n_trials = 20000\nvalidate.points = 2\n")
    assert cli.main(["validate", "--config", path, "--seed", "3"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert all(r["pass"] == "1" for r in rows)
    assert cli.main(["validate", "--config", path, "--seed", "3", "--set", "validate.iota_scale=1.5"]) == 1
    rows = _rows(capsys.readouterr().out)
    assert any(r["pass"] == "0" for r in rows if r["metric"] in ("fa", "md"))


def test_validate_without_d2d_tier(tmp_path, capsys):
    path = _write(tmp_path, BASE + "lambda_d = 0\nsim.n_trials = 10000\nvalidate.points = 2\n")
    assert cli.main(["validate", "--config", path, "--seed", "1"]) == 0
    rows = _rows(capsys.readouterr().out)
    ident = [r for r in rows if r["metric"].startswith("identity")]
    assert len(ident) == 6
    assert all(r["analytic"] == r["mc_mean"] for r in ident)
    # lambda_d = 0 is only admitted for validation
    assert cli.main(["metrics", "--config", path]) == 2


def test_equilibrium_trace(tmp_path):
    path = _write(tmp_path, "sca.max_iters = 3\n")
    out = tmp_path / "e.csv"
    assert cli.main(["equilibrium", "--config", path, "--out", str(out)]) == 0
    rows = _rows(out.read_text())
    assert [r["kind"] for r in rows] == ["iterate"] * 3 + ["final"]
    assert list(rows[0]) == cli.TRACE_COLUMNS
    meta = json.loads((tmp_path / "e.csv.meta.json").read_text())
    assert meta["summary"]["iterations"] == 3


def test_sweep_evaluate_and_companions(tmp_path, capsys):
    path = _write(tmp_path, BASE + "sweep.variable = pc_dbm\nsweep.values = 20, 30, 40\n"
                  "sweep.mode = evaluate\nsweep.series = eps_covert=0.01; eps_covert=0.05\n")
    assert cli.main(["sweep", "--config", path]) == 0
    rows = _rows(capsys.readouterr().out)
    assert list(rows[0]) == cli.SWEEP_COLUMNS
    assert [r["value"] for r in rows] == ["20.0", "30.0", "40.0"] * 2
    assert [r["series"] for r in rows] == ["0"] * 3 + ["1"] * 3
    for r in rows:
        assert r["utility"] == ("0.0" if r["infeasible"] == "1" else r["raw_utility"])
    # a looser covertness target can only remove infeasibility
    for a, b in zip(rows[:3], rows[3:]):
        assert int(b["infeasible"]) <= int(a["infeasible"])


def test_sweep_cover_mode(tmp_path, capsys):
    path = _write(tmp_path, "pd_dbm = 1\npc_dbm = 30\nsweep.variable = pd_dbm\nsweep.values = 1, 10\nsweep.mode = cover\n")
    assert cli.main(["sweep", "--config", path]) == 0
    rows = _rows(capsys.readouterr().out)
    assert rows[0]["infeasible"] == "0"
    assert abs(float(rows[0]["xi1"])) < 1e-6 or abs(float(rows[0]["xi2"])) < 1e-6
    assert rows[1]["infeasible"] == "1" and rows[1]["utility"] == "0.0"


def test_sweep_requires_variable(tmp_path, capsys):
    path = _write(tmp_path, BASE)
    assert cli.main(["sweep", "--config", path]) == 2
    assert "sweep.variable" in capsys.readouterr().err

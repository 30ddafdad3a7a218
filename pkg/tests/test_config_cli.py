import csv
import json
from pathlib import Path

import numpy as np
import pytest

from dtcsim import config
from dtcsim.cli import main, pair_freqs, parse_box, parse_range
from dtcsim.config import ConfigError

RECIPES = Path(__file__).resolve().parents[1] / "recipes"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr().err


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_bad_value_reports_key_and_line(tmp_path):
    p = tmp_path / "dev.yaml"
    p.write_text("C_q01_fF: 82.9\nE_jq_GHz: many\n")
    with pytest.raises(ConfigError) as exc:
        config.load_device(p)
    assert exc.value.key == "E_jq_GHz"
    assert exc.value.line == 2


def test_unknown_key_and_invalid_value(tmp_path):
    p = tmp_path / "dev.yaml"
    p.write_text("alpha: 0.3\nC_typo_fF: 1\n")
    with pytest.raises(ConfigError) as exc:
        config.load_device(p)
    assert (exc.value.key, exc.value.line) == ("C_typo_fF", 2)
    p.write_text("C_q01_fF: 82.9\n\nalpha: 1.5\n")
    with pytest.raises(ConfigError) as exc:
        config.load_device(p)
    assert (exc.value.key, exc.value.line) == ("alpha", 3)


def test_malformed_yaml_line(tmp_path):
    p = tmp_path / "dev.yaml"
    p.write_text("alpha: 0.3\nE_jq_GHz: [1, 2\n")
    with pytest.raises(ConfigError) as exc:
        config.load_device(p)
    assert exc.value.line is not None


def test_cli_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "dev.yaml"
    p.write_text("E_j1_GHz: -4\n")
    code, err = run(["spectrum", "--device", p, "--grid=0:1:2", "--out", tmp_path], capsys)
    assert code == 2
    assert "line 1" in err and "E_j1_GHz" in err


def test_overrides():
    assert config.parse_override("alpha=0") == ("alpha", 0)
    assert config.parse_override("freqs=[6.4, 6.0]") == ("freqs", [6.4, 6.0])
    with pytest.raises(ConfigError):
        config.parse_override("alpha")
    with pytest.raises(ConfigError):
        config.split_overrides([("nope", 1)], {"dt": 0.01})
    dev, run_opts = config.split_overrides([("alpha", 0.2), ("dt", 0.01)], {"dt": 0.005})
    assert dev == {"alpha": 0.2} and run_opts == {"dt": 0.01}


def test_device_yaml_round_trip(tmp_path, params):
    p = tmp_path / "dev.yaml"
    p.write_text(config.device_to_yaml(params))
    assert config.load_device(p) == params


def test_pulse_missing_parameter(tmp_path):
    p = tmp_path / "pulse.yaml"
    p.write_text("kind: cz\nidle: 1.93\n")
    with pytest.raises(ConfigError) as exc:
        config.load_pulse(p)
    assert exc.value.key == "coupler_flux"


def test_range_and_box_parsing():
    assert np.allclose(parse_range("0:1:3"), [0, 0.5, 1])
    assert np.allclose(parse_range("-90,400"), [-90, 400])
    assert parse_box("frequency=0.38:0.39;duration=100:200") == {
        "frequency": (0.38, 0.39), "duration": (100.0, 200.0)}
    assert pair_freqs(-90.0) == pytest.approx((6.343, 6.433))
    assert pair_freqs(400.0) == pytest.approx((6.433, 6.033))


def test_spectrum_byte_deterministic(tmp_path, capsys):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert run(["spectrum", "--grid=-3.14:3.14:7", "--out", out], capsys)[0] == 0
    for name in ("spectrum.csv", "spectrum.svg"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_spectrum_threads_do_not_change_output(tmp_path, capsys):
    run(["spectrum", "--grid=-3:3:6", "--out", tmp_path / "a"], capsys)
    run(["spectrum", "--grid=-3:3:6", "--threads", 3, "--out", tmp_path / "b"], capsys)
    assert (tmp_path / "a/spectrum.csv").read_bytes() == (tmp_path / "b/spectrum.csv").read_bytes()


def test_alpha_zero_flat_m_mode(tmp_path, capsys):
    code, _ = run(["spectrum", "--grid=-3:3:7", "--set", "alpha=0", "--out", tmp_path], capsys)
    assert code == 0
    m = [float(r["omega_m_GHz"]) for r in read_csv(tmp_path / "spectrum.csv")]
    assert np.ptp(m) < 1e-9


def test_zero_coupling_zz(tmp_path, capsys):
    code, _ = run(["zz", "--grid", "detuning=-90,400;phi=1.8,1.9,2.0", "--set", "coupling_scale=0",
                   "--out", tmp_path], capsys)
    assert code == 0
    rows = read_csv(tmp_path / "zz.csv")
    assert len(rows) == 6
    # exact zero up to rounding of ~13 GHz level sums
    assert all(abs(float(r["xi_zz_kHz"])) < 1e-8 for r in rows)


def test_zz_byte_deterministic(tmp_path, capsys):
    for out in ("a", "b"):
        run(["zz", "--grid", "detuning=-90;phi=1.85:2.0:4", "--out", tmp_path / out], capsys)
    for name in ("zz.csv", "off_points.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_zz_grid_needs_both_axes(tmp_path, capsys):
    assert run(["zz", "--grid", "phi=1.8:2:3", "--out", tmp_path], capsys)[0] == 2


@pytest.mark.parametrize("box", ["", "frequency=0.39:0.38", "frequency=abc"])
def test_gate_bad_box_exit_2(tmp_path, capsys, box):
    code, err = run(["gate", "iswap", "--box", box, "--out", tmp_path], capsys)
    assert code == 2
    assert "box" in err


def test_gate_below_floor_exit_1(tmp_path, capsys):
    code, _ = run(["gate", "iswap", "--box", "frequency=0.3855:0.3855;duration=20:20",
                   "--set", "floor=0.999", "--set", "dt=0.05", "--set", "chevron=0",
                   "--out", tmp_path], capsys)
    assert code == 1
    report = json.loads((tmp_path / "error.json").read_text())
    assert report["error"] == "OptimizationError"
    assert report["best_fidelity"] < 0.999
    assert report["best_params"]["duration"] == 20.0


def test_unknown_override_exit_2(tmp_path, capsys):
    code, err = run(["spectrum", "--set", "nonsense=1", "--out", tmp_path], capsys)
    assert code == 2 and "nonsense" in err


def test_missing_pulse_exit_2(tmp_path, capsys):
    scn = tmp_path / "scn.yaml"
    scn.write_text("kind: bell\npulse: nowhere/cz.yaml\n")
    code, err = run(["scenario", scn, "--out", tmp_path], capsys)
    assert code == 2
    assert "nowhere/cz.yaml" in err


def test_unknown_scenario_kind(tmp_path, capsys):
    scn = tmp_path / "scn.yaml"
    scn.write_text("kind: teleport\n")
    assert run(["scenario", scn, "--out", tmp_path], capsys)[0] == 2


def test_distortion_scenario_deterministic(tmp_path, capsys):
    scn = tmp_path / "d.yaml"
    scn.write_text("kind: distortion\nterms: [[0.03, 300.0]]\ndelays_ns: '0:1500:31'\n")
    for out in ("a", "b"):
        assert run(["scenario", scn, "--out", tmp_path / out], capsys)[0] == 0
    for name in ("distortion.csv", "scenario.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rep = json.loads((tmp_path / "a/scenario.json").read_text())
    assert rep["spread_corrected"] < 1e-3 * rep["spread_uncorrected"]


def test_recipe_resolves_relative_paths(tmp_path, capsys):
    sub = tmp_path / "r"
    sub.mkdir()
    (sub / "dev.yaml").write_text("alpha: 0.0\n")
    (sub / "rec.yaml").write_text("command: spectrum\ndevice: dev.yaml\ngrid: '-1:1:3'\n")
    assert run(["recipe", sub / "rec.yaml", "--out", tmp_path / "o"], capsys)[0] == 0
    m = [float(r["omega_m_GHz"]) for r in read_csv(tmp_path / "o/spectrum.csv")]
    assert np.ptp(m) < 1e-9


def test_shipped_recipes_reference_existing_files():
    recipes = sorted(RECIPES.glob("fig*.yaml"))
    assert len(recipes) >= 12
    for rec in recipes:
        data = config.load_mapping(rec)
        assert data["command"] in ("spectrum", "zz", "gate", "scenario")
        if data.get("device"):
            config.load_device(config.resolve(rec, data["device"]))
        if data["command"] == "scenario":
            scn_path = config.resolve(rec, data["scenario"])
            scn = config.load_mapping(scn_path)
            for key in ("pulse", "cz12", "cz23"):
                if key in scn:
                    config.load_pulse(config.resolve(scn_path, scn[key]))

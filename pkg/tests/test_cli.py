import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from afcmem import __version__
from afcmem.cli import main
from afcmem.constants import C, NU0_TMYAG
from afcmem.dispersion import lorentzian_kk_offset
from afcmem.io import read_csv, write_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
COMB_B = str(CONFIGS / "comb_b.toml")
CAVITY_ONLY = str(CONFIGS / "cavity_only.toml")


def run(*argv):
    return main([str(a) for a in argv])


def load(path):
    return json.loads(Path(path).read_text())


@pytest.fixture(scope="module")
def stage1(tmp_path_factory):
    """Noiseless synthetic comb-free trace and its stage-1 fit."""
    out = tmp_path_factory.mktemp("stage1")
    assert run("synthesize-trace", "--config", CAVITY_ONLY, "--noise", 0, "--out", out) == 0
    code = run("fit-cavity", out / "trace.csv", "--config", CAVITY_ONLY, "--out", out)
    return code, out


def test_version(capsys):
    assert run("--version") == 0
    assert __version__ in capsys.readouterr().out


def test_usage_errors_exit_1():
    assert run() == 1
    assert run("no-such-command") == 1
    assert run("simulate-echo", "--dispersion", "maybe") == 1


def test_fit_cavity_noiseless(stage1):
    code, out = stage1
    assert code == 0
    doc = load(out / "fit_cavity.json")
    assert doc["fit"]["converged"] is True
    assert doc["fit"]["residual_norm"] < 1e-8
    assert doc["peak_alpha_per_cm"] == pytest.approx(doc["peak_alpha_per_m"] / 100)
    assert doc["peak_alpha_per_m"] == pytest.approx(170.0, rel=1e-3)
    for key in ("tool", "config_sha256", "seed", "dispersion", "method", "reference"):
        assert key in doc
    assert doc["tool"]["version"] == __version__
    assert len(doc["config_sha256"]) == 64
    model = read_csv(out / "fit_cavity_model.csv", ("frequency_hz", "power"))
    assert model["power"].size > 6001


def test_fit_cavity_empty_trace(tmp_path, capsys):
    (tmp_path / "empty.csv").write_text("")
    assert run("fit-cavity", tmp_path / "empty.csv", "--out", tmp_path) == 1
    assert "empty.csv:1" in capsys.readouterr().err


def test_fit_cavity_malformed_trace(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("frequency_hz,power\n1,0.2\n2,x\n")
    assert run("fit-cavity", tmp_path / "bad.csv", "--out", tmp_path) == 1
    assert "bad.csv:3" in capsys.readouterr().err


def test_fit_cavity_not_converged(stage1, tmp_path):
    _, out = stage1
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(Path(CAVITY_ONLY).read_text() + "\n[fit]\nmax_iter = 1\n")
    assert run("fit-cavity", out / "trace.csv", "--config", cfg, "--out", tmp_path) == 2
    assert load(tmp_path / "fit_cavity.json")["fit"]["converged"] is False


def test_bad_config_names_field(tmp_path, capsys):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("[cavity]\nr1 = 1.5\n")
    assert run("simulate-echo", "--config", cfg, "--out", tmp_path) == 1
    assert "cavity:" in capsys.readouterr().err
    cfg.write_text("[comb]\ncenter = 0.0\nteeth = 3\n")
    assert run("simulate-echo", "--config", cfg, "--out", tmp_path) == 1
    assert "comb.teeth" in capsys.readouterr().err


def test_fit_comb_pipeline(stage1, tmp_path):
    _, s1 = stage1
    assert run("synthesize-trace", "--config", COMB_B, "--noise", 0, "--out", tmp_path) == 0
    code = run("fit-comb", tmp_path / "trace.csv", "--cavity", s1 / "fit_cavity.json", "--config", COMB_B, "--out", tmp_path)
    assert code == 0
    doc = load(tmp_path / "fit_comb.json")
    assert doc["fit"]["converged"]
    assert doc["fit"]["params"]["delta"] == pytest.approx(23.8160e6, rel=1e-3)
    assert doc["comb_center_detuning_hz"] == pytest.approx(-2.772e9)
    assert (tmp_path / "fit_comb_model.csv").exists()


def test_fit_comb_dispersion_off_recorded(stage1, tmp_path):
    _, s1 = stage1
    run("synthesize-trace", "--config", COMB_B, "--noise", 0, "--dispersion", "off", "--out", tmp_path)
    code = run(
        "fit-comb", tmp_path / "trace.csv", "--cavity", s1 / "fit_cavity.json", "--config", COMB_B,
        "--dispersion", "off", "--out", tmp_path,
    )
    assert code in (0, 2)
    doc = load(tmp_path / "fit_comb.json")
    assert doc["dispersion"] is False
    assert doc["fit"]["diagnostics"]["dispersion"] is False


def test_fit_comb_missing_cavity(tmp_path):
    run("synthesize-trace", "--config", COMB_B, "--out", tmp_path)
    assert run("fit-comb", tmp_path / "trace.csv", "--cavity", tmp_path / "none.json", "--config", COMB_B, "--out", tmp_path) == 1
    (tmp_path / "wrong.json").write_text('{"fit": {}}')
    assert run("fit-comb", tmp_path / "trace.csv", "--cavity", tmp_path / "wrong.json", "--config", COMB_B, "--out", tmp_path) == 1


def test_simulate_echo_comb_b(tmp_path):
    assert run("simulate-echo", "--config", COMB_B, "--out", tmp_path) == 0
    doc = load(tmp_path / "echo.json")
    assert doc["storage_time_s"] == pytest.approx(42e-9, abs=2e-9)
    e = [p["energy"] for p in doc["echo_train"]["pulses"]]
    assert e[1] > e[2] > e[3]
    assert doc["causality_metric"]["pre_input_echo"] is False
    assert 1 in doc["echoes_above_floor"]
    out = read_csv(tmp_path / "echo_output.csv", ("time_s", "re", "im", "intensity"))
    np.testing.assert_allclose(out["intensity"], out["re"] ** 2 + out["im"] ** 2, rtol=1e-12)


def test_simulate_echo_no_comb(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("[cavity]\npin_match = -3.19e9\n[pulse]\necho_period = 42e-9\n")
    assert run("simulate-echo", "--config", cfg, "--out", tmp_path) == 0
    assert load(tmp_path / "echo.json")["echoes_above_floor"] == []


def test_simulate_echo_dispersion_off_flags_pre_echo(tmp_path):
    assert run("simulate-echo", "--config", COMB_B, "--dispersion", "off", "--out", tmp_path) == 0
    doc = load(tmp_path / "echo.json")
    assert doc["causality_metric"]["pre_input_echo"] is True
    assert doc["dispersion"] is False


def test_efficiency_sweep(tmp_path):
    code = run("efficiency-sweep", "--config", COMB_B, "--detunings=-3.8675e9,-2.772e9,2.2765e9", "--jobs", 2, "--out", tmp_path)
    assert code == 0
    rows = read_csv(tmp_path / "efficiency_sweep.csv", ("detuning_hz", "efficiency_dispersion_on", "efficiency_dispersion_off"))
    on, off = rows["efficiency_dispersion_on"], rows["efficiency_dispersion_off"]
    assert np.argmax(on) == 1
    assert np.all(off < on)
    assert load(tmp_path / "efficiency_sweep.json")["best_detuning_hz"] == pytest.approx(-2.772e9)


def test_efficiency_sweep_empty_list(tmp_path):
    assert run("efficiency-sweep", "--config", COMB_B, "--detunings", "", "--out", tmp_path) == 1
    assert run("efficiency-sweep", "--config", COMB_B, "--detunings", "a,b", "--out", tmp_path) == 1


def _alpha_file(path, alpha_fn, half=200e9, spf=32, width=17e9):
    h = width / spf
    n = 2 * int(half / h) + 1
    nu = NU0_TMYAG + (np.arange(n) - n // 2) * h
    write_csv(path, {"frequency_hz": nu, "alpha_per_m": alpha_fn(nu)})
    return nu


def test_kk_transform_zero_absorption(tmp_path):
    _alpha_file(tmp_path / "a.csv", np.zeros_like, half=20e9)
    assert run("kk-transform", tmp_path / "a.csv", "--n-host", 1.8, "--out", tmp_path) == 0
    n = read_csv(tmp_path / "index.csv", ("frequency_hz", "n"))["n"]
    assert np.all(n == 1.8)


def test_kk_transform_lorentzian_oracle(tmp_path):
    k0, hw = 1.0733e-5, 8.5e9

    def alpha(nu):
        # extinction exactly Lorentzian in nu
        k = k0 * hw**2 / ((nu - NU0_TMYAG) ** 2 + hw**2)
        return 4 * np.pi * nu * k / C

    nu = _alpha_file(tmp_path / "a.csv", alpha)
    assert run("kk-transform", tmp_path / "a.csv", "--n-host", 1.8, "--method", "pv", "--out", tmp_path) == 0
    n = read_csv(tmp_path / "index.csv", ("frequency_hz", "n"))["n"]
    exact = lorentzian_kk_offset(nu, k0, NU0_TMYAG, hw)
    assert np.max(np.abs(n - 1.8 - exact)) < 1e-6 * np.max(np.abs(exact))


def test_kk_transform_bad_input(tmp_path):
    (tmp_path / "a.csv").write_text("frequency_hz,alpha_per_m\n1,0\n2,0\n4,0\n")
    assert run("kk-transform", tmp_path / "a.csv", "--out", tmp_path) == 1
    (tmp_path / "b.csv").write_text("frequency_hz,power\n1,0\n2,0\n3,0\n")
    assert run("kk-transform", tmp_path / "b.csv", "--out", tmp_path) == 1


def test_simulate_reflectivity(tmp_path):
    assert run("simulate-reflectivity", "--config", CAVITY_ONLY, "--out", tmp_path) == 0
    doc = load(tmp_path / "reflectivity.json")
    assert doc["impedance_match_detuning_hz"] == pytest.approx(-3.19e9, abs=1e6)
    assert round(doc["free_spectral_range_hz"] / 1e9, 2) == 19.14
    cols = read_csv(tmp_path / "reflectivity.csv")
    assert set(cols) == {"frequency_hz", "detuning_hz", "alpha_per_m", "n", "power", "phase_rad"}


def test_outputs_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("synthesize-trace", "--config", COMB_B, "--seed", 4, "--out", d) == 0
        assert run("simulate-echo", "--config", COMB_B, "--out", d) == 0
    for name in ("trace.csv", "echo_output.csv", "echo.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_console_script_module(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "afcmem.cli", "kk-transform", str(tmp_path / "missing.csv"), "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 1
    assert "Traceback" not in proc.stderr

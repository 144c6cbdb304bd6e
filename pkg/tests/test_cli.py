import json

import numpy as np
import pytest

from tdobench import config as C
from tdobench.cli import main
from tdobench.dsp import Trace
from tdobench.io import read_json, read_sweep_csv, read_trace, write_trace
from tdobench.simulator import synth_tone

FAST = ["--set", "sim.dt=50p", "--set", "sim.duration=12u", "--set", "sim.settle_time=6u"]


def run(*argv):
    return main([str(a) for a in argv])


# ------------------------------------------------------------------- config

@pytest.mark.parametrize("text, value", [("95n", 95e-9), ("141.8M", 141.8e6), ("25p", 25e-12),
                                         ("1.5", 1.5), ("-2m", -2e-3), ("20G", 20e9), ("3K", 3e3)])
def test_si_suffixes(text, value):
    assert C.parse_si(text) == pytest.approx(value, rel=1e-15)


def test_si_rejects_garbage():
    with pytest.raises(ValueError):
        C.parse_si("12 parsecs")


def test_unknown_key_rejected():
    with pytest.raises(C.ConfigKeyError, match="tank.nope"):
        C.resolve("simulate", {}, {"tank.nope": "1"})


def test_nested_config_equals_flat_defaults():
    doc = C.load_config_file(C.bundled("tdo_default.cfg"))
    assert C.resolve("simulate", doc) == C.defaults("simulate")


def test_help_lists_keys_with_units(capsys):
    with pytest.raises(SystemExit):
        run("simulate", "--help")
    out = capsys.readouterr().out
    assert "tank.inductance" in out and "[H]" in out
    assert "sim.dt" in out and "[s]" in out


# ----------------------------------------------------------------- simulate

@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--config", "tdo_default.cfg", "--out", out) == 0
    return out


def test_simulate_default_oscillates(sim_dir):
    s = read_json(sim_dir / "summary.json")
    assert s["oscillating"] is True
    assert s["frequency_hz"] == pytest.approx(s["analytic_frequency_hz"], rel=0.02)
    tr = read_trace(sim_dir / "trace.csv")
    assert tr.sample_rate == 2e9 and len(tr) == s["trace_samples"]


def test_manifest_contents(sim_dir):
    m = read_json(sim_dir / "manifest.json")
    assert m["command"] == "simulate" and m["status"] == "ok"
    assert m["seed"] == 42 and m["tool_version"]
    assert set(m["outputs"]) == {"trace.csv", "summary.json"}
    assert m["config"]["sim.dt"] == 25e-12


def test_replay_is_identical(sim_dir, capsys):
    assert run("replay", sim_dir / "manifest.json") == 0
    out = capsys.readouterr().out
    assert "MISMATCH" not in out and out.count("identical") == 2
    a = (sim_dir / "trace.csv").read_bytes()
    assert a == (sim_dir / "replay" / "trace.csv").read_bytes()


def test_replay_detects_tampering(sim_dir, tmp_path, capsys):
    m = read_json(sim_dir / "manifest.json")
    m["outputs"]["trace.csv"] = "0" * 64
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(m))
    assert run("replay", path) == 2
    assert "MISMATCH  trace.csv" in capsys.readouterr().out


def test_coarse_dt_rejected_naming_key(tmp_path, capsys):
    assert run("simulate", "--set", "sim.dt=1n", "--out", tmp_path) == 1
    assert "sim.dt" in capsys.readouterr().err


def test_binary_trace_format(tmp_path):
    assert run("simulate", *FAST, "--set", "sim.format=bin", "--out", tmp_path) == 0
    assert len(read_trace(tmp_path / "trace.bin")) == 12000


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("TDOBENCH_OUTPUT_DIR", str(tmp_path / "env"))
    assert run("synth", "--set", "synth.duration=1u") == 0
    assert (tmp_path / "env" / "manifest.json").is_file()


# -------------------------------------------------------------------- sweep

def test_sweep_single_point(tmp_path):
    assert run("sweep", *FAST, "--set", "sweep.start=0.1", "--set", "sweep.stop=0.1",
               "--direction", "forward", "--out", tmp_path) == 0
    pts = read_sweep_csv(tmp_path / "sweep.csv").points
    assert len(pts) == 1 and pts[0].oscillating


def test_sweep_both_directions(tmp_path):
    assert run("sweep", *FAST, "--set", "sweep.start=0.1", "--set", "sweep.stop=0.2",
               "--set", "sweep.step=0.05", "--out", tmp_path) == 0
    pts = read_sweep_csv(tmp_path / "sweep.csv").points
    assert [p.direction for p in pts] == ["forward"] * 3 + ["reverse"] * 3


def test_varactor_sweep_span(tmp_path):
    assert run("sweep", *FAST, "--var", "v_vd", "--direction", "forward",
               "--set", "sweep.start=-1.5", "--set", "sweep.stop=5", "--set", "sweep.step=0.5",
               "--out", tmp_path) == 0
    pts = read_sweep_csv(tmp_path / "sweep.csv").points
    f = np.array([p.frequency for p in pts if p.oscillating])
    assert len(pts) == 14 and f.max() - f.min() >= 10e6


def test_sweep_bad_step(tmp_path, capsys):
    assert run("sweep", "--set", "sweep.step=0", "--out", tmp_path) == 1
    assert "sweep.step" in capsys.readouterr().err


# ------------------------------------------------------------------ analyze

@pytest.fixture(scope="module")
def tone_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("tone") / "tone.bin"
    write_trace(path, synth_tone(141.8e6, 0.015, 20e-6, 20e9, am_noise_std=45e-6, seed=1))
    return path


@pytest.mark.parametrize("pipeline, files", [
    ("amplitude", ["histogram.csv", "amplitude.json"]),
    ("spectrum", ["spectrum.csv", "spectrum.json"]),
    ("phase-noise", ["phase_noise.csv", "phase_noise.json"]),
    ("harmonics", ["harmonics.csv", "harmonics.json"]),
])
def test_analyze_pipelines(tone_file, tmp_path, pipeline, files):
    assert run("analyze", tone_file, "--pipeline", pipeline, "--out", tmp_path) == 0
    for f in files:
        assert (tmp_path / f).is_file()
    m = read_json(tmp_path / "manifest.json")
    assert m["inputs"]["trace"]["sha256"]


def test_analyze_amplitude_values(tone_file, tmp_path):
    run("analyze", tone_file, "--out", tmp_path)
    a = read_json(tmp_path / "amplitude.json")
    assert a["mean_v"] == pytest.approx(0.015, rel=1e-3)
    assert a["source_trace"] == str(tone_file)


def test_analyze_spectrum_peak(tmp_path):
    # 5 us record: 200 kHz bins put 141.8 MHz exactly on a bin
    path = tmp_path / "clean.bin"
    write_trace(path, synth_tone(141.8e6, 0.015, 5e-6, 20e9))
    assert run("analyze", path, "--pipeline", "spectrum", "--out", tmp_path / "o") == 0
    s = read_json(tmp_path / "o" / "spectrum.json")
    assert s["peak_dbm"] == pytest.approx(-26.48, abs=0.1)


def test_analyze_bad_trace_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("# sample_rate_hz=1e9\n0.1\nxyz\n")
    assert run("analyze", bad, "--out", tmp_path / "o") == 1
    assert "line 3" in capsys.readouterr().err


def test_analyze_no_carrier_exit_code(tmp_path):
    path = tmp_path / "zero.csv"
    write_trace(path, Trace(np.zeros(1000), 1e9))
    assert run("analyze", path, "--out", tmp_path / "o") == 2


# ---------------------------------------------------------------------- fit

@pytest.mark.parametrize("name, c, c0, temp", [("tuning_11mK.csv", 5.8, 5.7, "11"),
                                               ("tuning_3p4K.csv", 5.9, 5.8, "3400")])
def test_fit_bundled(tmp_path, name, c, c0, temp):
    assert run("fit", name, "--set", f"fit.temperature={temp}", "--out", tmp_path) == 0
    r = read_json(tmp_path / "fit.json")["result"]
    assert r["c_pf"] == pytest.approx(c, abs=0.01) and r["c0_pf"] == pytest.approx(c0, abs=0.01)
    lines = (tmp_path / "fit_report.csv").read_text().strip().splitlines()
    assert lines[0] == "# status=CONVERGED"
    assert len(lines) == 2 + 20


def test_fit_too_few_rows(tmp_path, capsys):
    path = tmp_path / "two.csv"
    path.write_text("v_td,f_hz\n0.05,150e6\n0.1,149e6\n")
    assert run("fit", path, "--out", tmp_path / "o") == 1
    assert "at least 3" in capsys.readouterr().err


def test_fit_nonconvergence_exit_code(tmp_path):
    args = ["fit", "tuning_11mK.csv", "--set", "fit.max_iter=1", "--set", "fit.init_c=1p",
            "--set", "fit.init_c0=20p"]
    assert run(*args, "--out", tmp_path / "a") == 3
    assert read_json(tmp_path / "a" / "fit.json")["result"]["converged"] is False
    assert read_json(tmp_path / "a" / "manifest.json")["status"] == "not-converged"
    assert run(*args, "--allow-nonconverged", "--out", tmp_path / "b") == 0


# ------------------------------------------------------------ synth, screen

def test_synth_replay(tmp_path, capsys):
    assert run("synth", "--set", "synth.duration=2u", "--set", "synth.phase_noise=-100",
               "--set", "synth.seed=5", "--out", tmp_path) == 0
    assert run("replay", tmp_path / "manifest.json") == 0
    assert "MISMATCH" not in capsys.readouterr().out


def test_synth_aliasing_is_validation_error(tmp_path):
    assert run("synth", "--set", "synth.f0=11G", "--out", tmp_path) == 1


@pytest.mark.parametrize("name, ndr", [("bd6-cryo", True), ("bd6-rt", True), ("bd6-02-25k", False)])
def test_screen_builtin_models(tmp_path, name, ndr):
    assert run("screen", name, "--out", tmp_path) == 0
    assert read_json(tmp_path / "screen.json")["has_ndr"] is ndr


def test_screen_monotone_curve(tmp_path):
    path = tmp_path / "iv.csv"
    path.write_text("v,i\n0,0\n0.1,1e-6\n0.2,2e-6\n0.3,3e-6\n")
    assert run("screen", path, "--out", tmp_path / "o") == 0
    assert read_json(tmp_path / "o" / "screen.json")["has_ndr"] is False

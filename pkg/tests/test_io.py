import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tdobench.analytic import BiasPoint
from tdobench.dsp import PhaseNoiseProfile, Spectrum, Trace
from tdobench.fitting import PF, fit_capacitances, synthetic_dataset
from tdobench.io import (
    SWEEP_COLUMNS,
    TraceFormatError,
    dumps,
    fit_result_from_dict,
    fit_result_to_dict,
    read_json,
    read_phase_noise_csv,
    read_spectrum_csv,
    read_sweep_csv,
    read_trace,
    sha256,
    write_json,
    write_phase_noise_csv,
    write_spectrum_csv,
    write_sweep_csv,
    write_trace,
)
from tdobench.simulator import SweepPoint, SweepResult

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize("suffix", [".csv", ".bin", ".f64"])
def test_trace_round_trip_exact(tmp_path, suffix):
    rng = np.random.default_rng(0)
    tr = Trace(rng.standard_normal(1000) * 0.015, 20e9, "V", 1.25e-5)
    path = tmp_path / f"t{suffix}"
    write_trace(path, tr)
    back = read_trace(path)
    assert np.array_equal(back.samples, tr.samples)
    assert (back.sample_rate, back.unit, back.t0) == (tr.sample_rate, tr.unit, tr.t0)


@settings(max_examples=30)
@given(arrays(float, st.integers(2, 50), elements=finite))
def test_trace_csv_round_trip_property(tmp_path_factory, x):
    path = tmp_path_factory.mktemp("t") / "p.csv"
    write_trace(path, Trace(x, 1e9))
    assert np.array_equal(read_trace(path).samples, x)


def test_trace_writers_are_deterministic(tmp_path):
    tr = Trace(np.linspace(-1, 1, 100), 1e9)
    for suffix in (".csv", ".bin"):
        a, b = tmp_path / f"a{suffix}", tmp_path / f"b{suffix}"
        write_trace(a, tr)
        write_trace(b, tr)
        assert sha256(a) == sha256(b)


def test_binary_layout(tmp_path):
    path = tmp_path / "t.bin"
    write_trace(path, Trace(np.array([1.0, -2.0]), 2e9))
    raw = path.read_bytes()
    assert len(raw) == 64 + 16
    assert np.frombuffer(raw[64:], "<f8").tolist() == [1.0, -2.0]


def test_csv_bad_value_names_line(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("# sample_rate_hz=1e9\n0.1\n0.2\noops\n")
    with pytest.raises(TraceFormatError, match="line 4"):
        read_trace(path)


def test_csv_missing_sample_rate(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("0.1\n0.2\n")
    with pytest.raises(TraceFormatError, match="sample_rate"):
        read_trace(path)


def test_csv_too_short(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("# sample_rate_hz=1e9\n0.1\n")
    with pytest.raises(TraceFormatError):
        read_trace(path)


def test_binary_truncated_names_offset(tmp_path):
    path = tmp_path / "t.bin"
    write_trace(path, Trace(np.zeros(4), 1e9))
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(TraceFormatError, match="offset 88"):
        read_trace(path)


def test_binary_bad_preamble(tmp_path):
    path = tmp_path / "t.bin"
    path.write_bytes(b"\xff" * 80)
    with pytest.raises(TraceFormatError, match="offset 0"):
        read_trace(path)
    path.write_bytes(b"{}")
    with pytest.raises(TraceFormatError, match="preamble"):
        read_trace(path)


def test_binary_nonfinite_sample(tmp_path):
    path = tmp_path / "t.bin"
    write_trace(path, Trace(np.zeros(4), 1e9))
    raw = bytearray(path.read_bytes())
    raw[64 + 16:64 + 24] = np.array([np.nan], "<f8").tobytes()
    path.write_bytes(bytes(raw))
    with pytest.raises(TraceFormatError, match="offset 80"):
        read_trace(path)


def test_missing_file(tmp_path):
    with pytest.raises(TraceFormatError, match="no such file"):
        read_trace(tmp_path / "nope.csv")


# --------------------------------------------------------------------- tables

def test_sweep_round_trip(tmp_path):
    pts = [SweepPoint(BiasPoint(0.1, 0.0, 11.0), "forward", True, 0.098, 148.2e6, 9.9e-6, -50.1),
           SweepPoint(BiasPoint(0.6), "reverse", False, math.nan, math.nan, math.nan, math.nan,
                      False, "DomainError: V >= Vd")]
    path = tmp_path / "s.csv"
    write_sweep_csv(path, SweepResult(pts))
    assert path.read_text().splitlines()[0] == ",".join(SWEEP_COLUMNS)
    back = read_sweep_csv(path).points
    assert back[0] == pts[0]
    assert back[1].error == pts[1].error and math.isnan(back[1].amplitude)
    assert back[1].converged is False


def test_spectrum_round_trip(tmp_path):
    spec = Spectrum(np.arange(5) * 1e6, np.array([-90.0, -26.48, -80.0, -100.0, -120.0]), 1.5e6)
    path = tmp_path / "sp.csv"
    write_spectrum_csv(path, spec)
    back = read_spectrum_csv(path)
    assert np.array_equal(back.freqs, spec.freqs) and np.array_equal(back.power_dbm, spec.power_dbm)
    assert back.rbw == spec.rbw and back.impedance == 50.0


def test_spectrum_wrong_columns(tmp_path):
    path = tmp_path / "sp.csv"
    path.write_text("# rbw_hz=1\nf,p\n1,2\n")
    with pytest.raises(ValueError, match="freq_hz"):
        read_spectrum_csv(path)


def test_phase_noise_round_trip(tmp_path):
    prof = PhaseNoiseProfile(np.array([1e5, 1e6]), np.array([-100.5, -115.0]), 141.8e6, -26.5,
                             np.array([True, False]))
    path = tmp_path / "pn.csv"
    write_phase_noise_csv(path, prof)
    back = read_phase_noise_csv(path)
    assert np.array_equal(back.offsets, prof.offsets)
    assert np.array_equal(back.dbc_per_hz, prof.dbc_per_hz)
    assert back.valid.tolist() == [True, False]
    assert back.carrier_hz == prof.carrier_hz


def test_phase_noise_without_valid_column(tmp_path):
    path = tmp_path / "pn.csv"
    path.write_text("# carrier_hz=1e8\n# carrier_dbm=-20\noffset_hz,dbc_per_hz\n1e5,-100\n")
    assert read_phase_noise_csv(path).valid.tolist() == [True]


# ----------------------------------------------------------------------- json

def test_fit_result_round_trip(tmp_path):
    r = fit_capacitances(synthetic_dataset(5.8 * PF, 5.7 * PF, noise=1e-3))
    path = tmp_path / "fit.json"
    write_json(path, fit_result_to_dict(r))
    back = fit_result_from_dict(read_json(path))
    assert back.c == r.c and back.c0 == r.c0
    assert np.array_equal(back.covariance, r.covariance)
    assert back.converged == r.converged


def test_dumps_sorted_and_nan_safe():
    text = dumps({"b": np.float64(math.nan), "a": np.arange(2), "c": np.bool_(True)})
    assert text.index('"a"') < text.index('"b"')
    assert '"nan"' in text and "true" in text

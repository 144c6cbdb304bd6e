import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.signal import hilbert

from oracles import naive_dft_power_dbm
from tdobench.dsp import (
    DBM_FLOOR,
    NoCarrierError,
    Trace,
    amplitude_stats,
    analytic_signal,
    bandpass,
    bandpass_mask,
    envelope,
    extract_frequency,
    harmonics,
    phase_noise,
    power_spectrum,
)
from tdobench.simulator import synth_tone

FS = 20e9
F0 = 141.8e6


def tone(amplitude=0.015, f=F0, duration=20e-6, fs=FS, **kw):
    return synth_tone(f, amplitude, duration, fs, **kw)


# ------------------------------------------------------------------- Trace

def test_trace_validation():
    with pytest.raises(ValueError):
        Trace(np.zeros(1), 1.0)
    with pytest.raises(ValueError):
        Trace(np.zeros(4), 0.0)
    with pytest.raises(ValueError):
        Trace(np.array([0.0, np.nan]), 1.0)
    t = Trace(np.zeros(10), 5.0, t0=1.0)
    assert t.duration == 2.0 and t.times[1] == pytest.approx(1.2)


# ---------------------------------------------------------------- bandpass

def test_bandpass_keeps_in_band_tone():
    tr = tone()
    out = bandpass(tr, F0, 50e6)
    assert len(out) == len(tr)
    assert np.max(np.abs(out.samples - tr.samples)) < 1e-3 * 0.015


def test_bandpass_rejects_third_harmonic():
    tr = tone(f=3 * F0)
    out = bandpass(tr, F0, 50e6)
    ratio = np.sqrt(np.mean(out.samples ** 2) / np.mean(tr.samples ** 2))
    assert 20 * np.log10(ratio + 1e-300) < -60


def test_bandpass_removes_harmonics_keeps_fundamental():
    tr = tone(harmonics=[(2, -10.0), (3, -6.0), (5, -20.0)])
    out = bandpass(tr, F0, 50e6)
    assert np.max(np.abs(out.samples - tone().samples)) < 1e-10


def test_bandpass_outside_nyquist():
    with pytest.raises(ValueError):
        bandpass(tone(fs=2e9), 990e6, 50e6)
    with pytest.raises(ValueError):
        bandpass(tone(), 10e6, 50e6)


def test_bandpass_mask_shape():
    f = np.array([F0, F0 + 25e6, F0 + 25e6 + 1.25e6, F0 + 25e6 + 2.5e6, F0 + 40e6])
    m = bandpass_mask(f, F0, 50e6)
    assert m[0] == 1 and m[1] == 1
    assert m[2] == pytest.approx(0.5)
    assert m[3] == 0 and m[4] == 0


def test_bandpass_idempotent_brick():
    x = np.random.default_rng(0).standard_normal(4096)
    tr = Trace(x, 1e9)
    once = bandpass(tr, 200e6, 50e6, edge="brick")
    twice = bandpass(once, 200e6, 50e6, edge="brick")
    assert np.max(np.abs(twice.samples - once.samples)) < 1e-12


def test_bandpass_idempotent_raised_cosine_on_band_limited_signal():
    # the ramp bins are scaled twice, so idempotence holds when they are empty
    tr = tone(harmonics=[(2, -20.0)])
    once = bandpass(tr, F0, 50e6)
    twice = bandpass(once, F0, 50e6)
    assert np.max(np.abs(twice.samples - once.samples)) < 1e-12


def test_bandpass_overlap_add_matches_full_transform():
    x = np.random.default_rng(1).standard_normal(1 << 14)
    tr = Trace(x, 1e9)
    full = bandpass(tr, 200e6, 50e6)
    chunked = bandpass(tr, 200e6, 50e6, full_length_limit=1 << 12)
    inner = slice(2048, -2048)
    err = np.max(np.abs(full.samples[inner] - chunked.samples[inner]))
    assert err < 0.05 * np.max(np.abs(full.samples))


# ---------------------------------------------------------------- envelope

def test_analytic_signal_matches_scipy():
    x = np.random.default_rng(2).standard_normal(1001)
    assert np.allclose(analytic_signal(x), hilbert(x), atol=1e-12)
    x = np.random.default_rng(3).standard_normal(1000)
    assert np.allclose(analytic_signal(x), hilbert(x), atol=1e-12)


def test_envelope_of_pure_tone_is_constant():
    # record holds an integer number of periods: exact everywhere
    env = envelope(tone(amplitude=0.02, f=142e6, duration=2e-6, fs=2e9))
    assert np.max(np.abs(env / 0.02 - 1)) < 1e-12
    # otherwise the circular transform errs near the ends only
    env = envelope(tone(amplitude=0.02, duration=20e-6 + 1.3e-9, fs=2e9), trim=0.1)
    assert np.max(np.abs(env / 0.02 - 1)) < 1e-3


def test_envelope_recovers_am_depth():
    m = 0.1
    tr = tone(am_depth=m, am_freq=1e6)
    env = envelope(tr, trim=0.0)  # 20 whole modulation periods
    depth = (env.max() - env.mean()) / env.mean()
    assert depth == pytest.approx(m, rel=0.01)


def test_envelope_trim():
    tr = tone(duration=1e-6, fs=2e9)
    assert envelope(tr, trim=0.0).size == 2000
    assert envelope(tr, trim=0.01).size == 2000 - 2 * 20


@given(st.floats(1e-6, 1e3))
def test_envelope_scales_linearly(a):
    x = np.random.default_rng(4).standard_normal(512)
    tr = Trace(x, 1.0)
    assert np.allclose(envelope(tr.with_samples(a * x)), a * envelope(tr), rtol=1e-12)


def test_envelope_noise_ratio_point_three_percent():
    tr = tone(am_noise_std=45e-6, duration=100e-6, seed=5)
    st_ = amplitude_stats(envelope(bandpass(tr, F0, 50e6)))
    assert st_.std / st_.mean == pytest.approx(0.003, abs=0.0002)


# --------------------------------------------------------- amplitude stats

def test_amplitude_stats_constant():
    s = amplitude_stats(np.full(1000, 0.015))
    assert s.std == 0.0 and s.mean == pytest.approx(0.015)
    assert s.counts.sum() == 1000


def test_amplitude_stats_gaussian():
    rng = np.random.default_rng(6)
    env = 0.015 + 45e-6 * rng.standard_normal(200_000)
    s = amplitude_stats(env, 5000)
    assert s.std == pytest.approx(45e-6, rel=0.03)
    assert len(s.counts) == 5000 and len(s.edges) == 5001
    assert s.counts.sum() == env.size
    assert s.std == pytest.approx(np.std(env, ddof=1), rel=1e-12)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=200))
def test_amplitude_stats_counts_sum(values):
    s = amplitude_stats(np.array(values), 50)
    assert s.counts.sum() == len(values) and s.std >= 0


def test_amplitude_stats_empty():
    with pytest.raises(ValueError):
        amplitude_stats(np.array([]))


# ---------------------------------------------------------------- spectrum

def test_power_spectrum_15mV_peak():
    spec = power_spectrum(tone())
    k = int(np.argmax(spec.power_dbm))
    assert spec.freqs[k] == pytest.approx(F0)
    expected = 10 * math.log10((0.015 / math.sqrt(2)) ** 2 / 50 / 1e-3)
    assert expected == pytest.approx(-26.48, abs=0.005)
    assert spec.power_dbm[k] == pytest.approx(expected, abs=1e-9)
    assert spec.rbw == pytest.approx(FS / len(tone()))


@pytest.mark.parametrize("n, n_fft", [(64, 64), (63, 63), (50, 128), (37, 80)])
def test_power_spectrum_matches_naive_dft(n, n_fft):
    x = np.random.default_rng(n).standard_normal(n)
    spec = power_spectrum(Trace(x, 1e6), n_fft=n_fft)
    ref = naive_dft_power_dbm(x, n_fft)
    assert np.allclose(spec.power_dbm, ref, atol=1e-9)


def test_power_spectrum_zero_signal_floor():
    spec = power_spectrum(Trace(np.zeros(128), 1e3))
    assert np.all(spec.power_dbm == DBM_FLOOR)


def test_power_spectrum_two_equal_tones():
    fs, n = 1e9, 10000
    t = np.arange(n) / fs
    x = 0.01 * np.sin(2 * np.pi * 100e6 * t) + 0.01 * np.sin(2 * np.pi * 150e6 * t)
    spec = power_spectrum(Trace(x, fs))
    a = spec.power_dbm[int(round(100e6 / spec.df))]
    b = spec.power_dbm[int(round(150e6 / spec.df))]
    assert abs(a - b) < 0.05


@given(st.integers(8, 400), st.integers(0, 2 ** 32 - 1))
def test_parseval(n, seed):
    x = np.random.default_rng(seed).standard_normal(n)
    p = power_spectrum(Trace(x, 1.0)).linear_watts().sum()
    assert p == pytest.approx(np.mean(x ** 2) / 50, rel=1e-9)


@pytest.mark.parametrize("pad", [1, 2, 3, 8])
def test_peak_padding_invariant(pad):
    tr = tone(f=142e6, duration=2e-6)  # bin-centred
    base = power_spectrum(tr).power_dbm.max()
    assert power_spectrum(tr, n_fft=pad * len(tr)).power_dbm.max() == pytest.approx(base, abs=0.05)


def test_power_spectrum_short_nfft():
    with pytest.raises(ValueError):
        power_spectrum(tone(duration=1e-7), n_fft=10)


def test_power_spectrum_window_coherent_gain():
    spec = power_spectrum(tone(), window="hann")
    assert spec.power_dbm.max() == pytest.approx(-26.48, abs=0.01)


# --------------------------------------------------------------- harmonics

def test_harmonics_pure_tone():
    for h in harmonics(power_spectrum(tone()), F0, 5):
        assert h.dbc < -60


def test_harmonics_second_at_minus_30():
    rows = harmonics(power_spectrum(tone(harmonics=[(2, -30.0)])), F0, 4)
    assert rows[0].order == 2 and rows[0].dbc == pytest.approx(-30, abs=0.5)
    assert rows[0].frequency == pytest.approx(2 * F0)


def test_harmonics_clipped_sine_odd_dominate():
    tr = tone()
    clipped = tr.with_samples(np.clip(tr.samples, -0.01, 0.01))
    rows = {h.order: h.dbc for h in harmonics(power_spectrum(clipped), F0, 5)}
    assert rows[3] > rows[2] + 40 and rows[5] > rows[4] + 40


def test_harmonics_beyond_span():
    with pytest.raises(ValueError):
        harmonics(power_spectrum(tone(fs=2e9)), F0, 10)


# ------------------------------------------------------- frequency extraction

def test_extract_frequency_long_trace():
    tr = tone(f=141.8e6 + 123.0, duration=1.6e-3, fs=2e9)
    assert extract_frequency(tr) == pytest.approx(141.8e6 + 123.0, abs=1e3)


def test_extract_frequency_resolution_beats_rbw_over_100():
    tr = tone(f=141.83e6, duration=10e-6, fs=2e9)
    rbw = 1 / tr.duration
    assert abs(extract_frequency(tr) - 141.83e6) < rbw / 100


def test_extract_frequency_bin_centre():
    tr = tone(duration=10e-6, fs=2e9)
    assert extract_frequency(tr, pad=1) == pytest.approx(F0, rel=1e-12)


def test_extract_frequency_two_equal_tones():
    fs, n = 1e9, 10000
    t = np.arange(n) / fs
    x = np.sin(2 * np.pi * 100e6 * t) + np.sin(2 * np.pi * 150e6 * t)
    with pytest.raises(NoCarrierError):
        extract_frequency(Trace(x, fs))


def test_extract_frequency_noise_only():
    x = np.random.default_rng(7).standard_normal(4096)
    with pytest.raises(NoCarrierError):
        extract_frequency(Trace(x, 1e9))


# ------------------------------------------------------------- phase noise

OFFSETS = np.array([1e5, 3e5, 1e6, 3e6, 1e7])


def test_phase_noise_recovers_injected_level():
    tr = tone(duration=200e-6, phase_noise_dbc=-100.0, seed=11)
    prof = phase_noise(tr, OFFSETS)
    assert np.all(prof.valid)
    assert np.all(np.abs(prof.dbc_per_hz + 100) < 2)
    assert prof.carrier_hz == pytest.approx(F0, abs=10e3)
    assert prof.carrier_dbm == pytest.approx(-26.48, abs=0.1)


def test_phase_noise_amplitude_invariant():
    tr = tone(duration=100e-6, phase_noise_dbc=-100.0, seed=12)
    a = phase_noise(tr, OFFSETS).dbc_per_hz
    b = phase_noise(tr.with_samples(37.0 * tr.samples), OFFSETS).dbc_per_hz
    assert np.allclose(a, b, atol=0.1)


def test_phase_noise_clean_tone_floor():
    prof = phase_noise(tone(duration=100e-6), OFFSETS)
    assert np.all(prof.dbc_per_hz < -140)


def test_phase_noise_smoothing_reduces_scatter():
    tr = tone(duration=200e-6, phase_noise_dbc=-100.0, seed=13)
    offs = np.logspace(5.5, 7, 12)
    raw = phase_noise(tr, offs, smoothing=0.0).dbc_per_hz
    avg = phase_noise(tr, offs, smoothing=0.1).dbc_per_hz
    assert np.std(avg + 100) < np.std(raw + 100)
    with pytest.raises(ValueError):
        phase_noise(tr, offs, smoothing=1.0)


def test_phase_noise_flags_offsets_below_resolution():
    prof = phase_noise(tone(duration=20e-6, phase_noise_dbc=-100.0), np.array([1e4, 1e5, 1e6, 3e7]))
    assert list(prof.valid) == [False, False, True, False]


def test_phase_noise_needs_carrier():
    x = np.random.default_rng(8).standard_normal(1 << 14)
    with pytest.raises(NoCarrierError):
        phase_noise(Trace(x, 20e9), OFFSETS)


def test_phase_noise_bad_offsets():
    with pytest.raises(ValueError):
        phase_noise(tone(), np.array([1e6, 1e5]))

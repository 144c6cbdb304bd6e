"""Trace analysis: bandpass filtering, Hilbert envelope, amplitude statistics,
zero-padded power spectra in dBm, SSB phase noise, harmonic tables and
carrier-frequency estimation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
from scipy import fft as sfft
from scipy import signal as ssig

DBM_FLOOR = -300.0
FULL_LENGTH_LIMIT = 2 ** 26


class NoCarrierError(ValueError):
    """No single dominant spectral line was found."""


@dataclass(eq=False)
class Trace:
    """Uniformly sampled real voltage record."""

    samples: np.ndarray
    sample_rate: float
    unit: str = "V"
    t0: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1 or self.samples.size < 2:
            raise ValueError("trace needs a 1-D array of at least 2 samples")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("trace contains NaN or Inf")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.sample_rate

    def with_samples(self, samples) -> "Trace":
        return Trace(samples, self.sample_rate, self.unit, self.t0)


# ----------------------------------------------------------------------
# Filtering and envelope
# ----------------------------------------------------------------------

def bandpass_mask(freqs, f_center, bandwidth, edge="raised-cosine"):
    """Real, zero-phase frequency response of the bandpass filter.

    Unity on |f - f_center| <= bandwidth/2. With ``edge="raised-cosine"`` the
    response rolls off to zero over a further bandwidth/20 on each side;
    ``edge="brick"`` is a hard cut.
    """
    d = np.abs(np.asarray(freqs) - f_center) - bandwidth / 2
    mask = (d <= 0).astype(float)
    if edge == "raised-cosine":
        w = bandwidth / 20
        ramp = (d > 0) & (d < w)
        mask[ramp] = 0.5 * (1 + np.cos(np.pi * d[ramp] / w))
    elif edge != "brick":
        raise ValueError(f"unknown edge shape {edge!r}")
    return mask


def bandpass(trace: Trace, f_center: float, bandwidth: float, edge="raised-cosine",
             full_length_limit: int = FULL_LENGTH_LIMIT) -> Trace:
    """Zero-phase bandpass by masking the spectrum.

    Traces longer than ``full_length_limit`` samples are filtered by
    overlap-add convolution with the equivalent symmetric FIR response.
    """
    nyq = trace.sample_rate / 2
    lo, hi = f_center - bandwidth / 2, f_center + bandwidth / 2
    if edge == "raised-cosine":
        lo -= bandwidth / 20
        hi += bandwidth / 20
    if not (0 < lo and hi < nyq):
        raise ValueError(f"band [{lo:g}, {hi:g}] Hz does not fit inside (0, {nyq:g}) Hz")
    x = trace.samples
    n = x.size
    if n <= full_length_limit:
        spec = sfft.rfft(x)
        spec *= bandpass_mask(sfft.rfftfreq(n, 1 / trace.sample_rate), f_center, bandwidth, edge)
        return trace.with_samples(sfft.irfft(spec, n))
    taps = _fir_from_mask(trace.sample_rate, f_center, bandwidth, edge, min(full_length_limit, 2 ** 20))
    return trace.with_samples(ssig.oaconvolve(x, taps, mode="same"))


def _fir_from_mask(fs, f_center, bandwidth, edge, m):
    m -= (m + 1) % 2  # odd length keeps the response symmetric about the centre tap
    h = sfft.irfft(bandpass_mask(sfft.rfftfreq(m, 1 / fs), f_center, bandwidth, edge), m)
    return np.roll(h, m // 2)


def analytic_signal(x: np.ndarray) -> np.ndarray:
    """x + j*H[x] via a one-sided spectrum (negative bins zeroed, positive doubled)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    half = sfft.rfft(x)
    full = np.zeros(n, dtype=complex)
    full[: half.size] = half
    full[1: (n + 1) // 2] *= 2.0
    return sfft.ifft(full, overwrite_x=True)


def envelope(trace: Trace, trim: float = 0.01) -> np.ndarray:
    """Instantaneous amplitude |x + jH[x]|.

    The input should already be band-limited around one carrier; bandpass
    first otherwise. ``trim`` of the samples is dropped at each end, where the
    circular transform corrupts the estimate.
    """
    env = np.abs(analytic_signal(trace.samples))
    k = int(trim * env.size)
    return env[k: env.size - k] if k else env


class AmplitudeStats(NamedTuple):
    envelope: np.ndarray
    counts: np.ndarray
    edges: np.ndarray
    mean: float
    std: float


def amplitude_stats(env, n_bins: int = 5000) -> AmplitudeStats:
    env = np.asarray(env, dtype=float)
    if env.size == 0:
        raise ValueError("empty envelope")
    lo, hi = env.min(), env.max()
    # a spread within a few ulps cannot be split into n_bins distinct edges
    if hi - lo <= 4 * n_bins * np.spacing(max(abs(lo), abs(hi))):
        counts, edges = np.array([env.size]), np.array([lo, hi])
    else:
        counts, edges = np.histogram(env, bins=n_bins, range=(lo, hi))
    std = float(env.std(ddof=1)) if env.size > 1 and lo != hi else 0.0
    return AmplitudeStats(env, counts, edges, float(env.mean()), std)


# ----------------------------------------------------------------------
# Spectra
# ----------------------------------------------------------------------

@dataclass(eq=False)
class Spectrum:
    freqs: np.ndarray
    power_dbm: np.ndarray
    rbw: float
    impedance: float = 50.0

    @property
    def df(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def linear_watts(self) -> np.ndarray:
        return 1e-3 * 10 ** (self.power_dbm / 10)


def power_spectrum(trace: Trace, n_fft: Optional[int] = None, window=None,
                   impedance: float = 50.0) -> Spectrum:
    """One-sided power spectrum in dBm.

    X_k is the DFT zero-padded to ``n_fft``; the RMS amplitude per bin is
    |X_k| / (sqrt(2) * N/2) with N the number of recorded samples (so padding
    does not change tone power) and P = 10 log10(Xrms^2 / (1 mW * Z)).
    The DC and Nyquist bins carry no sqrt(2) since they have no mirror image.
    An optional ``window`` (name or array) is normalised by its coherent gain.
    """
    x = trace.samples
    n = x.size
    n_fft = n if n_fft is None else int(n_fft)
    if n_fft < n:
        raise ValueError(f"n_fft = {n_fft} is shorter than the trace ({n} samples)")
    if window is None:
        norm = n / 2
        spec = sfft.rfft(x, n_fft)
    else:
        w = ssig.get_window(window, n, fftbins=False) if isinstance(window, str) else np.asarray(window)
        norm = w.sum() / 2
        spec = sfft.rfft(x * w, n_fft)
    p = np.abs(spec)
    p *= 1.0 / norm
    p **= 2
    p *= 0.5
    p[0] *= 0.5
    if n_fft % 2 == 0:
        p[-1] *= 0.5
    p /= 1e-3 * impedance
    with np.errstate(divide="ignore"):
        dbm = 10 * np.log10(p, out=p)
    np.maximum(dbm, DBM_FLOOR, out=dbm)
    freqs = sfft.rfftfreq(n_fft, 1 / trace.sample_rate)
    return Spectrum(freqs, dbm, trace.sample_rate / n, impedance)


class Harmonic(NamedTuple):
    order: int
    frequency: float
    dbc: float


def harmonics(spectrum: Spectrum, f0: float, max_order: int = 5, search_bins: int = 2) -> List[Harmonic]:
    """Peak level near k*f0 (k = 2..max_order) relative to the carrier."""
    fmax = spectrum.freqs[-1]
    if max_order * f0 + search_bins * spectrum.df > fmax:
        raise ValueError(f"harmonic {max_order} of {f0:g} Hz exceeds the spectrum span")

    def peak(f):
        k = int(round(f / spectrum.df))
        sl = slice(max(k - search_bins, 0), k + search_bins + 1)
        j = int(np.argmax(spectrum.power_dbm[sl])) + sl.start
        return spectrum.freqs[j], spectrum.power_dbm[j]

    _, carrier = peak(f0)
    out = []
    for order in range(2, max_order + 1):
        f, p = peak(order * f0)
        out.append(Harmonic(order, float(f), float(p - carrier)))
    return out


def _dominant_bin(mag_db: np.ndarray, min_prominence_db=10.0, rival_margin_db=6.0, guard=8) -> int:
    """Index of the single dominant line in a log-magnitude spectrum."""
    body = mag_db[1:]
    k = int(np.argmax(body)) + 1
    peak = mag_db[k]
    if not np.isfinite(peak):
        raise NoCarrierError("spectrum is identically zero")
    if peak - np.median(body) < min_prominence_db:
        raise NoCarrierError("no spectral line stands 10 dB above the median level")
    rest = mag_db.copy()
    rest[max(k - guard, 0): k + guard + 1] = -np.inf
    rest[0] = -np.inf
    if peak - rest.max() < rival_margin_db:
        raise NoCarrierError("two or more comparable spectral lines; carrier is ambiguous")
    return k


def extract_frequency(trace: Trace, pad: Optional[int] = None) -> float:
    """Carrier frequency from a Gaussian-windowed, zero-padded spectrum.

    The log-magnitude of a Gaussian-windowed line is a parabola, so a
    three-point parabolic fit around the peak bin is essentially unbiased.
    """
    x = trace.samples - trace.samples.mean()
    n = x.size
    if pad is None:
        pad = 2 if n <= 2 ** 22 else 1
    w = ssig.windows.gaussian(n, std=n / 8, sym=True)
    n_fft = sfft.next_fast_len(pad * n, real=True)
    mag = np.abs(sfft.rfft(x * w, n_fft))
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(mag)
    k = _dominant_bin(db, guard=8 * pad)
    a, b, c = db[k - 1], db[k], db[k + 1]
    denom = a - 2 * b + c
    delta = 0.5 * (a - c) / denom if denom != 0 else 0.0
    return (k + delta) * trace.sample_rate / n_fft


# ----------------------------------------------------------------------
# Phase noise
# ----------------------------------------------------------------------

@dataclass(eq=False)
class PhaseNoiseProfile:
    offsets: np.ndarray
    dbc_per_hz: np.ndarray
    carrier_hz: float
    carrier_dbm: float
    valid: np.ndarray = None

    def __post_init__(self):
        if self.valid is None:
            self.valid = np.ones(self.offsets.shape, dtype=bool)

    def at(self, offset: float) -> float:
        return float(np.interp(np.log10(offset), np.log10(self.offsets), self.dbc_per_hz))


class PhaseResidual(NamedTuple):
    phase: np.ndarray       # carrier-removed phase, rad
    sample_rate: float      # rate of ``phase``
    carrier_hz: float
    carrier_dbm: float


def phase_residual(trace: Trace, bandwidth: float = 50e6, trim: float = 0.01,
                   taper: float = 0.01) -> PhaseResidual:
    """Instantaneous phase of the carrier with its linear trend removed.

    The analytic signal is formed only over ``bandwidth`` around the carrier
    and shifted to baseband, which decimates it to roughly ``bandwidth``
    samples per second; the phase is its unwrapped angle.
    """
    x = np.array(trace.samples, dtype=float)
    n = x.size
    fs = trace.sample_rate
    # taper the ends so the record's circular wrap does not smear the carrier
    k_taper = max(int(taper * n), 1)
    ramp = 0.5 * (1 - np.cos(np.pi * np.arange(k_taper) / k_taper))
    x[:k_taper] *= ramp
    x[n - k_taper:] *= ramp[::-1]
    spec = sfft.rfft(x)
    del x
    mag_db = 20 * np.log10(np.abs(spec) + 1e-300)
    kc = _dominant_bin(mag_db, guard=16)
    carrier_hz = kc * fs / n
    carrier_rms = np.abs(spec[kc]) / (np.sqrt(2) * (n - k_taper) / 2)
    carrier_dbm = 10 * np.log10(carrier_rms ** 2 / (1e-3 * 50))
    half = int(bandwidth / 2 * n / fs)
    half = min(half, kc - 1, spec.size - 1 - kc)
    m = sfft.next_fast_len(4 * half + 1)
    base = np.zeros(m, dtype=complex)
    base[: half + 1] = spec[kc: kc + half + 1]
    base[m - half:] = spec[kc - half: kc]
    del spec
    z = sfft.ifft(base) * (2.0 * m / n)
    fs_bb = fs * m / n
    phase = np.unwrap(np.angle(z))
    k = int(max(trim, taper * 1.5) * phase.size) + 1
    phase = phase[k: phase.size - k]
    phase = ssig.detrend(phase, type="linear")
    return PhaseResidual(phase, fs_bb, float(carrier_hz), float(carrier_dbm))


def _welch_phase(res: PhaseResidual, n_segments: int, window: str):
    nperseg = int(2 * res.phase.size // (n_segments + 1))
    f, s_phi = ssig.welch(res.phase, fs=res.sample_rate, window=window, nperseg=nperseg,
                          noverlap=nperseg // 2, detrend="linear", scaling="density")
    return f[1:], 10 * np.log10(s_phi[1:] / 2 + 1e-300)


def _band_average(f, l_db, offsets, frac):
    """Mean of the linear PSD over f in [o/(1+frac), o*(1+frac)]; interpolated
    where that band holds fewer than two bins."""
    out = np.interp(np.log10(offsets), np.log10(f), l_db)
    if frac <= 0:
        return out
    lin = 10 ** (l_db / 10)
    lo = np.searchsorted(f, offsets / (1 + frac), side="left")
    hi = np.searchsorted(f, offsets * (1 + frac), side="right")
    for j, (a, b) in enumerate(zip(lo, hi)):
        if b - a >= 2:
            out[j] = 10 * np.log10(lin[a:b].mean())
    return out


def phase_noise(trace: Trace, offsets: Sequence[float], bandwidth: float = 50e6,
                n_segments: int = 8, window: str = "hann",
                smoothing: float = 0.1) -> PhaseNoiseProfile:
    """Single-sideband phase noise L(f) = S_phi(f)/2 in dBc/Hz.

    S_phi is a Welch estimate (50 % overlap) of the carrier phase residual.
    Each reported value averages the linear PSD over offset*(1 +/- smoothing),
    much like video averaging on an analyzer; set ``smoothing=0`` for plain
    log interpolation. Entries below the frequency resolution or beyond
    bandwidth/2 are flagged invalid.
    """
    if n_segments < 1:
        raise ValueError("n_segments must be >= 1")
    if not 0 <= smoothing < 1:
        raise ValueError("smoothing must lie in [0, 1)")
    offsets = np.asarray(offsets, dtype=float)
    if np.any(offsets <= 0) or np.any(np.diff(offsets) <= 0):
        raise ValueError("offsets must be positive and increasing")
    res = phase_residual(trace, bandwidth)
    f, l_f = _welch_phase(res, n_segments, window)
    out = _band_average(f, l_f, offsets, smoothing)
    valid = (offsets >= 2 * f[0]) & (offsets <= bandwidth / 2) & (offsets >= 10 / trace.duration)
    return PhaseNoiseProfile(offsets, out, res.carrier_hz, res.carrier_dbm, valid)


def welch_phase_spectrum(trace: Trace, bandwidth: float = 50e6, n_segments: int = 8,
                         window: str = "hann"):
    """Raw (f, L(f)) Welch grid behind :func:`phase_noise`."""
    return _welch_phase(phase_residual(trace, bandwidth), n_segments, window)

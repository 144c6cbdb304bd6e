"""Device models: tunnel-diode I-V, junction and varactor capacitance,
varactor leakage, NDR screening and cryogenic frequency drift.

All model objects are frozen dataclasses and can be shared between
threads or worker processes without copying.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq, fsolve

ArrayLike = Union[float, Sequence[float], np.ndarray]


class RangeError(ValueError):
    """Argument outside the span over which a model is defined."""


class DomainError(ValueError):
    """Argument where the model formula is mathematically undefined."""


class SingularityError(ArithmeticError):
    """Differential resistance requested at a stationary point of I(V)."""


def _scalar_or_array(x: np.ndarray, like):
    if np.ndim(like) == 0:
        return float(x)
    return x


# ----------------------------------------------------------------------
# Tunnel diode
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class DiodeModel:
    """Tunnel-diode DC characteristic.

    ``variant="analytic"`` uses

        I(V) = Ip * (V/Vp) * exp(1 - V/Vp) + I0 * (exp(V/Vt) - 1)

    (a tunnelling hump peaking at ``Vp`` plus a thermionic diffusion branch).
    ``variant="tabulated"`` interpolates measured knots with a shape
    preserving monotone cubic, so no NDR is invented between knots.
    """

    variant: str = "analytic"
    peak_current: float = 0.0
    peak_voltage: float = 0.05
    saturation_current: float = 0.0
    thermal_voltage: float = 0.025
    knots_v: Tuple[float, ...] = ()
    knots_i: Tuple[float, ...] = ()
    temperature_label: str = ""
    v_range: Tuple[float, float] = (-0.1, 0.5)

    def __post_init__(self):
        if self.variant == "analytic":
            if self.peak_voltage <= 0 or self.thermal_voltage <= 0:
                raise ValueError("peak_voltage and thermal_voltage must be positive")
            if self.peak_current < 0 or self.saturation_current < 0:
                raise ValueError("currents must be non-negative")
        elif self.variant == "tabulated":
            v = np.asarray(self.knots_v, dtype=float)
            i = np.asarray(self.knots_i, dtype=float)
            if v.size < 2 or v.size != i.size:
                raise ValueError("tabulated diode needs >= 2 (v, i) knots of equal length")
            if np.any(np.diff(v) <= 0):
                raise ValueError("tabulated knots must be strictly increasing in voltage")
            object.__setattr__(self, "v_range", (float(v[0]), float(v[-1])))
        else:
            raise ValueError(f"unknown diode variant {self.variant!r}")

    @classmethod
    def analytic(cls, peak_current, peak_voltage, saturation_current, thermal_voltage,
                 temperature_label="", v_range=(-0.1, 0.5)):
        return cls("analytic", peak_current, peak_voltage, saturation_current,
                   thermal_voltage, temperature_label=temperature_label, v_range=tuple(v_range))

    @classmethod
    def tabulated(cls, voltages, currents, temperature_label=""):
        return cls("tabulated", knots_v=tuple(map(float, voltages)),
                   knots_i=tuple(map(float, currents)), temperature_label=temperature_label)

    @classmethod
    def from_csv(cls, path, temperature_label=""):
        v, i = read_curve_csv(path, ("v", "i"))
        return cls.tabulated(v, i, temperature_label=temperature_label or Path(path).stem)

    @cached_property
    def _pchip(self) -> PchipInterpolator:
        return PchipInterpolator(np.asarray(self.knots_v), np.asarray(self.knots_i), extrapolate=False)

    @property
    def conductance_scale(self) -> float:
        """Characteristic |dI/dV| used to decide when a slope counts as zero."""
        if self.variant == "analytic":
            if self.peak_current > 0:
                return self.peak_current / self.peak_voltage
            return max(self.saturation_current / self.thermal_voltage, 1e-300)
        slopes = np.abs(np.diff(self.knots_i) / np.diff(self.knots_v))
        return max(float(slopes.max()), 1e-300)


def _check_range(model: DiodeModel, v: np.ndarray):
    lo, hi = model.v_range
    if np.any(v < lo) or np.any(v > hi) or not np.all(np.isfinite(v)):
        raise RangeError(f"voltage outside diode model span [{lo:g}, {hi:g}] V")


def _analytic_current(m: DiodeModel, v):
    x = v / m.peak_voltage
    return (m.peak_current * x * np.exp(1.0 - x)
            + m.saturation_current * np.expm1(v / m.thermal_voltage))


def _analytic_slope(m: DiodeModel, v):
    x = v / m.peak_voltage
    return (m.peak_current / m.peak_voltage * np.exp(1.0 - x) * (1.0 - x)
            + m.saturation_current / m.thermal_voltage * np.exp(v / m.thermal_voltage))


def diode_current(model: DiodeModel, v: ArrayLike):
    """Diode current in amperes at bias ``v`` (volts); scalar or array."""
    va = np.asarray(v, dtype=float)
    _check_range(model, va)
    if model.variant == "analytic":
        out = _analytic_current(model, va)
    else:
        out = model._pchip(va)
    return _scalar_or_array(out, v)


def diode_conductance(model: DiodeModel, v: ArrayLike):
    """dI/dV in siemens (signed)."""
    va = np.asarray(v, dtype=float)
    _check_range(model, va)
    if model.variant == "analytic":
        out = _analytic_slope(model, va)
    else:
        out = model._pchip.derivative()(va)
    return _scalar_or_array(out, v)


def differential_resistance(model: DiodeModel, v: float, rtol: float = 1e-5) -> float:
    """Signed small-signal resistance dV/dI at ``v``.

    Raises SingularityError where |dI/dV| is below ``rtol`` times the
    model's conductance scale (the peak and valley of the curve).
    """
    g = float(diode_conductance(model, float(v)))
    if abs(g) < rtol * model.conductance_scale:
        raise SingularityError(f"dI/dV ~ 0 at V = {v:g} V (stationary point of the I-V curve)")
    return 1.0 / g


class ScreeningReport(NamedTuple):
    has_ndr: bool
    ndr_interval: Optional[Tuple[float, float]]
    min_didv: float


def screen_diode(model: DiodeModel, v_range: Tuple[float, float] = None,
                 step: float = 1e-3) -> ScreeningReport:
    """Look for negative differential resistance on a uniform voltage grid.

    Reports the longest contiguous grid interval with dI/dV < 0 and the
    most negative slope found anywhere in ``v_range``. Slopes within
    ``1e-9 * conductance_scale`` of zero count as flat (interpolation round-off).
    """
    lo, hi = v_range if v_range is not None else model.v_range
    lo = max(lo, model.v_range[0])
    hi = min(hi, model.v_range[1])
    n = int(round((hi - lo) / step)) + 1
    grid = np.linspace(lo, hi, max(n, 2))
    g = np.asarray(diode_conductance(model, grid))
    neg = g < -1e-9 * model.conductance_scale
    if not neg.any():
        return ScreeningReport(False, None, float(g.min()))
    # longest run of consecutive negative-slope grid points
    edges = np.diff(np.concatenate(([0], neg.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1) - 1
    k = int(np.argmax(stops - starts))
    return ScreeningReport(True, (float(grid[starts[k]]), float(grid[stops[k]])), float(g.min()))


def calibrate_cryo_diode(v_op=0.1, i_op=10e-6, r_op=-5e3, v_valley=0.26,
                         thermal_voltage=0.025) -> DiodeModel:
    """Solve the analytic parameters for a given operating point.

    Finds (Ip, Vp, I0) so that I(v_op) = i_op, dV/dI(v_op) = r_op and the
    valley (second zero of dI/dV) sits at ``v_valley``.
    """
    vt = thermal_voltage

    def residual(p):
        ip, vp, ln_i0 = p
        m = DiodeModel.analytic(ip, vp, math.exp(ln_i0), vt)
        return [_analytic_current(m, v_op) / i_op - 1.0,
                _analytic_slope(m, v_op) * r_op - 1.0,
                _analytic_slope(m, v_valley) * abs(r_op)]

    # the pure tunnelling term gives Vp = v_op/3 and Ip = i_op*e^2/3 for -5 kOhm
    guess = [i_op * math.e ** 2 / 3, v_op / 3, math.log(1e-12)]
    sol, info, ier, msg = fsolve(residual, guess, full_output=True, xtol=1e-13)
    if ier != 1:
        raise RuntimeError(f"diode calibration did not converge: {msg}")
    ip, vp, ln_i0 = map(float, sol)
    return DiodeModel.analytic(ip, vp, math.exp(ln_i0), vt, temperature_label="22mK")


# Frozen result of calibrate_cryo_diode() with the defaults above; the test
# suite re-solves and compares.
BD6_CRYO = DiodeModel.analytic(
    peak_current=2.4631900973741216e-05,
    peak_voltage=0.03333179338369605,
    saturation_current=4.256862200399159e-12,
    thermal_voltage=0.025,
    temperature_label="22mK",
)

# Room temperature: datasheet peak current, broader thermal branch.
BD6_RT = DiodeModel.analytic(
    peak_current=20e-6,
    peak_voltage=0.05,
    saturation_current=2e-9,
    thermal_voltage=0.045,
    temperature_label="RT",
)

# A screening reject: monotone low-temperature curve without negative slope.
BD6_02_25K = DiodeModel.tabulated(
    [0.0, 0.02, 0.05, 0.08, 0.12, 0.16, 0.20, 0.25, 0.30, 0.35, 0.40],
    [0.0, 2.0e-6, 4.5e-6, 6.0e-6, 6.8e-6, 7.2e-6, 7.6e-6, 8.5e-6, 11e-6, 18e-6, 35e-6],
    temperature_label="25K",
)


# ----------------------------------------------------------------------
# Capacitances
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class JunctionCapParams:
    """Depletion capacitance C0 * (1 - V/Vd)^(-1/2) of the tunnel junction."""

    c0: float = 5.7e-12
    vd: float = 0.5

    def __post_init__(self):
        if self.c0 <= 0 or self.vd <= 0:
            raise ValueError("c0 and vd must be positive")


def junction_capacitance(p: JunctionCapParams, v_td: ArrayLike):
    va = np.asarray(v_td, dtype=float)
    if np.any(va >= p.vd):
        raise DomainError(f"V_TD must stay below the diffusion potential Vd = {p.vd:g} V")
    return _scalar_or_array(p.c0 / np.sqrt(1.0 - va / p.vd), v_td)


@dataclass(frozen=True)
class VaractorModel:
    """Varactor capacitance and leakage versus the varactor bias V_VD.

    Positive V_VD is reverse bias. Capacitance is either
    ``c0 * (1 + V_VD/vd)^(-exponent)`` or a monotone-cubic interpolation of
    ``cap_knots``. Leakage is linear interpolation of ``leak_knots``.
    """

    c0: float = 1.3e-12
    vd: float = 1.6
    exponent: float = 0.34
    cap_knots: Tuple[Tuple[float, float], ...] = ()
    leak_knots: Tuple[Tuple[float, float], ...] = ()
    low_leak_window: Tuple[float, float] = (-1.3, 17.0)
    leak_threshold: float = 1e-9
    v_range: Tuple[float, float] = (-1.55, 20.0)

    def __post_init__(self):
        if self.cap_knots:
            v = np.array([k[0] for k in self.cap_knots])
            c = np.array([k[1] for k in self.cap_knots])
            if np.any(np.diff(v) <= 0) or np.any(c <= 0):
                raise ValueError("capacitance knots need increasing V and positive C")
            object.__setattr__(self, "v_range", (float(v[0]), float(v[-1])))
        else:
            if self.c0 <= 0 or self.vd <= 0 or self.exponent <= 0:
                raise ValueError("c0, vd and exponent must be positive")
            if self.v_range[0] <= -self.vd:
                raise ValueError("capacitance formula diverges at V_VD = -vd")
        if self.leak_knots:
            v = np.array([k[0] for k in self.leak_knots])
            if np.any(np.diff(v) <= 0):
                raise ValueError("leakage knots must be strictly increasing in V")

    @cached_property
    def _cap_pchip(self):
        v, c = np.array(self.cap_knots).T
        return PchipInterpolator(v, c, extrapolate=False)

    @property
    def leak_v(self) -> np.ndarray:
        return np.array([k[0] for k in self.leak_knots], dtype=float)

    @property
    def leak_i(self) -> np.ndarray:
        return np.array([k[1] for k in self.leak_knots], dtype=float)


def varactor_capacitance(m: VaractorModel, v_vd: ArrayLike):
    va = np.asarray(v_vd, dtype=float)
    lo, hi = m.v_range
    if np.any(va < lo) or np.any(va > hi):
        raise RangeError(f"V_VD outside varactor model span [{lo:g}, {hi:g}] V")
    if m.cap_knots:
        out = m._cap_pchip(va)
    else:
        out = m.c0 * (1.0 + va / m.vd) ** (-m.exponent)
    return _scalar_or_array(out, v_vd)


def varactor_leakage(m: VaractorModel, v_vd: ArrayLike):
    """Interpolated leakage current.

    Returns ``(current, clamped)``; outside the knot span the end knot value
    is used and ``clamped`` is True.
    """
    va = np.asarray(v_vd, dtype=float)
    if not m.leak_knots:
        if np.ndim(v_vd) == 0:
            return 0.0, False
        return np.zeros_like(va), np.zeros(va.shape, dtype=bool)
    kv, ki = m.leak_v, m.leak_i
    out = np.interp(va, kv, ki)
    clamped = (va < kv[0]) | (va > kv[-1])
    if np.ndim(v_vd) == 0:
        return float(out), bool(clamped)
    return out, clamped


def synthetic_leakage_table(window=(-1.3, 17.0), threshold=1e-9, forward_scale=0.027,
                            breakdown_scale=0.3, v_min=-1.7, v_max=20.0):
    """Leakage knots with exponential turn-on whose magnitude crosses
    ``threshold`` exactly at the window edges."""
    lo, hi = window
    v = np.unique(np.round(np.concatenate([
        np.arange(v_min, lo + 0.3, 0.01),
        np.arange(lo + 0.3, hi - 1.0, 0.25),
        np.arange(hi - 1.0, v_max + 1e-9, 0.05),
        [lo, hi],
    ]), 10))
    i = (-threshold * np.exp(-(v - lo) / forward_scale)
         + threshold * np.exp((v - hi) / breakdown_scale))
    return tuple(zip(v.tolist(), i.tolist()))


def fit_varactor_curve(totals, c_par, exponent_guess=0.35):
    """Solve (c0, vd, exponent) so that c_par + C_VD(V) hits three points.

    ``totals`` is a sequence of three (V_VD, C_total) pairs, one at V_VD = 0.
    """
    pts = sorted(totals)
    by_v = dict(pts)
    if 0.0 not in by_v:
        raise ValueError("need a point at V_VD = 0")
    c0 = by_v[0.0] - c_par
    (v_a, c_a), (v_b, c_b) = [(v, c) for v, c in pts if v != 0.0]
    ra = math.log((c_a - c_par) / c0)
    rb = math.log((c_b - c_par) / c0)
    v_neg = min(v_a, v_b)

    def mismatch(vd):
        return ra * math.log1p(v_b / vd) - rb * math.log1p(v_a / vd)

    vd = brentq(mismatch, abs(v_neg) * (1 + 1e-9), 1e3)
    exponent = -ra / math.log1p(v_a / vd)
    return c0, vd, exponent


# Reference fixed capacitance C = C_PAR + C_VD(V_VD) at three varactor biases.
C_PAR_DEFAULT = 4.5e-12
_REFERENCE_C = ((-1.5, 7.9e-12), (0.0, 5.8e-12), (5.0, 5.3e-12))


def default_varactor() -> VaractorModel:
    c0, vd, exponent = fit_varactor_curve(_REFERENCE_C, C_PAR_DEFAULT)
    return VaractorModel(c0=c0, vd=vd, exponent=exponent,
                         leak_knots=synthetic_leakage_table(),
                         v_range=(-1.55, 20.0))


# ----------------------------------------------------------------------
# Temperature drift
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ThermalDriftModel:
    """Piecewise-linear oscillation-frequency drift versus stage temperature.

    Flat below ``t_lo``; ``sign * sensitivity * (T - t_lo)`` up to ``t_hi``;
    held at the ``t_hi`` value above that.
    """

    sensitivity_hz_per_mk: float = 300.0
    t_lo_mk: float = 60.0
    t_hi_mk: float = 120.0
    sign: int = -1

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise ValueError("sign must be +1 or -1")
        if not self.t_hi_mk > self.t_lo_mk >= 0:
            raise ValueError("need 0 <= t_lo_mk < t_hi_mk")


def thermal_shift(d: ThermalDriftModel, t_mk: float):
    """Frequency shift in Hz; returns ``(shift, extrapolated)``."""
    if t_mk < 0:
        raise DomainError("temperature must be non-negative")
    t_eff = min(max(t_mk, d.t_lo_mk), d.t_hi_mk)
    shift = d.sign * d.sensitivity_hz_per_mk * (t_eff - d.t_lo_mk)
    return float(shift) + 0.0, t_mk > d.t_hi_mk


# ----------------------------------------------------------------------
# CSV curves
# ----------------------------------------------------------------------

def read_curve_csv(path, columns=("v", "i")):
    """Read a two-column curve file with a header row and ``#`` comments."""
    xs, ys = [], []
    with open(path, newline="") as fh:
        rows = (line for line in fh if line.strip() and not line.lstrip().startswith("#"))
        reader = csv.reader(rows)
        header = [h.strip().lower() for h in next(reader)]
        if header != list(columns):
            raise ValueError(f"{path}: expected header {','.join(columns)}, got {','.join(header)}")
        for n, row in enumerate(reader, start=2):
            try:
                x, y = (float(c) for c in row)
            except ValueError as exc:
                raise ValueError(f"{path}: malformed row {n}: {row}") from exc
            xs.append(x)
            ys.append(y)
    return np.array(xs), np.array(ys)


def write_curve_csv(path, x, y, columns=("v", "i"), comment=None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(",".join(columns) + "\n")
        for a, b in zip(x, y):
            fh.write(f"{float(a)!r},{float(b)!r}\n")

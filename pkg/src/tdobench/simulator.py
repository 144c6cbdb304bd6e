"""Time-domain simulation of the tunnel-diode LC oscillator.

The board is reduced to three states: the tank voltage, the inductor current
and a slow bias node fed through ``r_bias`` and decoupled to ground. The bias
node is what turns rectified diode current into an operating-point shift, so
bias sweeps that carry the state from point to point show hysteresis.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.constants import k as K_BOLTZMANN
from scipy.optimize import brentq
from scipy.signal import resample

from . import _kernel
from .analytic import (
    BiasPoint,
    TankConfig,
    parallel_loss_resistance,
    resonant_frequency,
    thermal_capacitance_factor,
    total_capacitance,
)
from .dsp import Trace, envelope, extract_frequency, NoCarrierError
from .models import BD6_CRYO, DiodeModel, varactor_capacitance

CHUNK_STEPS = 1 << 20


class SimulationError(RuntimeError):
    """Integrator produced a non-finite state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class ConfigError(ValueError):
    """A simulation setting violates a sampling or timing constraint.

    ``key`` names the offending setting.
    """

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class NoiseSpec:
    """Noise injected into the circuit.

    ``current_density`` is a white current noise (A/sqrt(Hz), one-sided)
    across the tank. ``bias_ripple`` adds (frequency Hz, amplitude V) tones to
    the bias source and ``bias_walk`` a random walk (V/sqrt(s)).
    """

    current_density: float = 0.0
    bias_ripple: Tuple[Tuple[float, float], ...] = ()
    bias_walk: float = 0.0

    def __post_init__(self):
        if self.current_density < 0 or self.bias_walk < 0:
            raise ValueError("noise amplitudes must be non-negative")
        for f, a in self.bias_ripple:
            if f <= 0 or a < 0:
                raise ValueError("ripple tones need f > 0 and amplitude >= 0")


# Calibrated so the default tank at V_TD = 0.1 V shows about -115 dBc/Hz at
# 1 MHz offset.
BATTERY_NOISE = NoiseSpec(current_density=2.7e-11)
# Bench supply picking up an AM broadcast carrier (ripple amplitude assumed).
BENCH_SUPPLY_NOISE = NoiseSpec(current_density=2.7e-11, bias_ripple=((810e3, 5e-3),))


@dataclass(frozen=True)
class CircuitState:
    v_tank: float
    i_l: float
    v_dc: float
    time: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(x) for x in (self.v_tank, self.i_l, self.v_dc, self.time)):
            raise ValueError("circuit state must be finite")


@dataclass(frozen=True)
class SimRunConfig:
    tank: TankConfig = field(default_factory=TankConfig)
    diode: Optional[DiodeModel] = BD6_CRYO
    bias: BiasPoint = field(default_factory=lambda: BiasPoint(0.1))
    duration: float = 20e-6
    dt: float = 25e-12
    seed: int = 42
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    sample_rate: float = 2e9
    settle_time: float = 10e-6
    kick: float = 10e-6
    initial_state: Optional[CircuitState] = None

    @property
    def expected_frequency(self) -> float:
        return resonant_frequency(self.tank.inductance, total_capacitance(self.tank, self.bias))

    @property
    def decimation(self) -> int:
        return int(round(1.0 / (self.sample_rate * self.dt)))

    def validate(self):
        f = self.expected_frequency
        if self.dt <= 0 or self.dt > 1.0 / (20.0 * f):
            raise ConfigError("dt", f"{self.dt:g} s exceeds 1/(20 f) = {1 / (20 * f):g} s")
        if self.sample_rate < 4.0 * f:
            raise ConfigError("sample_rate", f"{self.sample_rate:g} S/s is below 4 f = {4 * f:g}")
        ratio = 1.0 / (self.sample_rate * self.dt)
        if self.decimation < 1 or abs(ratio - self.decimation) > 1e-6 * ratio:
            raise ConfigError("sample_rate", "must be dt^-1 divided by an integer")
        if not self.duration > self.settle_time >= 0:
            raise ConfigError("duration", "must exceed settle_time")
        if self.seed < 0:
            raise ConfigError("seed", "must be non-negative")
        return self


# ----------------------------------------------------------------------
# Integration
# ----------------------------------------------------------------------

def _diode_arrays(diode: Optional[DiodeModel]):
    empty = np.zeros(1)
    if diode is None:
        return _kernel.DIODE_NONE, empty, empty, np.zeros((4, 1))
    if diode.variant == "analytic":
        p = np.array([diode.peak_current, diode.peak_voltage,
                      diode.saturation_current, diode.thermal_voltage])
        return _kernel.DIODE_ANALYTIC, p, empty, np.zeros((4, 1))
    pc = diode._pchip
    return _kernel.DIODE_PCHIP, empty, np.ascontiguousarray(pc.x), np.ascontiguousarray(pc.c)


def _diode_scalar(diode, v):
    kind, p, xk, ck = _diode_arrays(diode)
    return _kernel.diode_eval(kind, p, xk, ck, v)


def dc_operating_point(cfg: SimRunConfig) -> CircuitState:
    """Quiescent state: V_src = v_node + (R_bias + R_loss) * I_D(v_node)."""
    tank = cfg.tank
    r = tank.r_bias + tank.r_loss
    v_src = cfg.bias.v_td
    g = lambda vn: vn + r * _diode_scalar(cfg.diode, vn) - v_src
    lo, hi = min(v_src, 0.0) - 0.5, max(v_src, 0.0) + 0.5
    v_node = brentq(g, lo, hi, xtol=1e-15, rtol=1e-14)
    i = _diode_scalar(cfg.diode, v_node)
    v_dc = v_src - tank.r_bias * i
    return CircuitState(v_node - v_dc, i, v_dc, 0.0)


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    kick, current, walk = ss.spawn(3)
    return (np.random.default_rng(kick), np.random.default_rng(current),
            np.random.default_rng(walk))


class SimResult:
    """Output of :func:`simulate`: the post-settle tank trace plus run totals."""

    def __init__(self, cfg, trace, final_state, mean_diode_current, mean_v_dc):
        self.config = cfg
        self.trace = trace
        self.final_state = final_state
        self.mean_diode_current = mean_diode_current
        self.mean_v_dc = mean_v_dc

    @cached_property
    def c_total(self) -> float:
        """Tank capacitance at the rectified (time-averaged) bias-node voltage."""
        b = self.config.bias
        return total_capacitance(self.config.tank, replace(b, v_td=self.mean_v_dc))

    @cached_property
    def noise_floor(self) -> float:
        """Tank-voltage amplitude expected from noise alone (no oscillation)."""
        cfg = self.config
        c = self.c_total
        kt = K_BOLTZMANN * max(cfg.bias.temperature_mk, 1e-3) * 1e-3
        r_par = parallel_loss_resistance(cfg.tank, c)
        if math.isinf(r_par):
            injected = 0.0
        else:
            injected = cfg.noise.current_density ** 2 * r_par / (4 * c)
        return math.sqrt(2 * (injected + kt / c))

    @cached_property
    def _envelope(self):
        # the pickup coil is inductive: only the AC part of the tank voltage counts
        ac = self.trace.samples - self.trace.samples.mean()
        return envelope(self.trace.with_samples(ac), trim=0.01)

    @cached_property
    def amplitude(self) -> float:
        env = self._envelope
        return float(env[-max(env.size // 10, 2):].mean())

    @cached_property
    def envelope_drift(self) -> float:
        """Relative envelope change across the last 10 % of the trace."""
        env = self._envelope
        tail = env[-max(env.size // 10, 4):]
        slope = np.polyfit(np.arange(tail.size), tail, 1)[0]
        return float(abs(slope) * tail.size / max(tail.mean(), 1e-300))

    @property
    def converged(self) -> bool:
        return self.envelope_drift < 1e-3

    @property
    def oscillating(self) -> bool:
        return self.amplitude > 10 * self.noise_floor and self.converged

    @cached_property
    def frequency(self) -> float:
        if not self.amplitude > 10 * self.noise_floor:
            return math.nan
        try:
            return extract_frequency(self.trace)
        except NoCarrierError:
            return math.nan

    @property
    def analytic_frequency(self) -> float:
        """LC resonance at the rectified operating point."""
        cfg = self.config
        f = resonant_frequency(cfg.tank.inductance, self.c_total)
        return f / math.sqrt(thermal_capacitance_factor(cfg.tank, f, cfg.bias.temperature_mk))

    @property
    def output_power_dbm(self) -> float:
        a = output_amplitude(self.amplitude, self.config.tank)
        return 10 * math.log10(max(a * a / 2 / 50 / 1e-3, 1e-30))


def simulate(cfg: SimRunConfig) -> SimResult:
    """Integrate the circuit for ``cfg.duration`` and return the post-settle trace.

    Starts from ``cfg.initial_state`` when given (sweep continuation),
    otherwise from the DC operating point plus a small deterministic kick and
    a thermal-noise draw. Identical configs give bit-identical traces.
    """
    cfg.validate()
    tank, b = cfg.tank, cfg.bias
    kind, p, xk, ck = _diode_arrays(cfg.diode)
    rng_kick, rng_i, rng_w = _streams(cfg.seed)

    c_fixed = tank.c_par
    if tank.varactor is not None:
        c_fixed += varactor_capacitance(tank.varactor, b.v_vd)
    jc0, jvd = (tank.junction.c0, tank.junction.vd) if tank.junction is not None else (0.0, 1.0)
    ctherm = thermal_capacitance_factor(tank, cfg.expected_frequency, b.temperature_mk)
    if tank.varactor is not None and tank.model_leakage and tank.varactor.leak_knots:
        lv, li = tank.varactor.leak_v, tank.varactor.leak_i
    else:
        lv = li = np.zeros(0)
    rip = np.array(cfg.noise.bias_ripple, dtype=float).reshape(-1, 2)

    if cfg.initial_state is None:
        s0 = dc_operating_point(cfg)
        c0 = total_capacitance(tank, b)
        kt = K_BOLTZMANN * max(b.temperature_mk, 1e-3) * 1e-3
        v0 = s0.v_tank + cfg.kick + math.sqrt(kt / c0) * rng_kick.standard_normal()
        state = np.array([v0, s0.i_l, s0.v_dc])
    else:
        s = cfg.initial_state
        state = np.array([s.v_tank, s.i_l, s.v_dc])

    dt = cfg.dt
    n_total = int(round(cfg.duration / dt))
    decim = cfg.decimation
    settle_steps = int(round(cfg.settle_time / dt))
    sigma_i = cfg.noise.current_density * math.sqrt(1.0 / (2.0 * dt))
    sigma_w = cfg.noise.bias_walk * math.sqrt(dt)
    out = np.empty(n_total // decim)
    walk0 = 0.0
    sum_id = sum_vdc = 0.0
    n_acc = 0
    k = 0
    while k < n_total:
        n = min(CHUNK_STEPS, n_total - k)
        n -= n % decim if n < n_total - k else 0
        inoise = rng_i.standard_normal(n) * sigma_i if sigma_i > 0 else np.zeros(n)
        if sigma_w > 0:
            vwalk = walk0 + np.cumsum(rng_w.standard_normal(n) * sigma_w)
            walk0 = vwalk[-1]
        else:
            vwalk = np.zeros(n)
        status, s_id, s_vdc, n_a = _kernel.integrate(
            state, k * dt, dt, n, decim, inoise, vwalk, b.v_td, rip[:, 0].copy(), rip[:, 1].copy(),
            kind, p, xk, ck, lv, li, b.v_vd, c_fixed, jc0, jvd, ctherm,
            tank.inductance, tank.r_loss, tank.r_bias, tank.c_decouple,
            out[k // decim:], max(settle_steps - k, 0))
        if status != 0:
            raise SimulationError(
                f"integrator diverged near t = {(k + n) * dt:g} s; last state "
                f"v={state[0]:g} V, i_L={state[1]:g} A, v_dc={state[2]:g} V", state.copy())
        sum_id += s_id
        sum_vdc += s_vdc
        n_acc += n_a
        k += n
    first = int(math.ceil(settle_steps / decim))
    t0 = (first + 1) * decim * dt
    trace = Trace(out[first:], cfg.sample_rate, "V", t0)
    final = CircuitState(float(state[0]), float(state[1]), float(state[2]), n_total * dt)
    n_acc = max(n_acc, 1)
    return SimResult(cfg, trace, final, sum_id / n_acc, sum_vdc / n_acc)


# ----------------------------------------------------------------------
# Sweeps
# ----------------------------------------------------------------------

class SweepPoint(NamedTuple):
    bias: BiasPoint
    direction: str
    oscillating: bool
    amplitude: float
    frequency: float
    mean_current: float
    output_power_dbm: float
    converged: bool = True
    error: str = ""


@dataclass
class SweepResult:
    points: List[SweepPoint] = field(default_factory=list)
    final_state: Optional[CircuitState] = None

    def leg(self, direction: str) -> List[SweepPoint]:
        return [p for p in self.points if p.direction == direction]

    def oscillating_set(self, direction: str, var: str = "v_td") -> List[float]:
        return sorted(getattr(p.bias, var) for p in self.leg(direction) if p.oscillating)


def point_seed(seed: int, value: float) -> int:
    """Seed tied to the bias value, so a point sees the same noise in either direction."""
    return int(np.random.SeedSequence([seed, int(round(value * 1e9)) + (1 << 40)]).generate_state(1)[0])


def _run_point(cfg: SimRunConfig, direction: str, var: str):
    try:
        r = simulate(cfg)
        pt = SweepPoint(cfg.bias, direction, r.oscillating, r.amplitude, r.frequency,
                        r.mean_diode_current, r.output_power_dbm, r.converged)
        return pt, r.final_state
    except (SimulationError, ValueError) as exc:
        nan = math.nan
        return SweepPoint(cfg.bias, direction, False, nan, nan, nan, nan, False, str(exc)), None


def bias_sweep(template: SimRunConfig, values: Sequence[float], direction: str = "forward",
               continuation: bool = True, var: str = "v_td", workers: int = 1,
               start_state: Optional[CircuitState] = None) -> SweepResult:
    """Simulate a bias sweep leg.

    ``forward`` visits ``values`` in ascending order, ``reverse`` descending.
    With ``continuation`` each point starts from the previous point's final
    state; otherwise every point is cold-started (and may run in parallel).
    A point that fails is recorded with its error and the sweep goes on.
    """
    if len(values) < 1:
        raise ValueError("need at least one bias value")
    if direction not in ("forward", "reverse"):
        raise ValueError("direction must be 'forward' or 'reverse'")
    if var not in ("v_td", "v_vd"):
        raise ValueError("var must be 'v_td' or 'v_vd'")
    ordered = sorted(values, reverse=(direction == "reverse"))
    configs = [replace(template, bias=replace(template.bias, **{var: float(v)}),
                       seed=point_seed(template.seed, v), initial_state=None)
               for v in ordered]
    result = SweepResult()
    if not continuation:
        if workers > 1:
            with ProcessPoolExecutor(workers) as ex:
                outs = list(ex.map(_run_point, configs, [direction] * len(configs), [var] * len(configs)))
        else:
            outs = [_run_point(c, direction, var) for c in configs]
        result.points.extend(pt for pt, _ in outs)
        return result
    state = start_state
    for c in configs:
        if state is not None:
            c = replace(c, initial_state=replace(state, time=0.0))
        pt, final = _run_point(c, direction, var)
        result.points.append(pt)
        state = final
    result.final_state = state
    return result


def hysteresis_sweep(template: SimRunConfig, values: Sequence[float], var: str = "v_td",
                     continuation: bool = True) -> SweepResult:
    """Forward leg followed by a reverse leg that starts where the forward ended."""
    fwd = bias_sweep(template, values, "forward", continuation, var)
    rev = bias_sweep(template, values, "reverse", continuation, var,
                     start_state=fwd.final_state if continuation else None)
    return SweepResult(fwd.points + rev.points, rev.final_state)


# ----------------------------------------------------------------------
# Measurement chain, ADC and synthetic sources
# ----------------------------------------------------------------------

def output_amplitude(tank_amplitude: float, cfg: TankConfig) -> float:
    return tank_amplitude / cfg.pickup_ratio * 10 ** (-cfg.coupler_loss_db / 20)


def output_chain(trace: Trace, cfg: TankConfig) -> Trace:
    """Tank voltage seen at the coupled port: pickup coil, then coupler loss."""
    return trace.with_samples(trace.samples * (10 ** (-cfg.coupler_loss_db / 20) / cfg.pickup_ratio))


class Quantized(NamedTuple):
    trace: Trace
    step: float
    n_clipped: int


def quantize(trace: Trace, bits: int, full_scale: float) -> Quantized:
    """Mid-tread uniform ADC with codes -2^(b-1) .. 2^(b-1)-1.

    Step is 2*full_scale/2^bits; halfway values round to the even code;
    inputs beyond the code range saturate and are counted.
    """
    if not 2 <= bits <= 16:
        raise ValueError("bits must be in [2, 16]")
    if full_scale <= 0:
        raise ValueError("full_scale must be positive")
    step = 2.0 * full_scale / 2 ** bits
    codes = np.round(trace.samples / step)
    lo, hi = -(2 ** (bits - 1)), 2 ** (bits - 1) - 1
    n_clip = int(np.count_nonzero((codes < lo) | (codes > hi)))
    np.clip(codes, lo, hi, out=codes)
    return Quantized(trace.with_samples(codes * step), step, n_clip)


def _bandlimited_noise(rng, n, sample_rate, bandwidth, sigma):
    """Gaussian noise flat from 0 to ``bandwidth`` with standard deviation ``sigma``."""
    n_low = max(int(math.ceil(n * 2 * bandwidth / sample_rate)), 2)
    low = rng.standard_normal(n_low) * sigma
    return resample(low, n)


def synth_tone(f0: float, amplitude: float, duration: float, sample_rate: float,
               phase_noise_dbc: Optional[float] = None, phase_noise_bandwidth: float = 25e6,
               am_depth: float = 0.0, am_freq: float = 1e6,
               am_noise_std: float = 0.0, am_noise_bandwidth: float = 10e6,
               harmonics: Sequence[Tuple[int, float]] = (), phase0: float = 0.0,
               seed: int = 0) -> Trace:
    """Synthetic carrier amplitude * sin(2 pi f0 t + phi(t)) with optional impairments.

    ``phase_noise_dbc`` sets a flat SSB level L (dBc/Hz) of white phase
    modulation out to ``phase_noise_bandwidth`` offset. ``am_depth``/``am_freq``
    add a sinusoidal envelope; ``am_noise_std`` (volts) a Gaussian envelope
    fluctuation band-limited to ``am_noise_bandwidth``. ``harmonics`` lists
    (order, dBc) components.
    """
    nyq = sample_rate / 2
    if f0 >= nyq:
        raise ValueError(f"carrier {f0:g} Hz aliases at sample rate {sample_rate:g}")
    for order, _ in harmonics:
        if order * f0 >= nyq:
            raise ValueError(f"harmonic {order} at {order * f0:g} Hz aliases")
    n = int(round(duration * sample_rate))
    rng_phase, rng_am = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    t = np.arange(n) / sample_rate
    phase = 2 * np.pi * f0 * t
    phase += phase0
    if phase_noise_dbc is not None:
        # one-sided S_phi = 2 * 10^(L/10) rad^2/Hz over [0, bandwidth]
        var = 2 * 10 ** (phase_noise_dbc / 10) * phase_noise_bandwidth
        phase += _bandlimited_noise(rng_phase, n, sample_rate, phase_noise_bandwidth, math.sqrt(var))
    env = np.full(n, float(amplitude))
    if am_depth:
        env *= 1 + am_depth * np.cos(2 * np.pi * am_freq * t)
    del t
    if am_noise_std:
        env += _bandlimited_noise(rng_am, n, sample_rate, am_noise_bandwidth, am_noise_std)
    x = np.sin(phase)
    for order, dbc in harmonics:
        x += 10 ** (dbc / 20) * np.sin(order * phase)
    x *= env
    return Trace(x, sample_rate, "V", 0.0)

"""Run configuration: a flat document of dotted keys with SI values.

Config files are JSON, either flat (``{"tank.inductance": 95e-9}``) or
nested (``{"tank": {"inductance": 95e-9}}``). Values given as strings may use
SI suffixes (``95n``, ``5.8p``, ``141.8M``).
"""

from __future__ import annotations

import json
import math
import re
from importlib import resources
from pathlib import Path
from typing import Any, Dict, NamedTuple

from .analytic import BiasPoint, TankConfig
from .models import (
    BD6_02_25K,
    BD6_CRYO,
    BD6_RT,
    DiodeModel,
    JunctionCapParams,
    ThermalDriftModel,
    VaractorModel,
    default_varactor,
)
from .simulator import NoiseSpec, SimRunConfig


class ConfigKeyError(ValueError):
    """A configuration value is unknown or malformed; ``key`` names it."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class Key(NamedTuple):
    default: Any
    unit: str
    help: str
    kind: str = "float"   # float | int | bool | str | list | optional-float


_V = default_varactor()

SCHEMA: Dict[str, Key] = {
    "tank.inductance": Key(95e-9, "H", "tank inductance L"),
    "tank.c_par": Key(4.5e-12, "F", "fixed board capacitance"),
    "tank.junction.enabled": Key(True, "-", "include the diode junction capacitance", "bool"),
    "tank.junction.c0": Key(5.7e-12, "F", "junction capacitance at zero bias"),
    "tank.junction.vd": Key(0.5, "V", "junction diffusion potential"),
    "tank.varactor.enabled": Key(True, "-", "include the varactor", "bool"),
    "tank.varactor.c0": Key(_V.c0, "F", "varactor capacitance at V_VD = 0"),
    "tank.varactor.vd": Key(_V.vd, "V", "varactor built-in potential"),
    "tank.varactor.exponent": Key(_V.exponent, "-", "varactor grading exponent"),
    "tank.r_loss": Key(0.6, "ohm", "series loss resistance of the inductor branch"),
    "tank.r_bias": Key(200.0, "ohm", "bias feed resistance"),
    "tank.bias_tau": Key(1e-6, "s", "bias-node decoupling time constant"),
    "tank.pickup_ratio": Key(10.0, "-", "pickup-coil voltage ratio"),
    "tank.coupler_loss_db": Key(20.0, "dB", "directional-coupler loss"),
    "tank.model_leakage": Key(True, "-", "include varactor leakage current", "bool"),
    "tank.drift.sensitivity": Key(300.0, "Hz/mK", "thermal frequency drift"),
    "tank.drift.t_lo": Key(60.0, "mK", "drift onset temperature"),
    "tank.drift.t_hi": Key(120.0, "mK", "drift clamp temperature"),
    "tank.drift.sign": Key(-1, "-", "drift direction (+1 or -1)", "int"),
    "diode.model": Key("bd6-cryo", "-", "bd6-cryo | bd6-rt | bd6-02-25k | path to a v,i CSV", "str"),
    "bias.v_td": Key(0.1, "V", "tunnel-diode bias V_TD"),
    "bias.v_vd": Key(0.0, "V", "varactor bias V_VD (positive = reverse)"),
    "bias.temperature": Key(11.0, "mK", "stage temperature"),
    "sim.duration": Key(20e-6, "s", "simulated time"),
    "sim.dt": Key(25e-12, "s", "integrator step"),
    "sim.seed": Key(42, "-", "random seed", "int"),
    "sim.sample_rate": Key(2e9, "S/s", "output sample rate"),
    "sim.settle_time": Key(10e-6, "s", "initial span dropped from the trace"),
    "sim.kick": Key(10e-6, "V", "deterministic start-up offset"),
    "sim.format": Key("csv", "-", "trace file format: csv | bin", "str"),
    "noise.current_density": Key(0.0, "A/sqrt(Hz)", "white current noise into the tank"),
    "noise.bias_ripple": Key([], "[[Hz, V], ...]", "tones added to the bias source", "list"),
    "noise.bias_walk": Key(0.0, "V/sqrt(s)", "random walk of the bias source"),
    "sweep.start": Key(0.0, "V", "first bias value"),
    "sweep.stop": Key(0.3, "V", "last bias value"),
    "sweep.step": Key(0.01, "V", "bias increment"),
    "sweep.continuation": Key(True, "-", "carry the circuit state between points", "bool"),
    "sweep.workers": Key(1, "-", "processes for cold-start sweeps", "int"),
    "analyze.center": Key(0.0, "Hz", "bandpass centre (0 = detected carrier)"),
    "analyze.bandwidth": Key(50e6, "Hz", "bandpass width"),
    "analyze.edge": Key("raised-cosine", "-", "bandpass edge: raised-cosine | brick", "str"),
    "analyze.n_bins": Key(5000, "-", "amplitude histogram bins", "int"),
    "analyze.trim": Key(0.01, "-", "fraction of envelope dropped at each end"),
    "analyze.pad_factor": Key(1, "-", "spectrum zero-padding factor", "int"),
    "analyze.window": Key("", "-", "spectrum window name (empty = none)", "str"),
    "analyze.offsets": Key([1e5, 3e5, 1e6, 3e6, 1e7], "Hz", "phase-noise offsets", "list"),
    "analyze.n_segments": Key(8, "-", "Welch segments", "int"),
    "analyze.smoothing": Key(0.1, "-", "fractional band averaged around each phase-noise offset"),
    "analyze.max_order": Key(5, "-", "highest harmonic reported", "int"),
    "fit.inductance": Key(95e-9, "H", "tank inductance during the measurement"),
    "fit.vd": Key(0.5, "V", "junction diffusion potential"),
    "fit.v_vd": Key(0.0, "V", "varactor bias during the measurement"),
    "fit.temperature": Key(11.0, "mK", "stage temperature during the measurement"),
    "fit.fit_vd": Key(False, "-", "also fit the diffusion potential", "bool"),
    "fit.max_iter": Key(200, "-", "iteration limit", "int"),
    "fit.init_c": Key(None, "F", "initial C (null: half the lowest-bias total)", "optional-float"),
    "fit.init_c0": Key(None, "F", "initial C0", "optional-float"),
    "synth.f0": Key(141.8e6, "Hz", "carrier frequency"),
    "synth.amplitude": Key(0.015, "V", "carrier amplitude"),
    "synth.duration": Key(20e-6, "s", "record length"),
    "synth.sample_rate": Key(20e9, "S/s", "sample rate"),
    "synth.phase_noise": Key(None, "dBc/Hz", "white phase noise level (null = none)", "optional-float"),
    "synth.phase_noise_bandwidth": Key(25e6, "Hz", "phase-noise bandwidth"),
    "synth.am_depth": Key(0.0, "-", "sinusoidal AM depth"),
    "synth.am_freq": Key(1e6, "Hz", "sinusoidal AM frequency"),
    "synth.am_noise": Key(0.0, "V", "Gaussian envelope noise (std)"),
    "synth.am_noise_bandwidth": Key(10e6, "Hz", "envelope-noise bandwidth"),
    "synth.harmonics": Key([], "[[order, dBc], ...]", "harmonic components", "list"),
    "synth.seed": Key(0, "-", "random seed", "int"),
    "synth.format": Key("csv", "-", "trace file format: csv | bin", "str"),
    "screen.v_min": Key(None, "V", "lower screening voltage (null: model span)", "optional-float"),
    "screen.v_max": Key(None, "V", "upper screening voltage", "optional-float"),
    "screen.step": Key(1e-3, "V", "screening grid step"),
}

SECTIONS = {
    "simulate": ("tank", "diode", "bias", "sim", "noise"),
    "sweep": ("tank", "diode", "bias", "sim", "noise", "sweep"),
    "analyze": ("analyze",),
    "fit": ("fit",),
    "synth": ("synth",),
    "screen": ("screen",),
}

_SI = {"f": 1e-15, "p": 1e-12, "n": 1e-9, "u": 1e-6, "µ": 1e-6, "m": 1e-3,
       "k": 1e3, "K": 1e3, "M": 1e6, "G": 1e9, "T": 1e12}
_SI_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([fpnuµmkKMGT]?)\s*$")


def parse_si(text) -> float:
    """'95n' -> 9.5e-08, '141.8M' -> 141800000.0; plain numbers pass through."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text)
    m = _SI_RE.match(str(text))
    if not m:
        raise ValueError(f"cannot parse {text!r} as a number")
    return float(m.group(1)) * _SI.get(m.group(2), 1.0)


def _coerce(key: str, value):
    spec = SCHEMA[key]
    try:
        if spec.kind == "float":
            x = parse_si(value)
            if not math.isfinite(x):
                raise ValueError("must be finite")
            return x
        if spec.kind == "optional-float":
            return None if value in (None, "", "none", "null") else parse_si(value)
        if spec.kind == "int":
            x = parse_si(value)
            if x != int(x):
                raise ValueError("must be an integer")
            return int(x)
        if spec.kind == "bool":
            if isinstance(value, bool):
                return value
            s = str(value).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError("must be true or false")
        if spec.kind == "list":
            if isinstance(value, str):
                value = json.loads(value)
            if not isinstance(value, list):
                raise ValueError("must be a list")
            return [[parse_si(x) for x in v] if isinstance(v, (list, tuple)) else parse_si(v)
                    for v in value]
        return str(value)
    except (ValueError, TypeError) as exc:
        raise ConfigKeyError(key, str(exc)) from None


def flatten(doc: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def defaults(command: str = None) -> dict:
    sections = SECTIONS.get(command) if command else None
    return {k: s.default for k, s in SCHEMA.items()
            if sections is None or k.split(".")[0] in sections}


def resolve(command: str, doc: dict = None, overrides: dict = None) -> dict:
    """Fully resolved flat config for ``command``: defaults < file < overrides."""
    cfg = defaults(command)
    merged = {}
    merged.update(flatten(doc or {}))
    merged.update(overrides or {})
    for k, v in merged.items():
        if k not in SCHEMA:
            raise ConfigKeyError(k, "unknown configuration key")
        if k not in cfg:
            continue  # key belongs to another command's section
        cfg[k] = _coerce(k, v)
    return dict(sorted(cfg.items()))


def bundled(name: str) -> Path:
    return Path(str(resources.files("tdobench") / "data" / name))


def locate(path) -> Path:
    """``path`` itself, or the bundled data file of that name."""
    p = Path(path)
    if p.exists():
        return p
    b = bundled(p.name)
    if b.exists():
        return b
    raise FileNotFoundError(f"{path}: no such file (and no bundled file of that name)")


def load_config_file(path) -> dict:
    p = locate(path)
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigKeyError(str(path), f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigKeyError(str(path), "top level must be an object")
    return doc


_DIODES = {"bd6-cryo": BD6_CRYO, "bd6-rt": BD6_RT, "bd6-02-25k": BD6_02_25K}


def build_diode(spec: str) -> DiodeModel:
    if spec.lower() in _DIODES:
        return _DIODES[spec.lower()]
    try:
        return DiodeModel.from_csv(locate(spec))
    except (OSError, ValueError) as exc:
        raise ConfigKeyError("diode.model", str(exc)) from None


def build_tank(c: dict) -> TankConfig:
    try:
        junction = (JunctionCapParams(c["tank.junction.c0"], c["tank.junction.vd"])
                    if c["tank.junction.enabled"] else None)
        varactor = None
        if c["tank.varactor.enabled"]:
            varactor = VaractorModel(c0=c["tank.varactor.c0"], vd=c["tank.varactor.vd"],
                                     exponent=c["tank.varactor.exponent"],
                                     leak_knots=_V.leak_knots, v_range=_V.v_range)
        drift = ThermalDriftModel(c["tank.drift.sensitivity"], c["tank.drift.t_lo"],
                                  c["tank.drift.t_hi"], c["tank.drift.sign"])
        return TankConfig(
            inductance=c["tank.inductance"], c_par=c["tank.c_par"], junction=junction,
            varactor=varactor, r_loss=c["tank.r_loss"], r_bias=c["tank.r_bias"],
            bias_tau=c["tank.bias_tau"], pickup_ratio=c["tank.pickup_ratio"],
            coupler_loss_db=c["tank.coupler_loss_db"], drift=drift,
            model_leakage=c["tank.model_leakage"])
    except ValueError as exc:
        if isinstance(exc, ConfigKeyError):
            raise
        raise ConfigKeyError("tank", str(exc)) from None


def build_sim_config(c: dict) -> SimRunConfig:
    ripple = c["noise.bias_ripple"]
    try:
        noise = NoiseSpec(c["noise.current_density"], tuple(tuple(r) for r in ripple),
                          c["noise.bias_walk"])
    except (ValueError, TypeError) as exc:
        raise ConfigKeyError("noise", str(exc)) from None
    cfg = SimRunConfig(
        tank=build_tank(c), diode=build_diode(c["diode.model"]),
        bias=BiasPoint(c["bias.v_td"], c["bias.v_vd"], c["bias.temperature"]),
        duration=c["sim.duration"], dt=c["sim.dt"], seed=c["sim.seed"], noise=noise,
        sample_rate=c["sim.sample_rate"], settle_time=c["sim.settle_time"], kick=c["sim.kick"])
    return cfg


def help_text(command: str) -> str:
    lines = ["configuration keys (set in --config JSON or with --set key=value):"]
    for k, s in SCHEMA.items():
        if k.split(".")[0] in SECTIONS[command]:
            d = "null" if s.default is None else s.default
            lines.append(f"  {k:<28} [{s.unit}] {s.help} (default {d})")
    return "\n".join(lines)

"""Closed-form tank predictions: capacitance budget, LC resonance, start-up
condition, DC power and tuning curves.

These are the reference values the time-domain simulator is checked against.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional, Sequence

from .models import (
    C_PAR_DEFAULT,
    DiodeModel,
    DomainError,
    JunctionCapParams,
    SingularityError,
    ThermalDriftModel,
    VaractorModel,
    default_varactor,
    diode_current,
    differential_resistance,
    junction_capacitance,
    thermal_shift,
    varactor_capacitance,
)


@dataclass(frozen=True)
class TankConfig:
    """Lumped parameters of the oscillator board.

    ``r_loss`` is a series resistance in the inductor branch. ``r_bias`` and
    ``bias_tau`` describe the bias feed: the bias node is decoupled with a
    capacitor of ``bias_tau / r_bias``. ``junction`` or ``varactor`` may be
    None to drop that capacitance from the budget.
    """

    inductance: float = 95e-9
    c_par: float = C_PAR_DEFAULT
    junction: Optional[JunctionCapParams] = field(default_factory=JunctionCapParams)
    varactor: Optional[VaractorModel] = field(default_factory=default_varactor)
    r_loss: float = 0.6
    r_bias: float = 200.0
    bias_tau: float = 1e-6
    pickup_ratio: float = 10.0  # 15 turns : 1.5 turns
    coupler_loss_db: float = 20.0
    drift: ThermalDriftModel = field(default_factory=ThermalDriftModel)
    model_leakage: bool = True

    def __post_init__(self):
        if self.inductance <= 0:
            raise ValueError("inductance must be positive")
        if self.c_par < 0 or self.r_loss < 0:
            raise ValueError("c_par and r_loss must be non-negative")
        if self.pickup_ratio <= 1:
            raise ValueError("pickup_ratio must exceed 1")
        if self.r_bias <= 0 or self.bias_tau <= 0:
            raise ValueError("r_bias and bias_tau must be positive")

    @property
    def c_decouple(self) -> float:
        return self.bias_tau / self.r_bias

    def scaled(self, l_factor=1.0, c_factor=1.0) -> "TankConfig":
        """Copy with the inductance and every capacitance rescaled."""
        junction = self.junction and replace(self.junction, c0=self.junction.c0 * c_factor)
        varactor = self.varactor
        if varactor is not None:
            if varactor.cap_knots:
                knots = tuple((v, c * c_factor) for v, c in varactor.cap_knots)
                varactor = replace(varactor, cap_knots=knots)
            else:
                varactor = replace(varactor, c0=varactor.c0 * c_factor)
        return replace(self, inductance=self.inductance * l_factor,
                       c_par=self.c_par * c_factor, junction=junction, varactor=varactor)


@dataclass(frozen=True)
class BiasPoint:
    v_td: float
    v_vd: float = 0.0
    temperature_mk: float = 11.0


def total_capacitance(cfg: TankConfig, b: BiasPoint) -> float:
    """C_par + C_VD(V_VD) + C_TD(V_TD) in farads."""
    c = cfg.c_par
    if cfg.varactor is not None:
        c += varactor_capacitance(cfg.varactor, b.v_vd)
    if cfg.junction is not None:
        c += junction_capacitance(cfg.junction, b.v_td)
    return c


def resonant_frequency(inductance: float, c_total: float) -> float:
    if inductance <= 0 or c_total <= 0:
        raise DomainError("inductance and capacitance must be positive")
    return 1.0 / (2.0 * math.pi * math.sqrt(inductance * c_total))


class StartupPrediction(NamedTuple):
    oscillates: bool
    margin: float            # R_parallel / |R_negative|; > 1 means the diode wins
    r_negative: float        # signed dV/dI at the bias point (inf at a stationary point)
    r_parallel: float        # equivalent parallel loss of the tank at resonance


def parallel_loss_resistance(cfg: TankConfig, c_total: float) -> float:
    if cfg.r_loss == 0:
        return math.inf
    return cfg.inductance / (c_total * cfg.r_loss)


def startup_condition(model: DiodeModel, cfg: TankConfig, b: BiasPoint) -> StartupPrediction:
    """Small-signal start-up test.

    The tank starts when the diode's negative conductance exceeds the tank's
    loss conductance, i.e. |R_neg| < R_parallel = (L/C)/R_loss.
    """
    r_par = parallel_loss_resistance(cfg, total_capacitance(cfg, b))
    try:
        r_neg = differential_resistance(model, b.v_td)
    except SingularityError:
        return StartupPrediction(False, 0.0, math.inf, r_par)
    if r_neg >= 0:
        return StartupPrediction(False, 0.0, r_neg, r_par)
    margin = math.inf if math.isinf(r_par) else r_par / abs(r_neg)
    return StartupPrediction(margin > 1.0, margin, r_neg, r_par)


def dc_power(b: BiasPoint, model: DiodeModel) -> float:
    return b.v_td * diode_current(model, b.v_td)


def thermal_capacitance_factor(cfg: TankConfig, f_nominal: float, temperature_mk: float) -> float:
    """Multiplier on C_total that reproduces the thermal frequency shift."""
    shift, _ = thermal_shift(cfg.drift, temperature_mk)
    return (f_nominal / (f_nominal + shift)) ** 2


class TuningPoint(NamedTuple):
    bias: BiasPoint
    frequency: float
    oscillates: bool


def tuning_curve(cfg: TankConfig, model: DiodeModel, sweep: Sequence[BiasPoint]) -> List[TuningPoint]:
    if not sweep:
        raise ValueError("empty sweep")
    out = []
    for b in sweep:
        f = resonant_frequency(cfg.inductance, total_capacitance(cfg, b))
        f += thermal_shift(cfg.drift, b.temperature_mk)[0]
        out.append(TuningPoint(b, f, startup_condition(model, cfg, b).oscillates))
    return out


def write_tuning_csv(path, points: Sequence[TuningPoint]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["v_td", "v_vd", "temp_mK", "f_hz", "predicted_osc"])
        for p in points:
            w.writerow([repr(float(p.bias.v_td)), repr(float(p.bias.v_vd)),
                        repr(float(p.bias.temperature_mk)), repr(float(p.frequency)),
                        int(p.oscillates)])


def read_tuning_csv(path) -> List[TuningPoint]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [TuningPoint(BiasPoint(float(r["v_td"]), float(r["v_vd"]), float(r["temp_mK"])),
                        float(r["f_hz"]), bool(int(r["predicted_osc"]))) for r in rows]

"""Least-squares extraction of tank capacitances from tuning curves.

The model is the LC resonance with a depletion-capacitance diode:

    f(V) = 1 / (2 pi sqrt(L * (C + C0 * (1 - V/Vd)^(-1/2))))

with L and Vd known, so C and C0 are the free parameters.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .models import DomainError

PF = 1e-12
MIN_CAPACITANCE = 0.01 * PF


def solve_total_capacitance(f: float, inductance: float) -> float:
    """Capacitance that resonates with ``inductance`` at ``f``."""
    if not (f > 0 and inductance > 0):
        raise DomainError("frequency and inductance must be positive")
    return 1.0 / ((2 * math.pi * f) ** 2 * inductance)


@dataclass(frozen=True)
class TuningDataset:
    """Measured (V_TD, f) pairs plus the fixed context of the measurement."""

    v_td: np.ndarray
    f_hz: np.ndarray
    inductance: float = 95e-9
    vd: float = 0.5
    v_vd: float = 0.0
    temperature_mk: float = 11.0

    def __post_init__(self):
        v = np.asarray(self.v_td, dtype=float).ravel()
        f = np.asarray(self.f_hz, dtype=float).ravel()
        object.__setattr__(self, "v_td", v)
        object.__setattr__(self, "f_hz", f)
        if v.size != f.size:
            raise ValueError("v_td and f_hz must have the same length")
        if v.size < 3:
            raise ValueError(f"need at least 3 rows to fit 2 parameters, got {v.size}")
        if np.unique(v).size != v.size:
            raise ValueError("v_td values must be distinct")
        if not (self.inductance > 0 and self.vd > 0):
            raise ValueError("inductance and vd must be positive")
        if np.any(v >= self.vd):
            raise ValueError(f"all v_td must be below vd = {self.vd:g} V")
        if not np.all(np.isfinite(f)) or np.any(f <= 0):
            raise ValueError("frequencies must be positive and finite")

    def __len__(self):
        return self.v_td.size


@dataclass(frozen=True)
class FitResult:
    """Fitted capacitances in farads (``c_pf``/``c0_pf`` for picofarads).

    ``covariance`` is the asymptotic parameter covariance (F^2; 3x3 when Vd
    was fitted). ``flagged`` marks a fit that hit the positivity clamp.
    """

    c: float
    c0: float
    vd: float
    covariance: np.ndarray
    rms_residual: float
    iterations: int
    converged: bool
    flagged: bool = False
    gradient_norm: float = 0.0
    fit_vd: bool = False
    message: str = ""

    @property
    def c_pf(self) -> float:
        return self.c / PF

    @property
    def c0_pf(self) -> float:
        return self.c0 / PF

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))


def tuning_model(v_td, c, c0, inductance, vd):
    """Predicted oscillation frequency for each V_TD."""
    s = (1.0 - np.asarray(v_td, dtype=float) / vd) ** -0.5
    return 1.0 / (2 * math.pi * np.sqrt(inductance * (c + c0 * s)))


def model_jacobian(v_td, params, inductance, vd=None):
    """df/dp for p = (C, C0) or (C, C0, Vd) when ``vd`` is None."""
    v = np.asarray(v_td, dtype=float)
    c, c0 = params[0], params[1]
    vd_eff = params[2] if vd is None else vd
    u = 1.0 - v / vd_eff
    s = u ** -0.5
    ctot = c + c0 * s
    f = 1.0 / (2 * math.pi * np.sqrt(inductance * ctot))
    k = -f / (2 * ctot)  # df/dC_total
    cols = [k, k * s]
    if vd is None:
        cols.append(k * c0 * (-0.5) * u ** -1.5 * v / vd_eff ** 2)
    return np.column_stack(cols)


def _initial_guess(data: TuningDataset):
    i = int(np.argmin(data.v_td))
    ctot = solve_total_capacitance(data.f_hz[i], data.inductance)
    s = (1.0 - data.v_td[i] / data.vd) ** -0.5
    return ctot / 2, ctot / 2 / s


def fit_capacitances(data: TuningDataset, init: Optional[Tuple[float, float]] = None,
                     fit_vd: bool = False, max_iter: int = 200) -> FitResult:
    """Damped Gauss-Newton (Levenberg-Marquardt) fit of (C, C0), optionally Vd.

    Residuals are unweighted frequency errors in Hz. Stops when the relative
    step drops below 1e-10 or the gradient norm below 1e-6 of its initial
    value. A step that would push a capacitance below 0.01 pF is reflected
    back above that bound and the result is flagged.
    """
    v, f_obs, ind = data.v_td, data.f_hz, data.inductance
    c_init, c0_init = init if init is not None else _initial_guess(data)
    if c_init <= 0 or c0_init <= 0:
        raise ValueError("initial capacitances must be positive")
    # work in picofarads (and volts) so the normal equations are well scaled
    p = np.array([c_init / PF, c0_init / PF] + ([data.vd] if fit_vd else []), dtype=float)
    scale = np.array([PF, PF] + ([1.0] if fit_vd else []))
    lower = np.array([MIN_CAPACITANCE / PF] * 2 + ([float(v.max()) * (1 + 1e-6)] if fit_vd else []))

    def evaluate(q):
        vd = q[2] if fit_vd else data.vd
        r = tuning_model(v, q[0] * PF, q[1] * PF, ind, vd) - f_obs
        jac = model_jacobian(v, q * scale, ind, None if fit_vd else data.vd) * scale
        return r, jac

    def reflect(q):
        hit = False
        for j in range(q.size):
            if q[j] < lower[j]:
                q[j] = lower[j] + (lower[j] - q[j])
                hit = True
        return q, hit

    r, jac = evaluate(p)
    cost = float(r @ r)
    g0 = np.linalg.norm(jac.T @ r)
    lam = 1e-3
    flagged = False
    converged = g0 == 0.0
    message = "zero initial gradient" if converged else ""
    it = 0
    gnorm = g0
    while not converged and it < max_iter:
        it += 1
        jtj = jac.T @ jac
        grad = jac.T @ r
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= 1e-6 * g0:
            converged, message = True, "gradient below tolerance"
            break
        accepted = False
        for _ in range(60):
            a = jtj + lam * np.diag(np.diag(jtj))
            try:
                step = -np.linalg.solve(a, grad)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial, hit = reflect(p + step)
            r_t, jac_t = evaluate(trial)
            cost_t = float(r_t @ r_t)
            if np.isfinite(cost_t) and cost_t <= cost:
                rel = np.linalg.norm(trial - p) / max(np.linalg.norm(p), 1e-300)
                p, r, jac, cost = trial, r_t, jac_t, cost_t
                flagged |= hit
                lam = max(lam / 3, 1e-12)
                accepted = True
                break
            lam *= 4
        if not accepted:
            # no downhill step exists at any damping: we sit at the minimum
            # to within floating-point resolution
            converged, message = True, "no further decrease possible"
            break
        if rel < 1e-10:
            converged, message = True, "relative step below tolerance"
            break
    else:
        if not converged:
            message = f"no convergence after {max_iter} iterations"

    gnorm = float(np.linalg.norm(jac.T @ r))
    n, k = v.size, p.size
    dof = max(n - k, 1)
    try:
        cov_scaled = np.linalg.inv(jac.T @ jac) * (cost / dof)
    except np.linalg.LinAlgError:
        cov_scaled = np.full((k, k), np.nan)
    cov = cov_scaled * np.outer(scale, scale)
    return FitResult(
        c=float(p[0] * PF), c0=float(p[1] * PF),
        vd=float(p[2]) if fit_vd else float(data.vd),
        covariance=cov, rms_residual=math.sqrt(cost / n), iterations=it,
        converged=bool(converged), flagged=bool(flagged), gradient_norm=gnorm,
        fit_vd=fit_vd, message=message)


def fit_report(result: FitResult, data: TuningDataset, n_curve: int = 200) -> dict:
    """Per-point residuals, a dense model curve for plotting and the parameter table."""
    f_fit = tuning_model(data.v_td, result.c, result.c0, data.inductance, result.vd)
    lo, hi = float(data.v_td.min()), float(data.v_td.max())
    v_curve = np.linspace(lo, hi, n_curve)
    err = result.stderr
    params = [
        {"name": "C", "value": result.c, "stderr": float(err[0]), "unit": "F"},
        {"name": "C0", "value": result.c0, "stderr": float(err[1]), "unit": "F"},
        {"name": "Vd", "value": result.vd, "stderr": float(err[2]) if result.fit_vd else 0.0,
         "unit": "V", "fixed": not result.fit_vd},
    ]
    return {
        "converged": result.converged,
        "status": "CONVERGED" if result.converged else "NOT CONVERGED",
        "flagged": result.flagged,
        "message": result.message,
        "iterations": result.iterations,
        "rms_residual_hz": result.rms_residual,
        "parameters": params,
        "context": {"inductance_h": data.inductance, "vd_v": data.vd,
                    "v_vd_v": data.v_vd, "temperature_mk": data.temperature_mk},
        "rows": [{"v_td": float(a), "f_hz": float(b), "f_fit_hz": float(c), "residual_hz": float(b - c)}
                 for a, b, c in zip(data.v_td, data.f_hz, f_fit)],
        "curve": {"v_td": v_curve.tolist(),
                  "f_hz": tuning_model(v_curve, result.c, result.c0, data.inductance, result.vd).tolist()},
    }


def synthetic_dataset(c: float, c0: float, inductance: float = 95e-9, vd: float = 0.5,
                      v_td: Sequence[float] = None, noise: float = 0.0, seed: int = 0,
                      **context) -> TuningDataset:
    """Tuning data generated from the model, with optional multiplicative noise."""
    v = np.linspace(0.04, 0.24, 20) if v_td is None else np.asarray(v_td, dtype=float)
    f = tuning_model(v, c, c0, inductance, vd)
    if noise:
        f = f * (1 + noise * np.random.default_rng(seed).standard_normal(v.size))
    return TuningDataset(v, f, inductance, vd, **context)


def read_dataset_csv(path, **context) -> TuningDataset:
    """Load a ``v_td,f_hz`` table; ``#`` lines are comments."""
    v, f = [], []
    with open(path, newline="") as fh:
        rows = [(n, line) for n, line in enumerate(fh, start=1)
                if line.strip() and not line.lstrip().startswith("#")]
        if not rows:
            raise ValueError(f"{path}: empty dataset")
        header = [h.strip() for h in rows[0][1].split(",")]
        if header != ["v_td", "f_hz"]:
            raise ValueError(f"{path}: line {rows[0][0]}: expected header v_td,f_hz")
        for n, line in rows[1:]:
            try:
                a, b = (float(x) for x in next(csv.reader([line])))
            except ValueError as exc:
                raise ValueError(f"{path}: line {n}: malformed row {line.strip()!r}") from exc
            v.append(a)
            f.append(b)
    return TuningDataset(np.array(v), np.array(f), **context)


def write_dataset_csv(path, data: TuningDataset, comment: str = None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("v_td,f_hz\n")
        for a, b in zip(data.v_td, data.f_hz):
            fh.write(f"{float(a)!r},{float(b)!r}\n")

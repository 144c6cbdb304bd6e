"""File formats: traces (CSV and packed binary), sweep tables, spectra,
phase-noise profiles, fit results and JSON documents.

All writers are deterministic: the same object always produces the same bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .analytic import BiasPoint
from .dsp import PhaseNoiseProfile, Spectrum, Trace
from .fitting import FitResult
from .simulator import SweepPoint, SweepResult

BIN_PREAMBLE = 64


class TraceFormatError(ValueError):
    """A trace file could not be parsed; the message names the line or byte offset."""


def _num(x) -> str:
    return repr(float(x))


# ----------------------------------------------------------------------
# Traces
# ----------------------------------------------------------------------

def write_trace_csv(path, trace: Trace):
    with open(path, "w", newline="") as fh:
        fh.write(f"# sample_rate_hz={_num(trace.sample_rate)}\n")
        fh.write(f"# unit={trace.unit}\n")
        fh.write(f"# t0_s={_num(trace.t0)}\n")
        # repr round-trips float64 exactly
        fh.write("\n".join(map(repr, trace.samples.tolist())))
        fh.write("\n")


def read_trace_csv(path) -> Trace:
    meta = {}
    values = []
    with open(path) as fh:
        for n, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                key, sep, val = s[1:].partition("=")
                if sep:
                    meta[key.strip()] = val.strip()
                continue
            try:
                values.append(float(s))
            except ValueError:
                raise TraceFormatError(f"{path}: line {n}: not a number: {s[:40]!r}") from None
    if "sample_rate_hz" not in meta:
        raise TraceFormatError(f"{path}: missing '# sample_rate_hz=' header")
    try:
        fs = float(meta["sample_rate_hz"])
        t0 = float(meta.get("t0_s", 0.0))
    except ValueError as exc:
        raise TraceFormatError(f"{path}: bad header value: {exc}") from None
    try:
        return Trace(np.array(values), fs, meta.get("unit", "V"), t0)
    except ValueError as exc:
        raise TraceFormatError(f"{path}: {exc}") from None


def write_trace_bin(path, trace: Trace):
    """64-byte space-padded JSON preamble, then little-endian float64 samples."""
    head = json.dumps({"fs": float(trace.sample_rate), "unit": trace.unit, "t0": float(trace.t0)},
                      separators=(",", ":")).encode()
    if len(head) > BIN_PREAMBLE:
        raise ValueError("trace metadata does not fit the 64-byte preamble")
    with open(path, "wb") as fh:
        fh.write(head.ljust(BIN_PREAMBLE, b" "))
        fh.write(np.ascontiguousarray(trace.samples, dtype="<f8").tobytes())


def read_trace_bin(path) -> Trace:
    raw = Path(path).read_bytes()
    if len(raw) < BIN_PREAMBLE:
        raise TraceFormatError(f"{path}: file shorter than the {BIN_PREAMBLE}-byte preamble")
    try:
        meta = json.loads(raw[:BIN_PREAMBLE].decode())
        fs = float(meta["fs"])
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise TraceFormatError(f"{path}: offset 0: bad preamble ({exc})") from None
    body = len(raw) - BIN_PREAMBLE
    if body % 8:
        raise TraceFormatError(f"{path}: offset {BIN_PREAMBLE + body - body % 8}: "
                               f"trailing {body % 8} bytes do not form a float64")
    x = np.frombuffer(raw, dtype="<f8", offset=BIN_PREAMBLE).astype(float)
    bad = np.flatnonzero(~np.isfinite(x))
    if bad.size:
        raise TraceFormatError(f"{path}: offset {BIN_PREAMBLE + 8 * bad[0]}: non-finite sample")
    try:
        return Trace(x, fs, meta.get("unit", "V"), float(meta.get("t0", 0.0)))
    except ValueError as exc:
        raise TraceFormatError(f"{path}: {exc}") from None


def _is_binary(path) -> bool:
    return Path(path).suffix.lower() in (".bin", ".f64")


def write_trace(path, trace: Trace):
    (write_trace_bin if _is_binary(path) else write_trace_csv)(path, trace)


def read_trace(path) -> Trace:
    """Read a trace, choosing the format by extension (.bin/.f64 are binary)."""
    if not Path(path).is_file():
        raise TraceFormatError(f"{path}: no such file")
    return read_trace_bin(path) if _is_binary(path) else read_trace_csv(path)


# ----------------------------------------------------------------------
# Tables
# ----------------------------------------------------------------------

SWEEP_COLUMNS = ["index", "v_td", "v_vd", "temp_mK", "direction", "oscillating", "amplitude_v",
                 "frequency_hz", "mean_current_a", "output_power_dbm", "converged", "error"]


def write_sweep_csv(path, result: SweepResult):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for k, p in enumerate(result.points):
            w.writerow([k, _num(p.bias.v_td), _num(p.bias.v_vd), _num(p.bias.temperature_mk),
                        p.direction, int(p.oscillating), _num(p.amplitude), _num(p.frequency),
                        _num(p.mean_current), _num(p.output_power_dbm), int(p.converged), p.error])


def read_sweep_csv(path) -> SweepResult:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    pts = [SweepPoint(BiasPoint(float(r["v_td"]), float(r["v_vd"]), float(r["temp_mK"])),
                      r["direction"], bool(int(r["oscillating"])), float(r["amplitude_v"]),
                      float(r["frequency_hz"]), float(r["mean_current_a"]),
                      float(r["output_power_dbm"]), bool(int(r["converged"])), r["error"])
           for r in rows]
    return SweepResult(pts)


def write_spectrum_csv(path, spec: Spectrum):
    with open(path, "w", newline="") as fh:
        fh.write(f"# rbw_hz={_num(spec.rbw)}\n# impedance_ohm={_num(spec.impedance)}\n")
        fh.write("freq_hz,power_dbm\n")
        for f, p in zip(spec.freqs.tolist(), spec.power_dbm.tolist()):
            fh.write(f"{f!r},{p!r}\n")


def _read_table(path, columns):
    meta, rows = {}, []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip()]
    body = []
    for ln in lines:
        if ln.lstrip().startswith("#"):
            k, sep, v = ln.strip()[1:].partition("=")
            if sep:
                meta[k.strip()] = v.strip()
        else:
            body.append(ln)
    reader = csv.reader(body)
    header = next(reader)
    if header[: len(columns)] != list(columns):
        raise ValueError(f"{path}: expected columns {','.join(columns)}")
    for row in reader:
        rows.append(row)
    return meta, header, rows


def read_spectrum_csv(path) -> Spectrum:
    meta, _, rows = _read_table(path, ["freq_hz", "power_dbm"])
    a = np.array(rows, dtype=float).reshape(-1, 2)
    return Spectrum(a[:, 0], a[:, 1], float(meta["rbw_hz"]), float(meta.get("impedance_ohm", 50)))


def write_phase_noise_csv(path, prof: PhaseNoiseProfile):
    with open(path, "w", newline="") as fh:
        fh.write(f"# carrier_hz={_num(prof.carrier_hz)}\n# carrier_dbm={_num(prof.carrier_dbm)}\n")
        fh.write("offset_hz,dbc_per_hz,valid\n")
        for o, l, v in zip(prof.offsets.tolist(), prof.dbc_per_hz.tolist(), prof.valid.tolist()):
            fh.write(f"{o!r},{l!r},{int(v)}\n")


def read_phase_noise_csv(path) -> PhaseNoiseProfile:
    meta, header, rows = _read_table(path, ["offset_hz", "dbc_per_hz"])
    a = np.array([r[:2] for r in rows], dtype=float).reshape(-1, 2)
    valid = (np.array([bool(int(r[2])) for r in rows]) if "valid" in header
             else np.ones(len(rows), dtype=bool))
    return PhaseNoiseProfile(a[:, 0], a[:, 1], float(meta["carrier_hz"]),
                             float(meta["carrier_dbm"]), valid)


# ----------------------------------------------------------------------
# JSON
# ----------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no NaN/Inf; encode them as strings
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps(obj))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def fit_result_to_dict(r: FitResult) -> dict:
    return {"c_f": r.c, "c0_f": r.c0, "vd_v": r.vd, "c_pf": r.c_pf, "c0_pf": r.c0_pf,
            "covariance": r.covariance, "rms_residual_hz": r.rms_residual,
            "iterations": r.iterations, "converged": r.converged, "flagged": r.flagged,
            "gradient_norm": r.gradient_norm, "fit_vd": r.fit_vd, "message": r.message}


def fit_result_from_dict(d: dict) -> FitResult:
    return FitResult(c=float(d["c_f"]), c0=float(d["c0_f"]), vd=float(d["vd_v"]),
                     covariance=np.array(d["covariance"], dtype=float),
                     rms_residual=float(d["rms_residual_hz"]), iterations=int(d["iterations"]),
                     converged=bool(d["converged"]), flagged=bool(d["flagged"]),
                     gradient_norm=float(d["gradient_norm"]), fit_vd=bool(d["fit_vd"]),
                     message=d.get("message", ""))


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()

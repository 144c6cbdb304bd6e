"""Command-line front end.

Every command resolves one flat configuration document, writes its outputs to
a directory and records a manifest there. ``replay`` re-runs a manifest and
checks that every output is byte-identical.

Exit codes: 0 success, 1 validation error, 2 runtime error, 3 fit did not converge.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import config as C
from . import io
from .analytic import startup_condition
from .dsp import (
    NoCarrierError,
    amplitude_stats,
    bandpass,
    envelope,
    extract_frequency,
    harmonics,
    phase_noise,
    power_spectrum,
)
from .fitting import fit_capacitances, fit_report, read_dataset_csv
from .models import DiodeModel, screen_diode
from .simulator import ConfigError, SimulationError, bias_sweep, hysteresis_sweep, simulate, synth_tone

ENV_OUTPUT_DIR = "TDOBENCH_OUTPUT_DIR"

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_NONCONVERGED = 0, 1, 2, 3


class NotConverged(Exception):
    pass


# ----------------------------------------------------------------------
# Commands. Each takes (cfg, opts, inputs, outdir) and returns output names.
# ----------------------------------------------------------------------

def _sim_config(cfg):
    try:
        return C.build_sim_config(cfg).validate()
    except ConfigError as exc:
        raise C.ConfigKeyError(f"sim.{exc.key}", str(exc).split(": ", 1)[-1]) from None


def _write_trace(outdir, trace, fmt):
    if fmt not in ("csv", "bin"):
        raise C.ConfigKeyError("format", f"unknown trace format {fmt!r}")
    name = f"trace.{fmt}"
    io.write_trace(outdir / name, trace)
    return name


def run_simulate(cfg, opts, inputs, outdir):
    sim = _sim_config(cfg)
    res = simulate(sim)
    name = _write_trace(outdir, res.trace, cfg["sim.format"])
    s = res.final_state
    summary = {
        "oscillating": res.oscillating,
        "converged": res.converged,
        "amplitude_v": res.amplitude,
        "noise_floor_v": res.noise_floor,
        "frequency_hz": res.frequency,
        "analytic_frequency_hz": res.analytic_frequency,
        "mean_diode_current_a": res.mean_diode_current,
        "mean_bias_node_v": res.mean_v_dc,
        "output_power_dbm": res.output_power_dbm,
        "startup_predicted": startup_condition(sim.diode, sim.tank, sim.bias).oscillates,
        "final_state": {"v_tank": s.v_tank, "i_l": s.i_l, "v_dc": s.v_dc, "time": s.time},
        "trace_samples": len(res.trace),
    }
    io.write_json(outdir / "summary.json", summary)
    return [name, "summary.json"]


def _sweep_values(cfg):
    a, b, h = cfg["sweep.start"], cfg["sweep.stop"], cfg["sweep.step"]
    if h <= 0:
        raise C.ConfigKeyError("sweep.step", "must be positive")
    if b < a:
        raise C.ConfigKeyError("sweep.stop", "must not be below sweep.start")
    n = int(math.floor((b - a) / h + 1e-9)) + 1
    return [round(a + k * h, 12) for k in range(n)]


def run_sweep(cfg, opts, inputs, outdir):
    template = _sim_config(cfg)
    values = _sweep_values(cfg)
    var, direction = opts["var"], opts["direction"]
    cont = cfg["sweep.continuation"]
    if direction == "both":
        result = hysteresis_sweep(template, values, var, cont)
    else:
        workers = 1 if cont else cfg["sweep.workers"]
        result = bias_sweep(template, values, direction, cont, var, workers=workers)
    io.write_sweep_csv(outdir / "sweep.csv", result)
    return ["sweep.csv"]


def _filtered(trace, cfg):
    fc = cfg["analyze.center"] or extract_frequency(trace)
    return bandpass(trace, fc, cfg["analyze.bandwidth"], cfg["analyze.edge"]), fc


def run_analyze(cfg, opts, inputs, outdir):
    src = inputs["trace"]
    trace = io.read_trace(src)
    pipeline = opts["pipeline"]
    prov = {"source_trace": str(src), "pipeline": pipeline, "tool_version": __version__,
            "parameters": cfg}
    if pipeline == "harmonics":
        # harmonics live outside the carrier band, so this pipeline skips the bandpass
        spec = power_spectrum(trace, window="hann")
        f0 = cfg["analyze.center"] or extract_frequency(trace)
        rows = harmonics(spec, f0, cfg["analyze.max_order"])
        with open(outdir / "harmonics.csv", "w") as fh:
            fh.write("order,frequency_hz,dbc\n")
            for h in rows:
                fh.write(f"{h.order},{h.frequency!r},{h.dbc!r}\n")
        io.write_json(outdir / "harmonics.json", {**prov, "carrier_hz": f0,
                                                  "harmonics": [h._asdict() for h in rows]})
        return ["harmonics.csv", "harmonics.json"]
    filt, fc = _filtered(trace, cfg)
    prov["center_hz"] = fc
    if pipeline == "amplitude":
        st = amplitude_stats(envelope(filt, cfg["analyze.trim"]), cfg["analyze.n_bins"])
        with open(outdir / "histogram.csv", "w") as fh:
            fh.write("bin_lo_v,bin_hi_v,count\n")
            for lo, hi, n in zip(st.edges[:-1].tolist(), st.edges[1:].tolist(), st.counts.tolist()):
                fh.write(f"{lo!r},{hi!r},{n}\n")
        ratio = st.std / st.mean if st.mean > 0 else math.nan
        io.write_json(outdir / "amplitude.json", {**prov, "mean_v": st.mean, "std_v": st.std,
                                                  "relative_std": ratio,
                                                  "n_samples": int(st.envelope.size)})
        return ["histogram.csv", "amplitude.json"]
    if pipeline == "spectrum":
        win = cfg["analyze.window"] or None
        spec = power_spectrum(filt, n_fft=len(filt) * cfg["analyze.pad_factor"], window=win)
        io.write_spectrum_csv(outdir / "spectrum.csv", spec)
        k = int(np.argmax(spec.power_dbm))
        io.write_json(outdir / "spectrum.json", {**prov, "rbw_hz": spec.rbw,
                                                 "peak_hz": float(spec.freqs[k]),
                                                 "peak_dbm": float(spec.power_dbm[k])})
        return ["spectrum.csv", "spectrum.json"]
    if pipeline == "phase-noise":
        offs = np.array(cfg["analyze.offsets"], dtype=float)
        prof = phase_noise(filt, offs, cfg["analyze.bandwidth"], cfg["analyze.n_segments"],
                           smoothing=cfg["analyze.smoothing"])
        io.write_phase_noise_csv(outdir / "phase_noise.csv", prof)
        io.write_json(outdir / "phase_noise.json", {
            **prov, "carrier_hz": prof.carrier_hz, "carrier_dbm": prof.carrier_dbm,
            "offsets_hz": prof.offsets, "dbc_per_hz": prof.dbc_per_hz, "valid": prof.valid})
        return ["phase_noise.csv", "phase_noise.json"]
    raise C.ConfigKeyError("pipeline", f"unknown pipeline {pipeline!r}")


def run_fit(cfg, opts, inputs, outdir):
    data = read_dataset_csv(C.locate(inputs["dataset"]), inductance=cfg["fit.inductance"],
                            vd=cfg["fit.vd"], v_vd=cfg["fit.v_vd"],
                            temperature_mk=cfg["fit.temperature"])
    init = None
    if cfg["fit.init_c"] is not None or cfg["fit.init_c0"] is not None:
        if cfg["fit.init_c"] is None or cfg["fit.init_c0"] is None:
            raise C.ConfigKeyError("fit.init_c", "set both fit.init_c and fit.init_c0")
        init = (cfg["fit.init_c"], cfg["fit.init_c0"])
    res = fit_capacitances(data, init, fit_vd=cfg["fit.fit_vd"], max_iter=cfg["fit.max_iter"])
    rep = fit_report(res, data)
    io.write_json(outdir / "fit.json", {"result": io.fit_result_to_dict(res),
                                        "report": {k: v for k, v in rep.items() if k not in ("rows", "curve")},
                                        "source_dataset": str(inputs["dataset"]),
                                        "tool_version": __version__})
    with open(outdir / "fit_report.csv", "w") as fh:
        fh.write(f"# status={rep['status']}\n")
        fh.write("v_td,f_hz,f_fit_hz,residual_hz\n")
        for r in rep["rows"]:
            fh.write(f"{r['v_td']!r},{r['f_hz']!r},{r['f_fit_hz']!r},{r['residual_hz']!r}\n")
    with open(outdir / "fit_curve.csv", "w") as fh:
        fh.write("v_td,f_hz\n")
        for v, f in zip(rep["curve"]["v_td"], rep["curve"]["f_hz"]):
            fh.write(f"{v!r},{f!r}\n")
    outs = ["fit.json", "fit_report.csv", "fit_curve.csv"]
    if not res.converged and not opts.get("allow_nonconverged"):
        raise NotConverged(f"fit did not converge: {res.message}", outs)
    return outs


def run_synth(cfg, opts, inputs, outdir):
    try:
        tr = synth_tone(cfg["synth.f0"], cfg["synth.amplitude"], cfg["synth.duration"],
                        cfg["synth.sample_rate"], phase_noise_dbc=cfg["synth.phase_noise"],
                        phase_noise_bandwidth=cfg["synth.phase_noise_bandwidth"],
                        am_depth=cfg["synth.am_depth"], am_freq=cfg["synth.am_freq"],
                        am_noise_std=cfg["synth.am_noise"],
                        am_noise_bandwidth=cfg["synth.am_noise_bandwidth"],
                        harmonics=[(int(o), d) for o, d in cfg["synth.harmonics"]],
                        seed=cfg["synth.seed"])
    except ValueError as exc:
        raise C.ConfigKeyError("synth", str(exc)) from None
    return [_write_trace(outdir, tr, cfg["synth.format"])]


def run_screen(cfg, opts, inputs, outdir):
    src = inputs["curve"]
    model = C.build_diode(src) if src.lower() in C._DIODES else DiodeModel.from_csv(C.locate(src))
    lo, hi = model.v_range
    lo = lo if cfg["screen.v_min"] is None else cfg["screen.v_min"]
    hi = hi if cfg["screen.v_max"] is None else cfg["screen.v_max"]
    rep = screen_diode(model, (lo, hi), cfg["screen.step"])
    io.write_json(outdir / "screen.json", {"source": src, "has_ndr": rep.has_ndr,
                                           "ndr_interval_v": rep.ndr_interval,
                                           "min_didv_s": rep.min_didv, "v_range": [lo, hi]})
    return ["screen.json"]


COMMANDS = {"simulate": run_simulate, "sweep": run_sweep, "analyze": run_analyze,
            "fit": run_fit, "synth": run_synth, "screen": run_screen}


# ----------------------------------------------------------------------
# Plumbing
# ----------------------------------------------------------------------

def _output_dir(arg):
    d = Path(arg or os.environ.get(ENV_OUTPUT_DIR) or "tdo_output")
    d.mkdir(parents=True, exist_ok=True)
    return d


def execute(command, cfg, opts, inputs, outdir):
    """Run a command and write its manifest; returns the manifest dict."""
    outdir = Path(outdir)
    manifest = {
        "command": command,
        "options": opts,
        "config": cfg,
        "inputs": {k: _input_entry(v) for k, v in inputs.items()},
        "seed": cfg.get("sim.seed", cfg.get("synth.seed")),
        "tool_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }

    def finish(names, status):
        manifest["status"] = status
        manifest["outputs"] = {n: io.sha256(outdir / n) for n in names}
        io.write_json(outdir / "manifest.json", manifest)

    try:
        names = COMMANDS[command](cfg, opts, inputs, outdir)
    except NotConverged as exc:
        finish(exc.args[1], "not-converged")
        raise
    finish(names, "ok")
    return manifest


def _input_entry(v):
    if v.lower() in C._DIODES:  # built-in model name, not a file
        return {"path": v, "sha256": None}
    return {"path": v, "sha256": io.sha256(C.locate(v))}


def _parse_sets(pairs):
    out = {}
    for p in pairs or []:
        k, sep, v = p.partition("=")
        if not sep:
            raise C.ConfigKeyError(p, "expected key=value")
        out[k.strip()] = v.strip()
    return out


def _add_common(p, command):
    p.add_argument("--config", help="JSON config file (bundled names such as tdo_default.cfg work too)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--out", help=f"output directory (default ${ENV_OUTPUT_DIR} or ./tdo_output)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tdobench", description="Tunnel-diode oscillator workbench.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    fmt = argparse.RawDescriptionHelpFormatter

    def add(name, help_):
        p = sub.add_parser(name, help=help_, description=help_, epilog=C.help_text(name),
                           formatter_class=fmt)
        _add_common(p, name)
        return p

    add("simulate", "integrate the oscillator circuit and write the tank-voltage trace")
    p = add("sweep", "bias sweep; 'both' runs forward then reverse with state continuation")
    p.add_argument("--var", choices=["v_td", "v_vd"], default="v_td")
    p.add_argument("--direction", choices=["forward", "reverse", "both"], default="both")
    p = add("analyze", "bandpass a trace and run one analysis pipeline")
    p.add_argument("trace", help="trace file (.csv, or .bin for the packed format)")
    p.add_argument("--pipeline", choices=["amplitude", "spectrum", "phase-noise", "harmonics"],
                   default="amplitude")
    p = add("fit", "fit C and C0 to a v_td,f_hz tuning curve")
    p.add_argument("dataset", help="CSV with header v_td,f_hz (bundled: tuning_11mK.csv, tuning_3p4K.csv)")
    p.add_argument("--allow-nonconverged", action="store_true",
                   help="exit 0 even if the fit does not converge")
    add("synth", "write a synthetic carrier with optional phase noise, AM and harmonics")
    p = add("screen", "check an I-V curve for negative differential resistance")
    p.add_argument("curve", help="CSV with header v,i, or bd6-cryo | bd6-rt | bd6-02-25k")
    p = sub.add_parser("replay", help="re-run a manifest and compare output hashes")
    p.add_argument("manifest")
    p.add_argument("--out", help="directory for the replayed outputs (default: <manifest dir>/replay)")
    return ap


def _replay(args) -> int:
    man = io.read_json(args.manifest)
    outdir = Path(args.out) if args.out else Path(args.manifest).parent / "replay"
    outdir.mkdir(parents=True, exist_ok=True)
    inputs = {k: v["path"] for k, v in man["inputs"].items()}
    for k, v in man["inputs"].items():
        if v["sha256"] and io.sha256(C.locate(v["path"])) != v["sha256"]:
            print(f"error: input {v['path']} changed since the manifest was written", file=sys.stderr)
            return EXIT_VALIDATION
    if man["tool_version"] != __version__:
        print(f"warning: manifest written by version {man['tool_version']}, running {__version__}",
              file=sys.stderr)
    cfg = C.resolve(man["command"], man["config"])
    try:
        new = execute(man["command"], cfg, man["options"], inputs, outdir)
    except NotConverged:
        new = io.read_json(outdir / "manifest.json")
    bad = [n for n, h in man["outputs"].items() if new["outputs"].get(n) != h]
    for n in man["outputs"]:
        print(f"{'MISMATCH' if n in bad else 'identical'}  {n}")
    return EXIT_RUNTIME if bad else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            return _replay(args)
        doc = C.load_config_file(args.config) if args.config else {}
        cfg = C.resolve(args.command, doc, _parse_sets(args.set))
        opts, inputs = {}, {}
        if args.command == "sweep":
            opts = {"var": args.var, "direction": args.direction}
        elif args.command == "analyze":
            opts, inputs = {"pipeline": args.pipeline}, {"trace": args.trace}
        elif args.command == "fit":
            opts, inputs = {"allow_nonconverged": args.allow_nonconverged}, {"dataset": args.dataset}
        elif args.command == "screen":
            inputs = {"curve": args.curve}
        outdir = _output_dir(args.out)
        execute(args.command, cfg, opts, inputs, outdir)
        print(f"wrote {outdir / 'manifest.json'}")
        return EXIT_OK
    except NotConverged as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (SimulationError, NoCarrierError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # anything else is a runtime failure, not bad input
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

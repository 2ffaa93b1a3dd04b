"""
Command-line pipeline: ``simulate -> correlate -> fit-* -> report``.

Results are JSON (sorted keys) with values, standard errors and the
provenance of every input (basename + sha256), plus the config hash and
seed carried along in file headers.  Exit codes: 0 ok, 2 usage, 3 input
error, 4 fit did not converge (results are still written).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import analyses, correlator, io, localizer, simkit
from .analyses import models
from .errors import ConfigError, QDCircuitError
from .types import FitResult

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 2, 3, 4
PROVENANCE_KEYS = ("config_sha256", "seed")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _error_record(kind, message, command):
    return json.dumps({"error": kind, "message": message, "subcommand": command},
                      sort_keys=True)


# -- provenance ---------------------------------------------------------------------

def _inputs(**paths):
    out = {}
    for role, path in paths.items():
        if path is None:
            continue
        out[role] = {"file": Path(path).name, "sha256": io.file_sha256(path)}
    return out


def _carried(*paths):
    """Config hash and seed recorded in upstream file headers."""
    found = {}
    for path in paths:
        if path is None:
            continue
        try:
            meta = io.read_meta(path)
        except (QDCircuitError, OSError, UnicodeDecodeError):
            continue
        for key in PROVENANCE_KEYS:
            if key in meta and key not in found:
                found[key] = meta[key]
    return found


def _fit_payload(result: FitResult):
    return {
        "params": {n: {"value": float(v), "stderr": float(e)}
                   for n, v, e in zip(result.names, result.values, result.stderr)},
        "covariance": result.covariance.tolist(),
        "redchi2": result.redchi2, "converged": result.converged,
        "iterations": result.iterations, "gradient_norm": result.gradient_norm,
        "flags": list(result.flags), "extras": _jsonable(result.extras),
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _emit(args, analysis, payload, inputs, carried=None):
    record = {"analysis": analysis, "tool": "qdcircuit", "version": __version__,
              "inputs": inputs}
    record.update(carried or {})
    record.update(payload)
    record = _jsonable(record)
    if args.out:
        io.write_json(args.out, record)
    else:
        sys.stdout.write(json.dumps(record, sort_keys=True, indent=2) + "\n")
    converged = record.get("converged", True)
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


# -- subcommands ---------------------------------------------------------------------

def cmd_simulate(args):
    cfg = io.load_config(args.config)
    if args.seed is not None:
        cfg = simkit.SimConfig(**{**cfg.__dict__, "seed": args.seed})
    meta = {"config_sha256": io.config_hash(cfg), "seed": cfg.seed, "topology": cfg.topology}
    stats = simkit.SimStats()
    io.write_timetags(args.out, simkit.iter_chunks(cfg, stats, args.workers),
                      channel_ids=simkit.CHANNELS, duration_ps=cfg.acquisition_ps, meta=meta)
    payload = {"emitted_photons": stats.emitted_photons,
               "background_photons": stats.background_photons,
               "detected": {str(k): v for k, v in stats.detected.items()},
               "dark_counts": {str(k): v for k, v in stats.dark_counts.items()},
               "dead_time_losses": {str(k): v for k, v in stats.dead_time_losses.items()},
               "duration_ps": cfg.acquisition_ps}
    args.out = args.result
    return _emit(args, "simulate", payload, _inputs(config=args.config),
                 {"config_sha256": meta["config_sha256"], "seed": cfg.seed})


def cmd_correlate(args):
    summary = correlator.StreamSummary()
    hist = correlator.correlate_chunks(io.iter_timetags(args.tags), args.ch_a, args.ch_b,
                                       args.bin_ps, args.max_tau_ps, summary)
    if args.normalize == "cw":
        hist = correlator.normalize_stream_cw(hist, summary, args.ch_a, args.ch_b)
    elif args.normalize == "pulsed":
        if args.period_ns is None:
            raise UsageError("correlate: --period-ns is required for pulsed normalization")
        hist = correlator.normalize_pulsed(hist, args.period_ns * 1e3)
    meta = _carried(args.tags)
    io.write_histogram(args.out, hist, meta)
    return EXIT_OK


def cmd_fit_hbt(args):
    hist = io.read_histogram(args.hist)
    carried = _carried(args.hist)
    if args.mode == "cw":
        result = analyses.fit_antibunching_cw(hist, args.range_ns, args.weighting)
        payload = _fit_payload(result)
        payload["g2_0"] = {"value": result["A"], "stderr": result.error("A")}
    else:
        if args.period_ns is None:
            raise UsageError("fit-hbt: --period-ns is required in pulsed mode")
        table = correlator.pulsed_peak_table(hist, args.period_ns * 1e3, args.n_side)
        est = analyses.hbt_pulsed_g2(table)
        payload = {"g2_0": {"value": est.value, "stderr": est.error},
                   "peak_areas": [list(x) for x in table], "converged": True}
    return _emit(args, f"fit-hbt-{args.mode}", payload, _inputs(hist=args.hist), carried)


def cmd_fit_hom(args):
    par, orth = io.read_histogram(args.par), io.read_histogram(args.orth)
    result = analyses.fit_hom_pulsed(par, orth, args.delay_ns, args.period_ns,
                                     positions_ns=args.positions_ns, weighting=args.weighting)
    payload = _fit_payload(result)
    payload["V_post"] = {"value": result.extras["V_post"], "stderr": result.extras["V_post_err"]}
    payload["V_raw"] = {"value": result.extras["V_raw"], "stderr": result.extras["V_raw_err"]}
    payload["delay_ns"], payload["period_ns"] = args.delay_ns, args.period_ns
    return _emit(args, "fit-hom", payload, _inputs(par=args.par, orth=args.orth),
                 _carried(args.par, args.orth))


def cmd_fit_hom_cw(args):
    perp, par = io.read_histogram(args.perp), io.read_histogram(args.par)
    if len(args.splitters) != 4:
        raise UsageError("fit-hom-cw: --splitters needs r1,t1,r2,t2")
    result = analyses.fit_hom_cw(perp, par, args.splitters, args.delay_ns, args.range_ns,
                                 args.weighting)
    payload = _fit_payload(result)
    ex = result.extras
    payload["V_fitted"] = {"value": ex["V_fitted"], "stderr": ex["V_fitted_err"]}
    payload["V_post_measured"] = {"value": ex["V_post_measured"],
                                  "stderr": ex["V_post_measured_err"]}
    payload["splitters"] = dict(zip(("r1", "t1", "r2", "t2"), args.splitters))
    payload["delay_ns"] = args.delay_ns
    return _emit(args, "fit-hom-cw", payload, _inputs(perp=args.perp, par=args.par),
                 _carried(args.perp, args.par))


def cmd_fit_lifetime(args):
    decay = io.read_histogram(args.decay)
    result = analyses.fit_lifetime(decay, args.range_ns, args.tau_planar_ns,
                                   args.tau_planar_err, args.weighting)
    payload = _fit_payload(result)
    if args.tau_planar_ns is not None:
        payload["purcell_ratio"] = {"value": result.extras["purcell_ratio"],
                                    "stderr": result.extras["purcell_ratio_err"]}
    return _emit(args, "fit-lifetime", payload, _inputs(decay=args.decay),
                 _carried(args.decay))


def _read_xy_table(path, names):
    """Two-column CSV (``#`` comments and a header row allowed)."""
    xs, ys = [], []
    seen_row = False
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            first, seen_row = not seen_row, True
            parts = line.split(",")
            if len(parts) != 2:
                raise io.ParseError(f"expected 2 fields ({', '.join(names)})", path,
                                    f"line {lineno}")
            try:
                x, y = float(parts[0]), float(parts[1])
            except ValueError:
                if first:
                    continue  # header row
                raise io.ParseError("non-numeric field", path, f"line {lineno}")
            xs.append(x)
            ys.append(y)
    return np.array(xs), np.array(ys)


def cmd_fit_dop(args):
    th, y = _read_xy_table(args.data, ("angle_deg", "intensity"))
    result = analyses.fit_dop(th, y)
    payload = _fit_payload(result)
    payload["DOP"] = {"value": result.extras["DOP"], "stderr": result.extras["DOP_err"]}
    print(f"DOP={result.extras['DOP']:.3f}")
    return _emit(args, "fit-dop", payload, _inputs(data=args.data))


def cmd_fit_powerlaw(args):
    p, y = _read_xy_table(args.data, ("power", "intensity"))
    result = analyses.fit_powerlaw(p, y)
    payload = _fit_payload(result)
    payload["slope"] = {"value": result["slope"], "stderr": result.error("slope")}
    if args.reference_slope is not None:
        r = analyses.slope_ratio(result["slope"], args.reference_slope[0], result.error("slope"),
                                 args.reference_slope[1] if len(args.reference_slope) > 1 else 0.0)
        payload["slope_ratio"] = {"value": r.value, "stderr": r.error}
    return _emit(args, "fit-powerlaw", payload, _inputs(data=args.data))


def cmd_splitting_ratio(args):
    s1, s2 = io.read_spectrum(args.spec1), io.read_spectrum(args.spec2)
    est = analyses.splitting_ratio(s1, s2, args.window_nm)
    payload = {"ratio": {"value": est.value, "std": est.error}, "converged": True}
    return _emit(args, "splitting-ratio", payload, _inputs(spec1=args.spec1, spec2=args.spec2))


def cmd_localize(args):
    cmap = io.read_clmap(args.map)
    g = localizer.localize_emitter(cmap, args.center_nm, args.half_width_nm,
                                   roi=tuple(int(v) for v in args.roi) if args.roi else None,
                                   roi_size=args.roi_size)
    payload = _fit_payload(g.fit)
    payload["center_nm"] = {"x": g.x0, "y": g.y0, "x_stderr": g.stderr["x0"],
                            "y_stderr": g.stderr["y0"]}
    payload["at_edge"] = g.at_edge
    return _emit(args, "localize", payload, _inputs(map=args.map))


def cmd_align_eval(args):
    records = io.read_alignment(args.records)
    st = localizer.alignment_stats(records)
    payload = {"stats": st.to_dict(), "converged": True}
    if args.markers is not None:
        pts = np.loadtxt(args.markers, delimiter=",", comments="#", ndmin=2)
        if pts.shape[1] != 4:
            raise io.ParseError("marker table needs measured_x,measured_y,nominal_x,nominal_y",
                                args.markers)
        t = localizer.compute_field_transform(pts[:, :2], pts[:, 2:])
        payload["field_transform"] = {"matrix": t.matrix.tolist(),
                                      "translation": t.translation.tolist(),
                                      "rotation_deg": t.rotation_deg, "scale": t.scale,
                                      "max_residual_nm": t.max_residual_nm}
    return _emit(args, "align-eval", payload,
                 _inputs(records=args.records, markers=args.markers))


def _model_curve(result, grid_ns):
    """Fit curve(s) for ``report`` from a stored result record."""
    kind = result.get("analysis")
    p = {k: v["value"] for k, v in result.get("params", {}).items()}
    if kind == "fit-hbt-cw":
        return {"fit": models.antibunching(grid_ns, (p["A"], p["tau1"]))}
    if kind == "fit-hom-cw":
        s = result["splitters"]
        c = models.hom_cw_coefficients(s["r1"], s["t1"], s["r2"], s["t2"])
        d = result["delay_ns"]
        return {"fit_perp": models.hom_cw_perp(grid_ns, (p["A"], p["tau1"]), c, d),
                "fit_par": models.hom_cw_par(grid_ns, (p["V"], p["tauc"]), p["A"], p["tau1"], c, d)}
    if kind == "fit-hom":
        pos = result["extras"]["positions_ns"]
        perp = [result["extras"]["perp_values"][n] for n in
                ("A0", "A1", "A2", "A3", "A1p", "A2p", "A3p", "tau1")]
        full = [p[n] for n in models.HOM_PULSED_NAMES]
        return {"fit_perp": models.hom_pulsed(grid_ns, models.perp_full(perp), pos),
                "fit_par": models.hom_pulsed(grid_ns, full, pos)}
    if kind == "fit-lifetime":
        t0 = result["extras"]["t_start_ns"]
        return {"fit": models.decay(grid_ns, (p["B"], p["C"], p["tau"]), t0)}
    raise UsageError(f"report: no curve model for analysis {kind!r}")


def cmd_report(args):
    hist = io.read_histogram(args.hist)
    cols = {"tau_ns": hist.tau_ns, "value": hist.values}
    lines = ["# qdcircuit-report 1", "# units tau=ns"]
    fit_lines = []
    if args.result:
        with open(args.result) as fh:
            record = json.load(fh)
        lo, hi = float(hist.tau_ns[0]), float(hist.tau_ns[-1])
        grid = np.linspace(lo, hi, args.grid_points)
        curves = _model_curve(record, grid)
        fit_lines.append("# fit curves sampled on grid")
        fit_lines.append(",".join(["grid_tau_ns"] + list(curves)))
        for i in range(grid.size):
            fit_lines.append(",".join([repr(float(grid[i]))]
                                      + [repr(float(c[i])) for c in curves.values()]))
    lines.append(",".join(cols))
    for row in zip(*cols.values()):
        lines.append(",".join(repr(float(v)) for v in row))
    text = "\n".join(lines + fit_lines) + "\n"
    if args.out:
        io.atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------

def build_parser():
    ap = _Parser(prog="qdcircuit", description=__doc__.strip().splitlines()[0])
    ap.add_argument("--version", action="version", version=f"qdcircuit {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser, metavar="SUBCOMMAND")

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        return p

    def weighting(p):
        p.add_argument("--weighting", choices=("none", "poisson"), default="none")

    p = add("simulate", cmd_simulate, "simulate a time-tag stream from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="tag file (.ttg binary or .csv text)")
    p.add_argument("--result", help="JSON summary (default: stdout)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--workers", type=int, default=1)

    p = add("correlate", cmd_correlate, "histogram coincidences between two channels")
    p.add_argument("--tags", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ch-a", type=int, default=1)
    p.add_argument("--ch-b", type=int, default=2)
    p.add_argument("--bin-ps", type=int, default=100)
    p.add_argument("--max-tau-ps", type=int, default=50_000)
    p.add_argument("--normalize", choices=("raw", "cw", "pulsed"), default="raw")
    p.add_argument("--period-ns", type=float)

    p = add("fit-hbt", cmd_fit_hbt, "g2(0) from a CW or pulsed HBT histogram")
    p.add_argument("--hist", required=True)
    p.add_argument("--mode", choices=("cw", "pulsed"), default="cw")
    p.add_argument("--period-ns", type=float)
    p.add_argument("--n-side", type=int, default=3)
    p.add_argument("--range-ns", type=_floats)
    p.add_argument("--out")
    weighting(p)

    p = add("fit-hom", cmd_fit_hom, "pulsed HOM visibilities (Lorentzian peak model)")
    p.add_argument("--par", required=True)
    p.add_argument("--orth", required=True)
    p.add_argument("--delay-ns", type=float, required=True)
    p.add_argument("--period-ns", type=float, required=True)
    p.add_argument("--positions-ns", type=_floats)
    p.add_argument("--out")
    weighting(p)

    p = add("fit-hom-cw", cmd_fit_hom_cw, "CW HOM two-step fit")
    p.add_argument("--perp", required=True)
    p.add_argument("--par", required=True)
    p.add_argument("--splitters", type=_floats, default=[0.5, 0.5, 0.5, 0.5],
                   help="r1,t1,r2,t2")
    p.add_argument("--delay-ns", type=float, required=True)
    p.add_argument("--range-ns", type=_floats)
    p.add_argument("--out")
    weighting(p)

    p = add("fit-lifetime", cmd_fit_lifetime, "exponential tail fit of a decay trace")
    p.add_argument("--decay", required=True)
    p.add_argument("--range-ns", type=_floats)
    p.add_argument("--tau-planar-ns", type=float)
    p.add_argument("--tau-planar-err", type=float, default=0.0)
    p.add_argument("--out")
    weighting(p)

    p = add("fit-dop", cmd_fit_dop, "degree of linear polarization")
    p.add_argument("--data", required=True, help="CSV angle_deg,intensity")
    p.add_argument("--out")

    p = add("fit-powerlaw", cmd_fit_powerlaw, "log-log slope of intensity vs power")
    p.add_argument("--data", required=True, help="CSV power,intensity")
    p.add_argument("--reference-slope", type=_floats,
                   help="slope[,err] to divide by (reports slope_ratio)")
    p.add_argument("--out")

    p = add("splitting-ratio", cmd_splitting_ratio, "port-1 fraction between two spectra")
    p.add_argument("--spec1", required=True)
    p.add_argument("--spec2", required=True)
    p.add_argument("--window-nm", type=_floats)
    p.add_argument("--out")

    p = add("localize", cmd_localize, "2D Gaussian emitter position on a CL map")
    p.add_argument("--map", required=True)
    p.add_argument("--center-nm", type=float)
    p.add_argument("--half-width-nm", type=float, default=0.0)
    p.add_argument("--roi", type=_floats, help="row0,col0,height,width")
    p.add_argument("--roi-size", type=int, default=11)
    p.add_argument("--out")

    p = add("align-eval", cmd_align_eval, "alignment accuracy statistics")
    p.add_argument("--records", required=True)
    p.add_argument("--markers", help="CSV measured_x,measured_y,nominal_x,nominal_y")
    p.add_argument("--out")

    p = add("report", cmd_report, "plot-ready table of a histogram and its fit curves")
    p.add_argument("--hist", required=True)
    p.add_argument("--result")
    p.add_argument("--grid-points", type=int, default=1001)
    p.add_argument("--out")
    return ap


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    command = argv[0] if argv else None
    try:
        if not argv:
            parser.print_usage(sys.stderr)
            raise UsageError("no subcommand given")
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_usage(sys.stderr)
            raise UsageError("no subcommand given")
        return args.func(args)
    except UsageError as exc:
        known = command in (build_parser()._subparsers._group_actions[0].choices or {})
        kind = "usage" if known or command is None or command.startswith("-") else "unknown-subcommand"
        print(_error_record(kind, str(exc), command), file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(_error_record("config-invalid", str(exc), command), file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(_error_record("missing-input", str(exc), command), file=sys.stderr)
        return EXIT_INPUT
    except QDCircuitError as exc:
        print(_error_record(exc.kind, str(exc), command), file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError) as exc:
        print(_error_record("input-error", str(exc), command), file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

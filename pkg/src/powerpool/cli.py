"""Command-line interface.

Every subcommand writes into a fresh output directory (``--out``) and leaves
a ``manifest.json`` there with the resolved configuration, the seed and
SHA-256 digests of its inputs and outputs.  Settings resolve as: built-in
defaults, then the ``--config`` JSON file, then explicit flags.

Exit status: 0 on success, 1 on invalid arguments or input values, 2 on
I/O failures (unreadable or malformed files, unwritable outputs).
"""

import argparse
import dataclasses
import datetime as dt
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .aggregate import PooledScores, member_scores
from .climatology import date_range, fit_climatology, label_extreme, standardize
from .errors import FieldFormatError
from .experiment import (
    ExperimentConfig,
    bundle_files,
    prepare_output_dir,
    rho_map,
    run_experiment,
    write_manifest,
)
from .grid import GridSpec
from .metrics import roc_curve
from .noise import FractalSpec
from .synth import (
    DEFAULT_START,
    ForecastConfig,
    TruthProcess,
    build_forecast_set,
    gen_truth,
    seasonal_reference,
)
from .tuner import (
    DEFAULT_QUANTILES,
    EnsembleDataset,
    SweepGrid,
    evaluate_leads_many,
    fit_exponential,
    sweep_quantiles,
)


class UsageError(Exception):
    """Bad command line or bad input values; exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _date(text):
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an ISO date, got {text!r}")


def _flag(name):
    return "--" + name.replace("_", "-")


# name: (type, default, help)
_COMMON = {
    "seed": (int, 42, "master seed"),
    "out": (str, None, "output directory (must not exist or be empty)"),
}

_TRUTH = {
    "days": (int, 4012, "number of days to simulate"),
    "resolution": (int, 8, "cells per cube-face edge"),
    "rho": (float, 0.8, "mean daily autocorrelation"),
    "rho_spread": (float, 0.18, "half-gap between the two persistence regimes (0: uniform)"),
    "base_frequency": (int, 4, "lattice frequency of the first noise octave"),
    "octaves": (int, 2, "number of noise octaves"),
    "sigma_ln": (float, 0.5, "log-normal spread of gradient amplitudes"),
    "scale_fields": (int, 10_000, "fields used to estimate the per-cell noise scale"),
    "start": (_date, DEFAULT_START, "date of the first day"),
    "with_temperature": (bool, False, "also write a synthetic absolute temperature series"),
    "workers": (int, 1, "worker threads"),
}

_FORECAST = {
    "truth": (str, None, "truth field file"),
    "issue_start": (int, 3000, "first issue day (index into the truth record)"),
    "issue_count": (int, 1000, "number of consecutive issue days"),
    "n_members": (int, 50, "ensemble size"),
    "beta": (float, 0.6, "spread multiplier (1 = calibrated)"),
    "leads": (_int_list, (7,), "comma-separated lead times in days"),
    "workers": (int, 1, "worker threads"),
}

_FIT_CLIM = {
    "input": (str, None, "field file of daily values (channel 0 is used)"),
    "start": (_date, None, "date of the first field (default: from the sidecar)"),
    "window_days": (int, 31, "odd smoothing window in days"),
}

_LABEL = {
    "input": (str, None, "anomaly field file (or absolute values with --clim)"),
    "q": (float, 0.9, "quantile threshold"),
    "clim": (str, None, "climatology file used to standardize the input first"),
    "start": (_date, None, "date of the first field (default: from the sidecar)"),
}

_SWEEP = {
    "forecast": (str, None, "forecast field file for one lead"),
    "truth": (str, None, "truth field file"),
    "quantiles": (_float_list, DEFAULT_QUANTILES, "comma-separated quantile thresholds"),
    "p": (_float_list, None, "explicit comma-separated p grid (must start at 1)"),
    "p_max": (float, 1000.0, "largest p of the log-spaced grid"),
    "p_count": (int, 61, "number of grid points"),
    "refine": (bool, False, "golden-section refinement around the grid optimum"),
    "workers": (int, 1, "worker threads"),
}

_FIT_EXP = {
    "summary": (str, None, "summary JSON with per-quantile p_opt"),
}

_EVAL = {
    "forecasts": (str, None, "comma-separated forecast field files, one per lead"),
    "truth": (str, None, "truth field file"),
    "summary": (str, None, "summary JSON giving p_opt per quantile"),
    "quantiles": (_float_list, None, "quantiles to evaluate (with --p)"),
    "p": (float, None, "fixed power exponent for every quantile"),
}

_ROC = {
    "forecast": (str, None, "forecast field file for one lead"),
    "truth": (str, None, "truth field file"),
    "q": (float, 0.9, "quantile threshold"),
    "p": (float, 1.0, "power exponent"),
}


def _report_options():
    opts = {}
    for f in dataclasses.fields(ExperimentConfig):
        if f.name in ("seed", "output_dir"):
            continue
        default = f.default
        if isinstance(default, bool):
            kind = bool
        elif isinstance(default, tuple):
            kind = _int_list if f.name == "leads" else _float_list
        else:
            kind = type(default)
        opts[f.name] = (kind, default, f"experiment setting ({default!r} by default)")
    return opts


COMMANDS = {
    "gen-truth": ("simulate the AR(1) anomaly truth", _TRUTH),
    "gen-forecast": ("draw ensemble forecasts from a truth file", _FORECAST),
    "fit-clim": ("fit a day-of-year climatology", _FIT_CLIM),
    "label": ("binary extreme labels", _LABEL),
    "sweep-p": ("AUC over the power-exponent grid", _SWEEP),
    "fit-exponent": ("fit ln(p_opt) = a q + b", _FIT_EXP),
    "eval-leads": ("AUC versus lead time for all methods", _EVAL),
    "report": ("run the full synthetic experiment", _report_options()),
    "roc-svg": ("ROC curve as SVG and CSV", _ROC),
}


def build_parser():
    parser = _Parser(prog="powerpool", description="Power-mean pooling of ensemble forecasts.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (help_text, options) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="JSON file with settings (flags override it)")
        for key, (kind, default, help_opt) in {**_COMMON, **options}.items():
            if kind is bool:
                p.add_argument(_flag(key), dest=key, action=argparse.BooleanOptionalAction,
                               default=argparse.SUPPRESS, help=help_opt)
            else:
                p.add_argument(_flag(key), dest=key, type=kind, default=argparse.SUPPRESS,
                               help=help_opt)
    return parser


def _coerce(kind, value):
    if kind in (_float_list, _int_list):
        if isinstance(value, str):
            return kind(value)
        cast = float if kind is _float_list else int
        return tuple(cast(v) for v in value)
    if kind is _date:
        return value if isinstance(value, dt.date) else _date(value)
    if kind is bool and not isinstance(value, bool):
        raise UsageError(f"expected true or false, got {value!r}")
    return kind(value) if value is not None else None


def resolve_settings(command, namespace):
    """Defaults, then ``--config``, then explicit flags."""
    options = {**_COMMON, **COMMANDS[command][1]}
    settings = {k: d for k, (_, d, _) in options.items()}
    explicit = vars(namespace)
    if explicit.get("config"):
        cfg = io.read_json(explicit["config"])
        if not isinstance(cfg, dict):
            raise UsageError("--config must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        if command == "report" and "output_dir" in cfg:
            cfg.setdefault("out", cfg.pop("output_dir"))
        unknown = set(cfg) - set(options)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        for k, v in cfg.items():
            try:
                settings[k] = _coerce(options[k][0], v)
            except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {k}: {exc}")
    for k in options:
        if k in explicit:
            settings[k] = explicit[k]
    if not settings.get("out"):
        raise UsageError("--out is required")
    return settings


def _require(settings, *keys):
    for key in keys:
        if settings.get(key) in (None, ""):
            raise UsageError(f"{_flag(key)} is required")


def _input(path):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"input file not found: {path}")
    return p


def _json_ready(settings):
    out = {}
    for k, v in settings.items():
        out[k] = v.isoformat() if isinstance(v, dt.date) else v
    return out


def _sidecar_start(path, override):
    if override is not None:
        return override
    meta = io.read_metadata(path) or {}
    return dt.date.fromisoformat(meta["start"]) if "start" in meta else DEFAULT_START


def _load_channel0(path):
    return io.read_field_file(path)[:, 0].astype(float)


def cmd_gen_truth(s, out):
    grid = GridSpec(s["resolution"])
    spatial = FractalSpec.default(s["base_frequency"], s["octaves"], sigma_ln=s["sigma_ln"])
    rho = rho_map(grid, s["rho"], s["rho_spread"], s["seed"])
    proc = TruthProcess(grid, rho, spatial, s["seed"], s["days"], s["start"], s["scale_fields"])
    truth = gen_truth(proc, workers=s["workers"])
    meta = {k: v for k, v in _json_ready(s).items() if k not in ("out", "workers")}
    meta["role"] = "truth"
    io.write_field_file(out / "truth.csf", truth, meta)
    io.write_field_file(out / "rho.csf", rho, {"role": "rho", "seed": s["seed"]})
    outputs = [out / "truth.csf", out / "truth.csf.json", out / "rho.csf", out / "rho.csf.json"]
    if s["with_temperature"]:
        mean, std = seasonal_reference(grid, proc.dates)
        meta_t = dict(meta, role="temperature")
        io.write_field_file(out / "temperature.csf", mean + std * truth, meta_t)
        outputs += [out / "temperature.csf", out / "temperature.csf.json"]
    return outputs, []


def _truth_and_rho(path):
    truth_path = _input(path)
    meta = io.read_metadata(truth_path) or {}
    truth = _load_channel0(truth_path)
    rho_path = truth_path.with_name("rho.csf")
    rho = _load_channel0(rho_path)[0] if rho_path.is_file() else float(meta.get("rho", 0.8))
    return truth, rho, meta, [truth_path] + ([rho_path] if rho_path.is_file() else [])


def _spatial_from(meta):
    spatial = FractalSpec.default(
        int(meta.get("base_frequency", 4)), int(meta.get("octaves", 2)),
        sigma_ln=float(meta.get("sigma_ln", 0.5)),
    )
    return spatial, int(meta.get("scale_fields", 10_000))


def cmd_gen_forecast(s, out):
    _require(s, "truth")
    truth, rho, meta, inputs = _truth_and_rho(s["truth"])
    config = ForecastConfig(s["n_members"], s["beta"], s["leads"])
    issue_days = np.arange(s["issue_start"], s["issue_start"] + s["issue_count"])
    spatial, n_scale = _spatial_from(meta)
    fs = build_forecast_set(truth, issue_days, config, s["seed"], rho, spatial,
                            workers=s["workers"], n_scale_fields=n_scale)
    outputs = []
    for lead in config.leads:
        name = f"forecast_lead{lead:02d}.csf"
        members = np.moveaxis(fs.members(lead), 0, 1)  # (issue day, member, ...)
        side = {
            "role": "forecast", "seed": s["seed"], "lead": lead, "leads": list(config.leads),
            "n_members": config.n_members, "beta": config.beta, "rho": meta.get("rho"),
            "rho_spread": meta.get("rho_spread"), "issue_start": s["issue_start"],
            "issue_count": s["issue_count"], "truth": Path(s["truth"]).name,
        }
        io.write_field_file(out / name, members, side)
        outputs += [out / name, out / (name + ".json")]
    return outputs, inputs


def cmd_fit_clim(s, out):
    _require(s, "input")
    path = _input(s["input"])
    series = _load_channel0(path)
    dates = date_range(_sidecar_start(path, s["start"]), len(series))
    clim = fit_climatology(series, dates, s["window_days"])
    io.write_climatology(out / "climatology.csf", clim)
    return [out / "climatology.csf", out / "climatology.csf.json"], [path]


def cmd_label(s, out):
    _require(s, "input")
    path = _input(s["input"])
    values = _load_channel0(path)
    inputs = [path]
    if s["clim"]:
        clim_path = _input(s["clim"])
        clim = io.read_climatology(clim_path)
        dates = date_range(_sidecar_start(path, s["start"]), len(values))
        values = standardize(values, dates, clim)
        inputs.append(clim_path)
    labels = label_extreme(values, s["q"]).astype(np.float32)
    io.write_field_file(out / "labels.csf", labels, {"role": "labels", "q": s["q"]})
    return [out / "labels.csf", out / "labels.csf.json"], inputs


def _forecast_dataset(forecast_path, truth):
    path = _input(forecast_path)
    meta = io.read_metadata(path)
    if not meta or "lead" not in meta or "issue_start" not in meta:
        raise UsageError(f"{forecast_path}: sidecar with lead and issue_start is required")
    members = np.moveaxis(io.read_field_file(path).astype(float), 1, 0)
    lead, start = int(meta["lead"]), int(meta["issue_start"])
    count = members.shape[1]
    if start + count + lead > len(truth):
        raise UsageError(f"{forecast_path}: verifying days run past the truth record")
    issue = np.arange(start, start + count)
    ds = EnsembleDataset(members.reshape(members.shape[0], -1), truth[issue + lead],
                         truth[issue])
    return lead, ds, path


def _p_grid(s):
    if s["p"]:
        return SweepGrid(s["p"])
    if s["p_count"] == 1:
        return SweepGrid((1.0,))
    return SweepGrid.log_spaced(1.0, s["p_max"], s["p_count"])


def cmd_sweep_p(s, out):
    _require(s, "forecast", "truth")
    truth, _, _, inputs = _truth_and_rho(s["truth"])
    _, ds, path = _forecast_dataset(s["forecast"], truth)
    reports = sweep_quantiles(ds, s["quantiles"], _p_grid(s), s["refine"], s["workers"])
    fit = fit_exponential([(r.q, r.p_opt) for r in reports]) if len(reports) > 1 else None
    io.write_csv(out / "sweep.csv", io.SWEEP_COLUMNS, io.sweep_rows(reports))
    io.write_json(out / "summary.json", io.summary_dict(reports, fit))
    return [out / "sweep.csv", out / "summary.json"], [path] + inputs


def cmd_fit_exponent(s, out):
    _require(s, "summary")
    path = _input(s["summary"])
    summary = io.read_json(path)
    try:
        points = [(float(e["q"]), float(e["p_opt"])) for e in summary["quantiles"]]
    except (KeyError, TypeError) as exc:
        raise UsageError(f"{path}: not a summary file ({exc})")
    fit = fit_exponential(points)
    io.write_json(out / "fit.json", {"a": fit.slope, "b": fit.intercept,
                                      "r_squared": fit.r_squared})
    return [out / "fit.json"], [path]


def cmd_eval_leads(s, out):
    _require(s, "forecasts", "truth")
    truth, _, _, inputs = _truth_and_rho(s["truth"])
    datasets = {}
    for f in s["forecasts"].split(","):
        lead, ds, path = _forecast_dataset(f.strip(), truth)
        datasets[lead] = ds
        inputs.append(path)
    if s["summary"]:
        spath = _input(s["summary"])
        inputs.append(spath)
        p_by_q = {float(e["q"]): float(e["p_opt"]) for e in io.read_json(spath)["quantiles"]}
        if s["quantiles"]:
            p_by_q = {q: p_by_q[q] for q in s["quantiles"] if q in p_by_q}
    elif s["p"] is not None and s["quantiles"]:
        p_by_q = {q: s["p"] for q in s["quantiles"]}
    else:
        raise UsageError("give --summary, or --p together with --quantiles")
    if not p_by_q:
        raise UsageError("no quantiles to evaluate")
    curves = evaluate_leads_many(datasets, p_by_q, sorted(datasets))
    outputs = []
    for curve in curves:
        name = out / f"leads_q{curve.q:g}.csv"
        io.write_csv(name, io.LEAD_COLUMNS, io.lead_rows(curve))
        outputs.append(name)
    return outputs, inputs


def cmd_roc_svg(s, out):
    _require(s, "forecast", "truth")
    truth, _, _, inputs = _truth_and_rho(s["truth"])
    _, ds, path = _forecast_dataset(s["forecast"], truth)
    scores = PooledScores(member_scores(ds.members)).power_mean(s["p"])
    curve = roc_curve(scores, label_extreme(ds.truth, s["q"]))
    io.write_csv(out / "roc.csv", io.ROC_COLUMNS, io.roc_rows(curve))
    io.render_roc_svg(curve, out / "roc.svg", title=f"p = {s['p']:g}, q = {s['q']:g}")
    return [out / "roc.csv", out / "roc.svg"], [path] + inputs


def cmd_report(s, out):
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    cfg = ExperimentConfig.from_dict(
        {k: v for k, v in s.items() if k in fields} | {"output_dir": str(s["out"])}
    )
    result = run_experiment(cfg)
    written = []
    for name, writer in bundle_files(result):
        writer(out / name)
        written.append(out / name)
    return written, []


HANDLERS = {
    "gen-truth": cmd_gen_truth,
    "gen-forecast": cmd_gen_forecast,
    "fit-clim": cmd_fit_clim,
    "label": cmd_label,
    "sweep-p": cmd_sweep_p,
    "fit-exponent": cmd_fit_exponent,
    "eval-leads": cmd_eval_leads,
    "report": cmd_report,
    "roc-svg": cmd_roc_svg,
}


def run(argv):
    """Parse and execute one command; returns ``(exit_code, message)``."""
    try:
        ns = build_parser().parse_args(argv)
        settings = resolve_settings(ns.command, ns)
    except UsageError as exc:
        return 1, str(exc)
    except (OSError, json.JSONDecodeError) as exc:
        return 2, f"cannot read config: {exc}"
    try:
        out = prepare_output_dir(settings["out"])
        outputs, inputs = HANDLERS[ns.command](settings, out)
        write_manifest(out, ns.command, _json_ready(settings), outputs, inputs)
    except UsageError as exc:
        return 1, str(exc)
    except FieldFormatError as exc:
        return 2, str(exc)
    except (OSError, json.JSONDecodeError) as exc:
        return 2, str(exc)
    except (ValueError, TypeError) as exc:
        return 1, str(exc)
    return 0, ""


def main(argv=None):
    code, message = run(sys.argv[1:] if argv is None else argv)
    if code:
        print(f"powerpool: error: {' '.join(message.split())}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

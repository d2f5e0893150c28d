"""Command-line driver.

Every subcommand reads an optional flat ``key = value`` config file
(``--config``), applies ``--set key=value`` and the dedicated flags on top, and
writes its outputs plus ``manifest.json`` into ``--out``.  The manifest records
the resolved configuration, its SHA-256 hash, the seed and the input file
digests.  Failures print a JSON object on stderr and exit with status 1.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from datetime import time
from decimal import Decimal
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import (
    covariance_at_scale,
    covariance_coefficients,
    diffusive_covariance,
    leadlag_delta,
    signature_plot_1d,
    SignaturePlotParams1D,
    volatility_ratio,
)
from .curves import Curve, parse_tau_grid, read_curve_csv, write_curve_csv
from .empirics import aggregate_days, realized_covariance_matrix, realized_epps, realized_signature_plot
from .estimation import fit_mle, fit_regression
from .ingest import SessionSpec, parse_ticks, to_event_logs
from .model import BivariateParams, UnivariateParams
from .simulation import read_event_log_csv, simulate_days, write_event_log_csv


class ConfigError(ValueError):
    pass


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _opt_float(text):
    if text is None or str(text).strip().lower() in ("", "auto", "none"):
        return None
    return float(text)


def _str(text):
    return str(text).strip()


# key -> converter.  Values from files and --set arrive as strings.
KEY_TYPES = {
    "model": _str, "mu": float, "alpha": float, "beta": float,
    "mu1": float, "mu3": float, "alpha12": float, "alpha13": float,
    "alpha31": float, "alpha34": float,
    "horizon": float, "days": int, "burn_in": _opt_float,
    "seed": int, "jobs": int, "tau_grid": _str,
    "asset": int, "n_starts": int, "weights": _str, "tau_weighting": _str,
    "fit_model": _str, "session": _str, "tick_size": _str, "tz": _str,
    "side": _str, "split_multi_tick": _bool, "reversal_tolerance_ns": int,
    "bins": int, "x_points": int,
}

_PARAM_KEYS = ("model", "mu", "alpha", "beta", "mu1", "mu3", "alpha12", "alpha13",
               "alpha31", "alpha34")

# Semantic defaults per command; only these keys enter the config hash.
COMMAND_DEFAULTS = {
    "simulate": {"model": "univariate", "horizon": 7200.0, "days": 1, "burn_in": None, "seed": 0},
    "analytic": {"model": "univariate", "tau_grid": "1:1000:50:log", "x_points": 100},
    "signature": {"tau_grid": "1:1000:50:log", "asset": 1},
    "epps": {"tau_grid": "1:1000:50:log"},
    "fit-mle": {"fit_model": "auto", "n_starts": 8, "seed": 0},
    "fit-reg": {"fit_model": "auto", "tau_grid": "1:1000:50:log", "weights": "1,1,1",
                "tau_weighting": "sqrt", "n_starts": 8, "seed": 0},
    "ingest": {"session": "09:00-11:00", "tick_size": "0.01", "tz": "", "side": "B",
               "split_multi_tick": True, "reversal_tolerance_ns": 0},
    "histogram-x": {"tau_grid": "1:1000:50:log", "tau_weighting": "sqrt", "n_starts": 8,
                    "seed": 0, "bins": 20},
}

UNIVARIATE_DEFAULTS = {"mu": 0.016, "alpha": 0.023, "beta": 0.11}
BIVARIATE_DEFAULTS = {"mu": 0.015, "alpha12": 0.023, "alpha13": 0.05, "beta": 0.11}


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _convert(cfg: dict) -> dict:
    out = {}
    for key, value in cfg.items():
        if key not in KEY_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            out[key] = KEY_TYPES[key](value) if value is not None else None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
    return out


def _canonical_grid(text: str) -> str:
    """One spelling per grid, so equivalent grids hash alike."""
    parse_tau_grid(text)
    parts = [s.strip() for s in text.split(":")]
    mode = parts[3].lower() if len(parts) == 4 else "log"
    return f"{float(parts[0])!r}:{float(parts[1])!r}:{int(parts[2])}:{mode}"


def resolve_config(command: str, file_cfg: dict, overrides: dict) -> dict:
    """Defaults, then the config file, then command-line overrides.

    Keys that do not affect ``command`` are rejected, except ``seed`` (a common
    flag), which is dropped for deterministic commands.
    """
    cfg = dict(COMMAND_DEFAULTS[command])
    merged = dict(file_cfg)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    allowed = set(cfg) | {"jobs"}
    if command in ("simulate", "analytic"):
        allowed |= set(_PARAM_KEYS)
    if "seed" not in allowed:
        merged.pop("seed", None)
    foreign = sorted(k for k in merged if k in KEY_TYPES and k not in allowed)
    if foreign:
        raise ConfigError(f"{command} does not use: {', '.join(foreign)}")
    cfg.update(_convert(merged))
    if "tau_grid" in cfg:
        cfg["tau_grid"] = _canonical_grid(cfg["tau_grid"])
    if command in ("simulate", "analytic"):
        model = cfg.get("model", "univariate")
        if model not in ("univariate", "bivariate"):
            raise ConfigError(f"model must be univariate or bivariate, got {model!r}")
        defaults = UNIVARIATE_DEFAULTS if model == "univariate" else BIVARIATE_DEFAULTS
        for k, v in defaults.items():
            cfg.setdefault(k, v)
        if model == "bivariate":
            cfg.setdefault("mu1", cfg["mu"])
            cfg.setdefault("mu3", cfg["mu1"])
            cfg.setdefault("alpha31", cfg["alpha13"])
            cfg.setdefault("alpha34", cfg["alpha12"])
            for k in ("mu", "alpha"):
                cfg.pop(k, None)
        else:
            for k in ("mu1", "mu3", "alpha12", "alpha13", "alpha31", "alpha34"):
                cfg.pop(k, None)
    return cfg


def build_params(cfg: dict):
    if cfg["model"] == "univariate":
        return UnivariateParams.from_values(cfg["mu"], cfg["alpha"], cfg["beta"])
    return BivariateParams.from_values(cfg["mu1"], cfg["mu3"], cfg["alpha12"], cfg["alpha13"],
                                       cfg["alpha31"], cfg["alpha34"], cfg["beta"])


def config_hash(command: str, cfg: dict, inputs=()) -> str:
    """SHA-256 of the command, resolved config and input digests.

    Paths and the worker count do not enter the hash: they cannot change results.
    """
    cfg = {k: v for k, v in cfg.items() if k != "jobs"}
    blob = json.dumps({"command": command, "config": cfg, "inputs": list(inputs)},
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_logs(paths):
    if not paths:
        raise ConfigError("no event-log files given")
    return [read_event_log_csv(p) for p in paths]


# ---------------------------------------------------------------------------
# Subcommands: each returns the list of files written.
# ---------------------------------------------------------------------------

def cmd_simulate(cfg, args, out: Path, jobs: int):
    params = build_params(cfg)
    logs = simulate_days(params, cfg["horizon"], cfg["days"], seed=cfg["seed"],
                         burn_in=cfg["burn_in"], jobs=jobs)
    width = max(3, len(str(cfg["days"] - 1)))
    files = []
    for i, log in enumerate(logs):
        name = f"day_{i:0{width}d}.csv"
        write_event_log_csv(log, out / name)
        files += [name, name[:-4] + ".json"]
    return files


def cmd_analytic(cfg, args, out: Path, jobs: int):
    params = build_params(cfg)
    taus = parse_tau_grid(cfg["tau_grid"])
    files = []
    if isinstance(params, UnivariateParams):
        write_curve_csv(Curve(taus, signature_plot_1d(params, taus), name="signature"),
                        out / "signature.csv")
        sp = SignaturePlotParams1D.from_params(params)
        _write_json(out / "limits.json", {"tau_to_0": sp.v0, "tau_to_inf": sp.v_inf,
                                          "Lambda": sp.Lambda, "kappa": sp.kappa,
                                          "gamma": sp.gamma})
        files += ["signature.csv", "limits.json"]
    else:
        c = covariance_coefficients(params)
        m = covariance_at_scale(c, taus)
        curves = {
            "c11": m[:, 0, 0], "c22": m[:, 1, 1], "c12": m[:, 0, 1],
            "epps": m[:, 0, 1] / np.sqrt(m[:, 0, 0] * m[:, 1, 1]),
            "leadlag": leadlag_delta(c, taus),
        }
        for name, values in curves.items():
            write_curve_csv(Curve(taus, values, name=name), out / f"{name}.csv")
            files.append(f"{name}.csv")
        _write_json(out / "diffusive.json",
                    {"C2": diffusive_covariance(c).tolist(),
                     "Lambda": [c.Lambda1, c.Lambda3], "G1": c.G1, "G2": c.G2})
        files.append("diffusive.json")
    xs = np.linspace(0.0, 0.99, cfg["x_points"])
    with (out / "volatility_ratio.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "value"])
        for x, v in zip(xs, volatility_ratio(xs)):
            w.writerow([repr(float(x)), repr(float(v))])
    files.append("volatility_ratio.csv")
    return files


def cmd_signature(cfg, args, out: Path, jobs: int):
    logs = _load_logs(args.logs)
    taus = parse_tau_grid(cfg["tau_grid"])
    curve = aggregate_days([realized_signature_plot(log, taus, cfg["asset"] - 1) for log in logs])
    write_curve_csv(curve, out / "signature.csv")
    return ["signature.csv"]


def cmd_epps(cfg, args, out: Path, jobs: int):
    logs = _load_logs(args.logs)
    taus = parse_tau_grid(cfg["tau_grid"])
    write_curve_csv(realized_epps(logs, taus), out / "epps.csv")
    cross = aggregate_days([Curve(taus, [realized_covariance_matrix(log, t)[0, 1] for t in taus])
                            for log in logs])
    write_curve_csv(cross, out / "c12.csv")
    return ["epps.csv", "c12.csv"]


def _fit_model(cfg, n_streams: int):
    m = cfg["fit_model"]
    if m == "auto":
        return "univariate" if n_streams == 2 else "symmetric"
    return m


def cmd_fit_mle(cfg, args, out: Path, jobs: int):
    logs = _load_logs(args.logs)
    fits = [fit_mle(log, model=_fit_model(cfg, log.n_streams), n_starts=cfg["n_starts"],
                    seed=cfg["seed"], jobs=jobs).to_dict() for log in logs]
    _write_json(out / "fit.json", fits[0] if len(fits) == 1 else fits)
    return ["fit.json"]


def _empirical_curves(logs, taus):
    if logs[0].n_streams == 2:
        return aggregate_days([realized_signature_plot(log, taus) for log in logs])
    per_day = [realized_covariance_matrix(log, t) for log in logs for t in taus]
    m = np.array(per_day).reshape(len(logs), len(taus), 2, 2)
    names = {"c11": (0, 0), "c22": (1, 1), "c12": (0, 1)}
    return {k: aggregate_days([Curve(taus, day[:, i, j]) for day in m]) for k, (i, j) in names.items()}


def cmd_fit_reg(cfg, args, out: Path, jobs: int):
    if args.curve:
        curves = read_curve_csv(args.curve[0]) if len(args.curve) == 1 else \
            dict(zip(("c11", "c22", "c12"), (read_curve_csv(p) for p in args.curve)))
        n_streams = 2 if len(args.curve) == 1 else 4
    else:
        logs = _load_logs(args.logs)
        curves = _empirical_curves(logs, parse_tau_grid(cfg["tau_grid"]))
        n_streams = logs[0].n_streams
    weights = [float(w) for w in cfg["weights"].split(",")]
    if len(weights) != 3:
        raise ConfigError("weights must be a1,a2,a12")
    model = _fit_model(cfg, n_streams)
    fit = fit_regression(curves, weights=weights,
                         model=None if model == "univariate" else model,
                         n_starts=cfg["n_starts"], seed=cfg["seed"], jobs=jobs,
                         tau_weighting=cfg["tau_weighting"])
    _write_json(out / "fit.json", fit.to_dict())
    return ["fit.json"]


def _parse_session(text: str):
    try:
        a, b = text.split("-")
        return time.fromisoformat(a.strip()), time.fromisoformat(b.strip())
    except ValueError:
        raise ConfigError(f"bad session {text!r}; expected HH:MM-HH:MM") from None


def cmd_ingest(cfg, args, out: Path, jobs: int):
    if not args.ticks:
        raise ConfigError("no tick files given")
    start, end = _parse_session(cfg["session"])
    session = SessionSpec(start, end, Decimal(cfg["tick_size"]), cfg["tz"] or None)
    side = None if cfg["side"].lower() in ("all", "any", "") else cfg["side"]
    files = []
    for path in args.ticks:
        records = parse_ticks(path, cfg["reversal_tolerance_ns"])
        for day in to_event_logs(records, session, side, cfg["split_multi_tick"]):
            name = f"{day.day}.csv"
            if (out / name).exists() and name in files:
                raise ConfigError(f"day {day.day} appears in more than one input file")
            write_event_log_csv(day.log, out / name)
            files += [name, f"{day.day}.json"]
    return files


def cmd_histogram_x(cfg, args, out: Path, jobs: int):
    logs = _load_logs(args.logs)
    taus = parse_tau_grid(cfg["tau_grid"])
    rows = []
    for i, log in enumerate(logs):
        fit = fit_regression(realized_signature_plot(log, taus), n_starts=cfg["n_starts"],
                             seed=cfg["seed"], jobs=jobs, tau_weighting=cfg["tau_weighting"])
        p = fit.params
        rows.append((Path(args.logs[i]).stem, p.mu, p.alpha, p.beta, p.alpha / p.beta))
    with (out / "fits.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day", "mu", "alpha", "beta", "x"])
        for r in rows:
            w.writerow([r[0]] + [repr(float(v)) for v in r[1:]])
    counts, edges = np.histogram([r[4] for r in rows], bins=cfg["bins"], range=(0.0, 1.0))
    with (out / "histogram_x.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
    return ["fits.csv", "histogram_x.csv"]


COMMANDS = {
    "simulate": cmd_simulate,
    "analytic": cmd_analytic,
    "signature": cmd_signature,
    "epps": cmd_epps,
    "fit-mle": cmd_fit_mle,
    "fit-reg": cmd_fit_reg,
    "ingest": cmd_ingest,
    "histogram-x": cmd_histogram_x,
}


def _set_pair(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip().replace("-", "_"), v.strip()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value config file")
    common.add_argument("--set", type=_set_pair, action="append", default=[],
                        metavar="KEY=VALUE", help="override one config key (repeatable)")
    common.add_argument("--seed", type=int, help="root seed (unsigned 64-bit)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--jobs", type=int, help="worker threads (default 1)")
    common.add_argument("--tau-grid", dest="tau_grid", help="lo:hi:n[:log|lin]")

    parser = argparse.ArgumentParser(
        prog="tickhawkes",
        description="Hawkes tick-price model: simulation, closed forms, estimation and ingestion.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate event logs")
    p.add_argument("--model", choices=("univariate", "bivariate"))
    p.add_argument("--horizon", type=float, help="seconds per day")
    p.add_argument("--days", type=int)
    p.add_argument("--burn-in", dest="burn_in", help="seconds, or 'auto'")

    p = sub.add_parser("analytic", parents=[common], help="closed-form curves")
    p.add_argument("--model", choices=("univariate", "bivariate"))

    for name, text in (("signature", "empirical signature plot"), ("epps", "empirical Epps curve"),
                       ("fit-mle", "maximum-likelihood fit"), ("histogram-x", "per-day fits of x")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("logs", nargs="*", help="event-log CSV files (one per day)")
        if name == "fit-mle":
            p.add_argument("--fit-model", dest="fit_model",
                           choices=("auto", "univariate", "symmetric", "general"))

    p = sub.add_parser("fit-reg", parents=[common], help="multiscale regression fit")
    p.add_argument("logs", nargs="*", help="event-log CSV files (one per day)")
    p.add_argument("--curve", nargs="+", help="signature CSV, or c11 c22 c12 CSVs")
    p.add_argument("--weights", help="a1,a2,a12")
    p.add_argument("--fit-model", dest="fit_model",
                   choices=("auto", "univariate", "symmetric", "general"))

    p = sub.add_parser("ingest", parents=[common], help="trade files to per-day event logs")
    p.add_argument("ticks", nargs="*", help="trade CSV files")
    p.add_argument("--session", help="HH:MM-HH:MM")
    p.add_argument("--tick-size", dest="tick_size")
    p.add_argument("--tz", help="IANA zone for the session clock")
    p.add_argument("--side", help="B, S or all")
    return parser


_FLAG_KEYS = ("seed", "tau_grid", "model", "horizon", "days", "burn_in", "fit_model",
              "weights", "session", "tick_size", "tz", "side")


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_cfg = read_config(args.config) if args.config else {}
        overrides = dict(args.set)
        for key in _FLAG_KEYS:
            value = getattr(args, key, None)
            if value is not None:
                overrides[key] = value
        cfg = resolve_config(args.command, file_cfg, overrides)
        jobs = cfg.pop("jobs", 1) if args.jobs is None else args.jobs
        jobs = max(1, int(jobs))
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        inputs = {}
        for p in list(getattr(args, "logs", None) or []) + list(getattr(args, "ticks", None) or []) \
                + list(getattr(args, "curve", None) or []):
            inputs[str(p)] = _file_digest(p)
        files = COMMANDS[args.command](cfg, args, out, jobs)
        _write_json(out / "manifest.json", {
            "command": args.command,
            "version": __version__,
            "config": cfg,
            "config_hash": config_hash(args.command, cfg, list(inputs.values())),
            "seed": cfg.get("seed"),
            "inputs": inputs,
            "outputs": files,
        })
    except Exception as exc:  # noqa: BLE001 - every failure becomes a machine-readable error
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

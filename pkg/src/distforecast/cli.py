"""Command line entry point: ``distforecast {simulate,fit,evaluate,select,backtest}``.

Every run writes ``run_config.json`` next to its outputs; passing that file
back with ``--config`` replays the run. Exit status is 0 on success, 2 for
configuration or input problems and 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .backtest import (DIRECTIONS, MODELS, VOL_AT, RollingConfig, backtest,
                       rolling_forecast, window_cutoffs)
from .data_io import ensure_dir, load_returns, write_report, write_returns, write_table
from .errors import ConfigError, DistForecastError, NumericalError
from .evaluation import (GRS_SIMS, evaluate_forecasts, rescale_forecasts, select_orders)
from .ordered import EmptyBinWarning, PolynomialSpec, count_parameters, fit_ordered
from .partition import ProbabilityGrid
from .unordered import fit_separate_model, prepare_data

log = logging.getLogger("distforecast")

SEED_ENV = "DISTFORECAST_SEED"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
COMMANDS = ("simulate", "fit", "evaluate", "select", "backtest")


@dataclass
class RunConfig:
    """Everything needed to repeat a run."""

    command: str
    out: str
    input: str = None
    mode: str = "returns"
    model: str = "ordered"
    grid: str = "0.05:0.95:0.025"
    spec: str = "2,3"
    window: int = 500
    stride: int = 1
    vol_at: str = "window_end"
    seed: int = 0
    grs_sims: int = GRS_SIMS
    variance_scale: float = 1.0
    max_order: int = 4
    threshold: float = 0.0
    signal_direction: str = "below"
    risk_free: float = 0.0
    n: int = 2000
    planted: bool = False
    dgp_scale: str = "ewma"

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.command != "simulate":
            if not self.input:
                raise ConfigError("--input is required")
        if self.mode not in ("returns", "prices"):
            raise ConfigError("--mode must be returns or prices")
        if self.model not in MODELS:
            raise ConfigError(f"--model must be one of {MODELS}")
        if self.vol_at not in VOL_AT:
            raise ConfigError(f"--vol-at must be one of {VOL_AT}")
        if self.signal_direction not in DIRECTIONS:
            raise ConfigError(f"--signal-direction must be one of {DIRECTIONS}")
        if self.grs_sims < 10:
            raise ConfigError("--grs-sims must be at least 10")
        if not self.variance_scale > 0:
            raise ConfigError("--variance-scale must be positive")
        if self.dgp_scale not in ("fixed", "ewma"):
            raise ConfigError("--dgp-scale must be fixed or ewma")
        if self.max_order < 0 or self.n < 2:
            raise ConfigError("--max-order must be >= 0 and --n >= 2")
        self.grid_obj().p
        spec = self.spec_obj()
        if self.command in ("fit", "evaluate", "backtest", "simulate") and self.model == "ordered":
            spec.check(self.grid_obj().p)
        if self.command in ("evaluate", "backtest"):
            self.rolling()
        return self

    def grid_obj(self):
        return ProbabilityGrid.parse(self.grid)

    def spec_obj(self):
        return PolynomialSpec.parse(self.spec)

    def rolling(self):
        return RollingConfig(self.window, self.stride, self.model, self.grid_obj(),
                             self.spec_obj(), self.vol_at)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def _default_seed():
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def build_parser():
    ap = argparse.ArgumentParser(prog="distforecast", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="replay a saved run_config.json")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help=f"random seed (default ${SEED_ENV} or 0)")
        p.add_argument("--grid", default=None, help="lo:hi:step, p=N or a comma list")
        p.add_argument("--spec", default=None, help="polynomial orders, e.g. 2,3")
        p.add_argument("-v", "--verbose", action="store_true")
        if data:
            p.add_argument("--input", default=None, help="CSV with header date,value")
            p.add_argument("--mode", choices=("returns", "prices"), default=None)
            p.add_argument("--vol-at", dest="vol_at", choices=VOL_AT, default=None)

    def model(p):
        p.add_argument("--model", choices=MODELS, default=None)

    def rolling(p):
        p.add_argument("--window", type=int, default=None)
        p.add_argument("--stride", type=int, default=None)

    p = sub.add_parser("simulate", help="draw returns from the ordered logit sampler")
    common(p, data=False)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--planted", action="store_true", default=None,
                   help="use the DGP with tradeable direction predictability")
    p.add_argument("--dgp-scale", choices=("fixed", "ewma"), default=None,
                   help="cutoff scaling of the sampler (default ewma)")

    p = sub.add_parser("fit", help="fit one model on a return series")
    common(p)
    model(p)
    p.add_argument("--window", type=int, default=None,
                   help="fit on the last WINDOW returns (default: all)")

    p = sub.add_parser("evaluate", help="rolling forecasts, GRS tests and scores")
    common(p)
    model(p)
    rolling(p)
    p.add_argument("--grs-sims", dest="grs_sims", type=int, default=None)
    p.add_argument("--variance-scale", dest="variance_scale", type=float, default=None,
                   help="rescale forecast variances (diagnostic)")

    p = sub.add_parser("select", help="BIC over polynomial orders")
    common(p)
    p.add_argument("--max-order", dest="max_order", type=int, default=None)
    p.add_argument("--window", type=int, default=None,
                   help="use the last WINDOW returns (default: all)")

    p = sub.add_parser("backtest", help="rolling forecasts and the timing strategy")
    common(p)
    model(p)
    rolling(p)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--signal-direction", dest="signal_direction", choices=DIRECTIONS,
                   default=None)
    p.add_argument("--risk-free", dest="risk_free", type=float, default=None,
                   help="annual risk-free rate")
    return ap


def config_from_args(ns):
    """Merge saved config (if any), explicit flags and defaults into a RunConfig."""
    if ns.config:
        cfg = RunConfig.from_file(ns.config)
        if cfg.command != ns.command:
            raise ConfigError(f"config is for {cfg.command!r}, not {ns.command!r}")
    else:
        cfg = RunConfig(ns.command, out=".", seed=_default_seed())
        if ns.command == "fit":
            cfg.window = 0
        if ns.command == "select":
            cfg.window = 0
            cfg.grid = "0.1:0.9:0.1"
    skip = {"command", "config", "verbose"}
    for k, v in vars(ns).items():
        if k in skip or v is None:
            continue
        setattr(cfg, k, v)
    return cfg.validate()


# -- commands --------------------------------------------------------------

def _load(cfg):
    return load_returns(cfg.input, cfg.mode)


def _tail(series, window):
    if window and window < len(series):
        return series.slice(len(series) - window, len(series))
    return series


def cmd_simulate(cfg, out):
    from .simulate import (DEFAULT_SIGMA, DEFAULT_TAIL, default_params, planted_params,
                           simulate_returns)

    grid, spec = cfg.grid_obj(), cfg.spec_obj()
    params = planted_params(grid) if cfg.planted else default_params(grid, spec)
    series, _ = simulate_returns(params, cfg.n, seed=cfg.seed, scale=cfg.dgp_scale)
    write_returns(series, out / "returns.csv")
    dgp = {"params": params.to_dict(), "sigma": DEFAULT_SIGMA, "tail": DEFAULT_TAIL,
           "scale": cfg.dgp_scale}
    with open(out / "dgp.json", "w", encoding="utf-8") as fh:
        json.dump(dgp, fh, indent=2)
        fh.write("\n")
    return {"returns": str(out / "returns.csv")}


def cmd_fit(cfg, out):
    series = _tail(_load(cfg), cfg.window)
    grid = cfg.grid_obj()
    data = prepare_data(series, window_cutoffs(series, grid, cfg.vol_at))
    if cfg.model == "ordered":
        spec = cfg.spec_obj()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", EmptyBinWarning)
            params = fit_ordered(data, grid, spec)
        d = params.to_dict()
        dg = params.diagnostics
        fit_log = {
            "model": "ordered",
            "n_params": count_parameters(grid.p, data.k, spec)[0],
            "n_obs": data.n,
            "loglik_trace": [float(v) for v in dg["trace"]],
            "init_loglik": dg["init_loglik"],
            "start_loglik": dg["start_loglik"],
            "loglik": dg["loglik"],
            "floor_hits": dg["floor_hits"],
            "init_floor_hits": dg["init_floor_hits"],
            "n_differences": dg["n_differences"],
            "stopped_by": dg["stopped_by"],
            "warnings": [str(w.message) for w in caught],
        }
    else:
        params = fit_separate_model(data, grid)
        d = params.to_dict()
        fit_log = {"model": "separate", "n_params": params.n_params, "n_obs": data.n,
                   "loglik": params.loglik,
                   "ridge_thresholds": list(params.ridge_thresholds)}
    _dump(out / "model.json", d)
    _dump(out / "fit_log.json", fit_log)
    log.info("fitted %s model with %d parameters", cfg.model, fit_log["n_params"])
    return {"model": str(out / "model.json"), "n_params": fit_log["n_params"]}


def cmd_evaluate(cfg, out):
    series = _load(cfg)
    run = rolling_forecast(series, cfg.rolling())
    forecasts = run.forecasts
    if cfg.variance_scale != 1.0:
        forecasts = rescale_forecasts(forecasts, cfg.variance_scale)
    oos = series.slice(cfg.window, len(series))
    report, resid = evaluate_forecasts(forecasts, oos, n_sims=cfg.grs_sims, seed=cfg.seed)
    write_report(report, out / "eval_report.json")
    write_table(out / "residuals.csv", {"date": [str(d) for d in oos.dates],
                                        "residual": [float(e) for e in resid]})
    _write_forecasts(out / "forecasts.csv", forecasts)
    return report.to_record()


def cmd_select(cfg, out):
    series = _tail(_load(cfg), cfg.window)
    grid = cfg.grid_obj()
    data = prepare_data(series, window_cutoffs(series, grid, cfg.vol_at))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyBinWarning)
        rep = select_orders(data, grid, cfg.max_order)
    write_report(rep, out / "selection.json")
    write_table(out / "bic_table.csv", {"q1": [int(v) for v in rep.q1],
                                        "q2": [int(v) for v in rep.q2],
                                        "n_params": [int(v) for v in rep.n_params],
                                        "loglik": list(rep.loglik), "bic": list(rep.bic)})
    return {"best": [rep.best_q1, rep.best_q2]}


def cmd_backtest(cfg, out):
    series = _load(cfg)
    run, signals, strat, bench = backtest(series, cfg.rolling(), cfg.threshold,
                                          cfg.signal_direction, cfg.risk_free)
    write_report(strat, out / "backtest_report.json")
    write_report(bench, out / "benchmark_report.json")
    write_table(out / "equity.csv", {
        "date": [str(d) for d in strat.dates],
        "strategy": list(strat.equity),
        "buy_and_hold": list(bench.equity),
        "strategy_drawdown": list(strat.drawdown),
        "buy_and_hold_drawdown": list(bench.drawdown),
        "relative": list(np.asarray(strat.equity) / np.asarray(bench.equity)),
    })
    write_table(out / "signals.csv", {"date": [str(s.date) for s in signals],
                                      "score": [s.score for s in signals],
                                      "position": [s.position for s in signals]})
    return {"final_equity": strat.final_equity, "buy_and_hold": bench.final_equity}


def _write_forecasts(path, forecasts):
    cols = {"date": [str(f.date) for f in forecasts],
            "adjusted_count": [int(f.adjusted_count) for f in forecasts]}
    for j in range(len(forecasts[0].cdf_values)):
        cols[f"c{j + 1}"] = [float(f.cutoffs[j]) for f in forecasts]
        cols[f"F{j + 1}"] = [float(f.cdf_values[j]) for f in forecasts]
    write_table(path, cols)


def _dump(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


HANDLERS = {"simulate": cmd_simulate, "fit": cmd_fit, "evaluate": cmd_evaluate,
            "select": cmd_select, "backtest": cmd_backtest}


def run(cfg):
    """Execute a validated :class:`RunConfig`; returns a summary dict."""
    out = ensure_dir(cfg.out)
    _dump(out / "run_config.json", cfg.to_dict())
    return HANDLERS[cfg.command](cfg, Path(out))


def main(argv=None):
    ap = build_parser()
    ns = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(ns)
        summary = run(cfg)
    except NumericalError as exc:
        print(f"distforecast: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DistForecastError, ValueError, OSError) as exc:
        print(f"distforecast: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(summary, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

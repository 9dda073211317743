"""Command-line pipeline: simulate, fit, forecast, evaluate, benchmark.

Every option can come from a JSON config (``--config``) and be overridden by
a long-form flag. Artifacts go to ``<out-dir>/fit``, ``<out-dir>/forecast``
and ``<out-dir>/eval`` with model-prefixed names.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd

from . import benchmarks as B
from .data import SiteGeometry, load_csv, split_train_test, write_csv
from .density import N_GRID, Exogenous, forecast_from_state, quantiles
from .exceptions import ConfigurationError, DataError, DomainError, SolarSDEError
from .filtering import FitOptions, FitReport, filter_pass, fit, information_criteria
from .models import default_params, get_model
from .synthetic import DEFAULT_START, simulate_series, true_params, years_to_hours

logger = logging.getLogger("solarsde")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
PLOT_PROBS = (0.05, 0.5, 0.95)
EXPORT_PROBS = tuple(round(0.05 * i, 2) for i in range(1, 20))


class MissingArtifact(SolarSDEError):
    pass


@dataclass
class RunConfig:
    model: str = "M7"
    models: list = field(default_factory=lambda: [f"M{i}" for i in range(1, 8)])
    data: str | None = None
    latitude: float = 56.0
    longitude: float = 8.6
    train_end: str | None = None
    horizons: list = field(default_factory=lambda: [1, 24])
    seed: int = 0
    out_dir: str = "out"
    # simulate
    years: int | None = None
    hours: int | None = None
    start: str = DEFAULT_START
    params: dict | None = None
    output: str | None = None
    # loading
    keep_negative: bool = False
    # optimiser and grid
    nelder_mead_maxiter: int = 4000
    bfgs_maxiter: int = 300
    n_grid: int = N_GRID
    # forecasting / evaluation
    origin: str | None = None
    eval_stride: int = 1
    plot_hours: int = 168
    refit: bool = False

    def validate(self):
        for m in [self.model, *self.models]:
            get_model(m)
        if not self.horizons or any(int(h) != h or h < 1 for h in self.horizons):
            raise ConfigurationError("horizons must be positive integers")
        if self.eval_stride < 1 or self.plot_hours < 1:
            raise ConfigurationError("eval_stride and plot_hours must be positive")
        SiteGeometry(self.latitude, self.longitude)

    @property
    def site(self) -> SiteGeometry:
        return SiteGeometry(self.latitude, self.longitude)

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    def fit_options(self) -> FitOptions:
        return FitOptions(nelder_mead_maxiter=self.nelder_mead_maxiter, bfgs_maxiter=self.bfgs_maxiter)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise MissingArtifact(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{p}: invalid JSON ({exc})") from exc
    known = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"{p}: unknown config keys {sorted(unknown)}")
    return raw


def build_config(args: argparse.Namespace) -> RunConfig:
    values = _load_config(args.config)
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc
    cfg.model = get_model(cfg.model).name
    cfg.models = [get_model(m).name for m in cfg.models]
    cfg.validate()
    return cfg


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _require_data(cfg: RunConfig):
    if cfg.data is None:
        raise ConfigurationError("no dataset given (use --data or the 'data' config key)")
    path = Path(cfg.data)
    if not path.exists():
        raise MissingArtifact(f"dataset not found: {path}")
    return load_csv(path, cfg.site, mask_negative=not cfg.keep_negative)


def _split(cfg: RunConfig, series):
    """(full series, number of training rows)."""
    if cfg.train_end is None:
        return series, len(series)
    train, _ = split_train_test(series, cfg.train_end)
    if len(train) < 2:
        raise DomainError("training part has fewer than 2 rows")
    return series, len(train)


def _fit_path(cfg: RunConfig, model: str) -> Path:
    return cfg.out / "fit" / f"{model}_fit.json"


def _load_fit(cfg: RunConfig, model: str) -> FitReport:
    path = _fit_path(cfg, model)
    if not path.exists():
        raise MissingArtifact(f"fit report not found: {path} (run 'solarsde fit --model {model}' first)")
    return FitReport.load(path)


def _write_rows(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _ts(t) -> str:
    return pd.Timestamp(t).strftime("%Y-%m-%dT%H:%M:%SZ")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> int:
    spec = get_model(cfg.model)
    if cfg.hours is not None:
        n = cfg.hours
    else:
        n = years_to_hours(cfg.years if cfg.years is not None else 1, cfg.start)
    p = true_params(spec)
    if cfg.params:
        unknown = set(cfg.params) - set(spec.param_names)
        if unknown:
            raise ConfigurationError(f"{spec.name} has no parameters {sorted(unknown)}")
        p = p.replace(**cfg.params)
    series = simulate_series(spec, p, n, cfg.seed, cfg.start, cfg.site)
    out = Path(cfg.output) if cfg.output else cfg.out / "data" / f"{spec.name}_synthetic.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(series, out)
    print(f"simulated {spec.name}: {len(series)} hourly rows from {_ts(series.timestamps[0])} "
          f"(seed {cfg.seed}) -> {out}")
    print("parameters: " + ", ".join(f"{k}={_fmt(v)}" for k, v in p.items()))
    return EXIT_OK


def cmd_fit(cfg: RunConfig) -> int:
    series, n_train = _split(cfg, _require_data(cfg))
    spec = get_model(cfg.model)
    train = series.take(slice(0, n_train))
    start = default_params(spec)
    if cfg.params:
        start = start.replace(**{k: v for k, v in cfg.params.items() if k in spec.param_names})
    report = fit(spec, train, start, cfg.fit_options())
    path = _fit_path(cfg, spec.name)
    report.save(path)
    print(f"{spec.name}: LL={report.log_lik:.2f} AIC={report.aic:.2f} BIC={report.bic:.2f} "
          f"n={report.n_obs} k={report.n_params} converged={report.converged}")
    for k, v in report.params.items():
        print(f"  {k:<10} {_fmt(v)}")
    print(f"wrote {path}")
    return EXIT_OK


def _origin_index(cfg: RunConfig, series, n_train: int, horizon: int) -> int:
    if cfg.origin is not None:
        ts = pd.Timestamp(cfg.origin)
        ts = ts.tz_localize("UTC") if ts.tz is None else ts.tz_convert("UTC")
        idx = int(series.timestamps.searchsorted(ts))
        if idx >= len(series) or series.timestamps[idx] != ts:
            raise DomainError(f"origin {cfg.origin} is not a timestamp of the dataset")
        return idx
    return min(n_train - 1, len(series) - 1 - horizon)


def cmd_forecast(cfg: RunConfig) -> int:
    series, n_train = _split(cfg, _require_data(cfg))
    spec = get_model(cfg.model)
    report = _load_fit(cfg, spec.name)
    p = report.params
    res = filter_pass(spec, p, series)
    exog = Exogenous.from_series(series)
    outdir = cfg.out / "forecast"
    for h in cfg.horizons:
        origin = _origin_index(cfg, series, n_train, h)
        if origin + h >= len(series):
            raise DomainError(f"horizon {h} h from {_ts(series.timestamps[origin])} runs past the data")
        dens = forecast_from_state(spec, p, res.filtered_mean[origin], res.filtered_cov[origin], origin, h,
                                   exog, cfg.n_grid, time=series.timestamps[origin + h])
        q = quantiles(dens, EXPORT_PROBS)
        _write_rows(outdir / f"{spec.name}_h{h}_quantiles.csv", ["horizon_h", "prob", "value_wm2"],
                    [[h, f"{pr:.2f}", _fmt(v)] for pr, v in zip(EXPORT_PROBS, q)])
        _write_rows(outdir / f"{spec.name}_h{h}_density.csv", ["x", "density"],
                    [[_fmt(x), _fmt(d)] for x, d in zip(dens.support, dens.values)])
        # plot-ready band over the hours following the origin
        first = origin + h
        last = min(len(series) - 1, first + cfg.plot_hours - 1)
        rows = []
        for target in range(first, last + 1):
            o = target - h
            d = forecast_from_state(spec, p, res.filtered_mean[o], res.filtered_cov[o], o, h, exog, cfg.n_grid)
            qq = quantiles(d, PLOT_PROBS)
            y = series.observed[target]
            rows.append([_ts(series.timestamps[target]), *(_fmt(v) for v in qq), "" if np.isnan(y) else _fmt(y)])
        _write_rows(outdir / f"{spec.name}_h{h}_plot.csv", ["timestamp", "q05", "q50", "q95", "observation"], rows)
        print(f"{spec.name} h={h}: target {_ts(dens.time)} median={q[EXPORT_PROBS.index(0.5)]:.1f} "
              f"90% band=[{q[EXPORT_PROBS.index(0.05)]:.1f}, {q[EXPORT_PROBS.index(0.95)]:.1f}] W/m2")
    print(f"wrote forecasts to {outdir}")
    return EXIT_OK


def _calibration(spec, p, series, res, exog, horizon, targets, n_grid, label):
    fc = [forecast_from_state(spec, p, res.filtered_mean[j - horizon], res.filtered_cov[j - horizon],
                              j - horizon, horizon, exog, n_grid) for j in targets]
    return B.calibration_table(fc, series.observed[targets], label=label)


def cmd_evaluate(cfg: RunConfig) -> int:
    series, n_train = _split(cfg, _require_data(cfg))
    spec = get_model(cfg.model)
    report = _load_fit(cfg, spec.name)
    p = report.params
    res = filter_pass(spec, p, series)
    terms = res.log_lik_terms
    ll_train, ll_test = float(np.nansum(terms[:n_train])), float(np.nansum(terms[n_train:]))
    n_obs_train = int(np.isfinite(terms[:n_train]).sum())
    aic, bic = information_criteria(ll_train, spec.n_params, max(n_obs_train, 1))
    exog = Exogenous.from_series(series)
    tables = {}
    for h in cfg.horizons:
        for label, lo, hi in (("train", h, n_train), ("test", max(h, n_train), len(series))):
            targets = np.arange(lo, hi, cfg.eval_stride)
            if targets.size == 0:
                continue
            try:
                tables[f"{label}_h{h}"] = _calibration(spec, p, series, res, exog, h, targets, cfg.n_grid,
                                                      f"{label}_h{h}")
            except DomainError as exc:
                logger.warning("skipping %s h=%d calibration: %s", label, h, exc)
    outdir = cfg.out / "eval"
    if tables:
        B.write_calibration_csv(tables, outdir / f"{spec.name}_calibration.csv")
    acf = B.residual_acf(res.studentized[:n_train], 40)
    summary = {"model_id": spec.name, "log_lik_train": ll_train, "log_lik_test": ll_test, "aic": aic,
               "bic": bic, "n_obs_train": n_obs_train, "n_params": spec.n_params,
               "acf_fraction_inside_band": acf.fraction_inside(),
               "calibration_max_deviation": {k: t.max_deviation() for k, t in tables.items()}}
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / f"{spec.name}_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    _write_rows(outdir / f"{spec.name}_acf.csv", ["lag", "acf", "band"],
                [[k, _fmt(a), _fmt(acf.band)] for k, a in enumerate(acf.acf)])
    print(f"{spec.name}: LL train={ll_train:.2f} test={ll_test:.2f} AIC={aic:.2f} BIC={bic:.2f}")
    print(f"residual ACF: {100 * acf.fraction_inside():.0f}% of lags 1-40 inside +/-{acf.band:.4f}")
    if tables:
        names = list(tables)
        print("quantile  " + "  ".join(f"{n:>10}" for n in names))
        for i, q in enumerate(next(iter(tables.values())).probs):
            print(f"{q:8.1f}  " + "  ".join(f"{tables[n].frequencies[i]:10.3f}" for n in names))
    print(f"wrote {outdir}")
    return EXIT_OK


def cmd_benchmark(cfg: RunConfig) -> int:
    series, n_train = _split(cfg, _require_data(cfg))
    if n_train == len(series):
        raise ConfigurationError("benchmark needs a test period (set --train-end)")
    train = series.take(slice(0, n_train))
    rows = []
    scored = {}

    def add(name, k, terms=None, note=""):
        rows.append({"model": name, "n_params": k, "note": note})
        if terms is not None:
            scored[name] = terms

    for i, mode in enumerate(B.CLIMATOLOGY_MODES, start=1):
        try:
            table = B.fit_climatology(train, mode)
            add(f"Clim.{i}", None, B.climatology_loglik_terms(table, series))
        except (DataError, DomainError) as exc:
            add(f"Clim.{i}", None, note=str(exc))
    for name, glm in (("ARX", False), ("ARX-GLM", True)):
        try:
            ap = B.fit_arx_glm(train) if glm else B.fit_arx(train)
            add(name, 3, B.arx_loglik_terms(ap, series))
        except (DataError, DomainError) as exc:
            add(name, 3, note=str(exc))
    for m in cfg.models:
        spec = get_model(m)
        path = _fit_path(cfg, spec.name)
        if path.exists() and not cfg.refit:
            report = FitReport.load(path)
        else:
            report = fit(spec, train, None, cfg.fit_options())
            report.save(path)
        add(spec.name, spec.n_params, B.sde_loglik_terms(spec, report.params, series))

    # every model is scored on the same observations
    split, common = B.common_loglik(scored, n_train)
    n_test = int(np.sum(common >= n_train))
    for r in rows:
        r["log_lik_train"], r["log_lik_test"] = split.get(r["model"], (float("nan"), float("nan")))
        r["n_test"] = n_test if r["model"] in split else 0
    rows.sort(key=lambda r: (np.isnan(r["log_lik_test"]), -np.nan_to_num(r["log_lik_test"], nan=0.0)))
    outdir = cfg.out / "eval"
    _write_rows(outdir / "benchmark.csv", ["model", "n_params", "log_lik_train", "log_lik_test", "note", "n_test"],
                [[r["model"], "" if r["n_params"] is None else r["n_params"], _fmt(r["log_lik_train"]),
                  _fmt(r["log_lik_test"]), r["note"], r["n_test"]]
                 for r in rows])
    print(f"{'model':<8} {'k':>4} {'LL train':>12} {'LL test':>12}")
    for r in rows:
        k = "-" if r["n_params"] is None else r["n_params"]
        print(f"{r['model']:<8} {k:>4} {r['log_lik_train']:>12.1f} {r['log_lik_test']:>12.1f}"
              + (f"  ({r['note']})" if r["note"] else ""))
    print(f"scored on {common.size - n_test} training and {n_test} test observations common to all models")
    print(f"wrote {outdir / 'benchmark.csv'}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="solarsde", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--model", help="model id, e.g. M4")
    common.add_argument("--data", help="input CSV (timestamp_utc,ghi_wm2,nwp_wm2)")
    common.add_argument("--train-end", dest="train_end", help="first timestamp of the test period")
    common.add_argument("--horizon", dest="horizons", type=int, nargs="+", help="forecast horizons in hours")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--latitude", type=float)
    common.add_argument("--longitude", type=float)
    common.add_argument("--keep-negative", dest="keep_negative", action="store_const", const=True,
                        help="keep negative irradiance readings instead of flagging them missing")
    common.add_argument("--n-grid", dest="n_grid", type=int)

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic dataset")
    p.add_argument("--years", type=int)
    p.add_argument("--hours", type=int)
    p.add_argument("--start")
    p.add_argument("--output", help="CSV path (default <out-dir>/data/<model>_synthetic.csv)")
    sub.add_parser("fit", parents=[common], help="estimate a model on the training period")
    p = sub.add_parser("forecast", parents=[common], help="predictive densities and quantiles")
    p.add_argument("--origin", help="forecast origin timestamp (default: end of training)")
    p.add_argument("--plot-hours", dest="plot_hours", type=int)
    p = sub.add_parser("evaluate", parents=[common], help="likelihood, calibration and residual checks")
    p.add_argument("--eval-stride", dest="eval_stride", type=int, help="use every n-th forecast target")
    p = sub.add_parser("benchmark", parents=[common], help="compare all models and benchmarks")
    p.add_argument("--models", nargs="+")
    p.add_argument("--refit", action="store_const", const=True, help="ignore existing fit reports")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except (MissingArtifact, ConfigurationError, DataError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolarSDEError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

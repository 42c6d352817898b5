"""Command-line interface for aqicast.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 convergence
error. Reports are JSON, tables are CSV with ISO dates.
"""

from __future__ import annotations

import argparse
import datetime as dt
import glob
import json
import logging
import os
import sys
from pathlib import Path

from .errors import AqicastError, ConfigError

log = logging.getLogger("aqicast")

THREADS_ENV = "AQICAST_THREADS"


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1")
    return value


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {text!r}") from exc


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _json_arg(text: str) -> dict:
    """Inline JSON or a path to a JSON file."""
    p = Path(text)
    raw = p.read_text() if p.is_file() else text
    try:
        value = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"not a JSON file or inline JSON object: {text!r}") from exc
    if not isinstance(value, dict):
        raise argparse.ArgumentTypeError("expected a JSON object")
    return value


def _expand(patterns: list[str]) -> list[Path]:
    paths = []
    for pat in patterns:
        hits = sorted(glob.glob(pat))
        if not hits:
            raise ConfigError(f"no files match {pat!r}")
        paths.extend(Path(h) for h in hits)
    return paths


# -- subcommands ----------------------------------------------------------------


def cmd_ingest(a) -> None:
    from .ingest import gaps_to_json, monthly_gap_report, parse_cpcb_csv, profile_missing

    table = parse_cpcb_csv(_expand(a.inputs), a.schema, threads=a.threads)
    table.to_csv(a.out)
    if a.report:
        Path(a.report).write_text(profile_missing(table).to_json() + "\n")
    if a.gaps:
        Path(a.gaps).write_text(gaps_to_json(monthly_gap_report(table)) + "\n")
    log.info("ingested %d rows into %s", len(table), a.out)


def cmd_aqi(a) -> None:
    from .aqi import BreakpointTable, compute_aqi_table
    from .pipeline import write_json
    from .table import DataTable

    table, report = compute_aqi_table(
        DataTable.from_csv(a.input), BreakpointTable.load(a.breakpoints), a.mode, not a.no_sub_indices
    )
    table.to_csv(a.out)
    if a.report:
        write_json(a.report, {**report.__dict__, "mode": a.mode})


def cmd_prep(a) -> None:
    from .preprocess import (
        DEFAULT_DROP, SplitSpec, apply_scaler, fill_remaining_zero, fit_scaler, impute_group_mean,
        one_hot, outlier_report, select_features, time_split,
    )
    from .table import DataTable

    drop = list(DEFAULT_DROP) if a.drop_default else []
    drop += a.drop or []
    table = DataTable.from_csv(a.input)
    table, mean_log = impute_group_mean(table)
    table, zero_log = fill_remaining_zero(table)
    table = select_features(table, drop)
    if a.log:
        Path(a.log).write_text(mean_log.merge(zero_log).to_json() + "\n")
    if a.outliers:
        Path(a.outliers).write_text(outlier_report(table, a.k).to_json() + "\n")
    if a.split is None:
        table.to_csv(a.out_train)
        return
    train, test = time_split(table, SplitSpec.around(table, a.split))
    if a.encode:
        train, enc = one_hot(train, a.encode)
        test, _ = one_hot(test, a.encode, enc)
        if a.encoding:
            Path(a.encoding).write_text(enc.to_json() + "\n")
    if not a.no_scale:
        params = fit_scaler(train)
        train, test = apply_scaler(params, train), apply_scaler(params, test)
        if a.scaler:
            Path(a.scaler).write_text(params.to_json() + "\n")
    train.to_csv(a.out_train)
    if a.out_test is None:
        raise ConfigError("--out-test is required with --split")
    test.to_csv(a.out_test)


def cmd_eda(a) -> None:
    from .diagnostics import describe, monthly_comovement, monthly_heatmaps, pearson_matrix
    from .pipeline import _slug, write_frame
    from .table import DataTable

    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = DataTable.from_csv(a.input)
    everything = not (a.describe or a.corr or a.heatmap or a.comovement)
    if a.describe or everything:
        write_frame(out / "describe.csv", describe(table))
    if a.corr or everything:
        write_frame(out / "pearson.csv", pearson_matrix(table))
    if a.heatmap:
        by = {"state": "State", "city": "City", "station": "Station"}[a.heatmap]
        for value, grid in monthly_heatmaps(table, by).items():
            write_frame(out / f"heatmap_{a.heatmap}_{_slug(value)}.csv", grid)
    if a.comovement:
        write_frame(out / "comovement.csv", monthly_comovement(table, by=a.comovement_by))


def cmd_ts(a) -> None:
    import numpy as np
    import pandas as pd

    from .diagnostics import acf, acf_band, adf_test, pacf, seasonal_decompose
    from .pipeline import station_series, write_frame, write_json
    from .table import DataTable

    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = DataTable.from_csv(a.input)
    series = station_series(table, a.station, a.series, a.frequency)
    x = series.to_numpy()
    if a.adf:
        write_json(out / "adf.json", {"station": a.station, "series": a.series, **adf_test(x, a.max_lag).as_dict()})
    if a.acf is not None or a.pacf is not None:
        frame = {}
        if a.acf is not None:
            frame["acf"] = pd.Series(acf(x, a.acf))
        if a.pacf is not None:
            frame["pacf"] = pd.Series(pacf(x, a.pacf))
        corr = pd.DataFrame(frame)
        corr.insert(0, "lag", np.arange(len(corr)))
        corr["band"] = acf_band(len(x))
        write_frame(out / "acf_pacf.csv", corr, index=False)
    if a.decompose:
        dec = seasonal_decompose(x, a.decompose).to_frame()
        dec.insert(0, "period", series.index)
        write_frame(out / "decomposition.csv", dec, index=False)


def cmd_fit(a) -> None:
    from .config import ModelConfig
    from .pipeline import stage_fit

    out = Path(a.save)
    tmp_dir = out.parent
    outputs = stage_fit(Path(a.train), tmp_dir, ModelConfig(a.model, a.params or {}), a.seed, a.threads)
    produced = outputs[-1]
    if produced.resolve() != out.resolve():
        produced.replace(out)


def cmd_predict(a) -> None:
    import pandas as pd

    from .models import load_model, predict_table
    from .table import TARGET, DataTable

    table = DataTable.from_csv(a.input)
    model = load_model(a.model)
    features = table.frame.drop(columns=[TARGET], errors="ignore")
    yhat = predict_table(model, table.replace(features))
    out = table.frame[["Station", "Date"]].copy()
    out["Date"] = out["Date"].dt.strftime("%Y-%m-%d")
    out["predicted"] = yhat
    if TARGET in table.numeric_columns:
        out[TARGET] = table.column(TARGET)
    pd.DataFrame(out).to_csv(a.out, index=False, lineterminator="\n")


def cmd_sarimax(a) -> None:
    from .config import SarimaConfig
    from .pipeline import run_sarimax, write_frame, write_json
    from .table import DataTable

    order = tuple(int(v) for v in _csv_list(a.order))
    seasonal = tuple(int(v) for v in _csv_list(a.seasonal))
    if len(order) != 3 or len(seasonal) != 4:
        raise ConfigError("--order takes p,d,q and --seasonal takes P,D,Q,m")
    cfg = SarimaConfig(a.station, order, seasonal, tuple(a.exog or ()), a.forecast, a.frequency)
    fit, frame = run_sarimax(DataTable.from_csv(a.input), cfg, a.boundary)
    write_frame(a.out, frame, index=False)
    if a.report:
        write_json(a.report, {"station": a.station, **fit.to_dict()})
    if not fit.converged:
        log.warning("SARIMAX optimiser stopped at the iteration cap")


def cmd_gridsearch(a) -> None:
    from .evaluate import expand_grid, grid_search
    from .pipeline import write_json
    from .table import DataTable

    grid = a.grid
    log.info("evaluating %d combinations", len(expand_grid(grid)))
    result = grid_search(a.model, grid, DataTable.from_csv(a.train), a.folds, threads=a.threads)
    write_json(a.out, result.to_dict())


def cmd_evaluate(a) -> None:
    import shutil
    import tempfile

    from .pipeline import stage_evaluate

    with tempfile.TemporaryDirectory() as tmp:
        outs = stage_evaluate(Path(a.model), Path(a.test), Path(tmp), a.name, a.bins)
        shutil.copyfile(outs[1], a.report)
        if a.predictions:
            shutil.copyfile(outs[0], a.predictions)
        if a.residuals:
            shutil.copyfile(outs[2], a.residuals)


def cmd_compare(a) -> None:
    from .evaluate import compare_models
    from .pipeline import load_metrics

    matrix = compare_models([load_metrics(p) for p in _expand(a.reports)])
    matrix.to_csv(a.out)
    if a.json:
        Path(a.json).write_text(matrix.to_json() + "\n")
    for name in matrix.ranking:
        print(name)


def cmd_run(a) -> int:
    from .config import load_config
    from .pipeline import run_pipeline

    overrides = {
        "output_dir": str(Path(a.out_dir).resolve()) if a.out_dir else None,
        "seed": a.seed,
        "threads": a.threads if a.threads_given else None,
        "boundary": a.boundary.isoformat() if a.boundary else None,
        "aqi_mode": a.aqi_mode,
        "inputs": [str(Path(p).resolve()) for p in a.inputs] if a.inputs else None,
    }
    result = run_pipeline(load_config(a.config, overrides))
    print(result.manifest_path)
    return result.exit_code


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aqicast", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None, help=f"worker threads (env {THREADS_ENV})")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="parse CPCB exports into a canonical table")
    s.add_argument("--in", dest="inputs", nargs="+", required=True, help="files or glob patterns")
    s.add_argument("--schema", help="column mapping JSON (default: bundled CPCB mapping)")
    s.add_argument("--out", required=True)
    s.add_argument("--report", help="missingness profile JSON")
    s.add_argument("--gaps", help="monthly gap report JSON")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("aqi", help="compute sub-indices and AQI")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--breakpoints", help="breakpoint CSV (default: bundled CPCB table)")
    s.add_argument("--mode", choices=("recompute", "passthrough"), default="recompute")
    s.add_argument("--no-sub-indices", action="store_true")
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.set_defaults(func=cmd_aqi)

    s = sub.add_parser("prep", help="impute, select, split, encode and scale")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--drop-default", action="store_true", help="drop meteorology, BTX and ozone")
    s.add_argument("--drop", type=_csv_list)
    s.add_argument("--split", type=_date, help="first test date")
    s.add_argument("--encode", type=_csv_list, default=["State", "City"])
    s.add_argument("--no-scale", action="store_true")
    s.add_argument("--k", type=float, default=1.5, help="IQR whisker multiplier")
    s.add_argument("--out-train", required=True, help="train table (or the cleaned table without --split)")
    s.add_argument("--out-test")
    s.add_argument("--log", help="imputation log JSON")
    s.add_argument("--outliers", help="outlier report JSON")
    s.add_argument("--encoding", help="encoding map JSON")
    s.add_argument("--scaler", help="scaler parameters JSON")
    s.set_defaults(func=cmd_prep)

    s = sub.add_parser("eda", help="descriptive statistics and plot data")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--describe", action="store_true")
    s.add_argument("--corr", action="store_true")
    s.add_argument("--heatmap", choices=("state", "city", "station"))
    s.add_argument("--comovement", action="store_true")
    s.add_argument("--comovement-by", default=None)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_eda)

    s = sub.add_parser("ts", help="stationarity and autocorrelation diagnostics")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--station", required=True)
    s.add_argument("--series", default="AQI")
    s.add_argument("--frequency", choices=("daily", "monthly"), default="daily")
    s.add_argument("--adf", action="store_true")
    s.add_argument("--max-lag", type=int, default=None)
    s.add_argument("--acf", type=int)
    s.add_argument("--pacf", type=int)
    s.add_argument("--decompose", type=int, metavar="M")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_ts)

    s = sub.add_parser("fit", help="train one model")
    s.add_argument("--model", required=True)
    s.add_argument("--params", type=_json_arg)
    s.add_argument("--train", required=True)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--save", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", help="apply a saved model")
    s.add_argument("--model", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("sarimax", help="fit a station SARIMAX and forecast")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--station", required=True)
    s.add_argument("--order", default="1,0,0")
    s.add_argument("--seasonal", default="0,0,0,12")
    s.add_argument("--exog", type=_csv_list)
    s.add_argument("--forecast", type=int, default=30)
    s.add_argument("--frequency", choices=("daily", "monthly"), default="monthly")
    s.add_argument("--boundary", type=_date, help="fit on periods before this date")
    s.add_argument("--out", required=True)
    s.add_argument("--report", help="fitted coefficients JSON")
    s.set_defaults(func=cmd_sarimax)

    s = sub.add_parser("gridsearch", help="expanding-window grid search")
    s.add_argument("--model", required=True)
    s.add_argument("--grid", type=_json_arg, required=True)
    s.add_argument("--train", required=True)
    s.add_argument("--folds", type=int, default=3)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gridsearch)

    s = sub.add_parser("evaluate", help="score a saved model on a test table")
    s.add_argument("--model", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--name")
    s.add_argument("--bins", type=int, default=20)
    s.add_argument("--predictions")
    s.add_argument("--residuals")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("compare", help="build the performance matrix")
    s.add_argument("--reports", nargs="+", required=True, help="metrics JSON files or globs")
    s.add_argument("--out", required=True)
    s.add_argument("--json")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("run", help="run the whole pipeline from a YAML config")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir")
    s.add_argument("--seed", type=int)
    s.add_argument("--boundary", type=_date)
    s.add_argument("--aqi-mode", choices=("recompute", "passthrough"))
    s.add_argument("--input", dest="inputs", nargs="+")
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args.threads_given = args.threads is not None or bool(os.environ.get(THREADS_ENV))
        if args.threads is None:
            args.threads = _default_threads()
        elif args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        code = args.func(args)
        return int(code or 0)
    except AqicastError as exc:
        print(f"aqicast {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"aqicast {args.command}: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())

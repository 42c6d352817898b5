"""File-to-file pipeline stages and the end-to-end orchestrator.

Every stage reads its inputs from disk and writes its outputs to disk, so a
stage can be re-run alone and the manifest can list exactly what each stage
consumed and produced.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from . import __version__
from .aqi import BreakpointTable, compute_aqi_table
from .config import ModelConfig, RunConfig, SarimaConfig
from .diagnostics import (
    acf, acf_band, adf_test, describe, monthly_comovement, monthly_heatmaps, pacf,
    pearson_matrix, seasonal_decompose,
)
from .errors import AqicastError, ConfigError, DataError
from .evaluate import (
    MetricsReport, PerformanceMatrix, compare_models, grid_search, metrics, residual_report,
)
from .ingest import SchemaConfig, gaps_to_json, monthly_gap_report, parse_cpcb_csv, profile_missing, source_summary
from .models import fit_family, load_model, predict_table, save_model
from .preprocess import (
    SplitSpec, apply_scaler, fill_remaining_zero, fit_scaler, impute_group_mean, one_hot,
    outlier_report, select_features, time_split,
)
from .sarimax import SarimaSpec, fit_sarimax, forecast
from .table import META_SUFFIX, TARGET, DataTable

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
LOG_FILE = "run.log"
BASELINE = "mean-baseline"


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, (dt.date, Path)):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_frame(path, frame: pd.DataFrame, index: bool = True) -> Path:
    path = Path(path)
    frame.to_csv(path, index=index, lineterminator="\n", na_rep="")
    return path


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# -- stages ------------------------------------------------------------------------


def stage_ingest(inputs: Sequence[Path], out_dir: Path, schema=None, threads: int = 1) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    table = parse_cpcb_csv(inputs, schema, threads=threads)
    table.to_csv(out_dir / "table.csv")
    profile = profile_missing(table)
    (out_dir / "missingness.json").write_text(profile.to_json() + "\n")
    (out_dir / "monthly_gaps.json").write_text(gaps_to_json(monthly_gap_report(table)) + "\n")
    sources = source_summary(table)
    for s in sources:
        s["path"] = Path(s["path"]).name
    write_json(out_dir / "sources.json", sources)
    return [out_dir / n for n in ("table.csv", "table.csv.meta.json", "missingness.json", "monthly_gaps.json", "sources.json")]


def stage_aqi(table_csv: Path, out_dir: Path, breakpoints=None, mode: str = "passthrough",
              sub_indices: bool = False) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    table = DataTable.from_csv(table_csv)
    result, report = compute_aqi_table(table, BreakpointTable.load(breakpoints), mode, sub_indices)
    result.to_csv(out_dir / "table.csv")
    write_json(out_dir / "aqi_report.json", {**report.__dict__, "mode": mode})
    return [out_dir / "table.csv", out_dir / "table.csv.meta.json", out_dir / "aqi_report.json"]


def stage_prep(table_csv: Path, out_dir: Path, boundary: dt.date, drop: Sequence[str],
               encode: Sequence[str] = ("State", "City"), train_start=None, test_end=None,
               outlier_k: float = 1.5) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    table = DataTable.from_csv(table_csv)
    table, mean_log = impute_group_mean(table)
    table, zero_log = fill_remaining_zero(table)
    (out_dir / "imputation.json").write_text(mean_log.merge(zero_log).to_json() + "\n")
    table = select_features(table, drop)
    report = outlier_report(table, outlier_k)
    (out_dir / "outliers.json").write_text(report.to_json() + "\n")
    table.to_csv(out_dir / "clean.csv")

    whole = SplitSpec.around(table, boundary)
    spec = SplitSpec(train_start or whole.train_start, boundary, test_end or whole.test_end)
    train, test = time_split(table, spec)
    if encode:
        train, encoding = one_hot(train, encode)
        test, _ = one_hot(test, encode, encoding)
        (out_dir / "encoding.json").write_text(encoding.to_json() + "\n")
    scaler = fit_scaler(train)
    train, test = apply_scaler(scaler, train), apply_scaler(scaler, test)
    (out_dir / "scaler.json").write_text(scaler.to_json() + "\n")
    train.to_csv(out_dir / "train.csv")
    test.to_csv(out_dir / "test.csv")
    names = ["imputation.json", "outliers.json", "clean.csv", "clean.csv.meta.json"]
    names += ["encoding.json"] if encode else []
    names += ["scaler.json", "train.csv", "train.csv.meta.json", "test.csv", "test.csv.meta.json"]
    return [out_dir / n for n in names]


def _slug(value: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in value).strip("_") or "value"


def stage_eda(table_csv: Path, out_dir: Path, heatmap_by: str = "City") -> list[Path]:
    """Descriptive statistics, correlations and monthly plot data."""
    out_dir.mkdir(parents=True, exist_ok=True)
    table = DataTable.from_csv(table_csv)
    outputs = [write_frame(out_dir / "describe.csv", describe(table)),
               write_frame(out_dir / "pearson.csv", pearson_matrix(table))]
    if TARGET in table.numeric_columns:
        for value, grid in monthly_heatmaps(table, heatmap_by).items():
            outputs.append(write_frame(out_dir / f"heatmap_{heatmap_by.lower()}_{_slug(value)}.csv", grid))
        outputs.append(write_frame(out_dir / "comovement.csv", monthly_comovement(table, by=heatmap_by)))
    return outputs


def station_series(table: DataTable, station: str, column: str = TARGET, frequency: str = "daily") -> pd.Series:
    frame = table.frame
    sub = frame[frame["Station"] == station]
    if sub.empty:
        raise DataError(f"unknown station {station!r}; available: {', '.join(sorted(frame['Station'].unique()))}")
    s = sub.set_index("Date")[column]
    if frequency == "monthly":
        s = s.groupby(s.index.to_period("M")).mean()
        s.index = s.index.astype(str)
    else:
        s.index = s.index.strftime("%Y-%m-%d")
    if s.isna().any():
        raise DataError(f"station {station!r} has missing {column} values")
    return s


def stage_ts(table_csv: Path, out_dir: Path, station: str, column: str = TARGET, frequency: str = "daily",
             nlags: int = 24, period: int | None = 12, max_lag: int | None = None) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    series = station_series(DataTable.from_csv(table_csv), station, column, frequency)
    x = series.to_numpy()
    outputs = []
    adf = adf_test(x, max_lag)
    outputs.append(write_json(out_dir / "adf.json", {"station": station, "series": column,
                                                       "frequency": frequency, **adf.as_dict()}))
    lags = min(nlags, (len(x) - 1) // 2)
    corr = pd.DataFrame({"lag": np.arange(lags + 1), "acf": acf(x, lags), "pacf": pacf(x, lags)})
    corr["band"] = acf_band(len(x))
    outputs.append(write_frame(out_dir / "acf_pacf.csv", corr, index=False))
    if period:
        dec = seasonal_decompose(x, period).to_frame()
        dec.insert(0, "period", series.index)
        outputs.append(write_frame(out_dir / "decomposition.csv", dec, index=False))
    return outputs


def stage_fit(train_csv: Path, out_dir: Path, model: ModelConfig, seed: int, threads: int = 1) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    train = DataTable.from_csv(train_csv)
    outputs = []
    params = dict(model.params)
    if model.family != "svr":
        params.setdefault("seed", seed)
    if model.grid:
        grid = {k: list(v) for k, v in model.grid.items()}
        result = grid_search(model.family, grid, train, model.folds, threads=threads)
        outputs.append(write_json(out_dir / f"{model.family}.grid.json", result.to_dict()))
        if not math.isfinite(result.best_score):
            raise DataError(f"{model.family}: every grid combination failed")
        params.update(result.best_params)
    features = [c for c in train.numeric_columns if c != TARGET]
    frame = train.frame
    keep = frame[TARGET].notna().to_numpy()
    X = frame.loc[keep, features].to_numpy(dtype=np.float64)
    y = frame.loc[keep, TARGET].to_numpy(dtype=np.float64)
    fitted = fit_family(model.family, X, y, params, features, threads)
    path = out_dir / f"{model.family}.model.json"
    save_model(fitted, path)
    outputs.append(path)
    return outputs


def _score(name: str, y, yhat, out_dir: Path, frame: pd.DataFrame, bins: int) -> list[Path]:
    preds = frame[["Station", "Date"]].copy()
    preds["Date"] = preds["Date"].dt.strftime("%Y-%m-%d")
    preds["actual"] = y
    preds["predicted"] = yhat
    preds["residual"] = y - yhat
    m = metrics(y, yhat)
    return [
        write_frame(out_dir / f"{name}.predictions.csv", preds, index=False),
        write_json(out_dir / f"{name}.metrics.json", {"model": name, **m.to_dict()}),
        write_json(out_dir / f"{name}.residuals.json", residual_report(y, yhat, bins).to_dict()),
    ]


def stage_evaluate(model_json: Path, test_csv: Path, out_dir: Path, name: str | None = None,
                   bins: int = 20) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    test = DataTable.from_csv(test_csv)
    model = load_model(model_json)
    frame = test.frame
    keep = frame[TARGET].notna()
    sub = test.replace(frame[keep].reset_index(drop=True))
    yhat = predict_table(model, sub)
    name = name or Path(model_json).name.split(".")[0]
    return _score(name, sub.column(TARGET), yhat, out_dir, sub.frame, bins)


def stage_baseline(train_csv: Path, test_csv: Path, out_dir: Path, bins: int = 20) -> list[Path]:
    """Score a predictor that always returns the training mean of the target."""
    out_dir.mkdir(parents=True, exist_ok=True)
    mean = float(np.nanmean(DataTable.from_csv(train_csv).column(TARGET)))
    frame = DataTable.from_csv(test_csv).frame
    frame = frame[frame[TARGET].notna()].reset_index(drop=True)
    y = frame[TARGET].to_numpy()
    return _score(BASELINE, y, np.full(len(y), mean), out_dir, frame, bins)


def load_metrics(path) -> tuple[str, MetricsReport]:
    d = json.loads(Path(path).read_text())
    if "model" not in d or "rmse" not in d:
        raise ConfigError(f"{path}: not a metrics report")
    return d["model"], MetricsReport.from_dict(d)


def stage_compare(reports: Sequence[Path], out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    if not reports:
        raise ConfigError("no metrics reports to compare")
    matrix = compare_models([load_metrics(p) for p in sorted(reports)])
    matrix.to_csv(out_dir / "performance_matrix.csv")
    (out_dir / "performance_matrix.json").write_text(matrix.to_json() + "\n")
    return [out_dir / "performance_matrix.csv", out_dir / "performance_matrix.json"]


def run_sarimax(table: DataTable, cfg: SarimaConfig, boundary: dt.date | None = None):
    """Fit on the station's series before ``boundary`` and forecast past it.

    Returns (fit, forecast frame). Actual values are attached where the
    table covers the forecast horizon; future exogenous values come from the
    table, so a horizon beyond its end is truncated.
    """
    spec = SarimaSpec(*cfg.order, *cfg.seasonal[:3], m=cfg.seasonal[3], exog=cfg.exog)
    cols = [TARGET, *cfg.exog]
    series = {c: station_series(table, cfg.station, c, cfg.frequency) for c in cols}
    idx = series[TARGET].index
    cut = len(idx) if boundary is None else int(np.searchsorted(
        np.asarray(idx), boundary.isoformat()[: 7 if cfg.frequency == "monthly" else 10]))
    y = series[TARGET].to_numpy()
    X = np.column_stack([series[c].to_numpy() for c in cfg.exog]) if cfg.exog else None
    fit = fit_sarimax(y[:cut], None if X is None else X[:cut], spec)
    steps = cfg.forecast
    if X is not None:
        steps = min(steps, len(y) - cut)
        if steps < cfg.forecast:
            log.warning("forecast horizon truncated to %d steps (exogenous data ends)", steps)
    fc = forecast(fit, steps, None if X is None else X[cut : cut + steps])
    future = list(idx[cut : cut + steps])
    if len(future) < steps:
        last = pd.Period(idx[-1], freq="M" if cfg.frequency == "monthly" else "D")
        future += [str(last + k) for k in range(1, steps - len(future) + 1)]
    frame = pd.DataFrame({"period": future, "forecast": fc.point, "lower95": fc.lower, "upper95": fc.upper})
    actual = np.full(steps, np.nan)
    avail = min(steps, len(y) - cut)
    actual[:avail] = y[cut : cut + avail]
    frame["actual"] = actual
    return fit, frame


def stage_sarimax(table_csv: Path, out_dir: Path, cfg: SarimaConfig, boundary: dt.date | None = None) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    fit, frame = run_sarimax(DataTable.from_csv(table_csv), cfg, boundary)
    outputs = [write_frame(out_dir / "sarimax_forecast.csv", frame, index=False)]
    report = {"station": cfg.station, "frequency": cfg.frequency, **fit.to_dict()}
    scored = frame.dropna(subset=["actual"])
    if len(scored):
        report["forecast_metrics"] = metrics(scored["actual"], scored["forecast"]).to_dict()
    outputs.append(write_json(out_dir / "sarimax_fit.json", report))
    return outputs


# -- orchestration --------------------------------------------------------------


@dataclass
class StageRecord:
    name: str
    status: str
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    error: str | None = None


@dataclass
class RunResult:
    exit_code: int
    manifest_path: Path
    stages: list[StageRecord]

    @property
    def manifest(self) -> dict:
        return json.loads(self.manifest_path.read_text())


class _Recorder:
    def __init__(self, root: Path):
        self.root = root
        self.stages: list[StageRecord] = []

    def rel(self, p: Path) -> str:
        p = Path(p)
        try:
            return p.resolve().relative_to(self.root.resolve()).as_posix()
        except ValueError:
            return p.name

    def run(self, name: str, inputs: Sequence[Path], fn, *args, **kwargs):
        log.info("stage %s", name)
        missing = [p for p in inputs if not Path(p).exists()]
        if missing:
            raise DataError(f"stage {name}: missing inputs {[self.rel(p) for p in missing]}")
        outputs = fn(*args, **kwargs)
        self.stages.append(StageRecord(name, "ok", [self.rel(p) for p in inputs], [self.rel(p) for p in outputs]))
        return outputs


def _tables(*paths: Path) -> list[Path]:
    """Each table CSV together with its metadata sidecar."""
    return [q for p in paths for q in (Path(p), Path(str(p) + META_SUFFIX))]


def _manifest(cfg: RunConfig, rec: _Recorder, status: str, error: StageRecord | None) -> dict:
    artifacts = {}
    for st in rec.stages:
        for out in st.outputs:
            artifacts[out] = sha256(rec.root / out)
    stages = [st.__dict__ for st in rec.stages]
    if error is not None:
        stages.append(error.__dict__)
    return {
        "format": "aqicast-manifest",
        "version": __version__,
        "status": status,
        "config_fingerprint": cfg.fingerprint(),
        "seed": cfg.seed,
        "inputs": {Path(p).name: sha256(p) for p in cfg.inputs},
        "stages": stages,
        "artifacts": dict(sorted(artifacts.items())),
        "log": LOG_FILE,
    }


def run_pipeline(cfg: RunConfig) -> RunResult:
    """Run every stage in order; the manifest records what completed."""
    cfg.validate()
    root = Path(cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(root / LOG_FILE, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    pkg_log = logging.getLogger("aqicast")
    pkg_log.addHandler(handler)
    old_level = pkg_log.level
    pkg_log.setLevel(logging.INFO)
    rec = _Recorder(root)
    failure = None
    exit_code = 0
    current = "validate"
    try:
        d_ingest, d_aqi, d_prep = root / "01_ingest", root / "02_aqi", root / "03_prep"
        d_eda, d_models, d_eval, d_cmp = root / "04_eda", root / "05_models", root / "06_evaluate", root / "07_compare"
        current = "ingest"
        rec.run("ingest", cfg.inputs, stage_ingest, cfg.inputs, d_ingest, cfg.schema, cfg.threads)
        current = "aqi"
        rec.run("aqi", _tables(d_ingest / "table.csv"), stage_aqi, d_ingest / "table.csv", d_aqi, cfg.breakpoints, cfg.aqi_mode)
        current = "prep"
        rec.run("prep", _tables(d_aqi / "table.csv"), stage_prep, d_aqi / "table.csv", d_prep, cfg.boundary, cfg.drop,
                cfg.encode, cfg.train_start, cfg.test_end, cfg.outlier_k)
        current = "eda"
        rec.run("eda", _tables(d_aqi / "table.csv"), stage_eda, d_aqi / "table.csv", d_eda, cfg.heatmap_by)
        if cfg.sarimax is not None:
            s = cfg.sarimax
            current = "ts"
            rec.run("ts", _tables(d_prep / "train.csv"), stage_ts, d_prep / "train.csv", d_eda / "ts", s.station,
                    TARGET, s.frequency, 24, s.seasonal[3] if s.seasonal[3] > 1 else None)
            current = "sarimax"
            rec.run("sarimax", _tables(d_prep / "clean.csv"), stage_sarimax, d_prep / "clean.csv", d_models / "sarimax",
                    s, cfg.boundary)
        reports = []
        for model in cfg.models:
            current = f"fit:{model.family}"
            outs = rec.run(current, _tables(d_prep / "train.csv"), stage_fit, d_prep / "train.csv", d_models, model,
                           cfg.seed, cfg.threads)
            current = f"evaluate:{model.family}"
            outs = rec.run(current, [outs[-1], *_tables(d_prep / "test.csv")], stage_evaluate, outs[-1], d_prep / "test.csv",
                           d_eval, model.family, cfg.residual_bins)
            reports.append(outs[1])
        if cfg.baseline:
            current = "evaluate:baseline"
            outs = rec.run(current, _tables(d_prep / "train.csv", d_prep / "test.csv"), stage_baseline,
                           d_prep / "train.csv", d_prep / "test.csv", d_eval, cfg.residual_bins)
            reports.append(outs[1])
        if reports:
            current = "compare"
            rec.run("compare", reports, stage_compare, reports, d_cmp)
        status = "ok"
    except AqicastError as exc:
        log.error("stage %s failed: %s", current, exc)
        failure = StageRecord(current, "failed", error=str(exc))
        exit_code = exc.exit_code
        status = "failed"
    finally:
        pkg_log.removeHandler(handler)
        pkg_log.setLevel(old_level)
        handler.close()
    path = write_json(root / MANIFEST, _manifest(cfg, rec, status, failure))
    return RunResult(exit_code, path, rec.stages + ([failure] if failure else []))

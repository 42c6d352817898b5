"""Declarative run configuration (YAML)."""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .models import FAMILIES
from .preprocess import DEFAULT_DROP

DEFAULT_SEED = 42


@dataclass
class ModelConfig:
    family: str
    params: dict = field(default_factory=dict)
    grid: dict | None = None
    folds: int = 3


@dataclass
class SarimaConfig:
    station: str
    order: tuple[int, int, int] = (1, 0, 0)
    seasonal: tuple[int, int, int, int] = (0, 0, 0, 12)
    exog: tuple[str, ...] = ()
    forecast: int = 30
    frequency: str = "monthly"  # or "daily"


@dataclass
class RunConfig:
    inputs: list[Path]
    output_dir: Path
    schema: Path | None = None
    breakpoints: Path | None = None
    aqi_mode: str = "passthrough"
    drop: list[str] = field(default_factory=lambda: list(DEFAULT_DROP))
    encode: list[str] = field(default_factory=lambda: ["State", "City"])
    boundary: dt.date | None = None
    train_start: dt.date | None = None
    test_end: dt.date | None = None
    models: list[ModelConfig] = field(default_factory=list)
    baseline: bool = True
    seed: int = DEFAULT_SEED
    threads: int = 1
    outlier_k: float = 1.5
    heatmap_by: str = "City"
    residual_bins: int = 20
    sarimax: SarimaConfig | None = None

    def validate(self) -> "RunConfig":
        if not self.inputs:
            raise ConfigError("config lists no input files")
        for p in [*self.inputs, self.schema, self.breakpoints]:
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"referenced file does not exist: {p}")
        if self.boundary is None:
            raise ConfigError("split.boundary is required")
        if self.aqi_mode not in ("passthrough", "recompute"):
            raise ConfigError(f"aqi_mode must be passthrough or recompute, got {self.aqi_mode!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        names = [m.family for m in self.models]
        for m in self.models:
            if m.family not in FAMILIES:
                raise ConfigError(f"unknown model family {m.family!r}; expected one of {FAMILIES}")
            if m.folds < 1:
                raise ConfigError("folds must be >= 1")
        if len(set(names)) != len(names):
            raise ConfigError("each model family may appear once")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)

        def plain(v):
            if isinstance(v, Path):
                return str(v)
            if isinstance(v, dt.date):
                return v.isoformat()
            if isinstance(v, dict):
                return {k: plain(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [plain(x) for x in v]
            return v

        return plain(d)

    def fingerprint(self) -> str:
        """Hash of the settings, independent of where the config file lives."""
        d = self.to_dict()
        d["inputs"] = [Path(p).name for p in d["inputs"]]
        d["output_dir"] = None
        d["threads"] = None
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _date(value, key: str) -> dt.date | None:
    if value is None:
        return None
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an ISO date, got {value!r}") from exc


def _path(value, base: Path) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def _ints(value, n: int, key: str) -> tuple[int, ...]:
    if isinstance(value, str):
        value = value.split(",")
    try:
        out = tuple(int(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: expected {n} integers") from exc
    if len(out) != n:
        raise ConfigError(f"{key}: expected {n} integers, got {len(out)}")
    return out


KNOWN_KEYS = {
    "inputs", "output_dir", "schema", "breakpoints", "aqi_mode", "drop", "encode", "split",
    "models", "baseline", "seed", "threads", "outlier_k", "heatmap_by", "residual_bins", "sarimax",
}


def from_mapping(raw: dict, base: Path = Path(".")) -> RunConfig:
    """Build a config from a parsed mapping; relative paths resolve against ``base``."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    inputs = raw.get("inputs") or []
    if isinstance(inputs, str):
        inputs = [inputs]
    split = raw.get("split") or {}
    models = []
    for family, body in (raw.get("models") or {}).items():
        body = body or {}
        models.append(ModelConfig(family, dict(body.get("params") or {}), body.get("grid"), int(body.get("folds", 3))))
    sar = None
    if raw.get("sarimax"):
        s = raw["sarimax"]
        if "station" not in s:
            raise ConfigError("sarimax.station is required")
        sar = SarimaConfig(
            station=str(s["station"]),
            order=_ints(s.get("order", (1, 0, 0)), 3, "sarimax.order"),
            seasonal=_ints(s.get("seasonal", (0, 0, 0, 12)), 4, "sarimax.seasonal"),
            exog=tuple(s.get("exog") or ()),
            forecast=int(s.get("forecast", 30)),
            frequency=str(s.get("frequency", "monthly")),
        )
        if sar.frequency not in ("monthly", "daily"):
            raise ConfigError("sarimax.frequency must be monthly or daily")
    try:
        return RunConfig(
            inputs=[_path(p, base) for p in inputs],
            output_dir=_path(raw.get("output_dir", "aqicast-out"), base),
            schema=_path(raw.get("schema"), base),
            breakpoints=_path(raw.get("breakpoints"), base),
            aqi_mode=raw.get("aqi_mode", "passthrough"),
            drop=list(raw.get("drop", DEFAULT_DROP)),
            encode=list(raw.get("encode", ["State", "City"])),
            boundary=_date(split.get("boundary"), "split.boundary"),
            train_start=_date(split.get("train_start"), "split.train_start"),
            test_end=_date(split.get("test_end"), "split.test_end"),
            models=models,
            baseline=bool(raw.get("baseline", True)),
            seed=raw.get("seed", DEFAULT_SEED),
            threads=int(raw.get("threads", 1)),
            outlier_k=float(raw.get("outlier_k", 1.5)),
            heatmap_by=str(raw.get("heatmap_by", "City")),
            residual_bins=int(raw.get("residual_bins", 20)),
            sarimax=sar,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Read a YAML config; ``overrides`` (from CLI flags) replace top-level keys."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in ("boundary", "train_start", "test_end"):
            raw.setdefault("split", {})[key] = value
        else:
            raw[key] = value
    return from_mapping(raw, path.parent)

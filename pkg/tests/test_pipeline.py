import datetime as dt
import json
import shutil
from pathlib import Path

import pytest
import yaml

from aqicast.config import ModelConfig, load_config
from aqicast.errors import ConfigError
from aqicast.pipeline import (
    BASELINE,
    MANIFEST,
    run_pipeline,
    sha256,
    stage_aqi,
    stage_compare,
    stage_evaluate,
    stage_fit,
    stage_prep,
)
from aqicast.synthetic import STATIONS, generate, write_cpcb_csv

BOUNDARY = "2017-10-01"


@pytest.fixture(scope="module")
def small_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "small.csv"
    write_cpcb_csv(generate(n_days=365, stations=STATIONS[:2], seed=7, pollutant_holes=0.02), path)
    return path


def write_config(dir_: Path, csv: Path, **extra) -> Path:
    raw = {
        "inputs": [str(csv)],
        "output_dir": "out",
        "split": {"boundary": BOUNDARY},
        "models": {
            "tree": {"params": {"max_depth": 6}},
            "boost-level": {"params": {"iterations": 15, "learning_rate": 0.2}, "grid": {"depth": [2, 3]}, "folds": 2},
            "forest": {"params": {"n_estimators": 4, "max_depth": 5, "max_features": "sqrt"}},
        },
        "sarimax": {"station": "Anand Vihar", "frequency": "daily", "order": [1, 0, 0], "forecast": 10},
    }
    raw.update(extra)
    path = dir_ / "run.yaml"
    path.write_text(yaml.safe_dump(raw))
    return path


@pytest.fixture(scope="module")
def first_run(small_csv, tmp_path_factory):
    d = tmp_path_factory.mktemp("run1")
    cfg = load_config(write_config(d, small_csv))
    return cfg, run_pipeline(cfg)


def test_run_succeeds_with_artifacts(first_run):
    cfg, result = first_run
    assert result.exit_code == 0
    m = result.manifest
    assert m["status"] == "ok" and m["seed"] == 42
    assert len(m["artifacts"]) >= 10
    assert "07_compare/performance_matrix.csv" in m["artifacts"]
    for rel, digest in m["artifacts"].items():
        assert sha256(Path(cfg.output_dir) / rel) == digest
    ranking = json.loads((Path(cfg.output_dir) / "07_compare/performance_matrix.json").read_text())["ranking"]
    assert set(ranking) == {"tree", "boost-level", "forest", BASELINE}


def test_rerun_is_byte_identical(first_run, small_csv, tmp_path):
    cfg, result = first_run
    again = run_pipeline(load_config(write_config(tmp_path, small_csv), {"threads": 4}))
    assert again.exit_code == 0
    assert again.manifest_path.read_bytes() == result.manifest_path.read_bytes()


def test_missing_input_fails_before_any_stage(tmp_path):
    path = write_config(tmp_path, tmp_path / "nope.csv")
    with pytest.raises(ConfigError):
        run_pipeline(load_config(path))
    assert not (tmp_path / "out").exists()


def test_failed_stage_recorded(small_csv, tmp_path):
    path = write_config(tmp_path, small_csv, sarimax={"station": "Nowhere", "frequency": "daily"})
    result = run_pipeline(load_config(path))
    assert result.exit_code == 3
    m = result.manifest
    assert m["status"] == "failed"
    assert [s["name"] for s in m["stages"]][-1] == "ts"
    assert m["stages"][-1]["status"] == "failed"
    assert "01_ingest/table.csv" in m["artifacts"]


def isolated(src_root: Path, stage: dict, dst_root: Path) -> Path:
    """Copy only the files a stage lists as inputs into an empty tree."""
    dst_root.mkdir()
    for rel in stage["inputs"]:
        target = dst_root / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(src_root / rel, target)
    return dst_root


def test_stages_consume_only_listed_inputs(first_run, tmp_path):
    cfg, result = first_run
    src = Path(cfg.output_dir)
    m = result.manifest
    stages = {s["name"]: s for s in m["stages"]}
    tree = next(mc for mc in cfg.models if mc.family == "tree")

    replays = {
        "aqi": lambda r: stage_aqi(r / "01_ingest/table.csv", r / "02_aqi", None, cfg.aqi_mode),
        "prep": lambda r: stage_prep(r / "02_aqi/table.csv", r / "03_prep", cfg.boundary, cfg.drop, cfg.encode),
        "fit:tree": lambda r: stage_fit(r / "03_prep/train.csv", r / "05_models", tree, cfg.seed),
        "evaluate:tree": lambda r: stage_evaluate(r / "05_models/tree.model.json", r / "03_prep/test.csv",
                                                  r / "06_evaluate", "tree", cfg.residual_bins),
        "compare": lambda r: stage_compare(sorted((r / "06_evaluate").glob("*.metrics.json")), r / "07_compare"),
    }
    for name, replay in replays.items():
        root = isolated(src, stages[name], tmp_path / name.replace(":", "_"))
        outputs = replay(root)
        assert sorted(p.relative_to(root).as_posix() for p in outputs) == sorted(stages[name]["outputs"])
        for p in outputs:
            assert sha256(p) == m["artifacts"][p.relative_to(root).as_posix()], (name, p)


def test_config_overrides_and_validation(small_csv, tmp_path):
    path = write_config(tmp_path, small_csv)
    cfg = load_config(path, {"seed": 7, "boundary": dt.date(2017, 9, 1), "output_dir": str(tmp_path / "x")})
    assert cfg.seed == 7 and cfg.boundary == dt.date(2017, 9, 1) and cfg.output_dir == tmp_path / "x"
    assert load_config(path).seed == 42
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, small_csv, colour="blue"))
    bad = load_config(write_config(tmp_path, small_csv, models={"knn": {}}))
    with pytest.raises(ConfigError):
        bad.validate()
    nob = write_config(tmp_path, small_csv, split={})
    with pytest.raises(ConfigError):
        load_config(nob).validate()


def test_fingerprint_ignores_location_and_threads(small_csv, tmp_path):
    a = load_config(write_config(tmp_path, small_csv))
    b = load_config(write_config(tmp_path, small_csv), {"threads": 3, "output_dir": "/elsewhere"})
    assert a.fingerprint() == b.fingerprint()
    c = load_config(write_config(tmp_path, small_csv), {"seed": 1})
    assert c.fingerprint() != a.fingerprint()


def test_model_config_defaults():
    assert ModelConfig("tree").folds == 3

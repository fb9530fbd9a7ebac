from pathlib import Path

import pytest
import yaml

from src.config import config_from_dict, default_threads, load_pipeline_config
from src.errors import ConfigError

TEMPLATE = Path(__file__).resolve().parents[1] / "src" / "templates" / "pipeline_template.yaml"


def _scm_config(**extra):
    return {"scm": "desk-1", "seed": 1, **extra}


@pytest.mark.parametrize("raw", [
    {"scm": "desk-1"},
    {"scm": "desk-1", "data": "data.csv", "schema": "schema.yaml", "seed": 1},
    {"seed": 1},
    {"data": "data.csv", "seed": 1},
    _scm_config(colour="blue"),
    _scm_config(folds=1),
    _scm_config(sensitivity={"alpha": 1.5}),
    _scm_config(trimming=[60]),
    _scm_config(impute="mean"),
    _scm_config(clip=0.6),
    _scm_config(forest={"n_trees": 0}),
    _scm_config(learners={"outcome": {"family": "svm"}}),
    _scm_config(heatmaps=[["ses"]]),
])
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_defaults():
    config = config_from_dict(_scm_config())
    assert config.folds == 10
    assert config.trimming == [1, 2, 3, 4, 5]
    assert config.forest.seed == 1
    assert config.learners.clip == 0.01
    assert config.subgroups is None


def test_relative_paths_resolve_against_config_file(tmp_path):
    path = tmp_path / "pipeline.yaml"
    path.write_text(yaml.safe_dump({"schema": "schema.yaml", "data": "input/data.csv", "seed": 3}), encoding="utf-8")
    config = load_pipeline_config(path)
    assert Path(config.data) == tmp_path.resolve() / "input" / "data.csv"
    assert Path(config.schema) == tmp_path.resolve() / "schema.yaml"


def test_hash_ignores_output_directory_and_threads():
    base = config_from_dict(_scm_config(out="a", threads=1))
    moved = config_from_dict(_scm_config(out="b", threads=4))
    reseeded = config_from_dict(_scm_config(seed=2))
    assert base.config_hash == moved.config_hash
    assert base.config_hash != reseeded.config_hash


def test_scm_override_replaces_data(tmp_path):
    path = tmp_path / "pipeline.yaml"
    path.write_text(yaml.safe_dump({"schema": "schema.yaml", "data": "data.csv", "seed": 3}), encoding="utf-8")
    config = load_pipeline_config(path, {"scm": "null-1", "n": 500, "out": None})
    assert config.data is None
    assert config.scm == "null-1"
    assert config.n == 500
    assert config.out == "results"


def test_missing_or_malformed_file(tmp_path):
    with pytest.raises(ConfigError):
        load_pipeline_config(tmp_path / "absent.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("seed: [1,\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_pipeline_config(bad)
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_pipeline_config(listing)


def test_thread_count_from_environment(monkeypatch):
    monkeypatch.setenv("CFA_THREADS", "3")
    assert default_threads() == 3
    assert config_from_dict(_scm_config()).threads == 3
    monkeypatch.setenv("CFA_THREADS", "many")
    with pytest.raises(ConfigError):
        config_from_dict(_scm_config())


def test_shipped_template_is_valid():
    config = load_pipeline_config(TEMPLATE)
    assert config.data.endswith("data.csv")
    assert config.learners.propensity.family.value == "logistic_linear"
    assert config.forest.min_leaf_treated == 5
    assert ("race", "expectation") in config.heatmaps

from __future__ import annotations

import json
from pathlib import Path

import pytest  # type: ignore[import]
import yaml

from caloric_lab import loader, settings
from caloric_lab.errors import ConfigError, ConfigValidationError

_REPO_ROOT = Path(__file__).resolve().parents[1]
_CONFIGS = _REPO_ROOT / "config"


def _payload(**overrides):
    payload = {
        "name": "sweep",
        "experiment": "caccioppoli-sweep",
        "family": {"family": "lattice-zd", "dimension": 1},
        "window": {"hops": 40},
        "field": {"kind": "polynomial", "coefficients": ["x"]},
        "params": {"radii": [1, 2], "mode": "continuous"},
    }
    payload.update(overrides)
    return payload


@pytest.mark.parametrize("path", sorted(_CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_bundled_configs_validate(path: Path) -> None:
    config = loader.load_experiment(path)
    assert config.experiment in loader.EXPERIMENTS
    assert config.source_path == path


def test_loads_caccioppoli_config() -> None:
    config = loader.load_experiment(_CONFIGS / "caccioppoli-z1-harmonic.yaml")
    assert config.name == "caccioppoli-z1-harmonic"
    assert config.hops == 110
    assert config.family.tag == "z1"
    assert config.metric == loader.MetricChoice()
    assert config.field.kind == "polynomial"
    assert config.field.coefficients == ("x",)
    assert config.params["family_id"] == "z1-harmonic-x"
    assert config.seed == settings.SEED
    assert config.output_dir is None


def test_nested_family_is_built() -> None:
    config = loader.load_experiment(_CONFIGS / "volume-z2-normalized.yaml")
    assert config.family.family == "normalized-wrap"
    assert config.family.inner.dimension == 2
    assert config.family.tag == "normalized(z2)"


def test_defaults_fill_missing_sections() -> None:
    payload = {"name": "dims", "experiment": "dimension", "params": {"dimensions": [1], "rates": [1]}}
    config = loader.validate_experiment_dict(payload)
    assert config.family.family == "lattice-zd"
    assert config.hops == 8
    assert config.field is None
    assert config.raw["params"]["rates"] == [1]


@pytest.mark.parametrize(
    "overrides, location",
    [
        ({"name": "has space"}, "name"),
        ({"experiment": "heat-kernel"}, "experiment"),
        ({"family": {"family": "lattice-zd", "weights": {"rule": "random"}}}, "family / weights / rule"),
        ({"window": {"hops": 0}}, "window / hops"),
        ({"params": {"radii": [1, -2], "mode": "continuous"}}, "params / radii / 1"),
        ({"colour": "blue"}, "<root>"),
    ],
)
def test_schema_errors_name_their_location(overrides, location: str) -> None:
    with pytest.raises(ConfigValidationError) as excinfo:
        loader.validate_experiment_dict(_payload(**overrides))
    assert location in str(excinfo.value)
    assert excinfo.value.exit_code == 2


@pytest.mark.parametrize(
    "overrides, message",
    [
        ({"params": {"radii": [1, 2]}}, "needs params: mode"),
        ({"params": {"radii": [2, 1], "mode": "continuous"}}, "params.radii must be sorted"),
        ({"experiment": "volume-fit", "params": {"radii": [1, 2]}}, "at least three radii"),
        ({"metric": {"kind": "explicit"}}, "explicit metrics need a length"),
        ({"field": {"kind": "chain"}}, "field kind 'chain'"),
        ({"family": {"family": "weighted-line", "dimension": 2}}, "weighted-line"),
    ],
)
def test_semantic_errors(overrides, message: str) -> None:
    with pytest.raises(ConfigError) as excinfo:
        loader.validate_experiment_dict(_payload(**overrides))
    assert message in str(excinfo.value)


def test_field_is_required_for_sweeps() -> None:
    payload = _payload()
    del payload["field"]
    with pytest.raises(ConfigError):
        loader.validate_experiment_dict(payload)


def test_json_configs_are_accepted(tmp_path: Path) -> None:
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(_payload(seed=42, output_dir="out/sweep")), encoding="utf-8")
    config = loader.load_experiment(path)
    assert config.seed == 42
    assert config.output_dir == Path("out/sweep")


def test_expressions_may_be_numbers(tmp_path: Path) -> None:
    path = tmp_path / "constant.yaml"
    path.write_text(yaml.safe_dump(_payload(field={"kind": "polynomial", "coefficients": [3, "x"]})), encoding="utf-8")
    assert loader.load_experiment(path).field.coefficients == ("3", "x")


def test_missing_and_malformed_files(tmp_path: Path) -> None:
    with pytest.raises(ConfigError):
        loader.load_experiment(tmp_path / "absent.yaml")
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        loader.load_experiment(listing)
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        loader.load_experiment(broken)

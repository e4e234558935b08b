"""Loading and validation of experiment configurations."""

from __future__ import annotations

import json
from copy import deepcopy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Tuple

import yaml
from jsonschema import Draft7Validator

from . import settings
from .errors import ConfigError, ConfigValidationError
from .graph import FamilyConfig, MeasureRule, WeightRule

_SCHEMA_PATH = Path(__file__).resolve().parent / "schema" / "experiment.schema.yaml"

EXPERIMENTS = (
    "verify-metric",
    "caccioppoli-sweep",
    "dimension",
    "structure-roundtrip",
    "volume-fit",
    "evolve",
)

_REQUIRED_PARAMS: Dict[str, Tuple[str, ...]] = {
    "caccioppoli-sweep": ("radii", "mode"),
    "dimension": ("dimensions", "rates"),
    "volume-fit": ("radii",),
    "evolve": ("t_end", "dt"),
}
_REQUIRES_FIELD = ("caccioppoli-sweep", "structure-roundtrip", "evolve")
_DEFAULT_HOPS = 8


@dataclass(frozen=True)
class MetricChoice:
    kind: str = "constructed"
    length: float | None = None


@dataclass(frozen=True)
class FieldSpec:
    """Declarative description of the space-time field an experiment runs on."""

    kind: str
    top: str | None = None
    length: int = 0
    mode: str = "continuous"
    coefficients: Tuple[str, ...] = ()
    basis: str = "monomial"
    boundary: str | None = None
    initial: str | None = None
    random: bool = False
    steps: int = 0
    scale: float = 1.0


@dataclass
class ExperimentConfig:
    """Validated experiment definition."""

    name: str
    experiment: str
    family: FamilyConfig
    hops: int
    metric: MetricChoice
    field: FieldSpec | None
    params: Dict[str, Any]
    seed: int
    output_dir: Path | None
    raw: Dict[str, Any] = field(default_factory=dict)
    source_path: Path | None = None


def load_experiment(path: Path, schema_path: Path | None = None) -> ExperimentConfig:
    """Load and validate an experiment definition from YAML or JSON."""

    raw = _load_raw(path)
    config = validate_experiment_dict(raw, schema_path)
    config.source_path = path
    return config


def validate_experiment_dict(payload: Dict[str, Any], schema_path: Path | None = None) -> ExperimentConfig:
    """Validate an experiment definition provided as a dictionary."""

    schema = _load_schema(schema_path)
    errors = list(Draft7Validator(schema).iter_errors(payload))
    if errors:
        raise ConfigValidationError(errors)
    return _enrich(payload)


def _load_schema(schema_path: Path | None) -> Mapping[str, Any]:
    target = schema_path or _SCHEMA_PATH
    with target.open("r", encoding="utf-8") as handle:
        return yaml.safe_load(handle)


def _load_raw(path: Path) -> Dict[str, Any]:
    if not path.exists():
        raise ConfigError(f"Experiment file not found: {path}")

    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".json":
            payload = json.loads(text)
        else:
            payload = yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"Could not parse {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"{path} does not contain a mapping")
    return payload


def family_from_dict(data: Mapping[str, Any]) -> FamilyConfig:
    weights = WeightRule(**data.get("weights", {}))
    measure = MeasureRule(**data.get("measure", {}))
    inner = family_from_dict(data["inner"]) if "inner" in data else None
    return FamilyConfig(
        family=data["family"],
        dimension=data.get("dimension", 1),
        weights=weights,
        measure=measure,
        leaves=data.get("leaves", 4),
        inner=inner,
    )


def _expr(value: Any) -> str | None:
    return None if value is None else str(value)


def _field_from_dict(data: Mapping[str, Any]) -> FieldSpec:
    spec = FieldSpec(
        kind=data["kind"],
        top=_expr(data.get("top")),
        length=data.get("length", 0),
        mode=data.get("mode", "continuous"),
        coefficients=tuple(str(c) for c in data.get("coefficients", ())),
        basis=data.get("basis", "monomial"),
        boundary=_expr(data.get("boundary")),
        initial=_expr(data.get("initial")),
        random=data.get("random", False),
        steps=data.get("steps", 0),
        scale=data.get("scale", 1.0),
    )
    needs = {
        "chain": spec.top is not None,
        "polynomial": bool(spec.coefficients),
        "window-chain": spec.boundary is not None,
        "march": spec.initial is not None or spec.random,
    }
    if not needs[spec.kind]:
        raise ConfigError(f"field kind '{spec.kind}' is missing its defining entry")
    return spec


def _enrich(payload: Dict[str, Any]) -> ExperimentConfig:
    """Turn a schema-valid payload into typed configuration objects."""

    payload = deepcopy(payload)
    experiment = payload["experiment"]
    params = dict(payload.get("params", {}))

    missing = [key for key in _REQUIRED_PARAMS.get(experiment, ()) if key not in params]
    if missing:
        raise ConfigError(f"experiment '{experiment}' needs params: {', '.join(missing)}")
    for key in ("radii", "rates", "dimensions", "hops_list"):
        values: List[float] = params.get(key, [])
        if list(values) != sorted(values):
            raise ConfigError(f"params.{key} must be sorted ascending")
    if experiment == "volume-fit" and len(params["radii"]) < 3:
        raise ConfigError("volume-fit needs at least three radii")
    if experiment in _REQUIRES_FIELD and "field" not in payload:
        raise ConfigError(f"experiment '{experiment}' needs a field")

    metric_data = payload.get("metric", {})
    metric = MetricChoice(kind=metric_data.get("kind", "constructed"), length=metric_data.get("length"))
    if metric.kind == "explicit" and metric.length is None:
        raise ConfigError("explicit metrics need a length")

    family = family_from_dict(payload.get("family", {"family": "lattice-zd"}))
    output_dir = payload.get("output_dir")
    return ExperimentConfig(
        name=payload["name"],
        experiment=experiment,
        family=family,
        hops=payload.get("window", {}).get("hops", _DEFAULT_HOPS),
        metric=metric,
        field=_field_from_dict(payload["field"]) if "field" in payload else None,
        params=params,
        seed=payload.get("seed", settings.SEED),
        output_dir=Path(output_dir) if output_dir else None,
        raw=payload,
    )

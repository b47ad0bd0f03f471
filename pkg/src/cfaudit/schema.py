"""Feature schemas and instance validation.

A schema declares the search space: each feature is either continuous
(with bounds) or categorical (with an ordered category set), and may be
marked immutable. Instances are plain sequences, one entry per feature
(floats for continuous, strings for categorical).

Schema file format (JSON)::

    {"features": [{"name": "glucose", "kind": "continuous",
                   "min": 0, "max": 300, "mutable": true},
                  {"name": "race", "kind": "categorical",
                   "categories": ["A", "B"], "mutable": false}],
     "target": {"name": "outcome", "classes": ["0", "1"], "favorable": "0"}}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import InstanceValidationError, SchemaError

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    min: float | None = None
    max: float | None = None
    categories: tuple[str, ...] = ()
    mutable: bool = True

    def __post_init__(self):
        if self.kind == CONTINUOUS:
            if self.min is None or self.max is None:
                raise SchemaError(f"feature {self.name!r}: continuous features need min and max")
            if self.categories:
                raise SchemaError(f"feature {self.name!r}: continuous features take no categories")
            if not (math.isfinite(self.min) and math.isfinite(self.max)):
                raise SchemaError(f"feature {self.name!r}: bounds must be finite")
            if self.min > self.max:
                raise SchemaError(f"feature {self.name!r}: invalid bounds (min {self.min} > max {self.max})")
        elif self.kind == CATEGORICAL:
            if self.min is not None or self.max is not None:
                raise SchemaError(f"feature {self.name!r}: categorical features take no min/max")
            if not self.categories:
                raise SchemaError(f"feature {self.name!r}: empty category set")
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError(f"feature {self.name!r}: duplicate categories")
        else:
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")

    @property
    def is_continuous(self) -> bool:
        return self.kind == CONTINUOUS


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[FeatureSpec, ...]
    target_name: str
    classes: tuple[str, ...]
    favorable_class: str | None = None
    _index: dict = field(init=False, repr=False, compare=False, hash=False, default=None)

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature names")
        if self.target_name in names:
            raise SchemaError(f"target {self.target_name!r} is also a feature")
        if len(self.classes) < 2:
            raise SchemaError("schema needs at least 2 classes")
        if len(set(self.classes)) != len(self.classes):
            raise SchemaError("duplicate class labels")
        if self.favorable_class is not None and self.favorable_class not in self.classes:
            raise SchemaError(f"favorable class {self.favorable_class!r} not among classes")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    @property
    def n(self) -> int:
        return len(self.features)

    @property
    def n_con(self) -> int:
        return sum(1 for f in self.features if f.is_continuous)

    @property
    def n_cat(self) -> int:
        return self.n - self.n_con

    def feature_index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"unknown feature {name!r}") from None

    def feature(self, name: str) -> FeatureSpec:
        return self.features[self.feature_index(name)]

    def validate_instance(self, values) -> tuple:
        """Validate one raw value vector against this schema.

        Returns a normalized tuple (floats for continuous features,
        strings for categorical). Raises InstanceValidationError with
        per-field messages otherwise.
        """
        errors = []
        if len(values) != self.n:
            raise InstanceValidationError(
                [("*", f"expected {self.n} values, got {len(values)}")]
            )
        out = []
        for spec, value in zip(self.features, values):
            if spec.is_continuous:
                try:
                    v = float(value)
                except (TypeError, ValueError):
                    errors.append((spec.name, f"not a number: {value!r}"))
                    continue
                if math.isnan(v):
                    errors.append((spec.name, "value is NaN"))
                elif not (spec.min <= v <= spec.max):
                    errors.append((spec.name, f"{v} outside [{spec.min}, {spec.max}]"))
                else:
                    out.append(v)
            else:
                if not isinstance(value, str):
                    errors.append((spec.name, f"expected a category label, got {value!r}"))
                elif value not in spec.categories:
                    errors.append((spec.name, f"{value!r} not in categories {list(spec.categories)}"))
                else:
                    out.append(value)
        if errors:
            raise InstanceValidationError(errors)
        return tuple(out)


def schema_from_dict(obj: dict) -> FeatureSchema:
    if not isinstance(obj, dict):
        raise SchemaError("schema must be a JSON object")
    try:
        raw_features = obj["features"]
        target = obj["target"]
    except KeyError as exc:
        raise SchemaError(f"schema missing key {exc.args[0]!r}") from None
    if not isinstance(raw_features, list) or not raw_features:
        raise SchemaError("schema needs a non-empty feature list")
    features = []
    for raw in raw_features:
        if not isinstance(raw, dict) or "name" not in raw or "kind" not in raw:
            raise SchemaError(f"malformed feature entry: {raw!r}")
        kind = raw["kind"]
        features.append(
            FeatureSpec(
                name=raw["name"],
                kind=kind,
                min=float(raw["min"]) if kind == CONTINUOUS and "min" in raw else None,
                max=float(raw["max"]) if kind == CONTINUOUS and "max" in raw else None,
                categories=tuple(raw.get("categories", ())),
                mutable=bool(raw.get("mutable", True)),
            )
        )
    if not isinstance(target, dict) or "name" not in target or "classes" not in target:
        raise SchemaError("schema target must declare a name and classes")
    return FeatureSchema(
        features=tuple(features),
        target_name=target["name"],
        classes=tuple(str(c) for c in target["classes"]),
        favorable_class=target.get("favorable"),
    )


def schema_to_dict(schema: FeatureSchema) -> dict:
    features = []
    for spec in schema.features:
        entry: dict = {"name": spec.name, "kind": spec.kind}
        if spec.is_continuous:
            entry["min"] = spec.min
            entry["max"] = spec.max
        else:
            entry["categories"] = list(spec.categories)
        entry["mutable"] = spec.mutable
        features.append(entry)
    target: dict = {"name": schema.target_name, "classes": list(schema.classes)}
    if schema.favorable_class is not None:
        target["favorable"] = schema.favorable_class
    return {"features": features, "target": target}


def load_schema(path) -> FeatureSchema:
    """Load and validate a schema from a JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise SchemaError(f"cannot read schema file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"schema file {path} is not valid JSON: {exc}") from exc
    return schema_from_dict(obj)


def save_schema(schema: FeatureSchema, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema_to_dict(schema), fh, indent=2)
        fh.write("\n")

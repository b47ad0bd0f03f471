"""Dataset ingestion and the training-data statistics used for distances.

Stats hold everything distance computations and score normalization need:
per-feature medians/MADs/ranges, category counts, class priors, and the
expected distance between two same-class points.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .distance import norm_scale
from .errors import DataError, InstanceValidationError
from .schema import FeatureSchema


@dataclass(frozen=True)
class DatasetStats:
    """Summary statistics of a dataset, keyed by feature / class name.

    `intra_class_distance[k]` is E[d(x_i, x_j)] over distinct same-class
    pairs under the mixed distance (0.0 for single-point classes, where no
    pair exists).
    """

    medians: dict
    mads: dict
    ranges: dict
    category_counts: dict
    class_priors: dict
    class_counts: dict
    intra_class_distance: dict
    n_rows: int

    def __post_init__(self):
        for name, mad in self.mads.items():
            if mad < 0:
                raise DataError(f"negative MAD for {name!r}")
        total = sum(self.class_priors.values())
        if abs(total - 1.0) > 1e-9:
            raise DataError(f"class priors sum to {total}, expected 1")
        for label, value in self.intra_class_distance.items():
            if value < 0:
                raise DataError(f"negative intra-class distance for {label!r}")

    def to_dict(self) -> dict:
        return {
            "medians": dict(self.medians),
            "mads": dict(self.mads),
            "ranges": dict(self.ranges),
            "category_counts": {k: dict(v) for k, v in self.category_counts.items()},
            "class_priors": dict(self.class_priors),
            "class_counts": dict(self.class_counts),
            "intra_class_distance": dict(self.intra_class_distance),
            "n_rows": self.n_rows,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DatasetStats":
        return cls(
            medians=dict(obj["medians"]),
            mads=dict(obj["mads"]),
            ranges=dict(obj["ranges"]),
            category_counts={k: dict(v) for k, v in obj["category_counts"].items()},
            class_priors=dict(obj["class_priors"]),
            class_counts={k: int(v) for k, v in obj["class_counts"].items()},
            intra_class_distance=dict(obj["intra_class_distance"]),
            n_rows=int(obj["n_rows"]),
        )


@dataclass(frozen=True)
class Dataset:
    schema: FeatureSchema
    rows: tuple  # of (instance values tuple, class label)
    stats: DatasetStats

    def __len__(self):
        return len(self.rows)

    def instances(self):
        return [values for values, _ in self.rows]

    def labels(self):
        return [label for _, label in self.rows]


def _pairwise_mean_abs_diff(values: np.ndarray) -> float:
    """Mean |v_i - v_j| over all distinct pairs, via the sorted-prefix form."""
    m = values.size
    if m < 2:
        return 0.0
    s = np.sort(values)
    idx = np.arange(m)
    total = float(np.sum((2 * idx - m + 1) * s))
    return total / (m * (m - 1) / 2)


def _pairwise_mismatch_rate(labels: list) -> float:
    """Fraction of distinct pairs whose values differ."""
    m = len(labels)
    if m < 2:
        return 0.0
    counts = {}
    for v in labels:
        counts[v] = counts.get(v, 0) + 1
    pairs = m * (m - 1) / 2
    equal = sum(c * (c - 1) / 2 for c in counts.values())
    return (pairs - equal) / pairs


def compute_stats(rows, schema: FeatureSchema) -> DatasetStats:
    """Compute dataset statistics from validated rows.

    Medians use the mean-of-middle-two convention for even counts (numpy
    default). The intra-class expected distance exploits the mixed
    distance's linearity over features: the mean over all same-class pairs
    is the weighted sum of per-feature pair means, computed in O(m log m)
    per class rather than by enumerating pairs.
    """
    rows = list(rows)
    if not rows:
        raise DataError("empty dataset")

    columns: dict = {spec.name: [] for spec in schema.features}
    labels = []
    for values, label in rows:
        for spec, v in zip(schema.features, values):
            columns[spec.name].append(v)
        labels.append(label)

    medians, mads, ranges, category_counts = {}, {}, {}, {}
    for spec in schema.features:
        col = columns[spec.name]
        if spec.is_continuous:
            arr = np.asarray(col, dtype=float)
            med = float(np.median(arr))
            medians[spec.name] = med
            mads[spec.name] = float(np.median(np.abs(arr - med)))
            ranges[spec.name] = float(arr.max() - arr.min())
        else:
            counts = {}
            for v in col:
                counts[v] = counts.get(v, 0) + 1
            category_counts[spec.name] = counts

    class_counts: dict = {}
    for label in labels:
        class_counts[label] = class_counts.get(label, 0) + 1
    n_rows = len(rows)
    class_priors = {label: count / n_rows for label, count in class_counts.items()}

    n = schema.n
    intra = {}
    for label in class_counts:
        member_idx = [i for i, lab in enumerate(labels) if lab == label]
        expected = 0.0
        for spec in schema.features:
            col = columns[spec.name]
            member_values = [col[i] for i in member_idx]
            if spec.is_continuous:
                scale = norm_scale(mads[spec.name], ranges[spec.name])
                if scale > 0.0:
                    mean_abs = _pairwise_mean_abs_diff(np.asarray(member_values, dtype=float))
                    expected += (1.0 / n) * (mean_abs / scale)
            else:
                expected += (1.0 / n) * _pairwise_mismatch_rate(member_values)
        intra[label] = expected

    return DatasetStats(
        medians=medians,
        mads=mads,
        ranges=ranges,
        category_counts=category_counts,
        class_priors=class_priors,
        class_counts=class_counts,
        intra_class_distance=intra,
        n_rows=n_rows,
    )


def dataset_from_rows(rows, schema: FeatureSchema) -> Dataset:
    """Build a Dataset from already-parsed (values, label) pairs."""
    validated = []
    for i, (values, label) in enumerate(rows):
        try:
            inst = schema.validate_instance(values)
        except InstanceValidationError as exc:
            raise DataError(f"row {i}: {exc}") from exc
        if label not in schema.classes:
            raise DataError(f"row {i}: unknown class label {label!r}")
        validated.append((inst, label))
    stats = compute_stats(validated, schema)
    return Dataset(schema=schema, rows=tuple(validated), stats=stats)


def load_csv(path, schema: FeatureSchema) -> Dataset:
    """Load a dataset from a CSV file with a header row.

    The header must contain exactly the schema's feature names plus the
    target column, in any order. Continuous cells must parse as decimal
    reals; missing values are rejected.
    """
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None

        expected = {spec.name for spec in schema.features} | {schema.target_name}
        got = set(header)
        missing = expected - got
        extra = got - expected
        if missing:
            raise DataError(f"{path}: missing column(s) {sorted(missing)}")
        if extra:
            raise DataError(f"{path}: unexpected column(s) {sorted(extra)}")
        if len(header) != len(expected):
            raise DataError(f"{path}: duplicate column names in header")

        col_of = {name: header.index(name) for name in header}
        target_col = col_of[schema.target_name]

        rows = []
        # 1-based data-row numbers so messages match what a reader counts
        for row_idx, cells in enumerate(reader, start=1):
            if len(cells) != len(header):
                raise DataError(f"{path} row {row_idx}: expected {len(header)} cells, got {len(cells)}")
            values = []
            for spec in schema.features:
                cell = cells[col_of[spec.name]].strip()
                if cell == "":
                    raise DataError(f"{path} row {row_idx}: missing value for {spec.name!r}")
                if spec.is_continuous:
                    try:
                        v = float(cell)
                    except ValueError:
                        raise DataError(
                            f"{path} row {row_idx}: cannot parse {cell!r} as a number for {spec.name!r}"
                        ) from None
                    if math.isnan(v):
                        raise DataError(f"{path} row {row_idx}: NaN value for {spec.name!r}")
                    values.append(v)
                else:
                    values.append(cell)
            label = cells[target_col].strip()
            try:
                inst = schema.validate_instance(values)
            except InstanceValidationError as exc:
                raise DataError(f"{path} row {row_idx}: {exc}") from exc
            if label not in schema.classes:
                raise DataError(f"{path} row {row_idx}: unknown class label {label!r}")
            rows.append((inst, label))

    if not rows:
        raise DataError(f"{path}: no data rows")
    stats = compute_stats(rows, schema)
    return Dataset(schema=schema, rows=tuple(rows), stats=stats)

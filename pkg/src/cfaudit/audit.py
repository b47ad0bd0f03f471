"""Model audits built on counterfactual distances.

The robustness score of a model is the expected distance between an
instance and its nearest counterfactual: brittle models sit close to
their decision boundaries, so small distances mean low robustness. The
normalized variant divides by the dataset's expected intra-class
distance, making scores comparable across datasets. Burden and the
individual fairness probe reuse the same machinery with protected
features muted, and feature importance counts how often each feature
must move to flip the prediction.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Dataset, DatasetStats
from .engine import Constraints, GAConfig, derive_seed, generate_counterfactuals
from .errors import AuditError, InfeasibleSpaceError, PredictorProtocolError
from .schema import FeatureSchema

Z_95 = 1.96


def cerscore(distances) -> tuple:
    """Mean counterfactual distance with its normal-approximation 95% CI.

    Returns (score, (lo, hi)). The half-width is 1.96 * s / sqrt(N) with
    s the unbiased sample standard deviation; a single observation gets
    a zero-width interval.
    """
    d = np.asarray(list(distances), dtype=float)
    if d.size == 0:
        raise AuditError("cannot score an empty distance sample")
    if np.any(d <= 0.0) or not np.all(np.isfinite(d)):
        raise AuditError("distances must be positive and finite")
    mean = float(d.mean())
    s = float(d.std(ddof=1)) if d.size > 1 else 0.0
    half = Z_95 * s / math.sqrt(d.size)
    return mean, (mean - half, mean + half)


def ncerscore(score: float, stats: DatasetStats) -> float:
    """Robustness score normalized by expected intra-class distance.

    The denominator is the class-prior-weighted mean of the expected
    distance between two instances of the same class. Values above 1 are
    possible: counterfactuals can sit farther away than class peers.
    """
    denom = sum(
        stats.class_priors[cls] * stats.intra_class_distance[cls]
        for cls in stats.class_priors
    )
    if denom <= 0.0:
        raise AuditError(
            "expected intra-class distance is zero; the dataset is degenerate"
        )
    return score / denom


@dataclass
class RobustnessReport:
    kind: str = "robustness"
    n_selected: int = 0
    n_explained: int = 0
    cerscore: float | None = None
    ci95: tuple | None = None
    ncerscore: float | None = None
    distances: dict = field(default_factory=dict)  # row index -> distance
    failures: list = field(default_factory=list)  # row indices with no counterfactual
    aborted_reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_selected": self.n_selected,
            "n_explained": self.n_explained,
            "cerscore": self.cerscore,
            "ci95": list(self.ci95) if self.ci95 else None,
            "ncerscore": self.ncerscore,
            "distances": {str(k): v for k, v in sorted(self.distances.items())},
            "failures": list(self.failures),
            "aborted_reason": self.aborted_reason,
        }


@dataclass
class BurdenReport:
    kind: str = "burden"
    group_by: tuple = ()
    groups: dict = field(default_factory=dict)  # group key -> {burden, n, failures}
    aborted_reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "group_by": list(self.group_by),
            "groups": {
                "|".join(key): value for key, value in sorted(self.groups.items())
            },
            "aborted_reason": self.aborted_reason,
        }


@dataclass
class FairnessProbe:
    row_index: int
    fitness_muted: float
    fitness_unmuted: float
    relative_delta: float
    protected_changed: tuple
    flagged: bool


@dataclass
class FairnessReport:
    kind: str = "fairness"
    protected: tuple = ()
    threshold: float = 0.05
    probes: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    aborted_reason: str | None = None

    @property
    def flagged_fraction(self) -> float:
        if not self.probes:
            return 0.0
        return sum(1 for p in self.probes if p.flagged) / len(self.probes)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "protected": list(self.protected),
            "threshold": self.threshold,
            "flagged_fraction": self.flagged_fraction,
            "probes": [
                {
                    "row_index": p.row_index,
                    "fitness_muted": p.fitness_muted,
                    "fitness_unmuted": p.fitness_unmuted,
                    "relative_delta": p.relative_delta,
                    "protected_changed": list(p.protected_changed),
                    "flagged": p.flagged,
                }
                for p in self.probes
            ],
            "failures": list(self.failures),
            "aborted_reason": self.aborted_reason,
        }


@dataclass
class ImportanceReport:
    kind: str = "importance"
    counts: dict = field(default_factory=dict)  # feature name -> change count
    fractions: dict = field(default_factory=dict)
    n_explained: int = 0
    failures: list = field(default_factory=list)
    aborted_reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "counts": dict(self.counts),
            "fractions": dict(self.fractions),
            "n_explained": self.n_explained,
            "failures": list(self.failures),
            "aborted_reason": self.aborted_reason,
        }


def _select_indices(predictor, dataset: Dataset, sample_size, seed,
                    only_correct: bool, use_heldout: bool, indices=None) -> list:
    """Pick the rows an audit will explain.

    An explicit `indices` list wins outright. Otherwise this prefers the
    trainer's held-out rows when the predictor carries them, keeps only
    correctly predicted rows by default (a counterfactual of a
    misprediction measures the error, not the boundary), and subsamples
    deterministically when a cap is given.
    """
    if indices is not None:
        bad = [i for i in indices if not (0 <= i < len(dataset.rows))]
        if bad:
            raise AuditError(f"row indices out of range: {bad}")
        return list(indices)
    heldout = getattr(predictor, "heldout_indices", ()) if use_heldout else ()
    candidates = [i for i in heldout if 0 <= i < len(dataset.rows)] or list(range(len(dataset.rows)))
    if only_correct:
        instances = dataset.instances()
        labels = dataset.labels()
        predicted = predictor.predict_batch([instances[i] for i in candidates])
        candidates = [i for i, pred in zip(candidates, predicted) if pred == labels[i]]
    if sample_size is not None and sample_size < len(candidates):
        rng = np.random.default_rng(seed)
        chosen = rng.choice(len(candidates), size=sample_size, replace=False)
        candidates = sorted(candidates[j] for j in chosen)
    return candidates


def _explain_rows(predictor, dataset: Dataset, indices, constraints: Constraints,
                  config: GAConfig):
    """Yield (row_index, result-or-error) for each selected row.

    Every row gets its own seed derived from the master seed, so reports
    do not depend on which other rows were selected. Transport failures
    abort the sweep; infeasible rows are reported and skipped.
    """
    instances = dataset.instances()
    for index in indices:
        row_config = replace(config, seed=derive_seed(config.seed, index))
        try:
            result = generate_counterfactuals(
                instances[index], predictor, dataset.schema, dataset.stats,
                constraints=constraints, config=row_config,
            )
        except InfeasibleSpaceError as exc:
            yield index, exc
            continue
        if result.counterfactuals:
            yield index, result
        else:
            yield index, InfeasibleSpaceError("search returned no counterfactual")


def audit_robustness(predictor, dataset: Dataset, config: GAConfig | None = None,
                     constraints: Constraints | None = None, sample_size: int | None = None,
                     only_correct: bool = True, use_heldout: bool = True,
                     indices=None) -> RobustnessReport:
    """Estimate the model's robustness score over dataset rows."""
    config = config or GAConfig()
    constraints = constraints or Constraints()
    indices = _select_indices(predictor, dataset, sample_size, config.seed,
                              only_correct, use_heldout, indices)
    if not indices:
        raise AuditError("no rows left to audit after filtering")
    report = RobustnessReport(n_selected=len(indices))
    try:
        for index, outcome in _explain_rows(predictor, dataset, indices, constraints, config):
            if isinstance(outcome, InfeasibleSpaceError):
                report.failures.append(index)
            else:
                report.distances[index] = outcome.counterfactuals[0].distance
    except PredictorProtocolError as exc:
        report.aborted_reason = str(exc)
    report.n_explained = len(report.distances)
    if report.distances:
        score, ci = cerscore(report.distances.values())
        report.cerscore = score
        report.ci95 = ci
        report.ncerscore = ncerscore(score, dataset.stats)
    return report


def burden(predictor, dataset: Dataset, group_by, config: GAConfig | None = None,
           constraints: Constraints | None = None, sample_size: int | None = None,
           only_correct: bool = True, use_heldout: bool = True,
           indices=None) -> BurdenReport:
    """Mean counterfactual distance per demographic group.

    Groups are the distinct value combinations of the categorical
    `group_by` features, which are muted during generation so the burden
    measures what the rest of the features must do.
    """
    config = config or GAConfig()
    constraints = constraints or Constraints()
    group_by = tuple(group_by)
    if not group_by:
        raise AuditError("burden needs at least one grouping feature")
    for name in group_by:
        spec = dataset.schema.feature(name)
        if spec.is_continuous:
            raise AuditError(f"burden grouping requires categorical features: {name!r}")
    constraints = replace(constraints, muted=constraints.muted | frozenset(group_by))

    indices = _select_indices(predictor, dataset, sample_size, config.seed,
                              only_correct, use_heldout, indices)
    if not indices:
        raise AuditError("no rows left to audit after filtering")
    group_positions = [dataset.schema.feature_index(name) for name in group_by]
    instances = dataset.instances()
    per_group: dict = {}
    report = BurdenReport(group_by=group_by)
    try:
        for index, outcome in _explain_rows(predictor, dataset, indices, constraints, config):
            key = tuple(str(instances[index][pos]) for pos in group_positions)
            bucket = per_group.setdefault(key, {"distances": [], "failures": 0})
            if isinstance(outcome, InfeasibleSpaceError):
                bucket["failures"] += 1
            else:
                bucket["distances"].append(outcome.counterfactuals[0].distance)
    except PredictorProtocolError as exc:
        report.aborted_reason = str(exc)
    for key, bucket in per_group.items():
        distances = bucket["distances"]
        report.groups[key] = {
            "burden": float(np.mean(distances)) if distances else None,
            "n": len(distances),
            "failures": bucket["failures"],
        }
    return report


def individual_fairness(x, predictor, schema: FeatureSchema, stats: DatasetStats,
                        protected, config: GAConfig | None = None,
                        constraints: Constraints | None = None,
                        threshold: float = 0.05) -> FairnessProbe:
    """Probe whether protected features buy the model an easier flip.

    Runs the search twice with the same seed: once with the protected
    features muted, once free. If the free run reaches a higher best
    fitness (a closer counterfactual), changing a protected attribute is
    the cheapest way to alter the outcome, which flags the model.
    """
    config = config or GAConfig()
    constraints = constraints or Constraints()
    protected = tuple(protected)
    if not protected:
        raise AuditError("individual fairness needs at least one protected feature")
    for name in protected:
        schema.feature(name)  # raises on unknown names

    muted = replace(constraints, muted=constraints.muted | frozenset(protected))
    result_muted = generate_counterfactuals(x, predictor, schema, stats,
                                            constraints=muted, config=config)
    result_free = generate_counterfactuals(x, predictor, schema, stats,
                                           constraints=constraints, config=config)
    if not result_muted.counterfactuals or not result_free.counterfactuals:
        raise InfeasibleSpaceError("one of the fairness runs found no counterfactual")
    fitness_muted = result_muted.counterfactuals[0].fitness
    fitness_free = result_free.counterfactuals[0].fitness
    delta = (fitness_free - fitness_muted) / fitness_muted
    best_free = result_free.counterfactuals[0]
    changed_names = {schema.features[i].name for i in best_free.changed_indices()}
    return FairnessProbe(
        row_index=-1,
        fitness_muted=fitness_muted,
        fitness_unmuted=fitness_free,
        relative_delta=delta,
        protected_changed=tuple(sorted(changed_names & set(protected))),
        flagged=delta > threshold,
    )


def audit_fairness(predictor, dataset: Dataset, protected,
                   config: GAConfig | None = None, constraints: Constraints | None = None,
                   sample_size: int | None = None, only_correct: bool = True,
                   use_heldout: bool = True, threshold: float = 0.05,
                   indices=None) -> FairnessReport:
    """Run the individual fairness probe across dataset rows."""
    config = config or GAConfig()
    indices = _select_indices(predictor, dataset, sample_size, config.seed,
                              only_correct, use_heldout, indices)
    if not indices:
        raise AuditError("no rows left to audit after filtering")
    report = FairnessReport(protected=tuple(protected), threshold=threshold)
    instances = dataset.instances()
    try:
        for index in indices:
            row_config = replace(config, seed=derive_seed(config.seed, index))
            try:
                probe = individual_fairness(instances[index], predictor, dataset.schema,
                                            dataset.stats, protected, row_config,
                                            constraints, threshold)
            except InfeasibleSpaceError:
                report.failures.append(index)
                continue
            probe.row_index = index
            report.probes.append(probe)
    except PredictorProtocolError as exc:
        report.aborted_reason = str(exc)
    return report


def feature_importance(predictor, dataset: Dataset, config: GAConfig | None = None,
                       constraints: Constraints | None = None, sample_size: int | None = None,
                       only_correct: bool = True, use_heldout: bool = True,
                       indices=None) -> ImportanceReport:
    """Count, per feature, how often flipping the prediction changes it."""
    config = config or GAConfig()
    constraints = constraints or Constraints()
    indices = _select_indices(predictor, dataset, sample_size, config.seed,
                              only_correct, use_heldout, indices)
    if not indices:
        raise AuditError("no rows left to audit after filtering")
    counts = {spec.name: 0 for spec in dataset.schema.features}
    report = ImportanceReport()
    try:
        for index, outcome in _explain_rows(predictor, dataset, indices, constraints, config):
            if isinstance(outcome, InfeasibleSpaceError):
                report.failures.append(index)
                continue
            report.n_explained += 1
            for cf in outcome.counterfactuals:
                for i in cf.changed_indices():
                    counts[dataset.schema.features[i].name] += 1
    except PredictorProtocolError as exc:
        report.aborted_reason = str(exc)
    total = sum(counts.values())
    report.counts = counts
    report.fractions = {
        name: (count / total if total else 0.0) for name, count in counts.items()
    }
    return report


def render_report(report, fmt: str = "json") -> str:
    """Render any audit report as canonical JSON, a text table, or CSV."""
    obj = report.to_dict()
    if fmt == "json":
        import json

        return json.dumps(obj, indent=2, sort_keys=True)
    if fmt == "table":
        return _render_table(obj)
    if fmt == "csv":
        return _render_csv(obj)
    raise ValueError(f"unknown report format {fmt!r}")


def _rows_for(obj: dict) -> tuple:
    """Header and rows of the report's tabular core."""
    kind = obj["kind"]
    if kind == "robustness":
        header = ["row", "distance"]
        rows = [[key, value] for key, value in obj["distances"].items()]
    elif kind == "burden":
        header = ["group", "burden", "n", "failures"]
        rows = [
            [key, value["burden"], value["n"], value["failures"]]
            for key, value in obj["groups"].items()
        ]
    elif kind == "fairness":
        header = ["row", "fitness_muted", "fitness_unmuted", "relative_delta", "flagged"]
        rows = [
            [p["row_index"], p["fitness_muted"], p["fitness_unmuted"],
             p["relative_delta"], p["flagged"]]
            for p in obj["probes"]
        ]
    elif kind == "importance":
        header = ["feature", "count", "fraction"]
        rows = [
            [name, obj["counts"][name], obj["fractions"][name]]
            for name in obj["counts"]
        ]
    else:
        raise ValueError(f"unknown report kind {kind!r}")
    return header, rows


def _summary_for(obj: dict) -> list:
    kind = obj["kind"]
    out = [("kind", kind)]
    if kind == "robustness":
        out += [
            ("cerscore", obj["cerscore"]),
            ("ci95", obj["ci95"]),
            ("ncerscore", obj["ncerscore"]),
            ("explained", f"{obj['n_explained']}/{obj['n_selected']}"),
        ]
    elif kind == "fairness":
        out += [
            ("protected", ", ".join(obj["protected"])),
            ("flagged_fraction", obj["flagged_fraction"]),
        ]
    elif kind == "importance":
        out += [("n_explained", obj["n_explained"])]
    elif kind == "burden":
        out += [("group_by", ", ".join(obj["group_by"]))]
    if obj.get("aborted_reason"):
        out.append(("aborted", obj["aborted_reason"]))
    return out


def _render_table(obj: dict) -> str:
    lines = [f"{key}: {value}" for key, value in _summary_for(obj)]
    header, rows = _rows_for(obj)
    if rows:
        cells = [header] + [[_fmt_cell(v) for v in row] for row in rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
        lines.append("")
        for row in cells:
            lines.append("  ".join(value.ljust(width) for value, width in zip(row, widths)))
    return "\n".join(lines) + "\n"


def _fmt_cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _render_csv(obj: dict) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    header, rows = _rows_for(obj)
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()

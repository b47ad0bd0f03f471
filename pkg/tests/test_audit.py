"""Audit layer: robustness scores, burden, fairness probe, importance."""

import json
import math
import statistics

import pytest

from cfaudit import (
    AuditError,
    CallablePredictor,
    Constraints,
    GAConfig,
    InfeasibleSpaceError,
    PredictorProtocolError,
    SchemaError,
    audit_fairness,
    audit_robustness,
    burden,
    cerscore,
    feature_importance,
    individual_fairness,
    ncerscore,
    render_report,
)
from cfaudit.dataset import DatasetStats

X = (150.0, 30.0, "no", "a")


def audit_config(**overrides):
    defaults = dict(population_size=40, generations=8, seed=11)
    defaults.update(overrides)
    return GAConfig(**defaults)


# -------------------------------------------------------------------- scores

def test_cerscore_constant_sample():
    score, (lo, hi) = cerscore([0.2, 0.2, 0.2])
    assert score == pytest.approx(0.2, abs=1e-15)
    assert hi - lo == pytest.approx(0.0, abs=1e-15)
    assert lo == pytest.approx(0.2, abs=1e-15)


def test_cerscore_matches_stdlib_oracle():
    sample = [1.0, 2.0, 3.0, 4.0]
    score, (lo, hi) = cerscore(sample)
    assert score == pytest.approx(2.5, abs=1e-12)
    half = 1.96 * statistics.stdev(sample) / math.sqrt(len(sample))
    assert hi - lo == pytest.approx(2 * half, abs=1e-12)
    assert (lo + hi) / 2 == pytest.approx(score, abs=1e-12)


def test_cerscore_single_observation_zero_width():
    score, (lo, hi) = cerscore([0.7])
    assert score == 0.7
    assert lo == hi == 0.7


@pytest.mark.parametrize("bad", [[], [0.0, 1.0], [-0.1], [float("nan")], [float("inf")]])
def test_cerscore_rejects_bad_samples(bad):
    with pytest.raises(AuditError):
        cerscore(bad)


def fixture_stats(priors, intra):
    classes = sorted(priors)
    return DatasetStats(
        medians={}, mads={}, ranges={}, category_counts={},
        class_priors=dict(priors),
        class_counts={cls: max(1, int(priors[cls] * 10)) for cls in classes},
        intra_class_distance=dict(intra),
        n_rows=10,
    )


def test_ncerscore_hand_fixture():
    # denominator 0.5*0.2 + 0.5*0.6 = 0.4, so 0.2 normalizes to 0.5
    stats = fixture_stats({"A": 0.5, "B": 0.5}, {"A": 0.2, "B": 0.6})
    assert ncerscore(0.2, stats) == pytest.approx(0.5, abs=1e-12)


def test_ncerscore_degenerate_dataset():
    stats = fixture_stats({"A": 0.5, "B": 0.5}, {"A": 0.0, "B": 0.0})
    with pytest.raises(AuditError, match="degenerate"):
        ncerscore(0.2, stats)


# ---------------------------------------------------------------- robustness

def test_robustness_report_shape(glucose_model, mixed_dataset):
    report = audit_robustness(glucose_model, mixed_dataset, config=audit_config(),
                              sample_size=6)
    assert report.kind == "robustness"
    assert report.n_selected == 6
    assert report.n_explained == len(report.distances)
    assert report.n_explained + len(report.failures) == report.n_selected
    assert all(d > 0 for d in report.distances.values())
    score, ci = cerscore(report.distances.values())
    assert report.cerscore == pytest.approx(score, abs=1e-15)
    assert report.ci95 == ci
    assert report.ncerscore == pytest.approx(
        ncerscore(score, mixed_dataset.stats), abs=1e-15)
    assert report.aborted_reason is None


def test_robustness_explicit_indices(glucose_model, mixed_dataset):
    report = audit_robustness(glucose_model, mixed_dataset, config=audit_config(),
                              indices=[0, 3, 5])
    assert report.n_selected == 3
    assert set(report.distances) | set(report.failures) == {0, 3, 5}


def test_robustness_indices_out_of_range(glucose_model, mixed_dataset):
    with pytest.raises(AuditError, match="out of range"):
        audit_robustness(glucose_model, mixed_dataset, indices=[0, 10_000])


def test_robustness_rows_seeded_independently(glucose_model, mixed_dataset):
    # row 5's score must not depend on which other rows were audited
    pair = audit_robustness(glucose_model, mixed_dataset, config=audit_config(),
                            indices=[2, 5])
    solo = audit_robustness(glucose_model, mixed_dataset, config=audit_config(),
                            indices=[5])
    assert pair.distances[5] == solo.distances[5]


def test_robustness_only_correct_filters_mispredictions(mixed_dataset):
    # model is wrong exactly on rows whose glucose is in (110, 120]
    def wrongish(inst):
        return "1" if inst[0] > 110.0 else "0"

    model = CallablePredictor(wrongish, classes=("0", "1"))
    labels = mixed_dataset.labels()
    instances = mixed_dataset.instances()
    wrong = {i for i, inst in enumerate(instances)
             if ("1" if inst[0] > 110.0 else "0") != labels[i]}
    assert wrong  # the fixture contains such rows
    report = audit_robustness(model, mixed_dataset, config=audit_config(),
                              use_heldout=False)
    assert not wrong & set(report.distances)
    assert not wrong & set(report.failures)


def test_robustness_aborts_on_protocol_error(mixed_dataset):
    calls = {"n": 0}

    def flaky(inst):
        calls["n"] += 1
        if calls["n"] > 200:
            raise PredictorProtocolError("link died")
        return "1" if inst[0] > 120.0 else "0"

    model = CallablePredictor(flaky, classes=("0", "1"))
    report = audit_robustness(model, mixed_dataset, config=audit_config(),
                              indices=list(range(10)), only_correct=False)
    assert report.aborted_reason == "link died"
    assert report.n_explained < 10


# -------------------------------------------------------------------- burden

def test_burden_groups_and_counts(glucose_model, mixed_dataset):
    report = burden(glucose_model, mixed_dataset, group_by=("smoker",),
                    config=audit_config(), sample_size=8)
    assert report.kind == "burden"
    assert report.group_by == ("smoker",)
    assert set(report.groups) <= {("no",), ("yes",)}
    total = sum(g["n"] + g["failures"] for g in report.groups.values())
    assert total == 8
    for bucket in report.groups.values():
        if bucket["n"]:
            assert bucket["burden"] > 0


def test_burden_mutes_grouping_features(mixed_dataset):
    # the class is decided by the muted feature alone, so every row
    # becomes infeasible: proof the grouping feature was frozen
    model = CallablePredictor(lambda inst: "1" if inst[2] == "yes" else "0",
                              classes=("0", "1"))
    report = burden(model, mixed_dataset, group_by=("smoker",),
                    config=audit_config(), sample_size=6, only_correct=False,
                    use_heldout=False)
    for bucket in report.groups.values():
        assert bucket["n"] == 0
        assert bucket["burden"] is None
        assert bucket["failures"] > 0


def test_burden_rejects_continuous_grouping(glucose_model, mixed_dataset):
    with pytest.raises(AuditError, match="categorical"):
        burden(glucose_model, mixed_dataset, group_by=("glucose",))


def test_burden_rejects_empty_grouping(glucose_model, mixed_dataset):
    with pytest.raises(AuditError, match="at least one"):
        burden(glucose_model, mixed_dataset, group_by=())


def test_burden_two_feature_groups(glucose_model, mixed_dataset):
    report = burden(glucose_model, mixed_dataset, group_by=("smoker", "region"),
                    config=audit_config(), sample_size=10)
    for key in report.groups:
        assert len(key) == 2
        assert key[0] in {"no", "yes"}
        assert key[1] in {"a", "b", "c"}


# ------------------------------------------------------------------ fairness

def biased_model():
    # smokers are always approved: flipping the protected feature is the
    # cheapest way out for a non-smoker with high glucose
    return CallablePredictor(
        lambda inst: "1" if (inst[2] == "no" and inst[0] > 120.0) else "0",
        classes=("0", "1"),
    )


def test_individual_fairness_flags_biased_model(mixed_schema, mixed_dataset):
    x = (200.0, 30.0, "no", "a")
    probe = individual_fairness(x, biased_model(), mixed_schema,
                                mixed_dataset.stats, protected=("smoker",),
                                config=audit_config())
    assert probe.flagged
    assert probe.relative_delta > 0.05
    assert probe.fitness_unmuted > probe.fitness_muted
    assert "smoker" in probe.protected_changed


def test_individual_fairness_clears_neutral_model(mixed_schema, mixed_dataset,
                                                  glucose_model):
    # the model never looks at the protected feature, so muting it costs
    # nothing beyond search noise
    probe = individual_fairness(X, glucose_model, mixed_schema,
                                mixed_dataset.stats, protected=("smoker",),
                                config=audit_config(), threshold=0.25)
    assert not probe.flagged
    assert probe.protected_changed == ()


def test_individual_fairness_requires_protected(mixed_schema, mixed_dataset,
                                                glucose_model):
    with pytest.raises(AuditError, match="at least one"):
        individual_fairness(X, glucose_model, mixed_schema, mixed_dataset.stats,
                            protected=())


def test_individual_fairness_unknown_feature(mixed_schema, mixed_dataset,
                                             glucose_model):
    with pytest.raises(SchemaError, match="unknown feature"):
        individual_fairness(X, glucose_model, mixed_schema, mixed_dataset.stats,
                            protected=("age",))


def test_individual_fairness_infeasible_when_protected_decides(mixed_schema,
                                                               mixed_dataset):
    model = CallablePredictor(lambda inst: "1" if inst[2] == "no" else "0",
                              classes=("0", "1"))
    with pytest.raises(InfeasibleSpaceError):
        individual_fairness(X, model, mixed_schema, mixed_dataset.stats,
                            protected=("smoker",), config=audit_config())


def test_audit_fairness_sweep(mixed_dataset):
    report = audit_fairness(biased_model(), mixed_dataset, protected=("smoker",),
                            config=audit_config(), sample_size=5,
                            only_correct=False, use_heldout=False)
    assert report.kind == "fairness"
    assert report.protected == ("smoker",)
    assert len(report.probes) + len(report.failures) == 5
    for probe in report.probes:
        assert probe.row_index >= 0
    assert 0.0 <= report.flagged_fraction <= 1.0


# ---------------------------------------------------------------- importance

def test_feature_importance_counts(glucose_model, mixed_dataset):
    report = feature_importance(glucose_model, mixed_dataset,
                                config=audit_config(), sample_size=8)
    assert report.kind == "importance"
    assert set(report.counts) == {"glucose", "bmi", "smoker", "region"}
    # only glucose can flip this model, and sparsification reverts the rest
    assert report.counts["glucose"] == report.n_explained > 0
    assert report.counts["bmi"] == 0
    assert report.counts["smoker"] == 0
    assert report.counts["region"] == 0
    assert report.fractions["glucose"] == pytest.approx(1.0)
    assert sum(report.fractions.values()) == pytest.approx(1.0)


def test_feature_importance_respects_mutes(glucose_model, mixed_dataset):
    with pytest.raises(AuditError):
        # muting the only decisive feature leaves nothing to explain
        feature_importance(glucose_model, mixed_dataset, config=audit_config(),
                           constraints=Constraints(muted=frozenset({"glucose"})),
                           sample_size=0)


# ----------------------------------------------------------------- rendering

def test_render_json_round_trips(glucose_model, mixed_dataset):
    report = audit_robustness(glucose_model, mixed_dataset, config=audit_config(),
                              indices=[0, 1, 2])
    text = render_report(report, "json")
    obj = json.loads(text)
    assert obj == report.to_dict()
    assert text == json.dumps(obj, indent=2, sort_keys=True)


def test_render_table_has_summary_and_rows(glucose_model, mixed_dataset):
    report = audit_robustness(glucose_model, mixed_dataset, config=audit_config(),
                              indices=[0, 1])
    text = render_report(report, "table")
    assert "kind: robustness" in text
    assert "cerscore:" in text
    assert "row" in text and "distance" in text


def test_render_csv_robustness(glucose_model, mixed_dataset):
    report = audit_robustness(glucose_model, mixed_dataset, config=audit_config(),
                              indices=[0, 1])
    lines = render_report(report, "csv").strip().splitlines()
    assert lines[0] == "row,distance"
    assert len(lines) == 1 + report.n_explained


def test_render_burden_group_key_joined(glucose_model, mixed_dataset):
    report = burden(glucose_model, mixed_dataset, group_by=("smoker", "region"),
                    config=audit_config(), sample_size=6)
    obj = report.to_dict()
    for key in obj["groups"]:
        assert "|" in key
    text = render_report(report, "table")
    assert "group_by: smoker, region" in text


def test_render_importance_csv(glucose_model, mixed_dataset):
    report = feature_importance(glucose_model, mixed_dataset,
                                config=audit_config(), indices=[0, 1, 2])
    lines = render_report(report, "csv").strip().splitlines()
    assert lines[0] == "feature,count,fraction"
    assert len(lines) == 5  # header + one row per feature


def test_render_fairness_table(mixed_dataset):
    report = audit_fairness(biased_model(), mixed_dataset, protected=("smoker",),
                            config=audit_config(), sample_size=3,
                            only_correct=False, use_heldout=False)
    text = render_report(report, "table")
    assert "protected: smoker" in text
    assert "flagged_fraction:" in text


def test_render_unknown_format(glucose_model, mixed_dataset):
    report = audit_robustness(glucose_model, mixed_dataset, config=audit_config(),
                              indices=[0])
    with pytest.raises(ValueError, match="unknown report format"):
        render_report(report, "yaml")


def test_render_aborted_reason_surfaces(mixed_dataset):
    calls = {"n": 0}

    def flaky(inst):
        calls["n"] += 1
        if calls["n"] > 200:
            raise PredictorProtocolError("link died")
        return "1" if inst[0] > 120.0 else "0"

    model = CallablePredictor(flaky, classes=("0", "1"))
    report = audit_robustness(model, mixed_dataset, config=audit_config(),
                              indices=list(range(10)), only_correct=False)
    assert "aborted: link died" in render_report(report, "table")

"""Genetic search: constraints, feasibility, elitism, determinism."""

import json
import time

import numpy as np
import pytest

from cfaudit import (
    CallablePredictor,
    ConstraintError,
    Constraints,
    GAConfig,
    ImageMetric,
    InfeasibleSpaceError,
    TimeBudgetError,
    constraints_from_dict,
    constraints_to_dict,
    derive_seed,
    evolve,
    fitness_of,
    generate_counterfactuals,
    initialize_population,
    mixed_distance,
    pixel_schema,
    result_to_dict,
)


def small_config(**overrides):
    defaults = dict(population_size=60, generations=15, seed=0)
    defaults.update(overrides)
    return GAConfig(**defaults)


X = (150.0, 30.0, "no", "a")  # glucose model predicts "1" here


# ---------------------------------------------------------------- constraints

def test_constraints_from_dict_parses_all_forms(mixed_schema):
    obj = {
        "glucose": {"range": [70, 120]},
        "region": {"allowed": ["a", "b"]},
        "bmi": {"mute": True},
        "target_class": "0",
        "k": 3,
    }
    cons = constraints_from_dict(mixed_schema, obj)
    assert cons.ranges["glucose"] == (70.0, 120.0)
    assert cons.allowed["region"] == ("a", "b")
    assert cons.muted == frozenset({"bmi"})
    assert cons.target_class == "0"
    assert cons.k == 3


def test_constraints_patch_merges_and_unmutes(mixed_schema):
    base = constraints_from_dict(mixed_schema, {"bmi": {"mute": True}, "k": 2})
    patched = constraints_from_dict(
        mixed_schema,
        {"bmi": {"mute": False}, "glucose": {"range": [0, 100]}},
        base=base,
    )
    assert patched.muted == frozenset()
    assert patched.ranges["glucose"] == (0.0, 100.0)
    assert patched.k == 2  # untouched by the patch


def test_constraints_round_trip(mixed_schema):
    obj = {"glucose": {"range": [70.0, 120.0]}, "smoker": {"mute": True},
           "target_class": "0", "k": 2}
    cons = constraints_from_dict(mixed_schema, obj)
    again = constraints_from_dict(mixed_schema, constraints_to_dict(cons))
    assert again == cons


@pytest.mark.parametrize("bad, message", [
    ({"glucose": {"range": [500, 600]}}, "outside schema bounds"),
    ({"glucose": {"range": [90, 70]}}, "empty range"),
    ({"smoker": {"range": [0, 1]}}, "categorical feature"),
    ({"glucose": {"allowed": ["a"]}}, "continuous feature"),
    ({"region": {"allowed": ["z"]}}, "not in schema"),
    ({"region": {"allowed": []}}, "empty range|empty allowed"),
    ({"height": {"mute": True}}, "unknown feature"),
    ({"k": 0}, "positive"),
    ({"target_class": "7"}, "not among classes"),
    ({"glucose": {"minimum": 3}}, "unknown constraint key"),
])
def test_constraint_validation_errors(mixed_schema, bad, message):
    with pytest.raises(ConstraintError, match=message):
        constraints_from_dict(mixed_schema, bad)


def test_constraint_error_collects_fields(mixed_schema):
    with pytest.raises(ConstraintError) as excinfo:
        constraints_from_dict(mixed_schema, {
            "glucose": {"range": [500, 600]},
            "region": {"allowed": ["z"]},
        })
    fields = {name for name, _ in excinfo.value.field_errors}
    assert fields == {"glucose", "region"}


# ------------------------------------------------------------ initialization

def test_initial_population_is_feasible_and_in_bounds(mixed_schema, mixed_dataset, glucose_model):
    cons = constraints_from_dict(mixed_schema, {
        "glucose": {"range": [50.0, 119.0]},
        "region": {"allowed": ["a", "b"]},
        "bmi": {"mute": True},
    })
    pop = initialize_population(X, glucose_model, mixed_schema, mixed_dataset.stats,
                                constraints=cons, config=small_config())
    assert pop.size == 60
    labels = glucose_model.predict_batch(pop.problem.space.decode(pop.enc))
    assert all(label == "0" for label in labels)  # everyone flipped
    glucose_col = pop.enc[:, 0]
    assert np.all((glucose_col >= 50.0) & (glucose_col <= 119.0))
    assert np.all(pop.enc[:, 1] == 30.0)  # muted bmi pinned to x
    region_codes = pop.enc[:, 3].astype(int)
    assert set(region_codes) <= {0, 1}  # only "a" and "b"


def test_all_muted_space_is_infeasible(mixed_schema, mixed_dataset, glucose_model):
    cons = Constraints(muted=frozenset({"glucose", "bmi", "smoker", "region"}))
    with pytest.raises(InfeasibleSpaceError, match="only the input"):
        initialize_population(X, glucose_model, mixed_schema, mixed_dataset.stats,
                              constraints=cons, config=small_config())


def test_unreachable_class_reports_attempts(mixed_schema, mixed_dataset):
    stubborn = CallablePredictor(lambda inst: "1", classes=("0", "1"))
    with pytest.raises(InfeasibleSpaceError) as excinfo:
        initialize_population(X, stubborn, mixed_schema, mixed_dataset.stats,
                              config=small_config(init_attempts_factor=5))
    assert excinfo.value.attempts == 5 * 60


def test_target_equal_to_prediction_is_rejected(mixed_schema, mixed_dataset, glucose_model):
    cons = Constraints(target_class="1")  # f(X) is already "1"
    with pytest.raises(ConstraintError, match="target equals"):
        generate_counterfactuals(X, glucose_model, mixed_schema, mixed_dataset.stats,
                                 constraints=cons, config=small_config())


# ------------------------------------------------------------------ evolution

def test_evolve_preserves_size_and_never_regresses(mixed_schema, mixed_dataset, glucose_model):
    config = small_config()
    rng = np.random.default_rng(config.seed)
    pop = initialize_population(X, glucose_model, mixed_schema, mixed_dataset.stats,
                                config=config, rng=rng)
    best = pop.best_fitness()
    for _ in range(10):
        pop = evolve(pop, rng)
        assert pop.size == 60
        assert pop.best_fitness() >= best
        best = pop.best_fitness()


@pytest.mark.parametrize("seed", range(5))
def test_best_fitness_trace_is_monotone(mixed_schema, mixed_dataset, glucose_model, seed):
    result = generate_counterfactuals(X, glucose_model, mixed_schema, mixed_dataset.stats,
                                      config=small_config(seed=seed))
    trace = result.best_fitness_per_generation
    assert len(trace) == result.generations_run + 1
    assert all(b >= a for a, b in zip(trace, trace[1:]))


def test_counterfactuals_flip_class_and_respect_mutes(mixed_schema, mixed_dataset, glucose_model):
    cons = constraints_from_dict(mixed_schema, {"smoker": {"mute": True}, "k": 2})
    result = generate_counterfactuals(X, glucose_model, mixed_schema, mixed_dataset.stats,
                                      constraints=cons, config=small_config(seed=4))
    assert result.counterfactuals
    for cf in result.counterfactuals:
        assert cf.predicted_class == "0"
        assert glucose_model.predict_batch([cf.values]) == ["0"]
        changed_names = {mixed_schema.features[i].name for i in cf.changed_indices()}
        assert "smoker" not in changed_names
        assert cf.values[2] == "no"


def test_immutable_schema_feature_is_always_muted(mixed_dataset, glucose_model):
    from cfaudit import CATEGORICAL, CONTINUOUS, FeatureSchema, FeatureSpec, compute_stats

    schema = FeatureSchema(
        features=(
            FeatureSpec("glucose", CONTINUOUS, min=0.0, max=200.0),
            FeatureSpec("bmi", CONTINUOUS, min=10.0, max=60.0),
            FeatureSpec("smoker", CATEGORICAL, categories=("no", "yes"), mutable=False),
            FeatureSpec("region", CATEGORICAL, categories=("a", "b", "c")),
        ),
        target_name="outcome", classes=("0", "1"),
    )
    rows = [(tuple(v), lab) for v, lab in zip(
        [inst for inst in (r for r, _ in mixed_dataset.rows)],
        [lab for _, lab in mixed_dataset.rows],
    )]
    stats = compute_stats(rows, schema)
    result = generate_counterfactuals(X, glucose_model, schema, stats,
                                      config=small_config(seed=1))
    for cf in result.counterfactuals:
        assert cf.values[2] == "no"


def test_targeted_generation_reaches_requested_class(mixed_dataset):
    def three_way(inst):
        if inst[0] > 150.0:
            return "high"
        if inst[0] > 75.0:
            return "mid"
        return "low"

    from cfaudit import FeatureSchema, FeatureSpec, CONTINUOUS, CATEGORICAL, compute_stats

    schema = FeatureSchema(
        features=(
            FeatureSpec("glucose", CONTINUOUS, min=0.0, max=200.0),
            FeatureSpec("bmi", CONTINUOUS, min=10.0, max=60.0),
            FeatureSpec("smoker", CATEGORICAL, categories=("no", "yes")),
            FeatureSpec("region", CATEGORICAL, categories=("a", "b", "c")),
        ),
        target_name="outcome", classes=("low", "mid", "high"),
    )
    rows = [(values, three_way(values)) for values, _ in mixed_dataset.rows]
    stats = compute_stats(rows, schema)
    model = CallablePredictor(three_way, classes=("low", "mid", "high"))
    cons = Constraints(target_class="low")
    result = generate_counterfactuals((160.0, 30.0, "no", "a"), model, schema, stats,
                                      constraints=cons, config=small_config(seed=2))
    assert result.counterfactuals
    for cf in result.counterfactuals:
        assert cf.predicted_class == "low"
        assert cf.values[0] <= 75.0


def test_k_diversity_distinct_changed_sets(mixed_schema, mixed_dataset):
    # either glucose below 120 or smoker=yes flips the class, so two
    # genuinely different changed-feature sets exist; few generations keep
    # the dominated smoker route alive in the final population
    def either(inst):
        return "0" if (inst[0] <= 120.0 or inst[2] == "yes") else "1"

    model = CallablePredictor(either, classes=("0", "1"))
    cons = Constraints(k=3)
    result = generate_counterfactuals(
        X, model, mixed_schema, mixed_dataset.stats,
        constraints=cons, config=small_config(seed=3, generations=2,
                                              population_size=120),
    )
    sets = [cf.changed_indices() for cf in result.counterfactuals]
    assert len(sets) >= 2
    assert len(set(sets)) == len(sets)  # pairwise distinct
    glucose_idx = mixed_schema.feature_index("glucose")
    smoker_idx = mixed_schema.feature_index("smoker")
    assert frozenset({glucose_idx}) in sets
    assert frozenset({smoker_idx}) in sets
    if len(sets) < 3:
        assert any("diversity shortfall" in w for w in result.warnings)


def test_sparsify_reverts_incidental_changes(mixed_schema, mixed_dataset, glucose_model):
    result = generate_counterfactuals(X, glucose_model, mixed_schema, mixed_dataset.stats,
                                      config=small_config(seed=5))
    best = result.counterfactuals[0]
    # only glucose matters to this model, so nothing else may remain changed
    assert {mixed_schema.features[i].name for i in best.changed_indices()} == {"glucose"}


def test_sparsify_off_keeps_raw_candidates(mixed_schema, mixed_dataset, glucose_model):
    result = generate_counterfactuals(
        X, glucose_model, mixed_schema, mixed_dataset.stats,
        config=small_config(seed=5, sparsify=False),
    )
    best = result.counterfactuals[0]
    # continuous noise means bmi virtually never lands exactly on x
    assert len(best.changed_indices()) >= 2


def test_results_are_fully_deterministic(mixed_schema, mixed_dataset, glucose_model):
    cons = Constraints(k=2)
    payloads = []
    for _ in range(2):
        result = generate_counterfactuals(X, glucose_model, mixed_schema,
                                          mixed_dataset.stats, constraints=cons,
                                          config=small_config(seed=11))
        payloads.append(json.dumps(result_to_dict(result, mixed_schema), sort_keys=True))
    assert payloads[0] == payloads[1]


def test_different_seeds_explore_differently(mixed_schema, mixed_dataset, glucose_model):
    r1 = generate_counterfactuals(X, glucose_model, mixed_schema, mixed_dataset.stats,
                                  config=small_config(seed=0, sparsify=False))
    r2 = generate_counterfactuals(X, glucose_model, mixed_schema, mixed_dataset.stats,
                                  config=small_config(seed=1, sparsify=False))
    assert r1.counterfactuals[0].values != r2.counterfactuals[0].values


def test_distance_and_fitness_are_consistent(mixed_schema, mixed_dataset, glucose_model):
    result = generate_counterfactuals(X, glucose_model, mixed_schema, mixed_dataset.stats,
                                      config=small_config(seed=6))
    cf = result.counterfactuals[0]
    d = mixed_distance(X, cf.values, mixed_schema, mixed_dataset.stats)
    assert cf.distance == d
    assert cf.fitness == 1.0 / d
    assert fitness_of(X, cf.values, mixed_schema, mixed_dataset.stats) == cf.fitness


def test_time_budget_short_circuit(mixed_schema, mixed_dataset, glucose_model):
    result = generate_counterfactuals(X, glucose_model, mixed_schema, mixed_dataset.stats,
                                      config=small_config(seed=0),
                                      time_budget_s=0.0)
    assert "budget_exhausted" in result.warnings
    assert result.generations_run == 0
    assert result.counterfactuals  # best-so-far still returned


def test_time_budget_with_no_feasible_point_errors(mixed_schema, mixed_dataset):
    stubborn = CallablePredictor(lambda inst: "1", classes=("0", "1"))
    with pytest.raises(TimeBudgetError):
        generate_counterfactuals(X, stubborn, mixed_schema, mixed_dataset.stats,
                                 config=small_config(), time_budget_s=0.0)


# --------------------------------------------------------------------- config

def test_population_resolution_floor_and_cap():
    assert GAConfig().resolve_population(4) == 100     # floor
    assert GAConfig().resolve_population(50) == 2500   # n^2
    assert GAConfig().resolve_population(300) == 30000  # cap
    assert GAConfig(population_size=42).resolve_population(4) == 42


@pytest.mark.parametrize("kwargs", [
    dict(p_m=1.5), dict(p_c=-0.1), dict(generations=0),
    dict(population_size=0), dict(population_size=5, elite_count=5),
    dict(mutation_scale=0.0), dict(init_attempts_factor=0),
])
def test_ga_config_validation(kwargs):
    with pytest.raises(ValueError):
        GAConfig(**kwargs)


def test_derive_seed_is_stable_and_spreads():
    assert derive_seed(7, 3) == derive_seed(7, 3)
    seeds = {derive_seed(7, i) for i in range(100)}
    assert len(seeds) == 100


# ---------------------------------------------------------------- image mode

def gradient_image():
    # textured base image so windows carry their own variance
    return tuple((r * 8 + c) / 63.0 for r in range(8) for c in range(8))


def center_pixel_model():
    # class hinges on one pixel, so a sparse localized edit suffices
    return CallablePredictor(
        lambda inst: "bright" if float(inst[27]) >= 0.5 else "dark",
        classes=("bright", "dark"),
    )


def test_image_mode_flips_with_high_ssim():
    schema = pixel_schema(8, 8, classes=("bright", "dark"))
    x = gradient_image()  # pixel 27 is 27/63, below the 0.5 cut
    model = center_pixel_model()
    result = generate_counterfactuals(
        x, model, schema, image=ImageMetric(8, 8, window=5),
        config=GAConfig(population_size=80, generations=40, seed=0),
    )
    assert result.counterfactuals
    best = result.counterfactuals[0]
    assert best.predicted_class == "bright"
    assert best.distance >= 1.0  # 1/ssim with ssim <= 1
    assert best.fitness == 1.0 / best.distance
    assert best.fitness > 0.8  # only a localized patch should differ
    changed = best.changed_indices()
    assert 27 in changed
    assert len(changed) <= 4  # sparsification reverted untouched pixels


def test_image_mode_determinism():
    schema = pixel_schema(8, 8, classes=("bright", "dark"))
    x = gradient_image()
    model = center_pixel_model()
    config = GAConfig(population_size=40, generations=10, seed=3)
    r1 = generate_counterfactuals(x, model, schema, image=ImageMetric(8, 8, window=5),
                                  config=config)
    r2 = generate_counterfactuals(x, model, schema, image=ImageMetric(8, 8, window=5),
                                  config=config)
    assert r1.counterfactuals[0].values == r2.counterfactuals[0].values


def test_pixel_schema_shape():
    schema = pixel_schema(4, 4, classes=("0", "1"))
    assert schema.n == 16
    assert schema.features[0].name == "px00"
    assert schema.features[15].name == "px15"
    assert schema.features[0].min == 0.0 and schema.features[0].max == 1.0


def test_image_metric_validation():
    with pytest.raises(ValueError, match="odd"):
        ImageMetric(8, 8, window=4)
    with pytest.raises(ValueError, match="exceeds"):
        ImageMetric(4, 4, window=5)


def test_result_json_shape(mixed_schema, mixed_dataset, glucose_model):
    result = generate_counterfactuals(X, glucose_model, mixed_schema, mixed_dataset.stats,
                                      config=small_config(seed=8))
    obj = result_to_dict(result, mixed_schema)
    assert obj["input"] == list(X)
    assert obj["input_class"] == "1"
    cf = obj["counterfactuals"][0]
    assert set(cf) == {"values", "distance", "fitness", "class", "changed"}
    change = cf["changed"][0]
    assert set(change) == {"feature", "from", "to"}
    assert change["feature"] == "glucose"

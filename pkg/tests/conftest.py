"""Shared fixtures: a small mixed schema, a seeded dataset, and simple
constructed predictors with known decision rules. Also prints the
acceptance-criteria verdict lines collected during the run."""

import numpy as np
import pytest

ACCEPTANCE_VERDICTS = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)

from cfaudit import (
    CATEGORICAL,
    CONTINUOUS,
    CallablePredictor,
    FeatureSchema,
    FeatureSpec,
    dataset_from_rows,
)


@pytest.fixture(scope="session")
def mixed_schema():
    return FeatureSchema(
        features=(
            FeatureSpec("glucose", CONTINUOUS, min=0.0, max=200.0),
            FeatureSpec("bmi", CONTINUOUS, min=10.0, max=60.0),
            FeatureSpec("smoker", CATEGORICAL, categories=("no", "yes")),
            FeatureSpec("region", CATEGORICAL, categories=("a", "b", "c")),
        ),
        target_name="outcome",
        classes=("0", "1"),
    )


def make_mixed_rows(seed: int, count: int):
    """Rows labeled by the glucose > 120 rule, schema order values."""
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(count):
        glucose = float(rng.uniform(0.0, 200.0))
        bmi = float(rng.uniform(10.0, 60.0))
        smoker = "yes" if rng.random() < 0.4 else "no"
        region = ("a", "b", "c")[rng.integers(0, 3)]
        label = "1" if glucose > 120.0 else "0"
        rows.append(((glucose, bmi, smoker, region), label))
    return rows


@pytest.fixture(scope="session")
def mixed_dataset(mixed_schema):
    return dataset_from_rows(make_mixed_rows(seed=7, count=200), mixed_schema)


@pytest.fixture(scope="session")
def glucose_model(mixed_schema):
    """Depends on glucose alone: > 120 predicts class 1."""
    return CallablePredictor(
        lambda inst: "1" if inst[0] > 120.0 else "0",
        classes=mixed_schema.classes,
    )

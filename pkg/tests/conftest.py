import numpy as np
import pytest

from ebmkit.schema import (CATEGORICAL, CONTINUOUS, GROUP_ID, LABEL, Cohort,
                           ColumnSpec, FeatureSchema)


@pytest.fixture
def small_schema():
    return FeatureSchema(
        [ColumnSpec("bmi", CONTINUOUS, "kg/m2"),
         ColumnSpec("weight", CONTINUOUS, "g"),
         ColumnSpec("duration", CONTINUOUS, "hours"),
         ColumnSpec("race", CATEGORICAL),
         ColumnSpec("smm", LABEL),
         ColumnSpec("hospital", GROUP_ID)],
        {"smm": ["bmi", "weight", "duration", "race"]})


def build_cohort(schema, bmi, weight, duration, race, smm, hospital):
    n = len(bmi)
    cols = {
        "bmi": np.array(bmi, dtype=np.float64),
        "weight": np.array(weight, dtype=np.float64),
        "duration": np.array(duration, dtype=np.float64),
        "race": np.array(race, dtype=object),
        "smm": np.array(smm, dtype=np.int8),
        "hospital": np.array(hospital, dtype=object),
    }
    return Cohort(schema, cols, np.arange(n, dtype=np.int64))


@pytest.fixture
def small_cohort(small_schema):
    return build_cohort(
        small_schema,
        bmi=[22.0, 31.5, np.nan, 27.0, 130.0, 24.0],
        weight=[3300, 4100, 3000, 8500, 3500, 2900],
        duration=[8.0, 12.0, -2.0, 6.0, 7.0, np.nan],
        race=["White", "Black", "Missing", "White", "Asian", "Hispanic"],
        smm=[0, 1, 0, 0, 1, 0],
        hospital=["H1", "H1", "H2", "H2", "H3", "H3"])


def random_cohort(schema, n, seed, n_hospitals=4, prevalence=0.3):
    """Unstructured random cohort for mechanical tests (splits, folds, io)."""
    rng = np.random.default_rng(seed)
    return build_cohort(
        schema,
        bmi=rng.normal(27, 5, n).round(1),
        weight=rng.normal(3400, 500, n).round(0),
        duration=rng.gamma(3, 2.5, n).round(1),
        race=rng.choice(["White", "Black", "Hispanic", "Asian"], n),
        smm=(rng.random(n) < prevalence).astype(int),
        hospital=rng.choice([f"H{i}" for i in range(1, n_hospitals + 1)], n))

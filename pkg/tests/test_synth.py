import math

import numpy as np
import pytest

from ebmkit.errors import ConfigError
from ebmkit.schema import MISSING_TOKEN
from ebmkit.synth import (CategoricalMarginal, CohortSpec, GammaMarginal,
                          NormalMarginal, PRESETS, generate_synthetic,
                          marginal_from_dict, marginal_to_dict, preset,
                          solve_intercept_for_prevalence)
from ebmkit.truth import (CategoryEffects, PiecewiseLinear, QuadrantInteraction,
                          StepFunction, TruthModel, sigmoid, solve_intercept)


def flat_truth_spec(prevalence=0.02):
    """Preset marginals with all-zero truth shapes (pure-noise labels)."""
    spec = preset("shoulder_dystocia")
    zero = PiecewiseLinear([0.0, 1.0], [0.0, 0.0])
    shapes = {}
    for name in spec.truth.shapes:
        if isinstance(spec.truth.shapes[name], CategoryEffects):
            shapes[name] = CategoryEffects({}, default=0.0)
        else:
            shapes[name] = zero
    spec.truth = TruthModel(shapes=shapes, interaction=None,
                            target_prevalence=prevalence)
    return spec


class TestSolveIntercept:
    def test_zero_shapes_target_half(self):
        assert solve_intercept(np.zeros(1000), 0.5) == 0.0

    def test_zero_shapes_closed_form(self):
        # closed form oracle: ln(p / (1-p))
        expected = math.log(0.0140 / (1 - 0.0140))
        got = solve_intercept(np.zeros(5000), 0.0140)
        assert got == pytest.approx(expected, abs=1e-9)
        assert expected == pytest.approx(-4.254, abs=1e-3)

    def test_nonzero_shapes_hits_target_at_large_n(self):
        spec = preset("preterm_preeclampsia")
        intercept = solve_intercept_for_prevalence(spec, 0.0205)
        spec.truth.intercept = intercept
        cohort = generate_synthetic(spec, 1_000_000, seed=77)
        assert abs(cohort.prevalence("preterm_preeclampsia") - 0.0205) <= 1e-3

    def test_bad_target_rejected(self):
        with pytest.raises(ConfigError):
            solve_intercept(np.zeros(10), 0.0)

    def test_unbracketable_errors(self):
        from ebmkit.errors import DataError
        with pytest.raises(DataError):
            solve_intercept(np.full(100, 1e6), 0.5, max_widen=30.0)


class TestGenerate:
    def test_smm_prevalence_window(self):
        cohort = generate_synthetic(preset("smm"), 100_000, seed=7)
        assert 0.012 <= cohort.prevalence("smm") <= 0.016

    def test_shoulder_dystocia_prevalence(self):
        cohort = generate_synthetic(preset("shoulder_dystocia"), 100_000, seed=9)
        assert abs(cohort.prevalence("shoulder_dystocia") - 0.0221) <= 0.002

    def test_boundary_sizes(self):
        spec = preset("smm")
        with pytest.raises(ConfigError):
            generate_synthetic(spec, 0, seed=1)
        one = generate_synthetic(spec, 1, seed=1)
        assert one.n_rows == 1
        assert one.true_logit is not None

    def test_byte_reproducible(self, tmp_path):
        from ebmkit.schema import save_csv
        spec = preset("smm")
        a = generate_synthetic(spec, 500, seed=13)
        b = generate_synthetic(preset("smm"), 500, seed=13)
        pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
        save_csv(a, pa)
        save_csv(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_missingness_rates_applied(self):
        spec = preset("shoulder_dystocia")
        cohort = generate_synthetic(spec, 40_000, seed=21)
        miss_bmi = np.mean(np.isnan(cohort.columns["mother_bmi"]))
        assert abs(miss_bmi - spec.missing_rates["mother_bmi"]) < 0.01
        # categorical "Missing" is a native token drawn from the marginal
        miss_race = np.mean(cohort.columns["race_ethnicity"] == MISSING_TOKEN)
        assert abs(miss_race - 0.05) < 0.01

    def test_true_logit_matches_labels_statistically(self):
        cohort = generate_synthetic(preset("smm"), 150_000, seed=3)
        p = sigmoid(cohort.true_logit)
        assert abs(p.mean() - cohort.prevalence("smm")) < 0.002

    def test_hospitals_unequal_and_at_least_ten(self):
        cohort = generate_synthetic(preset("smm"), 30_000, seed=5)
        names, counts = np.unique(cohort.groups(), return_counts=True)
        assert len(names) >= 10
        assert counts.max() > 1.5 * counts.min()

    def test_hospital_effect_scale_changes_logits(self):
        spec = preset("smm", hospital_effect_scale=1.0)
        assert len(spec.hospital_effects) == 12
        assert abs(np.mean(list(spec.hospital_effects.values()))) < 1e-9
        cohort = generate_synthetic(spec, 5000, seed=2)
        assert cohort.true_logit is not None

    def test_truth_has_step_and_one_interaction(self):
        for name in PRESETS:
            spec = preset(name)
            doc = spec.truth.to_json()
            assert '"step"' in doc
            assert spec.truth.interaction is not None

    def test_invalid_marginal_params_rejected(self):
        with pytest.raises(ConfigError):
            NormalMarginal(mean=0, sd=-1, lo=0, hi=1)
        with pytest.raises(ConfigError):
            CategoricalMarginal(["a", "b"], [0.6, 0.6])
        with pytest.raises(ConfigError):
            GammaMarginal(shape=0, scale=1, lo=0, hi=1)


class TestSpecSerialization:
    def test_marginal_roundtrip(self):
        m = NormalMarginal(mean=29, sd=5.8, lo=14, hi=52, step=1.0)
        again = marginal_from_dict(marginal_to_dict(m))
        assert again == m

    def test_cohort_spec_roundtrip(self):
        spec = preset("smm", hospital_effect_scale=0.5)
        again = CohortSpec.from_json(spec.to_json())
        a = generate_synthetic(spec, 200, seed=4)
        b = generate_synthetic(again, 200, seed=4)
        for name in spec.schema.names:
            va, vb = a.columns[name], b.columns[name]
            if va.dtype.kind == "f":
                assert np.allclose(va, vb, equal_nan=True)
            else:
                assert list(va) == list(vb)

    def test_truth_model_json_roundtrip(self):
        truth = TruthModel(
            shapes={"x": PiecewiseLinear([0, 1], [0.5, 1.0]),
                    "s": StepFunction([2.0], [0.0, 1.0]),
                    "c": CategoryEffects({"a": 0.2})},
            interaction=QuadrantInteraction("x", "s", 0.5, 2.0, 0.3),
            intercept=-4.0, target_prevalence=0.02)
        again = TruthModel.from_json(truth.to_json())
        xs = np.array([0.0, 0.5, 2.5])
        assert np.allclose(again.shapes["x"](xs), truth.shapes["x"](xs))
        assert np.allclose(again.shapes["s"](xs), truth.shapes["s"](xs))
        assert again.interaction.amplitude == 0.3
        assert again.intercept == -4.0


def test_flat_truth_prevalence():
    spec = flat_truth_spec(0.02)
    cohort = generate_synthetic(spec, 50_000, seed=31)
    assert abs(cohort.prevalence(spec.outcome) - 0.02) < 0.004
    assert np.allclose(np.std(cohort.true_logit), 0.0, atol=1e-12)

"""Synthetic obstetric cohort generator with known ground truth.

Stands in for real medical-record data so every pipeline stage can be
verified at desk scale. Feature values are quantized to clinical recording
precision (integer years/cm, 10 g, one decimal for BMI and durations);
magnitudes are illustrative, not clinical claims. Three presets mirror the
modeled outcomes: ``smm``, ``shoulder_dystocia``, ``preterm_preeclampsia``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .schema import (CATEGORICAL, CONTINUOUS, GROUP_ID, LABEL, MISSING_TOKEN,
                     Cohort, ColumnSpec, FeatureSchema)
from .truth import (CategoryEffects, CompositeShape, PiecewiseLinear,
                    QuadrantInteraction, StepFunction, TruthModel, sigmoid,
                    solve_intercept)

# fixed internal seed for the intercept-solving Monte-Carlo sample: the
# truth model is a constant of the preset, not of the cohort draw
_SOLVER_SEED = 790131
_SOLVER_SAMPLE = 200_000


class Marginal:
    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


@dataclass
class NormalMarginal(Marginal):
    mean: float
    sd: float
    lo: float
    hi: float
    decimals: int = 1
    step: float | None = None  # quantize to multiples (e.g. 10 g); overrides decimals

    def __post_init__(self):
        if self.sd <= 0 or self.hi <= self.lo:
            raise ConfigError(f"bad normal marginal parameters: {self}")

    def draw(self, n, rng):
        v = rng.normal(self.mean, self.sd, size=n)
        return _finish(v, self.lo, self.hi, self.decimals, self.step)


@dataclass
class LogNormalMarginal(Marginal):
    mu: float      # mean of log
    sigma: float   # sd of log
    lo: float
    hi: float
    decimals: int = 1
    step: float | None = None

    def __post_init__(self):
        if self.sigma <= 0 or self.hi <= self.lo:
            raise ConfigError(f"bad lognormal marginal parameters: {self}")

    def draw(self, n, rng):
        v = rng.lognormal(self.mu, self.sigma, size=n)
        return _finish(v, self.lo, self.hi, self.decimals, self.step)


@dataclass
class GammaMarginal(Marginal):
    shape: float
    scale: float
    lo: float
    hi: float
    decimals: int = 1
    step: float | None = None

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0 or self.hi <= self.lo:
            raise ConfigError(f"bad gamma marginal parameters: {self}")

    def draw(self, n, rng):
        v = rng.gamma(self.shape, self.scale, size=n)
        return _finish(v, self.lo, self.hi, self.decimals, self.step)


@dataclass
class CategoricalMarginal(Marginal):
    tokens: list[str]
    probs: list[float]

    def __post_init__(self):
        if len(self.tokens) != len(self.probs) or abs(sum(self.probs) - 1.0) > 1e-9:
            raise ConfigError("categorical marginal probabilities must match tokens and sum to 1")
        if any(p < 0 for p in self.probs):
            raise ConfigError("categorical marginal probabilities must be nonnegative")

    def draw(self, n, rng):
        idx = rng.choice(len(self.tokens), size=n, p=self.probs)
        return np.array(self.tokens, dtype=object)[idx]


def _finish(v, lo, hi, decimals, step):
    v = np.clip(v, lo, hi)
    if step is not None:
        return np.round(v / step) * step
    return np.round(v, decimals)


_MARGINAL_TYPES = {}


def _register_marginal(tag, cls, fields):
    _MARGINAL_TYPES[tag] = (cls, fields)


_register_marginal("normal", NormalMarginal, ["mean", "sd", "lo", "hi", "decimals", "step"])
_register_marginal("lognormal", LogNormalMarginal, ["mu", "sigma", "lo", "hi", "decimals", "step"])
_register_marginal("gamma", GammaMarginal, ["shape", "scale", "lo", "hi", "decimals", "step"])
_register_marginal("categorical", CategoricalMarginal, ["tokens", "probs"])


def marginal_to_dict(m: Marginal) -> dict:
    for tag, (cls, fields) in _MARGINAL_TYPES.items():
        if type(m) is cls:
            return {"type": tag, **{f: getattr(m, f) for f in fields}}
    raise ConfigError(f"unknown marginal type {type(m).__name__}")


def marginal_from_dict(doc: dict) -> Marginal:
    tag = doc.get("type")
    if tag not in _MARGINAL_TYPES:
        raise ConfigError(f"unknown marginal type {tag!r}")
    cls, fields = _MARGINAL_TYPES[tag]
    return cls(**{f: doc[f] for f in fields if f in doc})


@dataclass
class CohortSpec:
    """Everything generate_synthetic needs: schema, marginals, truth, noise knobs."""

    name: str
    schema: FeatureSchema
    outcome: str
    marginals: dict[str, Marginal]
    hospitals: list[str]
    hospital_weights: list[float]
    truth: TruthModel
    missing_rates: dict[str, float] = field(default_factory=dict)
    hospital_effects: dict[str, float] = field(default_factory=dict)
    #: per-hospital feature-effect multipliers (hospital -> feature -> gamma).
    #: A pure intercept offset is a within-hospital monotone transform and
    #: cannot move AUROC; profile differences are what external validation
    #: is meant to detect.
    hospital_profiles: dict[str, dict[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.hospitals) != len(self.hospital_weights):
            raise ConfigError("hospital weights must match hospital names")
        if abs(sum(self.hospital_weights) - 1.0) > 1e-9:
            raise ConfigError("hospital weights must sum to 1")
        for name, rate in self.missing_rates.items():
            if not 0.0 <= rate < 1.0:
                raise ConfigError(f"missing rate for {name!r} must be in [0,1), got {rate}")

    def draw_covariates(self, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        """Feature + hospital draws, in schema order, before missingness."""
        cols: dict[str, np.ndarray] = {}
        for spec in self.schema.columns:
            if spec.kind in (CONTINUOUS, CATEGORICAL):
                cols[spec.name] = self.marginals[spec.name].draw(n, rng)
        cols[self.schema.group_name] = CategoricalMarginal(
            self.hospitals, self.hospital_weights).draw(n, rng)
        return cols

    def shifted_shape_logit(self, cols: dict[str, np.ndarray]) -> np.ndarray:
        """Intercept-free true log-odds including hospital-level shifts
        (per-feature effect multipliers plus intercept offsets)."""
        hospitals = cols[self.schema.group_name]
        n = len(hospitals)
        total = np.zeros(n, dtype=np.float64)
        if self.hospital_profiles:
            gammas = {name: np.array([self.hospital_profiles.get(str(h), {}).get(name, 1.0)
                                      for h in hospitals])
                      for name in self.truth.shapes}
            for name, values in self.truth.shape_values(cols).items():
                total += gammas[name] * values
        else:
            for values in self.truth.shape_values(cols).values():
                total += values
        total += self.truth.interaction_values(cols)
        if self.hospital_effects:
            total += np.array([self.hospital_effects.get(str(h), 0.0) for h in hospitals])
        return total

    def row_logit(self, cols: dict[str, np.ndarray]) -> np.ndarray:
        """True log-odds including per-hospital shifts."""
        if self.truth.intercept is None:
            raise ConfigError("truth model intercept not solved yet")
        return self.truth.intercept + self.shifted_shape_logit(cols)

    def to_json(self) -> str:
        doc = {
            "name": self.name,
            "outcome": self.outcome,
            "columns": [{"name": c.name, "kind": c.kind, "unit": c.unit}
                        for c in self.schema.columns],
            "outcome_allowlists": self.schema.outcome_allowlists,
            "marginals": {k: marginal_to_dict(m) for k, m in self.marginals.items()},
            "hospitals": self.hospitals,
            "hospital_weights": self.hospital_weights,
            "truth": json.loads(self.truth.to_json()),
            "missing_rates": self.missing_rates,
            "hospital_effects": self.hospital_effects,
            "hospital_profiles": self.hospital_profiles,
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CohortSpec":
        doc = json.loads(text)
        schema = FeatureSchema(
            [ColumnSpec(c["name"], c["kind"], c.get("unit", "")) for c in doc["columns"]],
            {k: list(v) for k, v in doc.get("outcome_allowlists", {}).items()})
        return cls(
            name=doc["name"], schema=schema, outcome=doc["outcome"],
            marginals={k: marginal_from_dict(m) for k, m in doc["marginals"].items()},
            hospitals=list(doc["hospitals"]),
            hospital_weights=[float(w) for w in doc["hospital_weights"]],
            truth=TruthModel.from_json(json.dumps(doc["truth"])),
            missing_rates={k: float(v) for k, v in doc.get("missing_rates", {}).items()},
            hospital_effects={k: float(v) for k, v in doc.get("hospital_effects", {}).items()},
            hospital_profiles={h: {f: float(g) for f, g in prof.items()}
                               for h, prof in doc.get("hospital_profiles", {}).items()})

    @classmethod
    def load(cls, path) -> "CohortSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def solve_intercept_for_prevalence(spec: CohortSpec, target: float,
                                   sample: int = _SOLVER_SAMPLE,
                                   seed: int = _SOLVER_SEED) -> float:
    """Bisection on the intercept until the mean predicted probability over a
    fixed Monte-Carlo covariate sample is within 1e-4 of target."""
    rng = np.random.default_rng(seed)
    cols = spec.draw_covariates(sample, rng)
    return solve_intercept(spec.shifted_shape_logit(cols), target)


def generate_synthetic(spec: CohortSpec, n: int, seed: int) -> Cohort:
    """Draw a cohort of n rows from the spec.

    Labels are Bernoulli(sigmoid(true logit)); missingness is applied after
    label generation, so ``cohort.true_logit`` reflects the full covariates.
    Byte-reproducible for a fixed seed.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    if spec.truth.intercept is None:
        if spec.truth.target_prevalence is None:
            raise ConfigError("truth model needs an intercept or a target prevalence")
        spec.truth.intercept = solve_intercept_for_prevalence(spec, spec.truth.target_prevalence)
    rng = np.random.default_rng(seed)
    cols = spec.draw_covariates(n, rng)
    z = spec.row_logit(cols)
    y = (rng.random(n) < sigmoid(z)).astype(np.int8)
    cols[spec.outcome] = y
    for cspec in spec.schema.columns:
        rate = spec.missing_rates.get(cspec.name, 0.0)
        if rate <= 0.0:
            continue
        mask = rng.random(n) < rate
        if cspec.kind == CONTINUOUS:
            vals = cols[cspec.name].copy()
            vals[mask] = np.nan
            cols[cspec.name] = vals
        elif cspec.kind == CATEGORICAL:
            vals = cols[cspec.name].copy()
            vals[mask] = MISSING_TOKEN
            cols[cspec.name] = vals
    return Cohort(spec.schema, cols, np.arange(n, dtype=np.int64), true_logit=z)


# ---------------------------------------------------------------------------
# presets

_FEATURES = [
    ColumnSpec("mother_bmi", CONTINUOUS, "kg/m2"),
    ColumnSpec("mother_age", CONTINUOUS, "years"),
    ColumnSpec("mother_height", CONTINUOUS, "cm"),
    ColumnSpec("baby_weight", CONTINUOUS, "g"),
    ColumnSpec("labor_hours", CONTINUOUS, "hours"),
    ColumnSpec("race_ethnicity", CATEGORICAL),
    ColumnSpec("prior_hypertension", CATEGORICAL),
]

_MARGINALS: dict[str, Marginal] = {
    "mother_bmi": LogNormalMarginal(mu=3.2771, sigma=0.18, lo=15.0, hi=62.0, decimals=1),
    "mother_age": NormalMarginal(mean=29.0, sd=5.8, lo=14.0, hi=52.0, step=1.0),
    "mother_height": NormalMarginal(mean=164.0, sd=7.0, lo=141.0, hi=193.0, step=1.0),
    "baby_weight": NormalMarginal(mean=3350.0, sd=520.0, lo=600.0, hi=6200.0, step=10.0),
    "labor_hours": GammaMarginal(shape=3.0, scale=2.7, lo=0.0, hi=48.0, decimals=1),
    # "Missing" is drawn as a real token so the ground truth and the model
    # see the same information (an after-the-fact mask would hand the Bayes
    # oracle knowledge no model could use)
    "race_ethnicity": CategoricalMarginal(
        ["White", "Hispanic", "Black", "Asian", "Other", MISSING_TOKEN],
        [0.52, 0.16, 0.12, 0.085, 0.065, 0.05]),
    "prior_hypertension": CategoricalMarginal(["No", "Yes", MISSING_TOKEN],
                                              [0.89, 0.08, 0.03]),
}

# marginal medians, used as interaction thresholds so surfaces stay centered
_MEDIANS = {"mother_bmi": 26.5, "mother_age": 29.0, "mother_height": 164.0,
            "baby_weight": 3350.0, "labor_hours": 7.2}

_MISSING_RATES = {"mother_bmi": 0.02, "mother_height": 0.02, "labor_hours": 0.01}

_N_HOSPITALS = 12


def _hospital_layout(n_hospitals: int):
    names = [f"H{i + 1:02d}" for i in range(n_hospitals)]
    raw = np.array([(i + 2.0) ** -0.8 for i in range(n_hospitals)])
    weights = raw / raw.sum()
    return names, [float(w) for w in weights]


def _hospital_shift(names: list[str], features: list[str], scale: float):
    """Per-hospital intercept offsets plus feature-effect multipliers.

    Fixed internal seed: the shift is part of the ground truth, not of the
    cohort draw. Each hospital keeps a feature's effect (gamma 1) or scales
    it toward a flip (gamma 1 - 2*scale; a full flip at scale 1), so at full
    scale every hospital is equally hard within itself while hospitals
    genuinely disagree about how features drive risk. A pure intercept
    offset alone is a within-hospital monotone transform and cannot move
    AUROC, so the offsets are injected alongside, not instead.
    """
    if scale == 0.0:
        return {}, {}
    rng = np.random.default_rng(911)
    eff = rng.normal(0.0, 1.0, size=len(names))
    eff -= eff.mean()
    offsets = {name: float(scale * e) for name, e in zip(names, eff)}
    profiles = {}
    for name in names:
        signs = rng.integers(0, 2, size=len(features))
        profiles[name] = {f: 1.0 if s else float(1.0 - 2.0 * scale)
                          for f, s in zip(features, signs)}
    return offsets, profiles


def _schema(outcome: str, allowlist: list[str]) -> FeatureSchema:
    cols = list(_FEATURES) + [ColumnSpec(outcome, LABEL), ColumnSpec("hospital", GROUP_ID)]
    return FeatureSchema(cols, {outcome: allowlist})


def _spec(name, outcome, allowlist, truth, n_hospitals, hospital_effect_scale):
    hospitals, weights = _hospital_layout(n_hospitals)
    effects, profiles = _hospital_shift(hospitals, list(truth.shapes), hospital_effect_scale)
    return CohortSpec(
        name=name,
        schema=_schema(outcome, allowlist),
        outcome=outcome,
        marginals=dict(_MARGINALS),
        hospitals=hospitals,
        hospital_weights=weights,
        truth=truth,
        missing_rates=dict(_MISSING_RATES),
        hospital_effects=effects,
        hospital_profiles=profiles,
    )


def make_smm_spec(n_hospitals: int = _N_HOSPITALS, hospital_effect_scale: float = 0.0) -> CohortSpec:
    """Severe-maternal-morbidity-like outcome, target prevalence 1.40%."""
    truth = TruthModel(
        shapes={
            "mother_bmi": CompositeShape([
                PiecewiseLinear([15, 21, 27, 34, 45, 62], [-0.80, -0.50, 0.0, 0.60, 1.10, 1.40]),
                StepFunction([40.0], [0.0, 0.40]),
            ]),
            "mother_age": PiecewiseLinear([14, 20, 28, 36, 45, 52],
                                          [0.80, 0.20, -0.20, 0.30, 0.90, 1.20]),
            "mother_height": PiecewiseLinear([141, 156, 172, 193], [0.30, 0.10, -0.15, -0.35]),
            "baby_weight": PiecewiseLinear([600, 2500, 3350, 4500, 6200],
                                           [0.50, -0.15, -0.05, 0.50, 0.80]),
            "labor_hours": PiecewiseLinear([0, 1.5, 5, 9, 14, 30, 48],
                                           [-0.70, -0.45, 0.0, 0.45, 0.80, 1.20, 1.35]),
            "race_ethnicity": CategoryEffects({"White": -0.12, "Hispanic": 0.20, "Black": 0.40,
                                               "Asian": -0.08, "Other": 0.10, MISSING_TOKEN: 0.05}),
            "prior_hypertension": CategoryEffects({"No": -0.10, "Yes": 0.90, MISSING_TOKEN: 0.20}),
        },
        interaction=QuadrantInteraction("mother_bmi", "mother_age",
                                        _MEDIANS["mother_bmi"], _MEDIANS["mother_age"], 0.55),
        target_prevalence=0.0140,
    )
    allow = [c.name for c in _FEATURES]
    return _spec("smm", "smm", allow, truth, n_hospitals, hospital_effect_scale)


def make_shoulder_dystocia_spec(n_hospitals: int = _N_HOSPITALS,
                                hospital_effect_scale: float = 0.0) -> CohortSpec:
    """Shoulder-dystocia-like outcome, target prevalence 2.21%.

    Baby weight dominates with a near-linear mid-range rise and a jump at
    the 4000 g macrosomia cutoff; maternal height protects.
    """
    truth = TruthModel(
        shapes={
            "baby_weight": CompositeShape([
                PiecewiseLinear([600, 2500, 2870, 3830, 4250, 6200],
                                [-1.60, -1.30, -0.80, 0.80, 1.20, 1.50]),
                StepFunction([4000.0], [0.0, 0.50]),
            ]),
            "mother_height": PiecewiseLinear([141, 147, 156, 172, 181, 193],
                                             [1.20, 0.95, 0.45, -0.45, -0.85, -1.05]),
            "mother_bmi": CompositeShape([
                PiecewiseLinear([15, 21, 27, 34, 45, 62], [-0.90, -0.60, 0.0, 0.70, 1.10, 1.30]),
                StepFunction([30.0], [0.0, 0.45]),
            ]),
            "mother_age": PiecewiseLinear([14, 20, 29, 38, 47, 52],
                                          [1.10, 0.55, -0.45, 0.50, 1.10, 1.30]),
            "labor_hours": PiecewiseLinear([0, 1.5, 5, 9, 14, 30, 48],
                                           [-0.80, -0.55, 0.0, 0.50, 0.85, 1.20, 1.30]),
            "race_ethnicity": CategoryEffects({"White": -0.25, "Hispanic": 0.45, "Black": 0.70,
                                               "Asian": -0.55, "Other": 0.20, MISSING_TOKEN: 0.0}),
            "prior_hypertension": CategoryEffects({"No": -0.10, "Yes": 0.90, MISSING_TOKEN: 0.25}),
        },
        interaction=QuadrantInteraction("baby_weight", "mother_height",
                                        _MEDIANS["baby_weight"], _MEDIANS["mother_height"], -0.75),
        target_prevalence=0.0221,
    )
    allow = [c.name for c in _FEATURES]
    return _spec("shoulder_dystocia", "shoulder_dystocia", allow, truth,
                 n_hospitals, hospital_effect_scale)


def make_preterm_preeclampsia_spec(n_hospitals: int = _N_HOSPITALS,
                                   hospital_effect_scale: float = 0.0) -> CohortSpec:
    """Preterm-preeclampsia-like outcome, target prevalence 2.05%.

    Only features knowable before 37 weeks are allowlisted; delivery-time
    features exist in the cohort but carry zero true effect. Maternal BMI
    dominates the truth by design.
    """
    truth = TruthModel(
        shapes={
            "mother_bmi": CompositeShape([
                PiecewiseLinear([15, 21, 27, 34, 45, 62], [-1.30, -0.85, 0.10, 1.15, 1.90, 2.40]),
                StepFunction([35.0], [0.0, 0.60]),
            ]),
            "mother_age": PiecewiseLinear([14, 24, 32, 40, 44, 52],
                                          [0.15, -0.20, 0.0, 0.55, 0.90, 1.30]),
            "mother_height": PiecewiseLinear([141, 164, 193], [0.20, 0.0, -0.20]),
            "race_ethnicity": CategoryEffects({"White": -0.10, "Hispanic": 0.12, "Black": 0.35,
                                               "Asian": 0.06, "Other": 0.06, MISSING_TOKEN: 0.0}),
            "prior_hypertension": CategoryEffects({"No": -0.08, "Yes": 1.00, MISSING_TOKEN: 0.20}),
        },
        interaction=QuadrantInteraction("mother_bmi", "mother_age",
                                        _MEDIANS["mother_bmi"], _MEDIANS["mother_age"], 0.50),
        target_prevalence=0.0205,
    )
    allow = ["mother_bmi", "mother_age", "mother_height", "race_ethnicity", "prior_hypertension"]
    return _spec("preterm_preeclampsia", "preterm_preeclampsia", allow, truth,
                 n_hospitals, hospital_effect_scale)


PRESETS = {
    "smm": make_smm_spec,
    "shoulder_dystocia": make_shoulder_dystocia_spec,
    "preterm_preeclampsia": make_preterm_preeclampsia_spec,
}


def preset(name: str, **kwargs) -> CohortSpec:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r} (choose from {sorted(PRESETS)})")
    return PRESETS[name](**kwargs)

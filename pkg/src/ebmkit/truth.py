"""Ground-truth risk models for synthetic cohorts.

A truth model is an additive log-odds function: intercept + one shape per
feature + one quadrant interaction surface. It doubles as the oracle in
tests: learned shapes, detected pairs, Bayes-optimal discrimination and
calibration are all checked against it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError


def sigmoid(z):
    z = np.clip(z, -30.0, 30.0)
    return 1.0 / (1.0 + np.exp(-z))


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


@dataclass
class PiecewiseLinear:
    """Linear interpolation between knots, flat outside the knot range."""

    knots: list[float]
    values: list[float]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=np.float64), self.knots, self.values)

    def to_dict(self):
        return {"type": "pwlinear", "knots": list(self.knots), "values": list(self.values)}


@dataclass
class StepFunction:
    """Right-open step function: level j applies on [threshold_{j-1}, threshold_j).

    A value equal to a threshold takes the upper level, matching the
    binning boundary convention.
    """

    thresholds: list[float]
    levels: list[float]  # len(thresholds) + 1

    def __post_init__(self):
        if len(self.levels) != len(self.thresholds) + 1:
            raise ConfigError("StepFunction needs len(levels) == len(thresholds) + 1")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.thresholds, np.asarray(x, dtype=np.float64), side="right")
        return np.asarray(self.levels, dtype=np.float64)[idx]

    def to_dict(self):
        return {"type": "step", "thresholds": list(self.thresholds), "levels": list(self.levels)}


@dataclass
class CompositeShape:
    """Sum of shape primitives (e.g. a trend plus a clinical-cutoff jump)."""

    parts: list

    def __call__(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(len(x), dtype=np.float64)
        for part in self.parts:
            out += part(x)
        return out

    def to_dict(self):
        return {"type": "sum", "parts": [p.to_dict() for p in self.parts]}


@dataclass
class CategoryEffects:
    """Per-token log-odds offsets; unknown tokens contribute the default."""

    effects: dict[str, float]
    default: float = 0.0

    def __call__(self, tokens: np.ndarray) -> np.ndarray:
        return np.array([self.effects.get(str(t), self.default) for t in tokens], dtype=np.float64)

    def to_dict(self):
        return {"type": "categories", "effects": dict(self.effects), "default": self.default}


def shape_from_dict(doc: dict):
    kind = doc["type"]
    if kind == "pwlinear":
        return PiecewiseLinear(doc["knots"], doc["values"])
    if kind == "step":
        return StepFunction(doc["thresholds"], doc["levels"])
    if kind == "sum":
        return CompositeShape([shape_from_dict(p) for p in doc["parts"]])
    if kind == "categories":
        return CategoryEffects(doc["effects"], doc.get("default", 0.0))
    raise ConfigError(f"unknown shape type {kind!r}")


@dataclass
class QuadrantInteraction:
    """amplitude * sign(x - x_threshold) * sign(y - y_threshold).

    With thresholds at the feature medians the surface is (approximately)
    doubly centered, so it leaves univariate truth shapes untouched.
    Values equal to a threshold count as the upper side.
    """

    x_feature: str
    y_feature: str
    x_threshold: float
    y_threshold: float
    amplitude: float

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        sx = np.where(np.asarray(x, dtype=np.float64) >= self.x_threshold, 1.0, -1.0)
        sy = np.where(np.asarray(y, dtype=np.float64) >= self.y_threshold, 1.0, -1.0)
        return self.amplitude * sx * sy

    def to_dict(self):
        return {"x_feature": self.x_feature, "y_feature": self.y_feature,
                "x_threshold": self.x_threshold, "y_threshold": self.y_threshold,
                "amplitude": self.amplitude}


@dataclass
class TruthModel:
    """Additive ground-truth log-odds: intercept + shapes (+ one pair surface)."""

    shapes: dict[str, object]
    interaction: QuadrantInteraction | None = None
    intercept: float | None = None
    target_prevalence: float | None = None

    def shape_values(self, columns: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Each feature's shape term evaluated row-wise (no interaction)."""
        return {name: shape(columns[name]) for name, shape in self.shapes.items()}

    def interaction_values(self, columns: dict[str, np.ndarray]) -> np.ndarray:
        n = len(next(iter(columns.values())))
        if self.interaction is None:
            return np.zeros(n, dtype=np.float64)
        return self.interaction(columns[self.interaction.x_feature],
                                columns[self.interaction.y_feature])

    def shape_logit(self, columns: dict[str, np.ndarray]) -> np.ndarray:
        """Sum of shape and interaction terms, without the intercept."""
        n = len(next(iter(columns.values())))
        total = np.zeros(n, dtype=np.float64)
        for values in self.shape_values(columns).values():
            total += values
        return total + self.interaction_values(columns)

    def logit(self, columns: dict[str, np.ndarray]) -> np.ndarray:
        if self.intercept is None:
            raise ConfigError("truth model intercept not solved yet")
        out = self.intercept + self.shape_logit(columns)
        if not np.all(np.isfinite(out)):
            raise DataError("truth model produced non-finite logits")
        return out

    def to_json(self) -> str:
        doc = {
            "intercept": self.intercept,
            "target_prevalence": self.target_prevalence,
            "shapes": {k: v.to_dict() for k, v in self.shapes.items()},
            "interaction": None if self.interaction is None else self.interaction.to_dict(),
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TruthModel":
        doc = json.loads(text)
        inter = doc.get("interaction")
        return cls(
            shapes={k: shape_from_dict(v) for k, v in doc["shapes"].items()},
            interaction=None if inter is None else QuadrantInteraction(**inter),
            intercept=doc.get("intercept"),
            target_prevalence=doc.get("target_prevalence"),
        )


def solve_intercept(shape_logits: np.ndarray, target: float, tol: float = 1e-4,
                    max_widen: float = 30.0) -> float:
    """Bisect the intercept c until mean(sigmoid(shape_logits + c)) is within
    tol of target.

    ``shape_logits`` is a fixed Monte-Carlo sample of intercept-free truth
    logits, so the result is deterministic given the sample. The bracket
    starts at logit(target) +- 4 and widens up to +-max_widen before failing.
    """
    if not 0.0 < target < 1.0:
        raise ConfigError(f"target prevalence must be in (0,1), got {target}")

    def mean_p(c):
        return float(np.mean(sigmoid(shape_logits + c)))

    center = logit(target)
    # closed-form shortcut covers constant-shape truths exactly
    if abs(mean_p(center) - target) <= tol:
        return center
    lo, hi = center - 4.0, center + 4.0
    while mean_p(lo) > target:
        lo -= 4.0
        if lo < -max_widen:
            raise DataError(f"could not bracket intercept below {-max_widen}")
    while mean_p(hi) < target:
        hi += 4.0
        if hi > max_widen:
            raise DataError(f"could not bracket intercept above {max_widen}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        p = mean_p(mid)
        if abs(p - target) <= tol:
            return mid
        if p < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)

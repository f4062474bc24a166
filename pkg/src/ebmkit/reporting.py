"""Figure and table emitters: shape-function plots with error bands,
categorical risk bars with frequencies, calibration plots, importance
rankings, and AUROC comparison tables.

SVG output is hand-built and byte-deterministic (fixed coordinate
formatting, no timestamps), so golden-file tests can diff rendered bytes.
Every number rendered is recomputable from the model file and cohort.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, MetricError
from .metrics import CalibrationPoint, EvalReport
from .model import EbmModel, feature_importance
from .schema import CONTINUOUS


@dataclass(frozen=True)
class LinearScale:
    """Affine data-to-pixel map; shared by renderers and coordinate tests."""

    d0: float
    d1: float
    r0: float
    r1: float

    def __call__(self, v: float) -> float:
        span = self.d1 - self.d0
        t = 0.0 if span == 0 else (v - self.d0) / span
        return self.r0 + t * (self.r1 - self.r0)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:.4g}"


@dataclass
class ShapeExport:
    """Plot-ready view of one shape function.

    Continuous: rows of (left edge, right edge, contribution, std) covering
    [vmin, vmax] contiguously. Categorical: rows of (category,
    contribution, std, train frequency); frequencies sum to 1. The reserved
    continuous missing bin is not exported (the shipped pipeline imputes
    first, leaving it empty).
    """

    feature: str
    kind: str
    unit: str = ""
    continuous_rows: list[tuple[float, float, float, float]] = field(default_factory=list)
    categorical_rows: list[tuple[str, float, float, float]] = field(default_factory=list)

    def to_json(self) -> str:
        if self.kind == CONTINUOUS:
            rows = [{"left": l, "right": r, "contribution": c, "std": s}
                    for l, r, c, s in self.continuous_rows]
        else:
            rows = [{"category": t, "contribution": c, "std": s, "frequency": f}
                    for t, c, s, f in self.categorical_rows]
        return json.dumps({"feature": self.feature, "kind": self.kind,
                           "unit": self.unit, "rows": rows}, indent=2) + "\n"

    def to_csv(self) -> str:
        lines = []
        if self.kind == CONTINUOUS:
            lines.append("left,right,contribution,std")
            for l, r, c, s in self.continuous_rows:
                lines.append(f"{l!r},{r!r},{c!r},{s!r}")
        else:
            lines.append("category,contribution,std,frequency")
            for t, c, s, f in self.categorical_rows:
                lines.append(f"{t},{c!r},{s!r},{f!r}")
        return "\n".join(lines) + "\n"


def export_shape(model: EbmModel, feature: str) -> ShapeExport:
    """Tabulate one feature's shape directly from the model tables; error
    bars come from the outer-bag std table."""
    shape = model.shape(feature)  # raises with available names
    unit = model.units.get(feature, "")
    if shape.bins.kind == CONTINUOUS:
        edges = shape.bins.edges()
        rows = []
        for b in range(shape.bins.n_ordered):
            rows.append((float(edges[b]), float(edges[b + 1]),
                         float(shape.table[b]), float(shape.stds[b])))
        return ShapeExport(feature, CONTINUOUS, unit, continuous_rows=rows)
    total = shape.counts.sum()
    rows = []
    for b, cat in enumerate(shape.bins.categories):
        freq = float(shape.counts[b] / total) if total else 0.0
        rows.append((cat, float(shape.table[b]), float(shape.stds[b]), freq))
    return ShapeExport(feature, "categorical", unit, categorical_rows=rows)


@dataclass(frozen=True)
class SvgOptions:
    width: int = 640
    height: int = 420
    margin_left: int = 70
    margin_right: int = 20
    margin_top: int = 30
    margin_bottom: int = 50


def _svg_header(opt: SvgOptions, title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{opt.width}" height="{opt.height}" '
        f'viewBox="0 0 {opt.width} {opt.height}">',
        f'<rect x="0" y="0" width="{opt.width}" height="{opt.height}" fill="white"/>',
        f'<text x="{opt.width / 2:.0f}" y="18" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{title}</text>',
    ]


def _axes(opt: SvgOptions, xs: LinearScale, ys: LinearScale, x_label: str,
          y_label: str, x_ticks, y_ticks) -> list[str]:
    x0, x1 = opt.margin_left, opt.width - opt.margin_right
    y0, y1 = opt.height - opt.margin_bottom, opt.margin_top
    parts = [
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black" stroke-width="1"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black" stroke-width="1"/>',
    ]
    for t in x_ticks:
        px = xs(t)
        parts.append(f'<line x1="{_fmt(px)}" y1="{y0}" x2="{_fmt(px)}" y2="{y0 + 4}" stroke="black"/>')
        parts.append(f'<text x="{_fmt(px)}" y="{y0 + 16}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="10">{_tick_label(t)}</text>')
    for t in y_ticks:
        py = ys(t)
        parts.append(f'<line x1="{x0 - 4}" y1="{_fmt(py)}" x2="{x0}" y2="{_fmt(py)}" stroke="black"/>')
        parts.append(f'<text x="{x0 - 6}" y="{_fmt(py + 3)}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="10">{_tick_label(t)}</text>')
    parts.append(f'<text x="{(x0 + x1) / 2:.0f}" y="{opt.height - 12}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="11">{x_label}</text>')
    parts.append(f'<text x="16" y="{(y0 + y1) / 2:.0f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="11" '
                 f'transform="rotate(-90 16 {(y0 + y1) / 2:.0f})">{y_label}</text>')
    return parts


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def shape_y_range(export: ShapeExport) -> tuple[float, float]:
    """Plot y-range rule: covers min(contribution - std) to
    max(contribution + std), zero included for categorical bars."""
    if export.kind == CONTINUOUS:
        los = [c - s for _, _, c, s in export.continuous_rows]
        his = [c + s for _, _, c, s in export.continuous_rows]
    else:
        los = [c - s for _, c, s, _ in export.categorical_rows] + [0.0]
        his = [c + s for _, c, s, _ in export.categorical_rows] + [0.0]
    lo, hi = min(los), max(his)
    if lo == hi:
        lo, hi = lo - 1.0, hi + 1.0
    return lo, hi


def render_shape_svg(export: ShapeExport, options: SvgOptions | None = None) -> str:
    """Deterministic SVG: step plot with a +-1 std band for continuous
    shapes, bars with error whiskers and train frequencies for categorical."""
    opt = options or SvgOptions()
    if not export.continuous_rows and not export.categorical_rows:
        raise DataError(f"nothing to render for {export.feature!r}")
    x_label = f"{export.feature} ({export.unit})" if export.unit else export.feature
    y_lo, y_hi = shape_y_range(export)
    ys = LinearScale(y_lo, y_hi, opt.height - opt.margin_bottom, opt.margin_top)
    parts = _svg_header(opt, f"risk contribution: {export.feature}")

    if export.kind == CONTINUOUS:
        rows = export.continuous_rows
        xs = LinearScale(rows[0][0], rows[-1][1], opt.margin_left, opt.width - opt.margin_right)
        band = []
        for l, r, c, s in rows:
            band.append((xs(l), ys(c + s)))
            band.append((xs(r), ys(c + s)))
        for l, r, c, s in reversed(rows):
            band.append((xs(r), ys(c - s)))
            band.append((xs(l), ys(c - s)))
        pts = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in band)
        parts.append(f'<polygon points="{pts}" fill="#9ecae1" fill-opacity="0.6" stroke="none"/>')
        step = []
        for l, r, c, _ in rows:
            step.append((xs(l), ys(c)))
            step.append((xs(r), ys(c)))
        pts = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in step)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#08519c" stroke-width="1.5"/>')
        if y_lo < 0.0 < y_hi:
            zy = ys(0.0)
            parts.append(f'<line x1="{opt.margin_left}" y1="{_fmt(zy)}" '
                         f'x2="{opt.width - opt.margin_right}" y2="{_fmt(zy)}" '
                         f'stroke="#888888" stroke-dasharray="4 3" stroke-width="0.8"/>')
        parts.extend(_axes(opt, xs, ys, x_label, "log-odds contribution",
                           _ticks(rows[0][0], rows[-1][1]), _ticks(y_lo, y_hi)))
    else:
        rows = export.categorical_rows
        nb = len(rows)
        xs = LinearScale(0, nb, opt.margin_left, opt.width - opt.margin_right)
        zero_y = ys(0.0)
        for b, (cat, c, s, freq) in enumerate(rows):
            bx0 = xs(b + 0.15)
            bx1 = xs(b + 0.85)
            cy = ys(c)
            top, bot = min(cy, zero_y), max(cy, zero_y)
            parts.append(f'<rect x="{_fmt(bx0)}" y="{_fmt(top)}" width="{_fmt(bx1 - bx0)}" '
                         f'height="{_fmt(bot - top)}" fill="#9ecae1" stroke="#08519c"/>')
            cx = xs(b + 0.5)
            parts.append(f'<line x1="{_fmt(cx)}" y1="{_fmt(ys(c - s))}" x2="{_fmt(cx)}" '
                         f'y2="{_fmt(ys(c + s))}" stroke="#08519c" stroke-width="1.5"/>')
            base_y = opt.height - opt.margin_bottom
            parts.append(f'<text x="{_fmt(cx)}" y="{base_y + 16}" text-anchor="middle" '
                         f'font-family="sans-serif" font-size="10">{cat}</text>')
            parts.append(f'<text x="{_fmt(cx)}" y="{base_y + 28}" text-anchor="middle" '
                         f'font-family="sans-serif" font-size="9">{freq * 100:.1f}% of rows</text>')
        parts.append(f'<line x1="{opt.margin_left}" y1="{_fmt(zero_y)}" '
                     f'x2="{opt.width - opt.margin_right}" y2="{_fmt(zero_y)}" '
                     f'stroke="#888888" stroke-dasharray="4 3" stroke-width="0.8"/>')
        parts.extend(_axes(opt, xs, ys, x_label, "log-odds contribution",
                           [], _ticks(y_lo, y_hi)))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def calibration_limits(points: list[CalibrationPoint]) -> float:
    """Axes clamp rule: [0, max(predicted, observed) * 1.1]."""
    top = max([p.mean_predicted for p in points] + [p.observed_rate for p in points])
    return top * 1.1 if top > 0 else 0.01


def calibration_svg(points: list[CalibrationPoint],
                    options: SvgOptions | None = None) -> str:
    """Observed vs predicted scatter with the y=x diagonal; both axes share
    the clamp rule from calibration_limits."""
    if not points:
        raise MetricError("no calibration points to render")
    opt = options or SvgOptions(width=460, height=460)
    lim = calibration_limits(points)
    xs = LinearScale(0.0, lim, opt.margin_left, opt.width - opt.margin_right)
    ys = LinearScale(0.0, lim, opt.height - opt.margin_bottom, opt.margin_top)
    parts = _svg_header(opt, "calibration")
    parts.append(f'<line x1="{_fmt(xs(0.0))}" y1="{_fmt(ys(0.0))}" '
                 f'x2="{_fmt(xs(lim))}" y2="{_fmt(ys(lim))}" '
                 f'stroke="#888888" stroke-dasharray="4 3" stroke-width="1"/>')
    for p in points:
        parts.append(f'<circle cx="{_fmt(xs(p.mean_predicted))}" cy="{_fmt(ys(p.observed_rate))}" '
                     f'r="3.5" fill="#de2d26" fill-opacity="0.85"/>')
    parts.extend(_axes(opt, xs, ys, "mean predicted probability", "observed rate",
                       _ticks(0.0, lim), _ticks(0.0, lim)))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# tables

@dataclass
class ImportanceTable:
    rows: list[tuple[int, str, float, str]]  # (rank, term, mean |log-odds|, kind)

    def render_text(self) -> str:
        width = max([len("term")] + [len(r[1]) for r in self.rows])
        lines = [f"rank  {'term'.ljust(width)}  mean |log-odds|  kind"]
        for rank, name, value, kind in self.rows:
            lines.append(f"{rank:>4}  {name.ljust(width)}  {value:>15.4f}  {kind}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps([{"rank": r, "term": t, "mean_abs_logodds": v, "kind": k}
                           for r, t, v, k in self.rows], indent=2) + "\n"


def importance_table(model: EbmModel, reference, top_k: int | None = None) -> ImportanceTable:
    """Ranked mean-absolute-contribution table over a reference population;
    pairs compete with single features and are flagged."""
    ranked = feature_importance(model, reference)
    if top_k is not None:
        ranked = ranked[:top_k]
    return ImportanceTable([(i + 1, name, value, kind)
                            for i, (name, value, kind) in enumerate(ranked)])


@dataclass
class AurocTable:
    outcomes: list[str]
    models: list[str]
    cells: dict[tuple[str, str], str]     # (outcome, model) -> "m ± s"
    mean_row: dict[str, str]              # model -> "m ± s"

    def render_text(self) -> str:
        label_w = max(len("Outcome"), max(len(o) for o in self.outcomes + ["Mean AUROC"]))
        col_w = {m: max(len(m), *(len(self.cells[(o, m)]) for o in self.outcomes),
                        len(self.mean_row[m])) for m in self.models}
        header = "Outcome".ljust(label_w) + "  " + "  ".join(m.ljust(col_w[m]) for m in self.models)
        lines = [header, "-" * len(header)]
        for o in self.outcomes:
            lines.append(o.ljust(label_w) + "  " +
                         "  ".join(self.cells[(o, m)].ljust(col_w[m]) for m in self.models))
        lines.append("Mean AUROC".ljust(label_w) + "  " +
                     "  ".join(self.mean_row[m].ljust(col_w[m]) for m in self.models))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {"outcomes": self.outcomes, "models": self.models,
               "cells": {f"{o}|{m}": self.cells[(o, m)] for o in self.outcomes for m in self.models},
               "mean_row": self.mean_row}
        return json.dumps(doc, indent=2) + "\n"


def auroc_table(reports: list[EvalReport]) -> AurocTable:
    """Outcome x model grid of 'mean ± std' AUROC cells plus a Mean-AUROC
    row (mean of the per-outcome means; std across those means)."""
    if not reports:
        raise MetricError("no reports to tabulate")
    outcomes = list(dict.fromkeys(r.outcome for r in reports))
    models = list(dict.fromkeys(r.model for r in reports))
    by_key = {}
    for r in reports:
        by_key[(r.outcome, r.model)] = r
    cells = {}
    for m in models:
        for o in outcomes:
            if (o, m) not in by_key:
                raise MetricError(f"reports do not share an outcome set: missing ({o}, {m})")
            cells[(o, m)] = by_key[(o, m)].cell()
    mean_row = {}
    for m in models:
        vals = np.array([by_key[(o, m)].auroc for o in outcomes])
        if len(vals) >= 2:
            mean_row[m] = f"{vals.mean():.3f} ± {vals.std(ddof=1):.3f}"
        else:
            mean_row[m] = by_key[(outcomes[0], m)].cell()
    return AurocTable(outcomes, models, cells, mean_row)

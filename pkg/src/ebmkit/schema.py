"""Tabular cohort container: column schema, CSV I/O, row subsetting.

A cohort is an immutable-by-convention bundle of columns. Continuous
columns are float64 with NaN marking missing cells; categorical, label
and group columns are string/int arrays. The reserved categorical token
for an absent value is ``"Missing"``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError, SchemaError

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
LABEL = "label"
GROUP_ID = "group_id"

KINDS = (CONTINUOUS, CATEGORICAL, LABEL, GROUP_ID)

#: Reserved categorical token for an absent value.
MISSING_TOKEN = "Missing"


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    unit: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")


@dataclass
class FeatureSchema:
    """Declares column roles and per-outcome feature allowlists.

    ``outcome_allowlists`` maps a label column name to the feature names a
    model for that outcome may use. A label column without an explicit
    allowlist gets every feature column.
    """

    columns: list[ColumnSpec]
    outcome_allowlists: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate column names: {dupes}")
        groups = [c.name for c in self.columns if c.kind == GROUP_ID]
        if len(groups) != 1:
            raise SchemaError(f"expected exactly one group_id column, got {groups}")
        labels = self.label_names
        if not labels:
            raise SchemaError("schema declares no label column")
        for outcome, allowed in self.outcome_allowlists.items():
            if outcome not in labels:
                raise SchemaError(f"allowlist outcome {outcome!r} is not a label column")
            unknown = [f for f in allowed if f not in names]
            if unknown:
                raise SchemaError(f"allowlist for {outcome!r} names undeclared columns: {unknown}")
            not_features = [f for f in allowed if self.kind_of(f) not in (CONTINUOUS, CATEGORICAL)]
            if not_features:
                raise SchemaError(f"allowlist for {outcome!r} includes non-feature columns: {not_features}")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.columns if c.kind in (CONTINUOUS, CATEGORICAL)]

    @property
    def label_names(self) -> list[str]:
        return [c.name for c in self.columns if c.kind == LABEL]

    @property
    def group_name(self) -> str:
        return next(c.name for c in self.columns if c.kind == GROUP_ID)

    def kind_of(self, name: str) -> str:
        for c in self.columns:
            if c.name == name:
                return c.kind
        raise SchemaError(f"unknown column {name!r}")

    def unit_of(self, name: str) -> str:
        for c in self.columns:
            if c.name == name:
                return c.unit
        return ""

    def allowlist(self, outcome: str) -> list[str]:
        if outcome not in self.label_names:
            raise SchemaError(f"{outcome!r} is not a label column (labels: {self.label_names})")
        return list(self.outcome_allowlists.get(outcome, self.feature_names))

    def to_json(self) -> str:
        doc = {
            "columns": [{"name": c.name, "kind": c.kind, "unit": c.unit} for c in self.columns],
            "outcome_allowlists": self.outcome_allowlists,
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FeatureSchema":
        doc = json.loads(text)
        cols = [ColumnSpec(c["name"], c["kind"], c.get("unit", "")) for c in doc["columns"]]
        return cls(cols, {k: list(v) for k, v in doc.get("outcome_allowlists", {}).items()})

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "FeatureSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


@dataclass
class Cohort:
    """Rows of raw feature values plus labels and hospital group ids.

    Treat instances as immutable: every operation returns a new cohort.
    ``true_logit`` carries the generator's ground-truth log-odds for
    synthetic cohorts (None for data loaded from disk).
    """

    schema: FeatureSchema
    columns: dict[str, np.ndarray]
    row_ids: np.ndarray
    true_logit: np.ndarray | None = None

    def __post_init__(self):
        n = self.n_rows
        for name in self.schema.names:
            if name not in self.columns:
                raise SchemaError(f"cohort is missing column {name!r}")
            if len(self.columns[name]) != n:
                raise SchemaError(f"column {name!r} length differs from row count")
        if len(self.row_ids) != n:
            raise SchemaError("row_ids length differs from row count")
        for name in self.schema.label_names:
            vals = np.unique(self.columns[name])
            bad = [v for v in vals if v not in (0, 1)]
            if bad:
                raise DataError(f"label column {name!r} has non-binary values: {bad}")
        grp = self.columns[self.schema.group_name]
        if n and any(g == "" for g in grp):
            raise DataError("empty hospital/group id")

    @property
    def n_rows(self) -> int:
        first = self.schema.names[0]
        return len(self.columns[first])

    def labels(self, outcome: str) -> np.ndarray:
        if outcome not in self.schema.label_names:
            raise SchemaError(f"{outcome!r} is not a label column")
        return self.columns[outcome].astype(np.int8)

    def groups(self) -> np.ndarray:
        return self.columns[self.schema.group_name]

    def take(self, indices) -> "Cohort":
        idx = np.asarray(indices)
        cols = {k: v[idx] for k, v in self.columns.items()}
        logit = None if self.true_logit is None else self.true_logit[idx]
        return Cohort(self.schema, cols, self.row_ids[idx], logit)

    def feature_frame(self, outcome: str | None = None) -> pd.DataFrame:
        """Feature columns as a DataFrame, allowlist-filtered when an outcome is given."""
        names = self.schema.allowlist(outcome) if outcome else self.schema.feature_names
        return pd.DataFrame({n: self.columns[n] for n in names})

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({n: self.columns[n] for n in self.schema.names})

    def prevalence(self, outcome: str) -> float:
        y = self.labels(outcome)
        return float(np.mean(y)) if len(y) else 0.0


def _parse_continuous(raw: pd.Series, name: str) -> np.ndarray:
    out = np.full(len(raw), np.nan)
    for i, cell in enumerate(raw):
        text = "" if cell is None else str(cell).strip()
        if text == "" or text.lower() == "nan":
            continue
        try:
            out[i] = float(text)
        except ValueError:
            # +2 for the header line and 1-based numbering
            raise DataError(f"line {i + 2}: cannot parse {text!r} as a number for column {name!r}") from None
    return out


def cohort_from_frame(schema: FeatureSchema, df: pd.DataFrame, row_ids=None) -> Cohort:
    """Build a Cohort from a raw string/mixed DataFrame following the schema."""
    missing = [n for n in schema.names if n not in df.columns]
    if missing:
        raise SchemaError(f"data is missing schema columns: {missing}")
    cols: dict[str, np.ndarray] = {}
    for spec in schema.columns:
        raw = df[spec.name]
        if spec.kind == CONTINUOUS:
            if raw.dtype.kind in "fiu":
                cols[spec.name] = raw.to_numpy(dtype=np.float64)
            else:
                cols[spec.name] = _parse_continuous(raw, spec.name)
        elif spec.kind == LABEL:
            vals = _parse_continuous(raw, spec.name) if raw.dtype.kind not in "fiu" else raw.to_numpy(np.float64)
            if np.isnan(vals).any():
                bad = int(np.flatnonzero(np.isnan(vals))[0]) + 2
                raise DataError(f"line {bad}: missing label value in column {spec.name!r}")
            cols[spec.name] = vals.astype(np.int8)
        elif spec.kind == CATEGORICAL:
            tokens = np.array(
                [MISSING_TOKEN if (c is None or str(c).strip() == "" or str(c).lower() == "nan") else str(c).strip()
                 for c in raw],
                dtype=object,
            )
            cols[spec.name] = tokens
        else:  # group id: empty cells are invalid, not "Missing"
            cols[spec.name] = np.array(
                ["" if c is None else str(c).strip() for c in raw], dtype=object)
    if row_ids is None:
        row_ids = np.arange(len(df), dtype=np.int64)
    return Cohort(schema, cols, np.asarray(row_ids, dtype=np.int64))


def load_csv(path, schema: FeatureSchema) -> Cohort:
    """Load a cohort from a UTF-8, comma-separated, headered CSV.

    Empty continuous cells become NaN; empty categorical cells become the
    reserved ``"Missing"`` token. The header must contain every schema
    column (extra columns are ignored). Row ids are the 0-based data-line
    order; external score files reference these ids.
    """
    df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    missing = [n for n in schema.names if n not in df.columns]
    if missing:
        raise SchemaError(f"{path}: header is missing schema columns: {missing}")
    return cohort_from_frame(schema, df)


def save_csv(cohort: Cohort, path) -> None:
    """Write the cohort back out in the load_csv format (NaN cells become empty)."""
    df = cohort.to_frame()
    df.to_csv(path, index=False, encoding="utf-8")

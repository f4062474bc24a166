import numpy as np
import pytest

from ebmkit.errors import DataError, SchemaError
from ebmkit.schema import (CATEGORICAL, CONTINUOUS, GROUP_ID, LABEL,
                           ColumnSpec, FeatureSchema, load_csv, save_csv)

from conftest import random_cohort


def make_schema(columns=None, allow=None):
    columns = columns or [
        ColumnSpec("bmi", CONTINUOUS), ColumnSpec("race", CATEGORICAL),
        ColumnSpec("smm", LABEL), ColumnSpec("hospital", GROUP_ID)]
    return FeatureSchema(columns, allow or {})


class TestFeatureSchema:
    def test_duplicate_columns_rejected(self):
        with pytest.raises(SchemaError, match="duplicate"):
            make_schema([ColumnSpec("bmi", CONTINUOUS), ColumnSpec("bmi", CONTINUOUS),
                         ColumnSpec("smm", LABEL), ColumnSpec("hospital", GROUP_ID)])

    def test_exactly_one_group_id(self):
        with pytest.raises(SchemaError, match="group_id"):
            make_schema([ColumnSpec("bmi", CONTINUOUS), ColumnSpec("smm", LABEL)])

    def test_allowlist_must_name_declared_features(self):
        with pytest.raises(SchemaError, match="undeclared"):
            make_schema(allow={"smm": ["nope"]})
        with pytest.raises(SchemaError, match="not a label"):
            make_schema(allow={"bmi": ["race"]})

    def test_default_allowlist_is_all_features(self):
        schema = make_schema()
        assert schema.allowlist("smm") == ["bmi", "race"]

    def test_json_roundtrip(self):
        schema = make_schema(allow={"smm": ["bmi"]})
        again = FeatureSchema.from_json(schema.to_json())
        assert again.names == schema.names
        assert again.allowlist("smm") == ["bmi"]
        assert again.kind_of("race") == CATEGORICAL


class TestLoadCsv:
    def test_direct_parse(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("bmi,race,smm,hospital\n31.2,White,0,H3\n", encoding="utf-8")
        cohort = load_csv(path, make_schema())
        assert cohort.n_rows == 1
        assert cohort.columns["bmi"][0] == 31.2
        assert cohort.columns["race"][0] == "White"
        assert cohort.labels("smm")[0] == 0
        assert cohort.groups()[0] == "H3"

    def test_missing_cell_conventions(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("bmi,race,smm,hospital\n,,1,H1\n", encoding="utf-8")
        cohort = load_csv(path, make_schema())
        assert np.isnan(cohort.columns["bmi"][0])
        assert cohort.columns["race"][0] == "Missing"

    def test_header_mismatch_names_missing_column(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("bmi,race,smm\n31.2,White,0\n", encoding="utf-8")
        with pytest.raises(SchemaError, match="hospital"):
            load_csv(path, make_schema())

    def test_unparseable_numeric_reports_line(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("bmi,race,smm,hospital\n30.0,White,0,H1\noops,White,0,H1\n",
                        encoding="utf-8")
        with pytest.raises(DataError, match="line 3"):
            load_csv(path, make_schema())

    def test_empty_group_id_rejected(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("bmi,race,smm,hospital\n30.0,White,0,\n", encoding="utf-8")
        with pytest.raises(DataError, match="group"):
            load_csv(path, make_schema())

    def test_non_binary_label_rejected(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("bmi,race,smm,hospital\n30.0,White,2,H1\n", encoding="utf-8")
        with pytest.raises(DataError, match="smm"):
            load_csv(path, make_schema())

    def test_save_load_roundtrip(self, tmp_path, small_schema):
        cohort = random_cohort(small_schema, 50, seed=3)
        path = tmp_path / "c.csv"
        save_csv(cohort, path)
        again = load_csv(path, small_schema)
        for name in small_schema.names:
            a, b = cohort.columns[name], again.columns[name]
            if a.dtype.kind == "f":
                assert np.allclose(a, b, equal_nan=True)
            else:
                assert list(a) == list(b)


class TestCohort:
    def test_take_preserves_row_ids(self, small_schema):
        cohort = random_cohort(small_schema, 20, seed=1)
        sub = cohort.take([3, 7, 11])
        assert list(sub.row_ids) == [3, 7, 11]
        assert sub.n_rows == 3

    def test_feature_frame_applies_allowlist(self, small_schema):
        schema = FeatureSchema(small_schema.columns, {"smm": ["bmi", "race"]})
        cohort = random_cohort(schema, 10, seed=2)
        assert list(cohort.feature_frame("smm").columns) == ["bmi", "race"]
        assert list(cohort.feature_frame().columns) == ["bmi", "weight", "duration", "race"]

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prerules.dataset import (
    ColumnSpec,
    DataSet,
    WinsorCutpoints,
    format_number,
    kfold_assignment,
    load_csv,
    read_schema,
    subsample_indices,
    winsorize,
    write_csv,
)
from prerules.errors import DataError


@pytest.fixture
def small():
    return DataSet.from_columns(
        {"age": [30, 41, 52, 28], "group": ["a", "b", "a", "c"], "y": [1.5, 2.0, 0.5, 3.0]},
        response="y",
    )


class TestColumnSpec:
    def test_numeric_cannot_have_levels(self):
        with pytest.raises(DataError):
            ColumnSpec("x", "numeric", ("a",))

    def test_categorical_needs_unique_levels(self):
        with pytest.raises(DataError):
            ColumnSpec("g", "categorical", ("a", "a"))
        with pytest.raises(DataError):
            ColumnSpec("g", "categorical")

    @pytest.mark.parametrize("raw", ["numeric", {"kind": "numeric"}])
    def test_from_json_numeric(self, raw):
        assert ColumnSpec.from_json("x", raw) == ColumnSpec("x", "numeric")

    def test_from_json_categorical(self):
        spec = ColumnSpec.from_json("g", {"kind": "categorical", "levels": ["lo", "hi"]})
        assert spec.levels == ("lo", "hi")
        assert ColumnSpec.from_json("g", spec.to_json()) == spec


class TestDataSet:
    def test_inferred_kinds(self, small):
        assert small.spec("age").kind == "numeric"
        assert small.spec("group").levels == ("a", "b", "c")
        assert small.predictor_names == ["age", "group"]
        assert small.n_rows == 4

    def test_columns_are_read_only(self, small):
        with pytest.raises(ValueError):
            small.values("age")[0] = 1.0

    def test_row_and_labels(self, small):
        assert small.row(1) == {"age": 41.0, "group": "b", "y": 2.0}
        assert list(small.labels("group")) == ["a", "b", "a", "c"]

    def test_take_keeps_schema(self, small):
        sub = small.take([3, 0])
        assert sub.columns == small.columns
        assert list(sub.values("age")) == [28.0, 30.0]

    def test_with_values(self, small):
        mod = small.with_values("group", "c")
        assert set(mod.labels("group")) == {"c"}
        with pytest.raises(DataError):
            small.with_values("group", "z")

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            DataSet.from_columns({"x": [1.0, float("nan")]})

    def test_unknown_response(self):
        with pytest.raises(DataError):
            DataSet.from_columns({"x": [1.0]}, response="y")


class TestCsv:
    def test_round_trip(self, small, tmp_path):
        path, schema = tmp_path / "d.csv", tmp_path / "s.json"
        write_csv(small, path, schema)
        back = load_csv(path, schema, response="y")
        assert back == small

    def test_missing_value_reports_line_and_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x,g\n1,a\n,b\n")
        with pytest.raises(DataError, match=r"d\.csv:3: missing value in column 'x'"):
            load_csv(path)

    def test_ragged_row(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x,g\n1,a\n2\n")
        with pytest.raises(DataError, match=":3:"):
            load_csv(path)

    def test_unseen_level_names_column(self, tmp_path):
        (tmp_path / "s.json").write_text(json.dumps({"x": "numeric", "g": {"kind": "categorical", "levels": ["a"]}}))
        path = tmp_path / "d.csv"
        path.write_text("x,g\n1,a\n2,b\n")
        with pytest.raises(DataError, match="column 'g'"):
            load_csv(path, tmp_path / "s.json")

    def test_schema_number_check(self, tmp_path):
        (tmp_path / "s.json").write_text(json.dumps({"x": "numeric"}))
        path = tmp_path / "d.csv"
        path.write_text("x\n1\nabc\n")
        with pytest.raises(DataError, match="expects a number"):
            load_csv(path, read_schema(tmp_path / "s.json"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="no such file"):
            load_csv(tmp_path / "nope.csv")


class TestWinsorize:
    def test_type7_quantiles(self):
        x = np.arange(1.0, 101.0)
        w, cut = winsorize(x, variable="x")
        # linear interpolation: 1 + 0.05 * 99 and 1 + 0.95 * 99
        assert cut.lower == pytest.approx(5.95)
        assert cut.upper == pytest.approx(95.05)
        assert w.min() == cut.lower and w.max() == cut.upper

    def test_describe(self):
        assert WinsorCutpoints("score", 18.0, 38.0).describe() == "18 <= score <= 38"

    def test_bad_fractions(self):
        with pytest.raises(DataError):
            winsorize([1.0, 2.0], 0.6, 0.4)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60))
    def test_clamps_within_range(self, values):
        w, cut = winsorize(values)
        assert np.all(w >= cut.lower) and np.all(w <= cut.upper)
        assert min(values) <= cut.lower <= cut.upper <= max(values)


def test_format_number():
    assert format_number(7.0) == "7"
    assert format_number(0.263) == "0.263"
    assert format_number(-0.0) == "0"


class TestResampling:
    def test_subsample_size_and_order(self):
        idx = subsample_indices(101, 0.5, np.random.default_rng(0))
        assert idx.size == 50
        assert np.all(np.diff(idx) > 0)

    def test_full_subsample(self):
        assert np.array_equal(subsample_indices(5, 1.0, np.random.default_rng(0)), np.arange(5))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 300), st.integers(2, 12), st.integers(0, 2**32 - 1))
    def test_folds_partition_evenly(self, n, k, seed):
        if n < k:
            with pytest.raises(DataError):
                kfold_assignment(n, k, np.random.default_rng(seed))
            return
        folds = kfold_assignment(n, k, np.random.default_rng(seed))
        sizes = np.bincount(folds, minlength=k)
        assert sizes.sum() == n
        assert sizes.max() - sizes.min() <= 1

    def test_stratified_folds_see_both_classes(self):
        y = np.r_[np.zeros(90), np.ones(12)]
        folds = kfold_assignment(y.size, 10, np.random.default_rng(1), strata=y)
        for f in range(10):
            assert set(y[folds == f]) == {0.0, 1.0}
        sizes = np.bincount(folds)
        assert sizes.max() - sizes.min() <= 1

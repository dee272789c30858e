import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentfe.dataset import (
    CATEGORICAL,
    NUMERIC,
    DatasetDescription,
    DatasetError,
    describe,
    from_arrays,
    from_rows,
    infer_kind,
    kfold_split,
    load_csv,
    render_description,
    to_csv_text,
    write_csv,
)


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_small_numeric_file(tmp_path):
    ds = load_csv(_write(tmp_path, "a,b,target\n1,2,0\n3,4,1\n5,6,0\n"), "target", "classification")
    assert ds.n_rows == 3
    assert ds.column_names == ["a", "b"]
    assert all(c.kind == NUMERIC for c in ds.columns)
    assert ds.target.classes == ["0", "1"]


def test_mixed_column_becomes_categorical_with_missing(tmp_path):
    ds = load_csv(_write(tmp_path, "color,y\nred,1\nblue,2\n,3\n"), "y", "regression")
    col = ds.column("color")
    assert col.kind == CATEGORICAL
    assert list(col.values) == ["red", "blue", None]


def test_target_with_empty_cell_is_rejected(tmp_path):
    with pytest.raises(DatasetError, match="target has missing values"):
        load_csv(_write(tmp_path, "a,y\n1,2\n3,\n"), "y", "regression")


@pytest.mark.parametrize("text,err", [
    ("a,b\n1,2\n", "not in header"),
    ("a,y\n1,2,3\n", "ragged"),
])
def test_malformed_files(tmp_path, text, err):
    with pytest.raises(DatasetError, match=err):
        load_csv(_write(tmp_path, text), "y", "regression")


def test_missing_file(tmp_path):
    with pytest.raises(DatasetError):
        load_csv(tmp_path / "absent.csv", "y", "regression")


def test_schema_hint_overrides_inference(tmp_path):
    ds = load_csv(_write(tmp_path, "zip,y\n1001,1\n2002,2\n"), "y", "regression",
                  schema_hints={"zip": CATEGORICAL})
    assert ds.column("zip").kind == CATEGORICAL


def test_infer_kind_needs_every_cell():
    assert infer_kind(["1", "2.5", ""]) == NUMERIC
    assert infer_kind(["1", "two"]) == CATEGORICAL
    assert infer_kind(["", ""]) == CATEGORICAL


def test_describe_numeric_stats():
    ds = from_arrays({"x": np.array([1.0, 2.0, 3.0])}, [0.0, 1.0, 2.0], "regression")
    s = describe(ds).columns[0]
    assert s.mean == 2.0
    assert s.std == pytest.approx(math.sqrt(2 / 3))  # population std
    assert (s.min, s.max) == (1.0, 3.0)


def test_describe_categorical_and_missing():
    ds = from_arrays({"c": ["x", "x", "y"], "m": np.array([1.0, np.nan, 3.0])},
                     [0.0, 1.0, 2.0], "regression")
    c, m = describe(ds).columns
    assert c.cardinality == 2 and c.top[0] == ("x", 2)
    assert m.missing_rate == pytest.approx(1 / 3)
    assert m.mean == 2.0


def test_render_description_lines():
    base = from_arrays({"a": np.ones(2), "b": np.zeros(2)}, [0.0, 1.0], "regression")
    desc = DatasetDescription("Regression on houses.", "Predict the price.",
                              {"b": "lot size", "a": "age in years"})
    two = from_arrays({"a": np.ones(2), "b": np.zeros(2)}, [0.0, 1.0], "regression",
                      description=desc)
    assert render_description(two).splitlines() == [
        "Regression on houses.", "Predict the price.", "a: age in years", "b: lot size"]
    assert len(render_description(base).splitlines()) == 2


def test_csv_round_trip(tmp_path):
    ds = from_arrays({"a": np.array([1.5, np.nan]), "c": ["p, q", None]}, [1.0, 2.0], "regression",
                     target_name="y")
    path = tmp_path / "out.csv"
    write_csv(ds, path)
    back = load_csv(path, "y", "regression")
    assert to_csv_text(back) == to_csv_text(ds)
    assert back.column("c").values[0] == "p, q"


def test_fold_sizes():
    assert [len(f) for f in kfold_split(10, 5, 3).folds] == [2] * 5
    assert sorted(len(f) for f in kfold_split(11, 5, 7).folds) == [2, 2, 2, 2, 3]


def test_fold_seed_zero_frozen():
    # SplitMix64(0) Fisher-Yates of range(10), cut into 5 chunks
    folds = [list(map(int, f)) for f in kfold_split(10, 5, 0).folds]
    assert folds == [[4, 9], [2, 5], [1, 7], [0, 6], [3, 8]]


@pytest.mark.parametrize("k", [1, 12])
def test_fold_count_bounds(k):
    with pytest.raises(ValueError):
        kfold_split(11, k, 0)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 300), k=st.integers(2, 10), seed=st.integers(0, 2**64 - 1))
def test_folds_partition_rows(n, k, seed):
    if k > n:
        k = n
    plan = kfold_split(n, k, seed)
    allrows = np.concatenate(plan.folds)
    assert sorted(allrows.tolist()) == list(range(n))
    sizes = [len(f) for f in plan.folds]
    assert max(sizes) - min(sizes) <= 1
    for train, val in plan:
        assert not set(train) & set(val)
    assert all((a == b).all() for a, b in zip(plan.folds, kfold_split(n, k, seed).folds))


def test_from_rows_regression_target_must_be_numeric():
    with pytest.raises(DatasetError):
        from_rows(["a", "y"], [["1", "x"]], "y", "regression")

import json

import numpy as np
import pytest

from dataset import (
    Curve,
    Dataset,
    DiscreteKind,
    Schema,
    bootstrap_indices,
    bootstrap_replicate,
    default_schema,
    derive_binary_group,
    load_csv,
    load_schema,
    save_csv,
    save_schema,
    split,
)
from utils import DataError


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def _small_dataset(n=10, q=0):
    grid = np.linspace(0, 1, 5)
    return Dataset(
        grid=grid,
        curves=np.arange(n * 5, dtype=float).reshape(n, 5),
        xc=np.zeros((n, 0)),
        xd=np.zeros((n, q), dtype=np.int64),
        y=np.arange(n, dtype=float),
        kinds=tuple(DiscreteKind.unordered(2) for _ in range(q)),
    )


# -----------------------
# Domain types
# -----------------------
def test_curve_rejects_short_or_unsorted_grid():
    with pytest.raises(ValueError):
        Curve(np.array([0.0, 1.0, 2.0]), np.zeros(3))
    with pytest.raises(ValueError):
        Curve(np.array([0.0, 2.0, 1.0, 3.0]), np.zeros(4))


def test_curve_rejects_non_finite_values():
    with pytest.raises(ValueError):
        Curve(np.linspace(0, 1, 4), np.array([0.0, np.nan, 1.0, 2.0]))


def test_discrete_kind_bounds_and_parse():
    assert DiscreteKind.unordered(2).bound == 0.5
    assert DiscreteKind(ordered=True, levels=6).bound == 1.0
    assert DiscreteKind.parse("ordered:6") == DiscreteKind(ordered=True, levels=6)
    assert DiscreteKind.parse("unordered:3").label == "unordered:3"
    with pytest.raises(ValueError):
        DiscreteKind(ordered=False, levels=1)
    with pytest.raises(ValueError):
        DiscreteKind.parse("nominal:3")


def test_dataset_validates_codes_and_size():
    assert _small_dataset(n=1).n == 1
    grid = np.linspace(0, 1, 5)
    with pytest.raises(DataError):
        Dataset(grid, np.zeros((3, 5)), np.zeros((3, 0)), np.array([[0], [1], [2]]), np.zeros(3), (DiscreteKind.unordered(2),))


def test_dataset_is_read_only_and_copies_inputs():
    curves = np.zeros((3, 5))
    ds = Dataset(np.linspace(0, 1, 5), curves, np.zeros((3, 0)), np.zeros((3, 0)), np.zeros(3))
    curves[0, 0] = 99.0
    assert ds.curves[0, 0] == 0.0
    with pytest.raises(ValueError):
        ds.y[0] = 1.0


def test_observation_round_trip():
    ds = _small_dataset(n=4, q=1)
    rebuilt = Dataset.from_observations(ds.observations, ds.kinds)
    np.testing.assert_array_equal(rebuilt.curves, ds.curves)
    np.testing.assert_array_equal(rebuilt.y, ds.y)
    assert rebuilt.q == 1 and rebuilt.p == 0


# -----------------------
# CSV ingestion
# -----------------------
def test_load_minimal_file(tmp_path):
    path = _write(tmp_path / "d.csv", "t0,t1,t2,t3,y\n1,2,3,4,0.5\n2,3,4,5,1.5\n3,4,5,6,2.5\n")
    ds = load_csv(path, Schema(curve_cols=("t0", "t1", "t2", "t3")))
    assert (ds.n, ds.p, ds.q, ds.grid.size) == (3, 0, 0, 4)
    np.testing.assert_allclose(ds.grid, np.linspace(0, 1, 4))


def test_load_rejects_nan_naming_row(tmp_path):
    path = _write(tmp_path / "d.csv", "t0,t1,t2,t3,y\n1,2,3,4,0.5\n2,NaN,4,5,1.5\n3,4,5,6,2.5\n")
    with pytest.raises(DataError, match="row 1"):
        load_csv(path, Schema(curve_cols=("t0", "t1", "t2", "t3")))


def test_load_rejects_missing_column_and_bad_codes(tmp_path):
    path = _write(tmp_path / "d.csv", "t0,t1,t2,t3,g,y\n1,2,3,4,0,0.5\n2,3,4,5,2,1.5\n3,4,5,6,1,2.5\n")
    schema = Schema(curve_cols=("t0", "t1", "t2", "t3"), discrete_cols=("g",), discrete_kinds=(DiscreteKind.unordered(2),))
    with pytest.raises(DataError, match="out of range"):
        load_csv(path, schema)
    with pytest.raises(DataError, match="Missing columns"):
        load_csv(path, Schema(curve_cols=("t0", "t1", "t2", "t9")))


def test_schema_sidecar_with_prefix_and_group(tmp_path):
    rows = ["a1,a2,a3,a4,protein,fat"]
    for i, fat in enumerate([5.0, 20.0, 35.0, 10.5]):
        rows.append(f"{i},{i + 1},{i + 2},{i + 3},{12 + i},{fat}")
    path = _write(tmp_path / "d.csv", "\n".join(rows) + "\n")
    schema_path = tmp_path / "d.schema.json"
    schema_path.write_text(
        json.dumps(
            {
                "curve_prefix": "a",
                "continuous_cols": ["protein"],
                "response_col": "fat",
                "grid": "850:1050",
                "derive_group": {"threshold": 20},
            }
        )
    )
    ds = load_csv(path, load_schema(schema_path))
    assert (ds.n, ds.p, ds.q) == (4, 1, 1)
    np.testing.assert_array_equal(ds.xd[:, 0], [0, 1, 1, 0])
    assert ds.grid[0] == 850.0 and ds.grid[-1] == 1050.0


def test_save_then_load_is_identity(tmp_path, mixed10):
    path = tmp_path / "mixed.csv"
    schema = default_schema(mixed10)
    save_csv(mixed10, path, schema)
    save_schema(schema, tmp_path / "mixed.schema.json")
    back = load_csv(path, load_schema(tmp_path / "mixed.schema.json"))
    np.testing.assert_array_equal(back.curves, mixed10.curves)
    np.testing.assert_array_equal(back.xc, mixed10.xc)
    np.testing.assert_array_equal(back.xd, mixed10.xd)
    np.testing.assert_array_equal(back.y, mixed10.y)
    np.testing.assert_array_equal(back.grid, mixed10.grid)
    assert back.kinds == mixed10.kinds


def test_load_reads_17_digit_text_exactly(tmp_path):
    values = np.random.default_rng(5).normal(size=(400, 4))
    ds = Dataset(np.linspace(0, 1, 4), values, np.zeros((400, 0)), np.zeros((400, 0)), values[:, 0] * 1e-3)
    save_csv(ds, tmp_path / "n.csv")
    back = load_csv(tmp_path / "n.csv", default_schema(ds))
    np.testing.assert_array_equal(back.curves, values)
    np.testing.assert_array_equal(back.y, ds.y)


def test_unlabelled_targets(tmp_path):
    schema = Schema(curve_cols=("t0", "t1", "t2", "t3"))
    empty = _write(tmp_path / "e.csv", "t0,t1,t2,t3,y\n1,2,3,4,\n2,3,4,5,\n")
    ds = load_csv(empty, schema, require_response=False)
    assert ds.n == 2 and np.all(np.isnan(ds.y))
    with pytest.raises(DataError, match="row 0"):
        load_csv(empty, schema)

    absent = _write(tmp_path / "a.csv", "t0,t1,t2,t3\n1,2,3,4\n")
    assert np.isnan(load_csv(absent, schema, require_response=False).y[0])
    with pytest.raises(DataError, match="Missing columns"):
        load_csv(absent, schema)

    bad = _write(tmp_path / "b.csv", "t0,t1,t2,t3,y\n1,2,3,4,NaN\n")
    with pytest.raises(DataError, match="row 0"):
        load_csv(bad, schema, require_response=False)

    grouped = Schema(curve_cols=("t0", "t1", "t2", "t3"), group_threshold=20.0)
    with pytest.raises(DataError, match="derive_group"):
        load_csv(empty, grouped, require_response=False)


# -----------------------
# Derived group / split / bootstrap
# -----------------------
def test_derive_binary_group_boundary_goes_up():
    ds = _small_dataset(n=4)
    ds = Dataset(ds.grid, ds.curves, ds.xc, ds.xd, np.array([10.5, 20.0, 25.0, 3.0]))
    out = derive_binary_group(ds, 20.0)
    np.testing.assert_array_equal(out.xd[:, 0], [0, 1, 1, 0])
    assert out.kinds == (DiscreteKind.unordered(2),)


def test_derive_binary_group_all_below():
    ds = _small_dataset(n=5)
    out = derive_binary_group(ds, 100.0)
    assert np.all(out.xd == 0)


def test_split_preserves_order():
    train, test = split(_small_dataset(n=10), 3)
    assert (train.n, test.n) == (3, 7)
    np.testing.assert_array_equal(test.y, np.arange(3, 10))


def test_split_rejects_empty_test():
    with pytest.raises(DataError):
        split(_small_dataset(n=3), 3)
    with pytest.raises(DataError):
        split(_small_dataset(n=10), 2)


def test_split_allows_one_row_holdout():
    train, test = split(_small_dataset(n=10), 9)
    assert (train.n, test.n) == (9, 1)
    assert test.y[0] == 9.0


def test_bootstrap_is_deterministic():
    ds = _small_dataset(n=10)
    np.testing.assert_array_equal(bootstrap_replicate(ds, 5).y, bootstrap_replicate(ds, 5).y)


def test_bootstrap_indices_range_and_distinct_count():
    idx = bootstrap_indices(215, 1)
    assert idx.size == 215 and idx.min() >= 0 and idx.max() <= 214
    assert set(bootstrap_indices(3, 9)) <= {0, 1, 2}
    distinct = np.mean([np.unique(bootstrap_indices(215, s)).size for s in range(2000)])
    assert distinct == pytest.approx(215 * (1 - (1 - 1 / 215) ** 215), abs=2)


def test_add_and_drop_discrete(mixed10):
    extended = mixed10.with_discrete(np.arange(10) % 2, DiscreteKind.unordered(2))
    assert extended.q == 3 and extended.kinds[-1] == DiscreteKind.unordered(2)
    np.testing.assert_array_equal(extended.xd[:, -1], np.arange(10) % 2)
    plain = extended.drop_discrete()
    assert plain.q == 0 and plain.kinds == ()
    np.testing.assert_array_equal(plain.y, mixed10.y)

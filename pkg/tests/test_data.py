import numpy as np
import pytest

from condense.data import Dataset, read_dataset_csv, write_dataset_csv
from condense.errors import DomainError


def test_dataset_validation():
    with pytest.raises(DomainError):
        Dataset(np.zeros((3, 2)), np.zeros(4), ["a", "b"], "y")
    with pytest.raises(DomainError):
        Dataset(np.zeros((3, 2)), np.zeros(3), ["a"], "y")


def test_dataset_subset():
    ds = Dataset(np.arange(10.0).reshape(5, 2), np.arange(5.0), ["a", "b"], "y")
    sub = ds.subset([3, 1])
    np.testing.assert_array_equal(sub.y, [3.0, 1.0])
    np.testing.assert_array_equal(sub.X[0], [6.0, 7.0])


def test_csv_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(0)
    ds = Dataset(rng.normal(size=(40, 3)), rng.normal(size=40), ["u", "v", "w"], "resp")
    path = tmp_path / "data.csv"
    write_dataset_csv(path, ds)
    back, rejected = read_dataset_csv(path, ["u", "v", "w"], "resp")
    assert rejected == []
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.y, ds.y)


def test_csv_rejects_bad_rows(tmp_path):
    path = tmp_path / "holes.csv"
    path.write_text("a,y\n1.0,2.0\n,3.0\nx,4.0\n5.0,inf\n6.0,7.0\n")
    ds, rejected = read_dataset_csv(path, ["a"], "y")
    assert rejected == [2, 3, 4]
    assert ds.n_rows == 2


def test_csv_missing_column(tmp_path):
    path = tmp_path / "cols.csv"
    path.write_text("a,y\n1.0,2.0\n")
    with pytest.raises(DomainError, match="not found"):
        read_dataset_csv(path, ["b"], "y")


def test_csv_all_rows_bad(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,y\n,\n,\n")
    with pytest.raises(DomainError, match="no usable rows"):
        read_dataset_csv(path, ["a"], "y")

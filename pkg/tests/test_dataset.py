import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conformal_ncf.dataset import (
    Dataset,
    DatasetError,
    SplitPlan,
    generate_synthetic,
    load_csv,
    make_splits,
    save_csv,
)

from .conftest import BAYES_ERROR, CENTERS, fresh_cluster_sample, nearest_center


def test_load_csv_first_appearance_mapping(write_csv):
    path = write_csv("x,y,label\n1,2,a\n3,4,b\n5,6,a\n")
    ds = load_csv(path, "label")
    assert ds.n_classes == 2
    assert ds.labels.tolist() == [0, 1, 0]
    assert ds.class_names == ("a", "b")
    assert ds.features.tolist() == [[1, 2], [3, 4], [5, 6]]


def test_load_csv_label_column_anywhere(write_csv):
    path = write_csv("cls,f1\nz,0.5\ny,1.5\n")
    ds = load_csv(path, "cls")
    assert ds.class_names == ("z", "y")
    assert ds.features[:, 0].tolist() == [0.5, 1.5]


def test_load_csv_single_class(write_csv):
    with pytest.raises(DatasetError, match="fewer than 2 classes"):
        load_csv(write_csv("x,label\n1,a\n2,a\n"), "label")


def test_load_csv_header_only(write_csv):
    with pytest.raises(DatasetError, match="empty dataset"):
        load_csv(write_csv("x,label\n"), "label")


def test_load_csv_non_numeric_reports_location(write_csv):
    with pytest.raises(DatasetError, match=r"row 3, column 'x'"):
        load_csv(write_csv("x,label\n1,a\nfoo,b\n"), "label")


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(DatasetError, match="missing file"):
        load_csv(tmp_path / "nope.csv", "label")


def test_load_csv_missing_label_column(write_csv):
    with pytest.raises(DatasetError, match="not found"):
        load_csv(write_csv("x,y\n1,2\n"), "label")


def test_dataset_invariants():
    with pytest.raises(DatasetError):
        Dataset(np.zeros((3, 2)), [0, 1], ("a", "b"))
    with pytest.raises(DatasetError):
        Dataset(np.zeros((2, 2)), [0, 2], ("a", "b"))
    with pytest.raises(DatasetError):
        Dataset(np.zeros((2, 2)), [0, 0], ("a",))


def test_synthetic_full_shape():
    ds = generate_synthetic(0.2, 2000, 7)
    assert ds.n_instances == 8000
    assert ds.n_features == 2
    assert ds.n_classes == 4
    assert np.bincount(ds.labels).tolist() == [2000] * 4


def test_synthetic_tiny_near_centers():
    ds = generate_synthetic(0.4, 1, 3)
    assert ds.n_instances == 4
    dist = np.linalg.norm(ds.features - CENTERS[ds.labels], axis=1)
    assert np.all(dist < 5 * 0.4)


def test_synthetic_deterministic():
    a = generate_synthetic(0.6, 50, 11)
    b = generate_synthetic(0.6, 50, 11)
    c = generate_synthetic(0.6, 50, 12)
    assert np.array_equal(a.features, b.features)
    assert not np.array_equal(a.features, c.features)


def test_synthetic_rejects_nonpositive_sigma():
    with pytest.raises(DatasetError):
        generate_synthetic(0.0, 10, 0)


def test_synthetic_moments():
    sigma = 0.6
    ds = generate_synthetic(sigma, 2000, 5)
    for c in range(4):
        pts = ds.features[ds.labels == c]
        assert np.allclose(pts.mean(axis=0), CENTERS[c], atol=4 * sigma / np.sqrt(2000))
        assert np.all(np.abs(pts.std(axis=0) / sigma - 1) < 0.05)


def test_synthetic_sigma1_nearest_center_error():
    ds = generate_synthetic(1.0, 500, 2)
    err = np.mean(nearest_center(ds.features) != ds.labels)
    assert abs(err - 0.43) <= 0.03
    # independent fresh sample agrees with the quadrature value
    pts, labels = fresh_cluster_sample(1.0, 500, 99)
    assert abs(np.mean(nearest_center(pts) != labels) - BAYES_ERROR[1.0]) < 0.03


def test_save_csv_round_trip(tmp_path):
    ds = generate_synthetic(0.6, 20, 1)
    path = tmp_path / "s.csv"
    save_csv(ds, path)
    assert path.read_text().splitlines()[0] == "x1,x2,label"
    back = load_csv(path, "label")
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)
    assert back.class_names == ds.class_names


def _balanced(n, n_classes=2):
    labels = np.arange(n) % n_classes
    return Dataset(np.arange(n, dtype=float)[:, None], labels, tuple("ab"[:n_classes]))


def test_split_arithmetic():
    splits = make_splits(_balanced(100), SplitPlan(repeats=1, folds=10, calibration_fraction=0.2))
    assert len(splits) == 10
    for s in splits:
        assert (s.test_idx.size, s.calibration_idx.size, s.proper_train_idx.size) == (10, 18, 72)


def test_split_determinism():
    ds = _balanced(100)
    plan = SplitPlan(2, 5, 0.2, seed=42)
    a, b = make_splits(ds, plan), make_splits(ds, plan)
    for x, y in zip(a, b):
        assert np.array_equal(x.test_idx, y.test_idx)
        assert np.array_equal(x.calibration_idx, y.calibration_idx)
        assert np.array_equal(x.proper_train_idx, y.proper_train_idx)
    c = make_splits(ds, SplitPlan(2, 5, 0.2, seed=43))
    assert any(not np.array_equal(x.test_idx, y.test_idx) for x, y in zip(a, c))


def test_split_full_scale():
    ds = generate_synthetic(0.6, 2000, 0)
    splits = make_splits(ds, SplitPlan(10, 10, 0.2, 1))
    assert len(splits) == 100
    assert all(s.test_idx.size == 800 for s in splits)


def test_split_rejects_small_class():
    ds = Dataset(np.zeros((12, 1)), [0] * 9 + [1] * 3, ("a", "b"))
    with pytest.raises(DatasetError, match="cannot be split"):
        make_splits(ds, SplitPlan(1, 5, 0.2, 0))


@pytest.mark.parametrize("kwargs", [dict(folds=1), dict(calibration_fraction=0.0),
                                    dict(calibration_fraction=1.0), dict(repeats=0),
                                    dict(seed=-1)])
def test_split_plan_validation(kwargs):
    with pytest.raises(ValueError):
        SplitPlan(**kwargs)


@settings(max_examples=40, deadline=None)
@given(
    counts=st.lists(st.integers(5, 40), min_size=2, max_size=4),
    folds=st.integers(2, 5),
    frac=st.floats(0.05, 0.6),
    seed=st.integers(0, 2**64 - 1),
)
def test_split_partition_and_stratification(counts, folds, frac, seed):
    labels = np.concatenate([np.full(c, i) for i, c in enumerate(counts)])
    ds = Dataset(np.zeros((labels.size, 1)), labels, tuple(str(i) for i in range(len(counts))))
    plan = SplitPlan(2, folds, frac, seed)
    splits = make_splits(ds, plan)
    n = labels.size
    for r in range(2):
        tests = np.concatenate([s.test_idx for s in splits if s.repeat == r])
        assert np.array_equal(np.sort(tests), np.arange(n))
    for s in splits:
        parts = [s.proper_train_idx, s.calibration_idx, s.test_idx]
        joined = np.concatenate(parts)
        assert joined.size == n and np.array_equal(np.sort(joined), np.arange(n))
        n_train = s.proper_train_idx.size + s.calibration_idx.size
        assert abs(s.calibration_idx.size - frac * n_train) <= 1
        for c, total in enumerate(counts):
            assert abs(np.sum(labels[s.test_idx] == c) - total / folds) <= 1
            in_train = np.sum(labels[s.train_idx] == c)
            assert abs(np.sum(labels[s.calibration_idx] == c) - frac * in_train) <= 1

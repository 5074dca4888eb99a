import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snnmia.dataset import (Dataset, DatasetError, load_csv, load_idx, make_blobs, plan_splits,
                            save_csv, write_idx_pair)


def linear_probe_accuracy(ds, epochs=200, lr=0.5):
    """Softmax regression by plain gradient descent: an oracle independent of the engine."""
    x = np.c_[ds.flat().astype(np.float64), np.ones(len(ds))]
    k = ds.n_classes
    w = np.zeros((x.shape[1], k))
    onehot = np.eye(k)[ds.y]
    for _ in range(epochs):
        z = x @ w
        p = np.exp(z - z.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        w -= lr * x.T @ (p - onehot) / len(x)
    return float(((x @ w).argmax(axis=1) == ds.y).mean())


def test_blobs_separable():
    assert linear_probe_accuracy(make_blobs(200, 2, 2, 6.0, seed=1)) >= 0.99


def test_blobs_zero_separation_is_chance():
    acc = linear_probe_accuracy(make_blobs(500, 2, 2, 0.0, seed=1))
    assert abs(acc - 0.5) < 0.06


def test_blobs_deterministic_and_balanced():
    a, b = make_blobs(30, 3, 4, 2.0, seed=5), make_blobs(30, 3, 4, 2.0, seed=5)
    assert a.equals(b)
    assert np.bincount(a.y).tolist() == [30, 30, 30]
    assert not a.equals(make_blobs(30, 3, 4, 2.0, seed=6))


def test_idx_single_pixel(tmp_path):
    write_idx_pair(np.full((1, 1, 1), 255), [7], tmp_path / "i", tmp_path / "l")
    ds = load_idx(tmp_path / "i", tmp_path / "l")
    assert len(ds) == 1 and ds.x.tolist() == [[1.0]] and ds.y.tolist() == [7]


def test_idx_handcrafted_bytes(tmp_path):
    img = struct.pack(">I3I", 0x00000803, 2, 2, 2) + bytes([0, 255, 51, 102, 1, 2, 3, 4])
    lab = struct.pack(">II", 0x00000801, 2) + bytes([3, 9])
    (tmp_path / "i").write_bytes(img)
    (tmp_path / "l").write_bytes(lab)
    ds = load_idx(tmp_path / "i", tmp_path / "l")
    assert ds.x.shape == (2, 4)
    assert ds.x[0].tolist() == pytest.approx([0.0, 1.0, 0.2, 0.4])
    assert ds.y.tolist() == [3, 9]


def test_idx_errors(tmp_path):
    write_idx_pair(np.zeros((2, 2, 2)), [1, 2], tmp_path / "i", tmp_path / "l")
    raw = (tmp_path / "i").read_bytes()
    (tmp_path / "bad").write_bytes(b"\x00\x00\x09\x03" + raw[4:])
    with pytest.raises(DatasetError, match="magic"):
        load_idx(tmp_path / "bad", tmp_path / "l")
    (tmp_path / "short").write_bytes(raw[:-1])
    with pytest.raises(DatasetError, match="truncated"):
        load_idx(tmp_path / "short", tmp_path / "l")
    write_idx_pair(np.zeros((3, 2, 2)), [1, 2, 3], tmp_path / "i3", tmp_path / "l3")
    with pytest.raises(DatasetError, match="labels"):
        load_idx(tmp_path / "i3", tmp_path / "l")
    with pytest.raises(DatasetError):
        load_idx(tmp_path / "missing", tmp_path / "l")


def test_csv_round_trip(tmp_path):
    ds = make_blobs(5, 2, 3, 1.0, seed=0)
    save_csv(ds, tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv")
    assert back.equals(ds)


def test_ids_must_be_unique():
    with pytest.raises(DatasetError):
        Dataset.from_arrays(np.zeros((2, 1)), [0, 1], ids=[4, 4])


def _check_plan(n, n_pairs, plan):
    assert plan.n_models == 2 * n_pairs
    assert np.all(plan.membership.sum(axis=0) == n_pairs)
    assert np.all(plan.membership.sum(axis=1) == n // 2)
    for k in range(n_pairs):
        assert np.all(plan.membership[2 * k] ^ plan.membership[2 * k + 1])
    assert len(np.intersect1d(plan.target_train, plan.target_test)) == 0
    assert sorted(np.r_[plan.target_train, plan.target_test].tolist()) == list(range(n))


def test_split_examples():
    plan = plan_splits(8, 2, seed=0)
    _check_plan(8, 2, plan)
    assert plan.n_models == 4
    one = plan_splits(8, 1, seed=0)
    assert np.array_equal(one.membership[0], ~one.membership[1])


def test_split_seed_changes_permutation_not_balance():
    a, b = plan_splits(20, 3, seed=1), plan_splits(20, 3, seed=2)
    assert not np.array_equal(a.membership, b.membership)
    _check_plan(20, 3, a)
    _check_plan(20, 3, b)
    assert np.array_equal(a.membership.sum(axis=0), b.membership.sum(axis=0))


def test_split_is_pure():
    a, b = plan_splits(30, 2, seed=4), plan_splits(30, 2, seed=4)
    assert np.array_equal(a.membership, b.membership)
    assert np.array_equal(a.target_train, b.target_train)


def test_split_errors():
    with pytest.raises(DatasetError):
        plan_splits(7, 1, seed=0)
    with pytest.raises(DatasetError):
        plan_splits(8, 0, seed=0)


@settings(max_examples=60, deadline=None)
@given(st.integers(4, 100).map(lambda h: 2 * h), st.integers(1, 6), st.integers(0, 2**32))
def test_split_balance_property(n, n_pairs, seed):
    _check_plan(n, n_pairs, plan_splits(n, n_pairs, seed))

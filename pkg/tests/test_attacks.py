import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import kendalltau

from snnmia.attacks import (RMIA_EPS, DropoutSpec, attack_p_modified, attack_p_original, attack_r,
                            averaged, dropout_confidence, dropout_confidences, dropout_masks,
                            grid_search_dropout, input_weight_dropout_identity_check, rmia,
                            score_all)
from snnmia.dataset import make_blobs, plan_splits
from snnmia.metrics import auc, roc
from snnmia.network import AnnNetwork, SpikingNetwork, confidence, confidences
from snnmia.trainer import TrainConfig, train


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def test_attack_p_examples():
    assert attack_p_original([0.8], [0.9, 0.7, 0.5])[0] == pytest.approx(2 / 3)
    assert attack_p_original([0.5], [0.5, 0.5])[0] == 1.0
    assert attack_p_original([0.1], [0.2, 0.3])[0] == 0.0
    assert attack_p_modified([0.37])[0] == 0.37
    with pytest.raises(ValueError):
        attack_p_original([0.1], [])


def test_attack_r_examples():
    assert attack_r([0.6], [[0.5], [0.7]])[0] == 0.5
    assert attack_r([0.7], [[0.5], [0.7]])[0] == 1.0
    with pytest.raises(ValueError):
        attack_r([0.1], np.empty((0, 1)))


def test_rmia_examples():
    # IN mean 0.8, OUT mean 0.4, denominator 0.6
    s = rmia([0.8], [[0.8], [0.4]], [[True], [False]])
    assert s[0] == pytest.approx(0.8 / 0.6)
    tiny = rmia([0.5], [[0.0], [0.0]], [[True], [False]])
    assert tiny[0] == 0.5 / RMIA_EPS and np.isfinite(tiny[0])
    with pytest.raises(ValueError):
        rmia([0.5], [[0.1], [0.2]], None)
    with pytest.raises(ValueError):
        rmia([0.5], [[0.1], [0.2]], [[True, False]])


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**31))
def test_modified_and_original_attack_p_rank_identically(n, seed):
    rng = np.random.default_rng(seed)
    conf = rng.integers(1, 20, n) / 21
    labels = np.r_[np.ones(n // 2 + 1, bool), np.zeros(n - n // 2 - 1, bool)][:n]
    labels[0], labels[-1] = True, False
    mod, orig = attack_p_modified(conf), attack_p_original(conf, conf)
    if len(set(conf)) > 1:
        assert kendalltau(mod, orig).statistic == pytest.approx(1.0)
    assert roc(mod, labels).points() == roc(orig, labels).points()
    assert auc(roc(mod, labels)) == auc(roc(orig, labels))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 30), st.integers(0, 2**31))
def test_score_ranges_and_rmia_permutation(n_pairs, n, seed):
    rng = np.random.default_rng(seed)
    target = rng.uniform(0.01, 0.99, n)
    refs = rng.uniform(0.01, 0.99, (2 * n_pairs, n))
    member = np.zeros_like(refs, dtype=bool)
    member[0::2] = rng.integers(0, 2, (n_pairs, n)).astype(bool)
    member[1::2] = ~member[0::2]
    scores = score_all(target, refs, member)
    grid = np.arange(2 * n_pairs + 1) / (2 * n_pairs)
    assert np.all(np.isin(scores["attack_r"], grid))
    assert np.all((scores["attack_p_orig"] > 0) & (scores["attack_p_orig"] <= 1))
    perm = rng.permutation(2 * n_pairs)
    assert np.array_equal(rmia(target, refs[perm], member[perm]), scores["rmia"])


# --- dropout ----------------------------------------------------------------

@pytest.fixture(scope="module")
def small_models():
    ds = make_blobs(20, 3, 6, 3.0, seed=2)
    cfg = TrainConfig(epochs=5, batch_size=10, lr=0.05)
    snn = train(SpikingNetwork.create((6, 12, 3), T=2, seed=1), ds, None, cfg).network
    ann = train(AnnNetwork.create((6, 12, 3), seed=1), ds, None, cfg).network
    return ds, snn, ann


def test_masks_are_deterministic_and_batch_independent():
    a = dropout_masks([3, 9, 12], 2, 50, 0.3, seed=7)
    b = dropout_masks([12], 2, 50, 0.3, seed=7)
    assert np.array_equal(a[2], b[0])
    assert not np.array_equal(a, dropout_masks([3, 9, 12], 3, 50, 0.3, seed=7))
    big = dropout_masks(np.arange(400), 0, 250, 0.2, seed=1)
    assert abs(1 - big.mean() - 0.2) < 0.005
    assert np.all(dropout_masks([1], 0, 10, 0.0, 0) == 1)
    assert np.all(dropout_masks([1], 0, 10, 1.0, 0) == 0)


@pytest.mark.parametrize("kind", ["snn", "ann"])
def test_zero_dropout_is_exact(small_models, kind):
    ds, snn, ann = small_models
    net = snn if kind == "snn" else ann
    got = dropout_confidences(net, ds.flat(), ds.y, ds.ids, DropoutSpec(0.0, 5, seed=3))
    assert np.array_equal(got, confidences(net, ds.flat(), ds.y))


def test_full_dropout_is_constant(small_models):
    ds, snn, _ = small_models
    got = dropout_confidences(snn, ds.flat(), ds.y, ds.ids, DropoutSpec(1.0, 4, seed=3))
    blank = confidences(snn, np.zeros_like(ds.flat()), ds.y)
    assert np.array_equal(got, blank)


def test_averaging_exact_on_equal_rows():
    rows = np.tile(np.array([0.1, 0.3, 0.7]), (9, 1))
    assert np.array_equal(averaged(rows, 9), rows[0])
    assert averaged(np.array([[0.2], [0.4]]), 2)[0] == pytest.approx(0.3)


def test_monte_carlo_matches_exact_expectation():
    """Input dropout on a tiny model against enumeration of all 2^d weight masks."""
    d, p = 4, 0.3
    net = AnnNetwork.create((d, 5, 2), seed=4, gain=2.0)
    x = np.array([0.9, -1.2, 0.4, 1.5], dtype=np.float32)
    w0 = net.layers[0][0].numpy().astype(np.float64)
    b0 = net.layers[0][1].numpy().astype(np.float64)
    w1 = net.layers[1][0].numpy().astype(np.float64)
    b1 = net.layers[1][1].numpy().astype(np.float64)
    exact = 0.0
    for bits in itertools.product([0, 1], repeat=d):
        m = np.array(bits, dtype=np.float64)
        prob = np.prod(np.where(m == 1, 1 - p, p))
        z = sigmoid(x @ (m[:, None] * w0) + b0) @ w1 + b1
        exact += prob * np.exp(z[1] - np.logaddexp(z[0], z[1]))
    n = 4000
    per = [dropout_confidence(net, x, 1, DropoutSpec(p, 1, seed=s), sample_id=5) for s in range(n)]
    se = np.std(per) / np.sqrt(n)
    assert abs(np.mean(per) - exact) <= 3 * se
    one = dropout_confidence(net, x, 1, DropoutSpec(p, n, seed=0), sample_id=5)
    assert abs(one - exact) <= 3 * se


@pytest.mark.parametrize("act", [sigmoid, lambda z: np.maximum(z, 0.0)])
def test_input_weight_dropout_identity(act):
    rng = np.random.default_rng(0)
    for _ in range(100):
        d = int(rng.integers(1, 30))
        W, X = rng.standard_normal(d), rng.standard_normal(d)
        M = (rng.random(d) >= 0.3).astype(float)
        assert input_weight_dropout_identity_check(W, X, M, act)
    assert input_weight_dropout_identity_check(np.ones(3), np.ones(3), np.zeros(3), act)
    assert input_weight_dropout_identity_check(rng.standard_normal((5, 4)), rng.standard_normal(5),
                                               np.ones(5), act)


@pytest.fixture(scope="module")
def reference_pool():
    ds = make_blobs(12, 3, 8, 2.0, seed=0)
    plan = plan_splits(ds, 2, seed=0)
    cfg = TrainConfig(epochs=8, batch_size=6, lr=0.05)
    models = [train(AnnNetwork.create((8, 16, 3), seed=m), ds.subset(plan.reference_train(m)),
                    None, cfg.replace(seed=m)).network for m in range(plan.n_models)]
    return ds, plan, models


def test_grid_singleton_is_no_dropout(reference_pool):
    ds, plan, models = reference_pool
    res = grid_search_dropout(models, ds.flat(), ds.y, ds.ids, plan.membership, "rmia",
                              [0.0], [1], seed=0)
    assert res.spec.p == 0.0 and res.spec.n_passes == 1
    assert res.cells[(0.0, 1)] == res.baseline_auc
    assert res.attackers == [2, 3]


def test_grid_matches_exhaustive_oracle(reference_pool):
    ds, plan, models = reference_pool
    res = grid_search_dropout(models, ds.flat(), ds.y, ds.ids, plan.membership, "rmia",
                              [0.2, 0.1, 0.05], [4, 2], seed=11)
    assert len(res.cells) == 6
    x, y = ds.flat(), ds.y
    oracle = {}
    for p in (0.05, 0.1, 0.2):
        for n in (2, 4):
            spec = DropoutSpec(p, n, seed=11)
            conf = np.array([dropout_confidences(models[m], x, y, ds.ids, spec) for m in (0, 2, 3)])
            s = rmia(conf[0], conf[1:], plan.membership[[2, 3]])
            oracle[(p, n)] = auc(roc(s, plan.membership[0]))
    assert res.cells == pytest.approx(oracle, abs=1e-12)
    best = max(oracle.values())
    first = min(k for k, v in oracle.items() if v >= best - 1e-12)
    assert (res.spec.p, res.spec.n_passes) == first
    again = grid_search_dropout(models, x, y, ds.ids, plan.membership, "rmia",
                                [0.2, 0.1, 0.05], [4, 2], seed=11)
    assert again.spec == res.spec and again.cells == res.cells


def test_grid_errors(reference_pool):
    ds, plan, models = reference_pool
    with pytest.raises(ValueError):
        grid_search_dropout(models, ds.flat(), ds.y, ds.ids, plan.membership, "rmia", [], [1], 0)
    with pytest.raises(ValueError):
        grid_search_dropout(models[:1], ds.flat(), ds.y, ds.ids, plan.membership[:1], "rmia",
                            [0.1], [1], 0)


def test_dropout_spec_validation():
    with pytest.raises(ValueError):
        DropoutSpec(1.5, 2)
    with pytest.raises(ValueError):
        DropoutSpec(0.1, 0)

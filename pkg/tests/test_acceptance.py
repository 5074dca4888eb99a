"""Acceptance criteria. Each test prints one PASS/FAIL line.

Run with pytest (the lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""

import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES  # noqa: E402
from oracles import brute_auc, brute_roc_points, brute_tpr_at_fpr  # noqa: E402
from snnmia.attacks import (attack_p_modified, attack_p_original,  # noqa: E402
                            input_weight_dropout_identity_check)
from snnmia.config import load_config  # noqa: E402
from snnmia.dataset import make_blobs, plan_splits  # noqa: E402
from snnmia.experiment import Experiment  # noqa: E402
from snnmia.metrics import auc, roc, tpr_at_fpr  # noqa: E402
from snnmia.network import SpikingNetwork, confidences  # noqa: E402
from snnmia.trainer import TrainConfig, train  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent
SEEDS = range(5)
LATENCIES = (1, 2, 4)


def verdict(num: int, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# --- criteria 1-4: oracle checks ----------------------------------------------

def test_c01_attack_p_variants_agree():
    t0 = time.perf_counter()
    ds = make_blobs(100, 10, 20, 3.0, seed=0)
    plan = plan_splits(ds, 1, seed=0)
    net = train(SpikingNetwork.create((20, 32, 10), T=1, seed=0), ds.subset(plan.target_train),
                None, TrainConfig(epochs=5, batch_size=50, lr=0.02)).network
    conf = confidences(net, ds.flat(), ds.y)
    members = plan.member_bits(len(ds))
    c_mod = roc(attack_p_modified(conf), members)
    c_orig = roc(attack_p_original(conf, conf), members)
    diff = abs(auc(c_mod) - auc(c_orig))
    same = c_mod.points() == c_orig.points()
    elapsed = time.perf_counter() - t0
    verdict(1, "Attack-P original vs modified", diff <= 1e-9 and same and elapsed < 10,
            f"|dAUC|={diff:.1e}, identical ROC points={same}, {elapsed:.1f}s")


def test_c02_input_weight_dropout_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    acts = {"sigmoid": lambda z: 1 / (1 + np.exp(-z)), "rectifier": lambda z: np.maximum(z, 0)}
    failures = 0
    for _ in range(100):
        d = int(rng.integers(1, 64))
        W, X = rng.standard_normal(d), rng.standard_normal(d)
        M = (rng.random(d) >= rng.random()).astype(float)
        failures += sum(not input_weight_dropout_identity_check(W, X, M, f) for f in acts.values())
    elapsed = time.perf_counter() - t0
    verdict(2, "input vs weight dropout identity", failures == 0 and elapsed < 1,
            f"{failures} mismatches over 200 cases, {elapsed:.2f}s")


def test_c03_split_balance():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    bad = 0
    for _ in range(50):
        n = 2 * int(rng.integers(4, 101))
        k = int(rng.integers(1, 9))
        plan = plan_splits(n, k, seed=int(rng.integers(2**32)))
        bad += not np.all(plan.membership.sum(axis=0) == k)
        both = np.sort(np.r_[plan.target_train, plan.target_test])
        bad += not (np.array_equal(both, np.arange(n))
                    and len(np.intersect1d(plan.target_train, plan.target_test)) == 0)
    elapsed = time.perf_counter() - t0
    verdict(3, "split balance", bad == 0 and elapsed < 5, f"{bad} violations in 50 plans, {elapsed:.2f}s")


def test_c04_roc_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    bad = 0
    for _ in range(200):
        n = int(rng.integers(2, 101))
        scores = rng.integers(0, rng.integers(1, 30), n) / 7.0
        labels = rng.random(n) < 0.5
        labels[0], labels[-1] = True, False
        curve = roc(scores, labels)
        pts = [(float(f), float(t)) for f, t in brute_roc_points(scores, labels)]
        bad += curve.points() != pts
        bad += auc(curve) != float(brute_auc(scores, labels))
        bad += any(tpr_at_fpr(curve, f) != float(brute_tpr_at_fpr(scores, labels, f))
                   for f in (0.001, 0.01, 0.1))
    elapsed = time.perf_counter() - t0
    verdict(4, "ROC/AUC/TPR oracle", bad == 0 and elapsed < 10,
            f"{bad} mismatches over 200 fixtures, {elapsed:.1f}s")


# --- criteria 5-10: the multi-seed audit ---------------------------------------

@pytest.fixture(scope="session")
def audit(tmp_path_factory):
    base = load_config(ROOT / "configs" / "acceptance.json")
    assert tuple(base.model.latencies) == LATENCIES
    root = tmp_path_factory.mktemp("acceptance")
    t0 = time.perf_counter()
    res = {"plain": {T: [] for T in LATENCIES}, "dropout": [], "ann": [], "gap": [], "dirs": []}
    for seed in SEEDS:
        cfg = base.replace(seed=seed)
        out = root / f"seed{seed}"
        exp = Experiment(cfg, out)
        for T in LATENCIES:
            r = exp.run(T)
            res["plain"][T].append(r.reports["attacks"])
            if T == 1:
                res["gap"].append(r.game.target.train_acc - r.game.target.test_acc)
        res["dropout"].append(exp.run(1, dropout=True, out_dir=out / "T1_dropout").reports["attacks"])
        ann_cfg = cfg.replace(model=replace(cfg.model, reference_kind="ann"))
        res["ann"].append(Experiment(ann_cfg, out).run(1, out_dir=out / "T1_ann_pool").reports["attacks"])
        res["dirs"].append(out)
    res["elapsed"] = time.perf_counter() - t0
    res["cfg"] = base
    return res


def median_auc(runs, attack="rmia"):
    return float(np.median([r[attack]["auc"] for r in runs]))


def test_c05_latency_trend(audit):
    med = [median_auc(audit["plain"][T]) for T in LATENCIES]
    ok = all(b >= a - 0.01 for a, b in zip(med, med[1:])) and audit["elapsed"] < 600
    verdict(5, "RMIA AUC non-decreasing in T", ok,
            ", ".join(f"T={T}: {m:.4f}" for T, m in zip(LATENCIES, med))
            + f" (audit runtime {audit['elapsed']:.0f}s)")


def test_c06_attack_ordering(audit):
    parts, ok = [], True
    for T in LATENCIES:
        runs = audit["plain"][T]
        r, ar, ap = median_auc(runs), median_auc(runs, "attack_r"), median_auc(runs, "attack_p")
        ok &= r >= ar - 0.01 and r >= ap - 0.01
        parts.append(f"T={T}: RMIA {r:.4f} R {ar:.4f} P {ap:.4f}")
    verdict(6, "RMIA strongest", ok, "; ".join(parts))


def test_c07_dropout_enhancement(audit):
    plain = np.array([r["rmia"]["auc"] for r in audit["plain"][1]])
    drop = np.array([r["rmia"]["auc"] for r in audit["dropout"]])
    wins = int((drop > plain).sum())
    ok = np.median(drop) >= np.median(plain) - 0.005 and wins >= 3
    verdict(7, "input dropout helps RMIA at T=1", ok,
            f"median {np.median(plain):.4f} -> {np.median(drop):.4f}, strictly better in {wins}/5 seeds")


def test_c08_cross_model(audit):
    ann, snn = median_auc(audit["ann"]), median_auc(audit["plain"][1])
    ok = ann > 0.5 and ann < snn + 0.01
    verdict(8, "ANN pool attacks SNN target", ok, f"ANN pool {ann:.4f}, SNN pool {snn:.4f}")


def test_c09_overfit_signal_floor(audit):
    gap = float(np.median(audit["gap"]))
    r = median_auc(audit["plain"][1])
    ok = min(audit["gap"]) >= 0.05 and r >= 0.55
    verdict(9, "overfit target is attackable", ok,
            f"train-test gap median {100 * gap:.1f} points (min {100 * min(audit['gap']):.1f}), "
            f"RMIA AUC {r:.4f}")


def test_c10_determinism(audit, tmp_path):
    cfg = audit["cfg"].replace(seed=0)
    exp = Experiment(cfg, tmp_path / "again")
    exp.run(1)
    exp.run(1, dropout=True, out_dir=tmp_path / "again" / "T1_dropout")
    first = audit["dirs"][0]
    same = [(tmp_path / "again" / sub / "scores.csv").read_bytes() == (first / sub / "scores.csv").read_bytes()
            for sub in ("T1", "T1_dropout")]
    verdict(10, "byte-identical rerun", all(same), f"scores.csv identical (plain, dropout): {same}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))

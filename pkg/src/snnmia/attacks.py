"""Membership scores (Attack-P, Attack-R, RMIA) and input-dropout confidences.

All indicator comparisons are non-strict (``>=``). Confidence arrays are
float64: ``target`` has shape (n_samples,), reference arrays (n_models,
n_samples) with a matching boolean IN-membership bitmap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .metrics import auc, roc
from .network import confidences

RMIA_EPS = 1e-12
ATTACKS = ("attack_p", "attack_p_orig", "attack_r", "rmia")


def attack_p_modified(target_conf) -> np.ndarray:
    """Score is the target's confidence itself."""
    return np.array(target_conf, dtype=np.float64)


def attack_p_original(target_conf, z_conf) -> np.ndarray:
    """Fraction of population samples ``z`` whose confidence ``x`` reaches."""
    z_conf = np.asarray(z_conf, dtype=np.float64)
    if z_conf.size == 0:
        raise ValueError("population set is empty")
    return kernels.count_ge(target_conf, z_conf) / z_conf.size


def attack_r(target_conf, ref_conf) -> np.ndarray:
    """Fraction of reference models the target is at least as confident as."""
    ref_conf = np.atleast_2d(np.asarray(ref_conf, dtype=np.float64))
    if ref_conf.shape[0] == 0:
        raise ValueError("reference pool is empty")
    hits = (np.asarray(target_conf, dtype=np.float64)[None, :] >= ref_conf).sum(axis=0)
    return hits / ref_conf.shape[0]


def rmia(target_conf, ref_conf, membership) -> np.ndarray:
    """Target confidence over the mean of IN and OUT reference confidences.

    ``membership`` must mark, per reference model and sample, whether the
    model trained on that sample. Each side is summed in sorted order so the
    score does not depend on how the pool is ordered.
    """
    if membership is None:
        raise ValueError("RMIA needs the reference IN/OUT bitmap")
    ref_conf = np.atleast_2d(np.asarray(ref_conf, dtype=np.float64))
    membership = np.asarray(membership, dtype=bool)
    if membership.shape != ref_conf.shape:
        raise ValueError(f"bitmap shape {membership.shape} != confidence shape {ref_conf.shape}")
    if ref_conf.shape[0] == 0:
        raise ValueError("reference pool is empty")
    in_sum = np.sort(np.where(membership, ref_conf, 0.0), axis=0).sum(axis=0)
    out_sum = np.sort(np.where(membership, 0.0, ref_conf), axis=0).sum(axis=0)
    denom = (in_sum + out_sum) / ref_conf.shape[0]
    return np.asarray(target_conf, dtype=np.float64) / np.maximum(denom, RMIA_EPS)


def score_all(target_conf, ref_conf, membership, attacks=ATTACKS) -> dict[str, np.ndarray]:
    out = {}
    for name in attacks:
        if name == "attack_p":
            out[name] = attack_p_modified(target_conf)
        elif name == "attack_p_orig":
            out[name] = attack_p_original(target_conf, target_conf)
        elif name == "attack_r":
            out[name] = attack_r(target_conf, ref_conf)
        elif name == "rmia":
            out[name] = rmia(target_conf, ref_conf, membership)
        else:
            raise ValueError(f"unknown attack {name!r}")
    return out


# --- input dropout ----------------------------------------------------------

@dataclass(frozen=True)
class DropoutSpec:
    """``p`` is the probability an input element is zeroed; ``n_passes`` masks are averaged."""

    p: float
    n_passes: int
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"dropout p must lie in [0, 1], got {self.p}")
        if self.n_passes < 1:
            raise ValueError("need at least one dropout pass")


_M = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix(z: np.ndarray) -> np.ndarray:
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def dropout_masks(sample_ids, pass_index: int, n_features: int, p: float, seed: int) -> np.ndarray:
    """Keep-masks (1 = kept, probability ``1 - p``) for one pass, one row per sample.

    Each element's uniform draw is a hash of (seed, sample id, pass, element),
    so masks do not depend on batch composition or evaluation order, and the
    same sample sees the same masks under every model.
    """
    ids = np.asarray(sample_ids, dtype=np.uint64).reshape(-1, 1)
    cols = np.arange(n_features, dtype=np.uint64).reshape(1, -1)
    with np.errstate(over="ignore"):
        key = _splitmix(np.full(1, seed, dtype=np.uint64) ^ np.uint64(0xD1B54A32D192ED03))
        key = _splitmix(key ^ np.uint64(pass_index))
        h = _splitmix(_splitmix(key ^ ids) ^ cols)
    u = (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
    return (u >= p).astype(np.float32)


def dropout_pass_confidences(model, x, labels, sample_ids, p: float, n_passes: int,
                             seed: int) -> np.ndarray:
    """Per-pass confidences, shape (n_passes, n_samples).

    For spiking models one mask is drawn per pass and applied to every one of
    the ``T`` constant-encoded replicas.
    """
    x = np.asarray(x, dtype=np.float32).reshape(len(labels), -1)
    out = np.empty((n_passes, len(labels)))
    for i in range(n_passes):
        mask = dropout_masks(sample_ids, i, x.shape[1], p, seed)
        out[i] = confidences(model, x * mask, labels)
    return out


def averaged(per_pass: np.ndarray, n_passes: int) -> np.ndarray:
    """Mean of the first ``n_passes`` rows, exact when all rows are equal."""
    base = per_pass[0]
    return base + (per_pass[1:n_passes] - base).sum(axis=0) / n_passes


def dropout_confidences(model, x, labels, sample_ids, spec: DropoutSpec) -> np.ndarray:
    per = dropout_pass_confidences(model, x, labels, sample_ids, spec.p, spec.n_passes, spec.seed)
    return averaged(per, spec.n_passes)


def dropout_confidence(model, x, y_true: int, spec: DropoutSpec, sample_id: int = 0) -> float:
    return float(dropout_confidences(model, np.atleast_2d(x), [y_true], [sample_id], spec)[0])


def input_weight_dropout_identity_check(W, X, M, activation, tol: float = 1e-12) -> bool:
    """Whether masking the input equals masking the weights of a one-layer model.

    ``W`` is (d,) or (d, k), ``X`` and ``M`` are (d,). Both sides are summed
    term by term in the same order.
    """
    W = np.asarray(W, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    W2 = W.reshape(len(X), -1)
    via_input = activation(np.sum(W2 * (M * X)[:, None], axis=0))
    via_weight = activation(np.sum((M[:, None] * W2) * X[:, None], axis=0))
    return bool(np.all(np.abs(via_input - via_weight) <= tol))


@dataclass
class GridSearchResult:
    spec: DropoutSpec
    surrogate_model: int
    attackers: list[int]
    cells: dict[tuple[float, int], float] = field(default_factory=dict)
    baseline_auc: float = float("nan")


def _surrogate_scores(attack, target_conf, ref_conf, ref_membership):
    return score_all(target_conf, ref_conf, ref_membership, (attack,))[attack]


def grid_search_dropout(models, x, labels, sample_ids, membership, attack: str,
                        p_grid, n_grid, seed: int, surrogate: int = 0) -> GridSearchResult:
    """Pick the (p, N) that maximises attack AUC against a stand-in target.

    Reference model ``surrogate`` plays the target and is attacked by the other
    references. Its pair partner is set aside as well (when more than one
    pair exists) so the attackers stay balanced between IN and OUT models.
    Ties go to the smaller ``p`` and then the smaller ``N``.
    """
    p_grid = sorted(float(p) for p in p_grid)
    n_grid = sorted(int(n) for n in n_grid)
    if not p_grid or not n_grid:
        raise ValueError("dropout grids must be non-empty")
    if len(models) < 2:
        raise ValueError("grid search needs at least two reference models")
    membership = np.asarray(membership, dtype=bool)
    partner = surrogate ^ 1
    attackers = [m for m in range(len(models))
                 if m != surrogate and not (len(models) > 2 and m == partner)]
    truth = membership[surrogate]
    involved = [surrogate] + attackers

    plain = np.array([confidences(models[m], x, labels) for m in involved])
    baseline = auc(roc(_surrogate_scores(attack, plain[0], plain[1:], membership[attackers]), truth))

    n_max = max(n_grid)
    best = None
    cells = {}
    for p in p_grid:
        per = [dropout_pass_confidences(models[m], x, labels, sample_ids, p, n_max, seed)
               for m in involved]
        for n in n_grid:
            conf = np.array([averaged(c, n) for c in per])
            s = _surrogate_scores(attack, conf[0], conf[1:], membership[attackers])
            a = auc(roc(s, truth))
            cells[(p, n)] = a
            if best is None or a > best[0]:
                best = (a, p, n)
    return GridSearchResult(DropoutSpec(best[1], best[2], seed), surrogate, attackers, cells, baseline)

"""ROC analysis of membership scores: curves, AUC, TPR at low FPR, histograms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FPR_TARGETS = (0.001, 0.01)


@dataclass(frozen=True, eq=False)
class RocCurve:
    """Operating points for thresholds at each distinct score, highest first.

    The first point has ``threshold = +inf`` and sits at (0, 0); the last is
    the lowest score and sits at (1, 1). ``tp``/``fp`` are raw counts of
    samples with ``score >= threshold``.
    """

    thresholds: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    n_pos: int
    n_neg: int

    @property
    def tpr(self) -> np.ndarray:
        return self.tp / self.n_pos

    @property
    def fpr(self) -> np.ndarray:
        return self.fp / self.n_neg

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def roc(scores, labels) -> RocCurve:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).astype(bool).reshape(-1)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both members and non-members")
    order = np.argsort(-scores, kind="stable")
    s, lab = scores[order], labels[order]
    tp = np.cumsum(lab)
    fp = np.cumsum(~lab)
    # last index of each run of tied scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    return RocCurve(
        thresholds=np.r_[np.inf, s[ends]],
        tp=np.r_[0, tp[ends]].astype(np.int64),
        fp=np.r_[0, fp[ends]].astype(np.int64),
        n_pos=n_pos,
        n_neg=n_neg,
    )


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve, accumulated in exact integer counts."""
    num = int(np.sum(np.diff(curve.fp) * (curve.tp[1:] + curve.tp[:-1])))
    return num / (2 * curve.n_pos * curve.n_neg)


def tpr_at_fpr(curve: RocCurve, fpr_target: float) -> float:
    """Best TPR over operating points whose FPR does not exceed the target.

    No interpolation: a low-FPR figure is never credited with a point the
    attack cannot actually reach.
    """
    ok = curve.fpr <= fpr_target
    return float(curve.tpr[ok].max())


def fpr_resolution_note(curve: RocCurve, fpr_target: float) -> str | None:
    if fpr_target < 1.0 / curve.n_neg:
        return (f"FPR target {fpr_target:g} is below the resolution 1/{curve.n_neg} "
                f"of {curve.n_neg} non-members")
    return None


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    member_counts: np.ndarray
    nonmember_counts: np.ndarray

    @property
    def overlap(self) -> int:
        return int(np.minimum(self.member_counts, self.nonmember_counts).sum())


def histogram(scores, labels, bins: int = 20) -> Histogram:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    edges = np.histogram_bin_edges(scores, bins=bins)
    mem, _ = np.histogram(scores[labels], bins=edges)
    non, _ = np.histogram(scores[~labels], bins=edges)
    return Histogram(edges, mem, non)


@dataclass(frozen=True, eq=False)
class AttackReport:
    auc: float
    tpr_at_0_1: float
    tpr_at_1: float
    curve: RocCurve
    hist: Histogram
    notes: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "auc": self.auc,
            "tpr_at_0.1%_fpr": self.tpr_at_0_1,
            "tpr_at_1%_fpr": self.tpr_at_1,
            "n_members": self.curve.n_pos,
            "n_nonmembers": self.curve.n_neg,
            "notes": list(self.notes),
        }


def attack_report(scores, labels, bins: int = 20) -> AttackReport:
    curve = roc(scores, labels)
    notes = tuple(n for n in (fpr_resolution_note(curve, t) for t in FPR_TARGETS) if n)
    return AttackReport(
        auc=auc(curve),
        tpr_at_0_1=tpr_at_fpr(curve, 0.001),
        tpr_at_1=tpr_at_fpr(curve, 0.01),
        curve=curve,
        hist=histogram(scores, labels, bins),
        notes=notes,
    )

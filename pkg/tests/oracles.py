"""Slow, obviously-correct reference implementations used as test oracles."""

from fractions import Fraction

import numpy as np


def brute_roc_points(scores, labels):
    """(fpr, tpr) as Fractions for the threshold +inf and every distinct score, descending."""
    scores = [float(s) for s in scores]
    labels = [bool(b) for b in labels]
    n_pos = sum(labels)
    n_neg = len(labels) - n_pos
    pts = [(Fraction(0), Fraction(0))]
    for t in sorted(set(scores), reverse=True):
        tp = sum(1 for s, b in zip(scores, labels) if b and s >= t)
        fp = sum(1 for s, b in zip(scores, labels) if not b and s >= t)
        pts.append((Fraction(fp, n_neg), Fraction(tp, n_pos)))
    return pts


def brute_auc(scores, labels):
    """Trapezoid over the brute-force sweep, in exact rationals."""
    pts = brute_roc_points(scores, labels)
    area = Fraction(0)
    for (f0, t0), (f1, t1) in zip(pts, pts[1:]):
        area += (f1 - f0) * (t0 + t1) / 2
    return area


def pairwise_auc(scores, labels):
    """Probability a member outscores a non-member, ties counted half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    m, n = scores[labels], scores[~labels]
    wins = (m[:, None] > n[None, :]).sum() + 0.5 * (m[:, None] == n[None, :]).sum()
    return Fraction(wins).limit_denominator() / (len(m) * len(n))


def brute_tpr_at_fpr(scores, labels, target):
    return max(t for f, t in brute_roc_points(scores, labels) if f <= Fraction(target))

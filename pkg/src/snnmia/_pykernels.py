"""Pure-numpy twins of the compiled kernels in ``_kernels.pyx``.

Each function reproduces the compiled arithmetic order exactly so that
results are bit-identical whichever backend is loaded.
"""

import numpy as np


def matmul(a, b):
    n, m = a.shape
    if b.shape[0] != m:
        raise ValueError(f"matmul shape mismatch: ({n}, {m}) x ({b.shape[0]}, {b.shape[1]})")
    out = np.zeros((n, b.shape[1]), dtype=np.float32)
    for k in range(m):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    return out


def lif_step(u_prev, current, decay, threshold, u_reset):
    if current.shape != u_prev.shape:
        raise ValueError("lif_step shape mismatch")
    u_pre = np.float32(decay) * u_prev
    u_pre += current
    fired = u_pre >= np.float32(threshold)
    spikes = fired.astype(np.float32)
    u_next = np.where(fired, np.float32(u_reset), u_pre).astype(np.float32)
    return u_next, spikes, u_pre


def triangle_surrogate(u, threshold, width):
    width = np.float32(width)
    v = np.float32(1.0) - np.abs(u - np.float32(threshold)) / width
    return np.where(v > 0, v / width, np.float32(0.0)).astype(np.float32)


def count_ge(values, refs):
    ordered = np.sort(refs)
    return np.searchsorted(ordered, values, side="right").astype(np.int64)

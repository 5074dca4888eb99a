"""Backend selection for the hot loops.

The compiled extension is used when it has been built; otherwise the numpy
twins are loaded. Set ``SNNMIA_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("SNNMIA_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels


def _f32(x):
    return np.ascontiguousarray(x, dtype=np.float32)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Float32 matrix product with sequential accumulation over the inner axis."""
    a, b = _f32(a), _f32(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    return _impl.matmul(a, b)


def lif_step(u_prev, current, decay, threshold, u_reset):
    """Fused integrate / fire / hard-reset step on arrays of any shape.

    Returns ``(u_next, spikes, u_pre)`` where ``u_pre`` is the potential
    before the reset was applied.
    """
    u_prev, current = _f32(u_prev), _f32(current)
    if u_prev.shape != current.shape:
        raise ValueError(f"lif_step shape mismatch: {u_prev.shape} vs {current.shape}")
    shape = u_prev.shape
    outs = _impl.lif_step(
        u_prev.reshape(-1), current.reshape(-1),
        np.float32(decay), np.float32(threshold), np.float32(u_reset),
    )
    return tuple(o.reshape(shape) for o in outs)


def triangle_surrogate(u, threshold, width):
    u = _f32(u)
    return _impl.triangle_surrogate(u.reshape(-1), np.float32(threshold), np.float32(width)).reshape(u.shape)


def count_ge(values, refs) -> np.ndarray:
    values = np.ascontiguousarray(values, dtype=np.float64)
    refs = np.ascontiguousarray(refs, dtype=np.float64)
    return _impl.count_ge(values.reshape(-1), refs.reshape(-1)).reshape(values.shape)

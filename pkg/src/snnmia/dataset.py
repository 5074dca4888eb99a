"""Desk-scale datasets and the split plan behind the membership game."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Features ``x`` (n, d) float32, integer labels ``y``, stable ``ids``."""

    x: np.ndarray
    y: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        if not (len(self.x) == len(self.y) == len(self.ids)):
            raise DatasetError("feature, label and id counts differ")
        if len(np.unique(self.ids)) != len(self.ids):
            raise DatasetError("sample ids must be unique")
        for a in (self.x, self.y, self.ids):
            a.setflags(write=False)

    @classmethod
    def from_arrays(cls, x, y, ids=None) -> "Dataset":
        x = np.ascontiguousarray(x, dtype=np.float32)
        if x.ndim == 1:
            x = x[:, None]
        y = np.asarray(y, dtype=np.int64)
        ids = np.arange(len(x), dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
        return cls(x, y, ids)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def n_features(self) -> int:
        return int(np.prod(self.x.shape[1:]))

    @property
    def n_classes(self) -> int:
        return int(self.y.max()) + 1 if len(self.y) else 0

    def flat(self) -> np.ndarray:
        return self.x.reshape(len(self.x), -1)

    def subset(self, index) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.x[index].copy(), self.y[index].copy(), self.ids[index].copy())

    def equals(self, other: "Dataset") -> bool:
        return (np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y)
                and np.array_equal(self.ids, other.ids))


def _simplex_centres(classes: int, dim: int, separation: float, rng) -> np.ndarray:
    """Vertices of a randomly rotated regular simplex with edge ``separation``.

    Needs ``dim >= classes - 1``; otherwise random directions are used and the
    separation only holds on average.
    """
    if classes == 1:
        return np.zeros((1, dim))
    if dim < classes - 1:
        dirs = rng.standard_normal((classes, dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        # random unit vectors are ~sqrt(2) apart on average
        return dirs * (separation / np.sqrt(2.0))
    centred = np.eye(classes) - 1.0 / classes
    u, _, _ = np.linalg.svd(centred)
    coords = centred @ u[:, : classes - 1]  # (classes, classes-1), edges sqrt(2)
    basis, _ = np.linalg.qr(rng.standard_normal((dim, classes - 1)))
    return coords @ basis.T * (separation / np.sqrt(2.0))


def make_blobs(n_per_class: int, classes: int, dim: int, separation: float, seed: int) -> Dataset:
    """Isotropic unit-variance Gaussian clusters, one per class.

    Class centres sit on a regular simplex, so every pair of centres is
    exactly ``separation`` standard deviations apart whenever
    ``dim >= classes - 1``.
    """
    if n_per_class < 1 or classes < 1 or dim < 1:
        raise DatasetError("n_per_class, classes and dim must be positive")
    rng = np.random.default_rng(seed)
    centres = _simplex_centres(classes, dim, separation, rng)
    x = np.concatenate([c + rng.standard_normal((n_per_class, dim)) for c in centres])
    y = np.repeat(np.arange(classes), n_per_class)
    # interleave classes so any prefix is roughly balanced
    order = rng.permutation(len(y))
    return Dataset.from_arrays(x[order], y[order])


_IDX_DTYPES = {0x08: np.uint8}


def _read_idx(path: Path, expect_dims: int) -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    if len(raw) < 4:
        raise DatasetError(f"{path}: truncated header")
    zero, dtype_code, ndim = struct.unpack(">HBB", raw[:4])
    if zero != 0 or dtype_code not in _IDX_DTYPES or ndim != expect_dims:
        raise DatasetError(f"{path}: bad magic 0x{int.from_bytes(raw[:4], 'big'):08x}")
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise DatasetError(f"{path}: truncated dimensions")
    dims = struct.unpack(f">{ndim}I", raw[4:head])
    count = int(np.prod(dims))
    if len(raw) - head < count:
        raise DatasetError(f"{path}: truncated payload ({len(raw) - head} of {count} bytes)")
    if len(raw) - head > count:
        raise DatasetError(f"{path}: trailing bytes after payload")
    return np.frombuffer(raw, dtype=np.uint8, offset=head, count=count).reshape(dims)


def load_idx(images_path, labels_path, limit: int | None = None) -> Dataset:
    """Load an IDX image/label pair (MNIST layout); pixels are scaled to [0, 1]."""
    images = _read_idx(images_path, 3)
    labels = _read_idx(labels_path, 1)
    if len(images) != len(labels):
        raise DatasetError(f"{len(images)} images but {len(labels)} labels")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    x = images.reshape(len(images), -1).astype(np.float32) / np.float32(255.0)
    return Dataset.from_arrays(x, labels.astype(np.int64))


def write_idx_pair(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    Path(images_path).write_bytes(struct.pack(">HBB", 0, 0x08, 3)
                                  + struct.pack(">3I", *images.shape) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">HBB", 0, 0x08, 1)
                                  + struct.pack(">I", len(labels)) + labels.tobytes())


def save_csv(ds: Dataset, path) -> None:
    """Rows of ``sample_id, label, features...``; floats written round-trippably."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "label"] + [f"f{i}" for i in range(ds.n_features)])
        for sid, label, row in zip(ds.ids, ds.y, ds.flat()):
            w.writerow([int(sid), int(label)] + [repr(float(v)) for v in row])


def load_csv(path) -> Dataset:
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0][:2] != ["sample_id", "label"]:
        raise DatasetError(f"{path}: missing sample_id,label header")
    body = rows[1:]
    ids = [int(r[0]) for r in body]
    y = [int(r[1]) for r in body]
    x = np.array([[float(v) for v in r[2:]] for r in body], dtype=np.float32)
    return Dataset.from_arrays(x, y, ids)


@dataclass(frozen=True, eq=False)
class SplitPlan:
    """Target halves plus ``n_pairs`` complementary reference-model splits.

    Index arrays are positions into the dataset, not sample ids.
    ``membership[m, i]`` is True when reference model ``m`` trains on sample
    ``i``; models ``2k`` and ``2k + 1`` form pair ``k`` and split the data
    between them.
    """

    seed: int
    target_train: np.ndarray
    target_test: np.ndarray
    membership: np.ndarray

    @property
    def n_pairs(self) -> int:
        return self.membership.shape[0] // 2

    @property
    def n_models(self) -> int:
        return self.membership.shape[0]

    def reference_train(self, m: int) -> np.ndarray:
        return np.flatnonzero(self.membership[m])

    def reference_test(self, m: int) -> np.ndarray:
        return np.flatnonzero(~self.membership[m])

    def member_bits(self, n: int | None = None) -> np.ndarray:
        n = self.membership.shape[1] if n is None else n
        bits = np.zeros(n, dtype=bool)
        bits[self.target_train] = True
        return bits


def plan_splits(D: Dataset | int, n_pairs: int, seed: int) -> SplitPlan:
    """Random halves for the target and for each reference pair.

    Each reference pair re-shuffles the whole dataset and splits it in two,
    so every sample is a training member of exactly ``n_pairs`` of the
    ``2 * n_pairs`` reference models.
    """
    n = D if isinstance(D, int) else len(D)
    if n % 2:
        raise DatasetError(f"dataset size must be even, got {n}")
    if n_pairs < 1:
        raise DatasetError("n_pairs must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, n, n_pairs]))
    half = n // 2
    perm = rng.permutation(n)
    membership = np.zeros((2 * n_pairs, n), dtype=bool)
    for k in range(n_pairs):
        p = rng.permutation(n)
        membership[2 * k, p[:half]] = True
        membership[2 * k + 1, p[half:]] = True
    plan = SplitPlan(seed, np.sort(perm[:half]), np.sort(perm[half:]), membership)
    for a in (plan.target_train, plan.target_test, plan.membership):
        a.setflags(write=False)
    return plan

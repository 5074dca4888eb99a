"""The online membership-inference game: target, reference pool, confidences.

Membership is evaluated exhaustively over the dataset: every sample is a
challenge, and exactly half of them are members of the target.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .attacks import DropoutSpec, dropout_confidences
from .dataset import Dataset, SplitPlan
from .network import (AnnNetwork, NeuronConfig, SpikingNetwork, confidences,
                      load_checkpoint, read_checkpoint_header, save_checkpoint)
from .trainer import TrainConfig, TrainedModel, TrainingDivergedError, accuracy, train


def derive_seed(master: int, *keys) -> int:
    """Deterministic 63-bit child seed for ``keys`` (ints or strings)."""
    words = [int(master) & 0xFFFFFFFFFFFFFFFF]
    for k in keys:
        words.append(zlib.crc32(k.encode()) if isinstance(k, str) else int(k))
    state = np.random.SeedSequence(words).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "snn"
    hidden: tuple[int, ...] = (64,)
    T: int = 1
    decay: float = 1.0
    threshold: float = 1.0
    u_reset: float = 0.0
    init_gain: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.kind not in ("snn", "ann"):
            raise ValueError(f"model kind must be 'snn' or 'ann', got {self.kind!r}")

    def build(self, n_features: int, n_classes: int, seed: int, surrogate_width: float = 1.0):
        sizes = (n_features, *self.hidden, n_classes)
        if self.kind == "ann":
            return AnnNetwork.create(sizes, seed=seed, gain=self.init_gain)
        neurons = NeuronConfig(self.decay, (self.threshold,) * len(self.hidden), self.u_reset,
                               surrogate_width)
        return SpikingNetwork.create(sizes, T=self.T, neurons=neurons, seed=seed, gain=self.init_gain)


@dataclass
class ReferencePool:
    """``2n`` reference models; ``membership[m, i]`` marks model ``m`` trained on sample ``i``."""

    models: list[TrainedModel]
    membership: np.ndarray
    kind: str

    def __post_init__(self):
        if len(self.models) != len(self.membership):
            raise ValueError("one membership row per reference model required")
        in_count = self.membership.sum(axis=0)
        if len(self.models) % 2 or not np.all(in_count == len(self.models) // 2):
            raise ValueError("every sample must be IN exactly half of the reference models")

    @property
    def networks(self) -> list:
        return [m.network for m in self.models]

    def __len__(self) -> int:
        return len(self.models)


@dataclass(frozen=True, eq=False)
class MembershipLabels:
    bits: np.ndarray

    def __post_init__(self):
        if 2 * int(self.bits.sum()) != len(self.bits):
            raise ValueError("exactly half of the samples must be members")


@dataclass(frozen=True, eq=False)
class ConfidenceTable:
    """``conf[i, 0]`` is the target's confidence on sample ``i``; columns 1.. the pool."""

    sample_ids: np.ndarray
    conf: np.ndarray
    dropout: DropoutSpec | None = None

    def __post_init__(self):
        if self.conf.shape[0] != len(self.sample_ids) or self.conf.shape[1] < 1:
            raise ValueError("confidence table shape does not match samples")
        if not np.all((self.conf > 0) & (self.conf < 1)):
            bad = self.conf[~((self.conf > 0) & (self.conf < 1))]
            raise ValueError(f"confidences must lie strictly inside (0, 1); got e.g. {bad[:3]}")

    @property
    def target(self) -> np.ndarray:
        return self.conf[:, 0]

    @property
    def references(self) -> np.ndarray:
        return self.conf[:, 1:].T

    def equals(self, other: "ConfidenceTable") -> bool:
        return (np.array_equal(self.sample_ids, other.sample_ids)
                and np.array_equal(self.conf, other.conf) and self.dropout == other.dropout)


@dataclass
class GameResult:
    target: TrainedModel
    pool: ReferencePool
    labels: MembershipLabels
    plan: SplitPlan
    checkpoints: list[Path] = field(default_factory=list)


@dataclass(frozen=True)
class _Job:
    index: int  # 0 = target, 1.. = reference models
    spec: ModelSpec
    cfg: TrainConfig
    train_idx: np.ndarray
    test_idx: np.ndarray
    init_seed: int
    ckpt: Path | None
    tag: str
    init_from: object = None


def _run_job(job: _Job, D: Dataset):
    train_ds, test_ds = D.subset(job.train_idx), D.subset(job.test_idx)
    if job.ckpt is not None and job.ckpt.exists():
        try:
            if read_checkpoint_header(job.ckpt).get("tag") == job.tag:
                net, _ = load_checkpoint(job.ckpt)
                return TrainedModel(net, accuracy(net, train_ds), accuracy(net, test_ds))
        except (ValueError, OSError):
            pass
    if job.init_from is not None:
        net = job.init_from.with_latency(job.spec.T)
    else:
        net = job.spec.build(D.n_features, D.n_classes, job.init_seed, job.cfg.surrogate_width)
    try:
        log_path = None if job.ckpt is None else job.ckpt.with_suffix(".log.jsonl")
        model = train(net, train_ds, test_ds, job.cfg, log_path=log_path)
    except TrainingDivergedError as exc:
        raise TrainingDivergedError(exc.epoch, f"model {job.index}") from exc
    if job.ckpt is not None:
        save_checkpoint(model.network, job.ckpt, job.tag)
    return model


def _run_job_star(args):
    return _run_job(*args)


def run_game(D: Dataset, plan: SplitPlan, spec: ModelSpec, cfg: TrainConfig, seed: int = 0,
             pool_spec: ModelSpec | None = None, workers: int = 1, ckpt_dir=None,
             tag: Callable[[int, ModelSpec], str] | None = None,
             init_from: GameResult | None = None) -> GameResult:
    """Train the target and the ``2n`` reference models described by ``plan``.

    ``pool_spec`` lets the reference models differ in kind from the target
    (for example ANN references against a spiking target). With
    ``init_from``, every model starts from the corresponding model of an
    earlier game (sequential latency training). Checkpoints in ``ckpt_dir``
    whose tag matches are reused instead of retrained.
    """
    if plan.membership.shape[1] != len(D):
        raise ValueError("split plan was made for a different dataset size")
    pool_spec = pool_spec or spec
    all_idx = np.arange(len(D))
    jobs = []
    for i in range(plan.n_models + 1):
        s = spec if i == 0 else pool_spec
        if i == 0:
            tr, te = plan.target_train, plan.target_test
        else:
            tr, te = plan.reference_train(i - 1), plan.reference_test(i - 1)
        role = "target" if i == 0 else f"ref{i - 1:03d}"
        model_seed = derive_seed(seed, role, s.kind)
        ckpt = None if ckpt_dir is None else Path(ckpt_dir) / f"{role}.ckpt"
        prev = None
        if init_from is not None and s.kind == "snn":
            prev = (init_from.target if i == 0 else init_from.pool.models[i - 1]).network
        jobs.append(_Job(i, s, cfg.replace(seed=model_seed), tr, te if len(te) else all_idx[:0],
                         model_seed, ckpt, tag(i, s) if tag else "", prev))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            models = list(ex.map(_run_job_star, [(j, D) for j in jobs]))
    else:
        models = [_run_job(j, D) for j in jobs]
    pool = ReferencePool(models[1:], plan.membership, pool_spec.kind)
    labels = MembershipLabels(plan.member_bits(len(D)))
    ckpts = [j.ckpt for j in jobs if j.ckpt is not None]
    return GameResult(models[0], pool, labels, plan, ckpts)


def build_confidence_table(models, D: Dataset, dropout: DropoutSpec | None = None) -> ConfidenceTable:
    """Confidence of every model (target first) on every sample's true label."""
    x = D.flat()
    cols = []
    for m in models:
        net = m.network if isinstance(m, TrainedModel) else m
        if dropout is None:
            cols.append(confidences(net, x, D.y))
        else:
            cols.append(dropout_confidences(net, x, D.y, D.ids, dropout))
    conf = np.stack(cols, axis=1)
    return ConfidenceTable(D.ids.copy(), conf, dropout)


def write_confidence_csv(table: ConfidenceTable, path, header: str = "") -> None:
    flag = 1 if table.dropout is not None else 0
    with open(path, "w") as fh:
        if header:
            fh.write(header + "\n")
        fh.write("sample_id,model_id,conf,dropout_flag\n")
        for sid, row in zip(table.sample_ids, table.conf):
            for m, c in enumerate(row):
                fh.write(f"{int(sid)},{m},{float(c)!r},{flag}\n")


def write_labels_csv(ids, labels: MembershipLabels, path, header: str = "") -> None:
    with open(path, "w") as fh:
        if header:
            fh.write(header + "\n")
        fh.write("sample_id,member\n")
        for sid, b in zip(ids, labels.bits):
            fh.write(f"{int(sid)},{int(b)}\n")

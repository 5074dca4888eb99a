"""Minibatch training of spiking networks (surrogate gradients) and ANNs."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .network import AnnNetwork, SpikingNetwork
from .tensor import GradTape, NonFiniteError, Tensor, cross_entropy


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, detail: str = ""):
        self.epoch = epoch
        super().__init__(f"training diverged at epoch {epoch}" + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    optimizer: str = "sgd"
    surrogate_width: float = 1.0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.surrogate_width <= 0:
            raise ValueError("surrogate width must be positive")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def overfit_regime(cfg: TrainConfig) -> TrainConfig:
    """Audit-target variant of ``cfg``: twice the epochs and no weight decay.

    Membership inference needs a generalization gap to find; pair this with
    a small training set (a few hundred samples per model) to get one.
    """
    return cfg.replace(epochs=max(2 * cfg.epochs, 1), weight_decay=0.0)


@dataclass
class TrainedModel:
    network: object
    train_acc: float
    test_acc: float
    loss_trace: list[float] = field(default_factory=list)
    log: list[dict] = field(default_factory=list)


def accuracy(net, ds: Dataset, batch: int = 1024) -> float:
    if len(ds) == 0:
        return float("nan")
    x = ds.flat()
    correct = 0
    for i in range(0, len(ds), batch):
        correct += int((net.predict(x[i:i + batch]) == ds.y[i:i + batch]).sum())
    return correct / len(ds)


def _clone(net):
    params = [p.data.copy() for p in net.parameters()]
    if isinstance(net, SpikingNetwork):
        out = net.with_latency(net.T)
    else:
        out = AnnNetwork(net.layer_sizes, list(net.layers))
    out.set_parameters(params)
    return out


class _Optimizer:
    def __init__(self, params: list[np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.lr = np.float32(cfg.lr)
        self.wd = np.float32(cfg.weight_decay)
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        cfg = self.cfg
        self.t += 1
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            if self.wd:
                g = g + self.wd * p
            if cfg.optimizer == "sgd":
                self.m[i] = np.float32(cfg.momentum) * self.m[i] + g
                out.append(p - self.lr * self.m[i])
            else:
                b1, b2 = np.float32(0.9), np.float32(0.999)
                self.m[i] = b1 * self.m[i] + (1 - b1) * g
                self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
                mhat = self.m[i] / np.float32(1 - 0.9 ** self.t)
                vhat = self.v[i] / np.float32(1 - 0.999 ** self.t)
                out.append(p - self.lr * mhat / (np.sqrt(vhat) + np.float32(1e-8)))
        return [o.astype(np.float32) for o in out]


def train(net, train_ds: Dataset, test_ds: Dataset | None, cfg: TrainConfig,
          log_path=None) -> TrainedModel:
    """Train a copy of ``net`` with cross-entropy on its output logits.

    For spiking networks the logits are the output-layer potential after the
    final time step and the Heaviside derivative is replaced by the triangular
    surrogate of width ``cfg.surrogate_width``.
    """
    if len(train_ds) and (train_ds.y.min() < 0 or train_ds.y.max() >= net.n_classes):
        raise ValueError("training labels exceed the network's class count")
    net = _clone(net)
    if isinstance(net, SpikingNetwork):
        net.neurons = dataclasses.replace(net.neurons, surrogate_width=cfg.surrogate_width)
    x, y = train_ds.flat(), train_ds.y
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5EED]))
    opt = _Optimizer([p.data for p in net.parameters()], cfg)
    trace, log = [], []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(y))
        total, seen = 0.0, 0
        try:
            for i in range(0, len(order), cfg.batch_size):
                idx = order[i:i + cfg.batch_size]
                params = net.parameters()
                with GradTape() as tape:
                    loss = cross_entropy(net.forward_taped(x[idx]), y[idx])
                grads = tape.backward(loss, params)
                if cfg.lr:
                    new = opt.step([p.data for p in params], grads)
                    net.set_parameters([Tensor(a).data for a in new])
                total += loss.item() * len(idx)
                seen += len(idx)
        except NonFiniteError as exc:
            raise TrainingDivergedError(epoch, str(exc)) from exc
        mean_loss = total / max(seen, 1)
        if not np.isfinite(mean_loss):
            raise TrainingDivergedError(epoch, "loss is not finite")
        trace.append(mean_loss)
        if log_path is not None:
            log.append({"epoch": epoch, "loss": mean_loss,
                        "train_acc": accuracy(net, train_ds),
                        "test_acc": accuracy(net, test_ds) if test_ds is not None else None})
    model = TrainedModel(net, accuracy(net, train_ds),
                         accuracy(net, test_ds) if test_ds is not None else float("nan"),
                         trace, log)
    if log_path is not None:
        write_log(model, log_path)
    return model


def write_log(model: TrainedModel, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for rec in model.log:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def sequential_latency_train(base: TrainedModel, T_new: int, train_ds: Dataset,
                             test_ds: Dataset | None, cfg: TrainConfig,
                             layer_sizes=None, log_path=None) -> TrainedModel:
    """Initialise a latency-``T_new`` network from ``base`` and keep training."""
    net = base.network
    if not isinstance(net, SpikingNetwork):
        raise ValueError("sequential latency training needs a spiking base model")
    if layer_sizes is not None and tuple(layer_sizes) != net.layer_sizes:
        raise ValueError(f"architecture mismatch: {tuple(layer_sizes)} vs {net.layer_sizes}")
    if T_new <= net.T:
        raise ValueError(f"target latency {T_new} must exceed base latency {net.T}")
    return train(net.with_latency(T_new), train_ds, test_ds, cfg, log_path=log_path)

"""Layered spiking (IF/LIF) and sigmoid networks, constant encoding, checkpoints.

Hidden spiking layers integrate ``U = decay * U_prev + W x + b``, emit a
spike wherever ``U >= threshold`` and hard-reset those neurons to
``u_reset``. The output layer only integrates; its potential after the last
time step is the logit vector.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from . import tensor as tn
from .tensor import Tensor

MAGIC = b"SNNMIA-CKPT\n"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class NeuronConfig:
    """Membrane dynamics shared by all hidden layers of a spiking network.

    ``decay == 1`` gives integrate-and-fire neurons, ``decay < 1`` leaky ones.
    ``thresholds`` holds one scalar firing threshold per hidden layer.
    """

    decay: float = 1.0
    thresholds: tuple[float, ...] = (1.0,)
    u_reset: float = 0.0
    surrogate_width: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if not 0.0 < self.decay <= 1.0:
            raise ValueError(f"decay must lie in (0, 1], got {self.decay}")
        if self.surrogate_width <= 0:
            raise ValueError("surrogate width must be positive")
        for th in self.thresholds:
            if not th > 0 or not th > self.u_reset:
                raise ValueError(f"threshold {th} must be > 0 and > u_reset={self.u_reset}")

    @property
    def is_integrate_and_fire(self) -> bool:
        return self.decay == 1.0


class EncodedInput:
    """Constant encoding: the same input presented at each of ``T`` steps.

    The replicas are not materialised unless :meth:`stacked` is called.
    """

    def __init__(self, x, T: int):
        if int(T) != T or T < 1:
            raise ValueError(f"latency must be a positive integer, got {T}")
        self.x = np.ascontiguousarray(x, dtype=np.float32)
        self.T = int(T)

    def __len__(self) -> int:
        return self.T

    def __getitem__(self, t: int) -> np.ndarray:
        if not -self.T <= t < self.T:
            raise IndexError(t)
        return self.x

    def stacked(self) -> np.ndarray:
        return np.broadcast_to(self.x, (self.T,) + self.x.shape).copy()


def constant_encode(x, T: int) -> EncodedInput:
    return EncodedInput(x, T)


def lif_step(u_prev, current, cfg: NeuronConfig, layer: int = 0):
    """One membrane update of hidden layer ``layer``; returns ``(u_next, spikes)``."""
    u_next, spikes, _ = kernels.lif_step(
        u_prev, current, cfg.decay, cfg.thresholds[layer], cfg.u_reset
    )
    return u_next, spikes


def _init_layers(sizes: Sequence[int], rng: np.random.Generator, gain: float):
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = (rng.standard_normal((fan_in, fan_out)) * (gain / np.sqrt(fan_in))).astype(np.float32)
        layers.append((Tensor(w, requires_grad=True), Tensor(np.zeros(fan_out), requires_grad=True)))
    return layers


@dataclass(eq=False)
class _Layered:
    layer_sizes: tuple[int, ...]
    layers: list = field(repr=False)

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self) -> list[Tensor]:
        return [p for pair in self.layers for p in pair]

    def set_parameters(self, arrays: Sequence[np.ndarray]) -> None:
        it = iter(arrays)
        self.layers = [(Tensor(next(it), requires_grad=True), Tensor(next(it), requires_grad=True))
                       for _ in self.layers]

    def weights_equal(self, other: "_Layered") -> bool:
        return self.layer_sizes == other.layer_sizes and all(
            np.array_equal(a.data, b.data) for a, b in zip(self.parameters(), other.parameters())
        )

    def predict(self, x) -> np.ndarray:
        return self.forward(x).argmax(axis=1)


@dataclass(eq=False)
class SpikingNetwork(_Layered):
    neurons: NeuronConfig = field(default_factory=NeuronConfig)
    T: int = 1
    kind = "snn"

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if self.T < 1:
            raise ValueError("latency must be >= 1")
        if len(self.neurons.thresholds) != len(self.layer_sizes) - 2:
            raise ValueError(
                f"{len(self.layer_sizes) - 2} hidden layers but "
                f"{len(self.neurons.thresholds)} thresholds"
            )

    @classmethod
    def create(cls, layer_sizes, T=1, neurons: NeuronConfig | None = None, seed=0, gain=1.0):
        hidden = len(layer_sizes) - 2
        if neurons is None:
            neurons = NeuronConfig(thresholds=(1.0,) * hidden)
        layers = _init_layers(layer_sizes, np.random.default_rng(seed), gain)
        return cls(tuple(layer_sizes), layers, neurons, T)

    def with_latency(self, T: int) -> "SpikingNetwork":
        """Copy sharing the same weights, evaluated at latency ``T``."""
        layers = [(Tensor(w.data, True), Tensor(b.data, True)) for w, b in self.layers]
        return SpikingNetwork(self.layer_sizes, layers, self.neurons, T)

    def forward(self, x, T: int | None = None) -> np.ndarray:
        enc = x if isinstance(x, EncodedInput) else constant_encode(x, self.T if T is None else T)
        return snn_forward(self, enc)

    def forward_taped(self, x) -> Tensor:
        """Time-unrolled forward built from differentiable primitives."""
        x = tn.as_tensor(np.atleast_2d(np.asarray(x, dtype=np.float32)))
        cfg = self.neurons
        hidden = self.layers[:-1]
        w_out, b_out = self.layers[-1]
        u = [None] * len(hidden)
        u_out = None
        # constant encoding: the first-layer current is the same at every step
        first_current = tn.add(tn.matmul(x, hidden[0][0]), hidden[0][1]) if hidden else None
        for _ in range(self.T):
            h = x
            for li, (w, b) in enumerate(hidden):
                cur = first_current if li == 0 else tn.add(tn.matmul(h, w), b)
                pre = cur if u[li] is None else tn.add(tn.scale(u[li], cfg.decay), cur)
                spikes = tn.heaviside(pre, cfg.thresholds[li], cfg.surrogate_width)
                u[li] = tn.hard_reset(pre, spikes, cfg.u_reset)
                h = spikes
            cur = tn.add(tn.matmul(h, w_out), b_out)
            u_out = cur if u_out is None else tn.add(tn.scale(u_out, cfg.decay), cur)
        return u_out


def snn_forward(net: SpikingNetwork, enc: EncodedInput, return_spikes: bool = False):
    """Logits ``U_L^T`` for a (batch of) encoded input(s).

    Membrane state starts at zero. With ``return_spikes`` the per-step hidden
    spike tensors are returned as well, as ``spikes[t][layer]``.
    """
    if enc.T != net.T:
        raise ValueError(f"encoded latency {enc.T} != network latency {net.T}")
    single = enc.x.ndim == 1
    x = np.atleast_2d(enc.x)
    cfg = net.neurons
    hidden = net.layers[:-1]
    w_out, b_out = net.layers[-1]
    u = [np.zeros((x.shape[0], w.shape[1]), dtype=np.float32) for w, _ in hidden]
    u_out = np.zeros((x.shape[0], w_out.shape[1]), dtype=np.float32)
    trace = []
    first = kernels.matmul(x, hidden[0][0].data) + hidden[0][1].data if hidden else None
    decay = np.float32(cfg.decay)
    for t in range(enc.T):
        h = x
        step = []
        for li, (w, b) in enumerate(hidden):
            cur = first if li == 0 else kernels.matmul(h, w.data) + b.data
            u[li], h, _ = kernels.lif_step(u[li], cur, cfg.decay, cfg.thresholds[li], cfg.u_reset)
            step.append(h)
        cur = kernels.matmul(h, w_out.data) + b_out.data
        u_out = cur if t == 0 else decay * u_out + cur
        trace.append(step)
    logits = u_out[0] if single else u_out
    return (logits, trace) if return_spikes else logits


@dataclass(eq=False)
class AnnNetwork(_Layered):
    """Same layer stack with sigmoid hidden units and a linear output."""

    kind = "ann"

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)

    @property
    def T(self):
        return None

    @classmethod
    def create(cls, layer_sizes, seed=0, gain=1.0):
        return cls(tuple(layer_sizes), _init_layers(layer_sizes, np.random.default_rng(seed), gain))

    def forward(self, x) -> np.ndarray:
        if isinstance(x, EncodedInput):
            x = x.x
        single = np.ndim(x) == 1
        h = np.atleast_2d(np.asarray(x, dtype=np.float32))
        for li, (w, b) in enumerate(self.layers):
            h = kernels.matmul(h, w.data) + b.data
            if li < len(self.layers) - 1:
                h = (1.0 / (1.0 + np.exp(-h.astype(np.float64)))).astype(np.float32)
        return h[0] if single else h

    def forward_taped(self, x) -> Tensor:
        h = tn.as_tensor(np.atleast_2d(np.asarray(x, dtype=np.float32)))
        for li, (w, b) in enumerate(self.layers):
            h = tn.add(tn.matmul(h, w), b)
            if li < len(self.layers) - 1:
                h = tn.sigmoid(h)
        return h


def confidences(net, x, labels) -> np.ndarray:
    """Softmax probability of each sample's true label, as float64."""
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.size and (labels.min() < 0 or labels.max() >= net.n_classes):
        raise ValueError(f"label out of range for {net.n_classes} classes")
    logits = np.atleast_2d(net.forward(x)).astype(np.float64)
    probs = tn.softmax_array(logits, axis=1)
    return probs[np.arange(len(labels)), labels]


def confidence(net, x, y_true: int) -> float:
    return float(confidences(net, np.atleast_2d(x), [y_true])[0])


# --- checkpoints ------------------------------------------------------------

def _header(net, tag: str) -> dict:
    head = {"kind": net.kind, "layer_sizes": list(net.layer_sizes), "tag": tag}
    if net.kind == "snn":
        head.update(
            T=net.T,
            decay=float(net.neurons.decay),
            thresholds=list(net.neurons.thresholds),
            u_reset=float(net.neurons.u_reset),
            surrogate_width=float(net.neurons.surrogate_width),
        )
    return head


def checkpoint_bytes(net, tag: str = "") -> bytes:
    head = json.dumps(_header(net, tag), sort_keys=True, separators=(",", ":")).encode()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", CKPT_VERSION, len(head)))
    buf.write(head)
    for p in net.parameters():
        buf.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    return buf.getvalue()


def save_checkpoint(net, path, tag: str = "") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(checkpoint_bytes(net, tag))
    tmp.replace(path)


def read_checkpoint_header(path) -> dict:
    with open(path, "rb") as fh:
        head, _ = _parse_head(fh.read(len(MAGIC) + 8), fh)
    return head


def _parse_head(prefix: bytes, fh):
    if len(prefix) < len(MAGIC) + 8 or prefix[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", prefix[len(MAGIC):])
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    raw = fh.read(hlen)
    if len(raw) != hlen:
        raise CheckpointError("truncated checkpoint header")
    return json.loads(raw), hlen


def load_checkpoint(path):
    """Returns ``(network, tag)``."""
    with open(path, "rb") as fh:
        head, _ = _parse_head(fh.read(len(MAGIC) + 8), fh)
        payload = fh.read()
    sizes = head["layer_sizes"]
    arrays, off = [], 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        for shape in ((fan_in, fan_out), (fan_out,)):
            n = int(np.prod(shape)) * 4
            if off + n > len(payload):
                raise CheckpointError("truncated weight block")
            arrays.append(np.frombuffer(payload, dtype="<f4", count=n // 4, offset=off).reshape(shape))
            off += n
    if off != len(payload):
        raise CheckpointError("trailing bytes after weight blocks")
    layers = [(Tensor(arrays[i], True), Tensor(arrays[i + 1], True)) for i in range(0, len(arrays), 2)]
    if head["kind"] == "snn":
        neurons = NeuronConfig(head["decay"], tuple(head["thresholds"]), head["u_reset"],
                               head["surrogate_width"])
        net = SpikingNetwork(tuple(sizes), layers, neurons, head["T"])
    elif head["kind"] == "ann":
        net = AnnNetwork(tuple(sizes), layers)
    else:
        raise CheckpointError(f"unknown model kind {head['kind']!r}")
    return net, head.get("tag", "")

"""Actor and critic MLPs with a configurable representation head.

Actor: obs -> linear+relu -> linear+relu -> head -> linear -> tanh.
Critic: concat(obs, action) -> linear+relu -> linear+relu -> head -> linear,
emitting either n_atoms logits (distributional mode) or one scalar.

The head replaces the penultimate activation: the baseline head is an extra
linear+relu pair; the concatenated-ReLU head consumes the second layer's
pre-activation (applying it after a ReLU would zero its negative half).
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import autodiff as ad
from . import heads as hd
from .autodiff import Tensor


class Linear:
    def __init__(self, in_dim: int, out_dim: int, rng: ad.Rng):
        bound = 1.0 / np.sqrt(in_dim)
        self.w = Tensor(rng.uniform(-bound, bound, (in_dim, out_dim)), requires_grad=True)
        self.b = Tensor(rng.uniform(-bound, bound, out_dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add_bias(ad.matmul(x, self.w), self.b)

    def params(self):
        return [self.w, self.b]


class ForwardOut(NamedTuple):
    output: Tensor   # action (actor) or logits (critic)
    penult: Tensor   # post-head features, for diagnostics
    aux_loss: Optional[Tensor]  # vector-quantization loss, if any


class _HeadedMlp:
    """Shared trunk/head/out wiring for actor and critic."""

    def __init__(self, in_dim: int, out_dim: int, hidden: int,
                 head: hd.HeadKind, rng: ad.Rng):
        self.head_kind = head
        self.hidden = hidden
        self.l1 = Linear(in_dim, hidden, rng.split(0))
        self.l2 = Linear(hidden, hidden, rng.split(1))
        self.head_linear = None
        self.codebook = None
        if isinstance(head, hd.Baseline):
            self.head_linear = Linear(hidden, hidden, rng.split(2))
        elif isinstance(head, hd.Vq):
            self.codebook = Tensor(head.cfg.initial_codebook(rng.split(2)),
                                   requires_grad=True)
        elif isinstance(head, (hd.Sem, hd.GumbelST)):
            if head.cfg.width != hidden:
                raise hd.ConfigError(
                    f"head width L*V={head.cfg.width} != hidden {hidden}")
        self.out = Linear(hd.head_output_width(head, hidden), out_dim, rng.split(3))

    def _apply_head(self, pre2: Tensor, rng, train, gumbel_noise, soft_vq,
                    vq_frozen=None):
        kind = self.head_kind
        if isinstance(kind, hd.CRelu):
            return hd.crelu_forward(pre2), None
        h2 = ad.relu(pre2)
        if isinstance(kind, hd.Baseline):
            return ad.relu(self.head_linear(h2)), None
        if isinstance(kind, hd.Sem):
            return hd.sem_forward(h2, kind.cfg), None
        if isinstance(kind, hd.GumbelST):
            return hd.gumbel_st_forward(h2, kind.cfg, rng, train, noise=gumbel_noise), None
        if isinstance(kind, hd.Vq):
            quantized, vq_loss = hd.vq_forward(h2, self.codebook, kind.cfg,
                                               soft=soft_vq, frozen=vq_frozen)
            return quantized, vq_loss
        raise hd.ConfigError(f"unknown head kind {kind}")

    def trunk_and_head(self, x: Tensor, rng=None, train=False, gumbel_noise=None,
                       soft_vq=False, vq_frozen=None):
        pre2 = self.l2(ad.relu(self.l1(x)))
        return self._apply_head(pre2, rng, train, gumbel_noise, soft_vq, vq_frozen)

    def named_parameters(self):
        items = [("l1.w", self.l1.w), ("l1.b", self.l1.b),
                 ("l2.w", self.l2.w), ("l2.b", self.l2.b)]
        if self.head_linear is not None:
            items += [("head.w", self.head_linear.w), ("head.b", self.head_linear.b)]
        if self.codebook is not None:
            items.append(("head.codebook", self.codebook))
        items += [("out.w", self.out.w), ("out.b", self.out.b)]
        return items

    def params(self):
        return [p for _, p in self.named_parameters()]


class ActorNet(_HeadedMlp):
    def __init__(self, obs_dim: int, action_dim: int, head: hd.HeadKind,
                 rng: ad.Rng, hidden: int = 512):
        super().__init__(obs_dim, action_dim, hidden, head, rng)
        self.obs_dim = obs_dim
        self.action_dim = action_dim

    def forward(self, obs, rng=None, train=False, gumbel_noise=None,
                soft_vq=False, vq_frozen=None) -> ForwardOut:
        x = obs if isinstance(obs, Tensor) else Tensor(obs)
        if x.shape[1] != self.obs_dim:
            raise ad.ShapeError(f"actor: obs width {x.shape[1]} != {self.obs_dim}")
        penult, aux = self.trunk_and_head(x, rng, train, gumbel_noise, soft_vq,
                                          vq_frozen)
        action = ad.tanh(self.out(penult))
        return ForwardOut(action, penult, aux)

    def act(self, obs) -> np.ndarray:
        """Deterministic action values (no exploration noise)."""
        return self.forward(obs, train=False).output.data


class CriticNet(_HeadedMlp):
    def __init__(self, obs_dim: int, action_dim: int, head: hd.HeadKind,
                 rng: ad.Rng, hidden: int = 1024, n_out: int = 101):
        super().__init__(obs_dim + action_dim, n_out, hidden, head, rng)
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.n_out = n_out

    def forward(self, obs, action, rng=None, train=False, gumbel_noise=None,
                soft_vq=False, vq_frozen=None) -> ForwardOut:
        x = obs if isinstance(obs, Tensor) else Tensor(obs)
        a = action if isinstance(action, Tensor) else Tensor(action)
        if x.shape[1] != self.obs_dim or a.shape[1] != self.action_dim:
            raise ad.ShapeError(
                f"critic: got obs {x.shape[1]} / action {a.shape[1]}, "
                f"expected {self.obs_dim} / {self.action_dim}")
        penult, aux = self.trunk_and_head(ad.concat(x, a, axis=1), rng, train,
                                          gumbel_noise, soft_vq, vq_frozen)
        logits = self.out(penult)
        return ForwardOut(logits, penult, aux)


# ---------------------------------------------------------------------------
# target networks
# ---------------------------------------------------------------------------

@dataclass
class TargetPair:
    online: list   # list of Tensors
    target: list
    polyak: float = 0.995


def clone_params(params):
    return [Tensor(p.data.copy()) for p in params]


def hard_update(pair: TargetPair):
    _check_congruent(pair)
    for o, t in zip(pair.online, pair.target):
        t.data[...] = o.data


def polyak_update(pair: TargetPair, rho: Optional[float] = None):
    """target <- rho*target + (1-rho)*online, per parameter."""
    _check_congruent(pair)
    rho = pair.polyak if rho is None else rho
    for o, t in zip(pair.online, pair.target):
        t.data *= rho
        t.data += (1.0 - rho) * o.data


def target_update(pair: TargetPair, mode: str = "polyak", rho: Optional[float] = None):
    if mode == "hard":
        hard_update(pair)
    elif mode == "polyak":
        polyak_update(pair, rho)
    else:
        raise ad.ContractError(f"unknown target update mode {mode!r}")


def _check_congruent(pair: TargetPair):
    if len(pair.online) != len(pair.target) or any(
            o.shape != t.shape for o, t in zip(pair.online, pair.target)):
        raise ad.ContractError("target_update: online/target shape mismatch")


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

MAGIC = b"SACX"
FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def checkpoint_save(named_entries, path):
    """Write named float32 arrays: magic, u32 version, u32 count, then per
    entry (u16 name length, UTF-8 name, u8 rank, u32 extents..., f32 LE data).
    """
    buf = io.BytesIO()
    entries = list(named_entries)
    buf.write(MAGIC)
    buf.write(struct.pack("<II", FORMAT_VERSION, len(entries)))
    for name, values in entries:
        arr = np.asarray(values, dtype="<f4")
        nb = name.encode("utf-8")
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def _read(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated checkpoint while reading {what} "
                          f"at offset {fh.tell() - len(data)}")
    return data


def checkpoint_load(path):
    """Read a checkpoint back as an ordered list of (name, float32 ndarray)."""
    with open(path, "rb") as fh:
        if _read(fh, 4, "magic") != MAGIC:
            raise FormatError("bad magic bytes at offset 0")
        version, count = struct.unpack("<II", _read(fh, 8, "header"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported version {version} at offset 4")
        entries = []
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read(fh, 2, "name length"))
            name = _read(fh, name_len, "name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read(fh, 1, "rank"))
            shape = struct.unpack(f"<{rank}I", _read(fh, 4 * rank, "extents"))
            n_items = int(np.prod(shape)) if rank else 1
            payload = _read(fh, 4 * n_items, f"payload of {name}")
            arr = np.frombuffer(payload, dtype="<f4").reshape(shape)
            entries.append((name, arr.copy()))
        return entries


def save_net(net: _HeadedMlp, path, prefix=""):
    checkpoint_save([(prefix + n, p.data) for n, p in net.named_parameters()], path)


def load_into_net(net: _HeadedMlp, path, prefix=""):
    entries = dict(checkpoint_load(path))
    for name, p in net.named_parameters():
        arr = entries[prefix + name]
        if arr.shape != p.data.shape:
            raise FormatError(f"entry {name}: shape {arr.shape} != {p.data.shape}")
        p.data[...] = arr.astype(np.float64)

"""Representation heads applied at the penultimate layer of actor/critic nets.

Five kinds: a plain linear+ReLU baseline, the simplicial (group-softmax)
head, Gumbel sampling with a straight-through estimator, vector quantization
with a learned codebook, and concatenated ReLU.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SemConfig:
    L: int  # number of simplices
    V: int  # simplex dimension
    tau: float = 1.0

    def __post_init__(self):
        if self.L < 1 or self.V < 1:
            raise ConfigError(f"SemConfig: L and V must be >= 1, got L={self.L} V={self.V}")
        if self.tau <= 0:
            raise ConfigError(f"SemConfig: tau must be > 0, got {self.tau}")

    @property
    def width(self):
        return self.L * self.V


@dataclass(frozen=True)
class GumbelConfig:
    L: int
    V: int
    tau: float = 1.0
    hard: bool = True

    @property
    def width(self):
        return self.L * self.V


@dataclass(frozen=True)
class VqConfig:
    codebook_size: int = 64
    code_dim: int = 16
    beta: float = 0.25

    def initial_codebook(self, rng: ad.Rng) -> np.ndarray:
        bound = 1.0 / self.codebook_size
        return rng.uniform(-bound, bound, (self.codebook_size, self.code_dim))


@dataclass(frozen=True)
class Baseline:
    pass


@dataclass(frozen=True)
class Sem:
    cfg: SemConfig


@dataclass(frozen=True)
class GumbelST:
    cfg: GumbelConfig


@dataclass(frozen=True)
class Vq:
    cfg: VqConfig


@dataclass(frozen=True)
class CRelu:
    pass


HeadKind = Union[Baseline, Sem, GumbelST, Vq, CRelu]


def head_output_width(kind: HeadKind, hidden: int) -> int:
    """Feature width emitted by a head fed a ``hidden``-wide representation."""
    return 2 * hidden if isinstance(kind, CRelu) else hidden


def sem_forward(z: Tensor, cfg: SemConfig) -> Tensor:
    return ad.grouped_softmax(z, cfg.L, cfg.V, cfg.tau)


def _blockwise_one_hot(values: np.ndarray, L: int, V: int) -> np.ndarray:
    batch = values.shape[0]
    blocks = values.reshape(batch, L, V)
    idx = blocks.argmax(axis=2)
    hot = np.zeros_like(blocks)
    np.put_along_axis(hot, idx[:, :, None], 1.0, axis=2)
    return hot.reshape(batch, L * V)


def gumbel_st_forward(z: Tensor, cfg: GumbelConfig, rng: Optional[ad.Rng],
                      train: bool, noise: Optional[np.ndarray] = None) -> Tensor:
    """Per-block Gumbel argmax with straight-through gradients.

    In training the forward value is hard one-hot (when cfg.hard) while the
    recorded gradient is that of the softened softmax((z+g)/tau). ``noise``
    overrides the sampled Gumbel perturbation (test hook; pass zeros to make
    the op deterministic).
    """
    L, V = cfg.L, cfg.V
    if z.shape[1] != L * V:
        raise ad.ShapeError(f"gumbel head: width {z.shape[1]} != {L}*{V}")
    if not train:
        return Tensor(_blockwise_one_hot(z.data, L, V))
    if noise is None:
        if rng is None:
            raise ad.ContractError("gumbel head: rng required in training mode")
        noise = rng.gumbel(size=z.shape)
    perturbed = ad.add(z, Tensor(noise))
    soft = ad.grouped_softmax(perturbed, L, V, cfg.tau)
    if not cfg.hard:
        return soft
    hard = _blockwise_one_hot(perturbed.data, L, V)
    # value = hard, gradient = d(soft)
    return ad.add(soft, Tensor(hard - soft.data))


def vq_assignment(z_data: np.ndarray, codebook_data: np.ndarray,
                  cfg: VqConfig) -> np.ndarray:
    """Nearest-codebook index per code_dim slice (lowest index on ties)."""
    slices = z_data.reshape(-1, cfg.code_dim)
    d2 = (np.square(slices).sum(axis=1, keepdims=True)
          - 2.0 * slices @ codebook_data.T
          + np.square(codebook_data).sum(axis=1)[None, :])
    return d2.argmin(axis=1)  # argmin takes the first (lowest) index on ties


def vq_forward(z: Tensor, codebook: Tensor, cfg: VqConfig,
               soft: bool = False, frozen=None):
    """Nearest-codebook quantization with a straight-through value path.

    Returns (quantized, vq_loss). The quantized output copies gradients
    straight through to z; vq_loss = ||sg(z)-e||^2 + beta*||z-sg(e)||^2
    summed over slices (sg = treat as constant). ``soft=True`` returns z
    itself as the value path. ``frozen``, a triple (idx, sg_z, sg_e)
    captured at a reference point, replaces the assignment and both sg()
    values with those constants; combined with soft=True the op becomes an
    ordinary differentiable function of (z, codebook) whose gradient at the
    reference point equals the straight-through gradient, so finite
    differences apply (test hook). Ties in the nearest-neighbor search go
    to the lowest codebook index.
    """
    if codebook.data.shape[0] == 0:
        raise ConfigError("vq head: empty codebook")
    dim = cfg.code_dim
    if z.shape[1] % dim != 0:
        raise ad.ShapeError(f"vq head: width {z.shape[1]} not divisible by {dim}")
    batch, width = z.shape
    if frozen is None:
        idx = vq_assignment(z.data, codebook.data, cfg)
        sg_z = z.data.reshape(-1, dim).copy()
        e_now = codebook.data[idx]
        sg_e = e_now.reshape(batch, width).copy()
    else:
        idx, sg_z, sg_e = frozen
    e = ad.take_rows(codebook, idx)  # [batch*G, dim], grads flow to codebook

    codebook_term = ad.sum_all(ad.square(ad.sub(Tensor(sg_z), e)))
    commit_term = ad.sum_all(ad.square(ad.sub(z, Tensor(sg_e))))
    vq_loss = ad.add(codebook_term, ad.scale(commit_term, cfg.beta))

    if soft:
        return z, vq_loss
    quantized = ad.add(z, Tensor(e.data.reshape(batch, width) - z.data))
    return quantized, vq_loss


def crelu_forward(z: Tensor) -> Tensor:
    """concat(relu(z), relu(-z)) along the feature axis."""
    return ad.relu(ad.elementwise("crelu_pre", z))

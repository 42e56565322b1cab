"""Categorical (C51-style) return distributions on a fixed atom support."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class Support:
    v_min: float
    v_max: float
    n_atoms: int

    def __post_init__(self):
        if not self.v_min < self.v_max:
            raise ad.ContractError(f"Support: v_min {self.v_min} >= v_max {self.v_max}")
        if self.n_atoms < 2:
            raise ad.ContractError(f"Support: n_atoms must be >= 2, got {self.n_atoms}")

    @cached_property
    def atoms(self) -> np.ndarray:
        return self.v_min + np.arange(self.n_atoms) * self.delta_z

    @property
    def delta_z(self) -> float:
        return (self.v_max - self.v_min) / (self.n_atoms - 1)

    @classmethod
    def for_reward_bounds(cls, r_min: float, r_max: float, gamma: float,
                          n_atoms: int = 101) -> "Support":
        """Auto-size the value range from per-step reward bounds."""
        return cls(r_min / (1.0 - gamma), r_max / (1.0 - gamma), n_atoms)


@dataclass
class CategoricalDist:
    support: Support
    probs: np.ndarray  # [batch x n_atoms]


def _check_probs(probs, n_atoms):
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] != n_atoms:
        raise ad.ContractError(f"probs shape {probs.shape} vs {n_atoms} atoms")
    if np.any(probs < -1e-12) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
        raise ad.ContractError("invalid probability rows")
    return probs


def project(target_probs: np.ndarray, r: np.ndarray, done: np.ndarray,
            gamma: float, support: Support) -> np.ndarray:
    """Project the Bellman-shifted categorical target back onto the support.

    z'_j = clip(r + gamma*(1-done)*z_j, v_min, v_max); mass from each shifted
    atom is split linearly between its two neighboring support atoms.
    Terminal transitions collapse onto clip(r, v_min, v_max).
    """
    p = _check_probs(target_probs, support.n_atoms)
    r = np.asarray(r, dtype=np.float64).reshape(-1)
    done = np.asarray(done, dtype=bool).reshape(-1)
    batch, n = p.shape
    atoms = support.atoms
    dz = support.delta_z

    cont = (~done).astype(np.float64)[:, None]
    zp = np.clip(r[:, None] + gamma * cont * atoms[None, :],
                 support.v_min, support.v_max)
    b = (zp - support.v_min) / dz
    # snap near-integer positions so exact atom landings stay exact
    nearest = np.rint(b)
    snapped = np.abs(b - nearest) < 1e-9
    b = np.where(snapped, nearest, b)
    lower = np.floor(b).astype(np.int64)
    upper = np.minimum(lower + 1, n - 1)
    w_upper = b - lower
    w_lower = 1.0 - w_upper
    # when b is an integer, lower carries the full mass
    exact = lower == np.minimum(np.ceil(b).astype(np.int64), n - 1)
    w_lower = np.where(exact, 1.0, w_lower)
    w_upper = np.where(exact, 0.0, w_upper)

    m = np.zeros_like(p)
    rows = np.repeat(np.arange(batch), n)
    np.add.at(m, (rows, lower.reshape(-1)), (p * w_lower).reshape(-1))
    np.add.at(m, (rows, upper.reshape(-1)), (p * w_upper).reshape(-1))

    sums = m.sum(axis=1)
    drift = np.abs(sums - 1.0) > 1e-12
    if np.any(drift):
        m[drift] /= sums[drift, None]
    return m


def project_dist(target: CategoricalDist, r, done, gamma: float) -> CategoricalDist:
    return CategoricalDist(target.support,
                           project(target.probs, r, done, gamma, target.support))


def cross_entropy(pred_logits: Tensor, target_probs: np.ndarray) -> Tensor:
    """Batch-mean cross-entropy -sum_i m_i log softmax(logits)_i."""
    m = np.asarray(target_probs, dtype=np.float64)
    if pred_logits.shape != m.shape:
        raise ad.ShapeError(f"cross_entropy: {pred_logits.shape} vs {m.shape}")
    batch = m.shape[0]
    logp = ad.log_softmax(pred_logits)
    return ad.scale(ad.sum_all(ad.mul(Tensor(m), logp)), -1.0 / batch)


def expected_value(probs: np.ndarray, support: Support) -> np.ndarray:
    """Per-row mean of the categorical distribution, sum_i p_i z_i."""
    p = np.asarray(probs, dtype=np.float64)
    return p @ support.atoms


def expected_value_t(probs: Tensor, support: Support) -> Tensor:
    """Differentiable expected value, [batch x n_atoms] -> [batch x 1]."""
    return ad.matmul(probs, Tensor(support.atoms[:, None]))


def cramer_distance(p1: np.ndarray, p2: np.ndarray, support: Support) -> np.ndarray:
    """Squared L2 distance between CDFs on the shared atom grid, per row."""
    a = _check_probs(p1, support.n_atoms)
    b = _check_probs(p2, support.n_atoms)
    if a.shape != b.shape:
        raise ad.ContractError(f"cramer_distance: {a.shape} vs {b.shape}")
    f1 = np.cumsum(a, axis=1)
    f2 = np.cumsum(b, axis=1)
    return (np.square(f1 - f2).sum(axis=1)) * support.delta_z

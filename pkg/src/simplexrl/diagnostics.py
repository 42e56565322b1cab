"""Representation and learning-dynamics metrics logged during training.

Covers spectral measures (effective rank, stable rank), activity measures
(dormant-neuron fraction, Gini sparsity, per-block entropy), parameter and
action statistics, and the gradient-energy bound for a linear value head.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np


@dataclass
class FeatureBatch:
    matrix: np.ndarray  # [N samples x d features]
    source: str = "actor"

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got {self.matrix.shape}")


@dataclass
class MetricsRow:
    """One evaluation snapshot; missing metrics stay None (empty CSV fields)."""
    step: int
    eval_return: Optional[float] = None
    critic_loss: Optional[float] = None
    actor_loss: Optional[float] = None
    td_error: Optional[float] = None
    critic_disagreement: Optional[float] = None
    cramer_discrepancy: Optional[float] = None
    eff_rank_actor: Optional[float] = None
    eff_rank_critic: Optional[float] = None
    stable_rank: Optional[float] = None
    dormant_frac: Optional[float] = None
    weight_norm_actor: Optional[float] = None
    weight_norm_critic: Optional[float] = None
    gini: Optional[float] = None
    simplex_entropy: Optional[float] = None
    action_std: Optional[float] = None


METRICS_COLUMNS = [f.name for f in fields(MetricsRow)]


def effective_rank(fb: FeatureBatch, tau: float = 0.99) -> int:
    """Smallest k such that the top-k singular values of the centered feature
    matrix capture at least ``tau`` of the squared-spectrum mass."""
    z = fb.matrix
    if z.shape[0] < 2:
        raise ValueError("effective_rank needs N >= 2")
    centered = z - z.mean(axis=0, keepdims=True)
    sv = np.linalg.svd(centered, compute_uv=False)
    total = np.square(sv).sum()
    if total <= 0.0:
        return 0
    ratios = np.cumsum(np.square(sv)) / total
    return int(np.searchsorted(ratios, tau - 1e-12) + 1)


def stable_rank(fb: FeatureBatch) -> float:
    """||Sigma||_F^2 / ||Sigma||_2^2 of the feature covariance; 0 if Sigma=0."""
    z = fb.matrix
    if z.shape[0] < 2:
        raise ValueError("stable_rank needs N >= 2")
    mean = z.mean(axis=0)
    sigma = z.T @ z / z.shape[0] - np.outer(mean, mean)
    fro2 = np.square(sigma).sum()
    if fro2 <= 0.0:
        return 0.0
    spec = float(np.linalg.eigvalsh(sigma)[-1])
    return float(fro2 / (spec * spec))


def dormant_fraction(fb: FeatureBatch, eps: float = 1e-5) -> float:
    """Percent of neurons whose batch-mean absolute activation is below eps."""
    score = np.abs(fb.matrix).mean(axis=0)
    return 100.0 * float((score < eps).mean())


def weight_norm(named_params) -> dict:
    """Euclidean norm per layer plus the norm of the concatenated vector."""
    per_layer = {name: float(np.linalg.norm(np.asarray(p.data if hasattr(p, "data") else p)))
                 for name, p in named_params}
    total = float(np.sqrt(sum(v * v for v in per_layer.values())))
    per_layer["total"] = total
    return per_layer


def gini(fb: FeatureBatch) -> float:
    """Sparsity of |activations|: 0 for a uniform vector, 1 - 1/n for one-hot."""
    v = np.sort(np.abs(fb.matrix).reshape(-1))
    n = v.size
    s = v.sum()
    if s <= 0.0:
        return 0.0
    weights = n + 1 - np.arange(1, n + 1)
    return float(1.0 + 1.0 / n - (2.0 / (n * s)) * (weights * v).sum())


def simplex_entropy(fb: FeatureBatch, L: int, V: int, eps: float = 1e-8) -> float:
    """Mean per-block entropy of renormalized non-negative features."""
    z = fb.matrix
    if np.any(z < 0):
        raise ValueError("simplex_entropy expects non-negative inputs")
    blocks = z.reshape(z.shape[0], L, V)
    p = blocks / (blocks.sum(axis=2, keepdims=True) + eps)
    ent = -(p * np.log(p + eps)).sum(axis=2)
    return float(ent.mean())


def action_std(actions: np.ndarray) -> float:
    """Mean over action dims of the per-dim standard deviation."""
    a = np.asarray(actions, dtype=np.float64)
    if a.shape[0] < 2:
        raise ValueError("action_std needs N >= 2")
    return float(a.std(axis=0).mean())


def gradient_energy(head_weights: np.ndarray, z: np.ndarray, y: np.ndarray):
    """Measured vs. bounded gradient energy of a scalar linear head.

    Per-sample squared-error loss (w.z - y)^2 has gradient 2*delta*z, so the
    measured energy is mean(4 delta^2 ||z||^2). The bound is
    4 * mean(delta^2) * tr(E[zz^T]); the two coincide when delta is
    independent of z.
    """
    w = np.asarray(head_weights, dtype=np.float64).reshape(-1)
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if z.shape[0] < 2:
        raise ValueError("gradient_energy needs batch size >= 2")
    delta = z @ w - y
    znorm2 = np.square(z).sum(axis=1)
    measured = float(np.mean(4.0 * delta * delta * znorm2))
    bound = float(4.0 * np.mean(delta * delta) * np.mean(znorm2))
    return measured, bound

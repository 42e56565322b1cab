"""Supervised classification under periodically re-permuted labels.

Training a classifier whose targets are reshuffled every ``shuffle_period``
epochs mimics the moving bootstrap targets of value learning; the trainer
logs plasticity diagnostics (dormant fraction, effective/stable rank) each
epoch so the stationary and non-stationary regimes can be compared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import diagnostics as dg
from . import heads as hd
from . import networks as nets
from .autodiff import Rng, Tensor
from .envs import SynthConfig, synth_generate


@dataclass
class NonstatConfig:
    width: int = 256
    epochs: int = 100
    shuffle_period: int = 20
    batch_size: int = 128
    learning_rate: float = 1e-3
    stationary: bool = False
    dataset: SynthConfig = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.dataset is None:
            self.dataset = SynthConfig()
        if self.shuffle_period < 1:
            raise ValueError("shuffle_period must be >= 1")


class NonstatModel:
    """Two hidden layers, optional representation head before the output."""

    def __init__(self, in_dim: int, n_classes: int, cfg: NonstatConfig,
                 head_kind: hd.HeadKind, rng: Rng):
        self.net = nets._HeadedMlp(in_dim, n_classes, cfg.width, head_kind, rng)
        self.head_kind = head_kind

    def logits(self, x, rng=None, train=False):
        t = x if isinstance(x, Tensor) else Tensor(x)
        penult, aux = self.net.trunk_and_head(t, rng, train)
        return self.net.out(penult), penult, aux

    def params(self):
        return self.net.params()


def _cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    logp = ad.log_softmax(logits)
    picked = ad.gather_rows(logp, labels.astype(np.int64))
    return ad.scale(ad.sum_all(picked), -1.0 / logits.shape[0])


def nonstationary_train(cfg: NonstatConfig, head_kind: hd.HeadKind, seed: int,
                        logger) -> dict:
    """Train and return {rows, final_train_acc, model}.

    When ``cfg.stationary`` is false, a fresh uniform permutation of the
    label alphabet is applied to the training targets at the start of every
    ``shuffle_period``-th epoch (epochs 20, 40, ... for the default period).
    """
    rng = Rng(seed)
    data = synth_generate(cfg.dataset, seed)
    model = NonstatModel(cfg.dataset.input_dim, cfg.dataset.n_classes, cfg,
                         head_kind, rng.split(1))
    params = model.params()
    opt = ad.AdamState.for_params(params, cfg.learning_rate)
    rng_batch = rng.split(2)
    rng_perm = rng.split(3)
    rng_gumbel = rng.split(4)

    labels = data.y_train.copy()
    n = len(labels)
    rows = []

    for epoch in range(cfg.epochs):
        if (not cfg.stationary and epoch > 0
                and epoch % cfg.shuffle_period == 0):
            perm = rng_perm.split(epoch).permutation(cfg.dataset.n_classes)
            labels = perm[data.y_train]
        order = rng_batch.split(epoch).permutation(n)
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            mb = order[start:start + cfg.batch_size]
            logits, _, aux = model.logits(data.x_train[mb],
                                          rng_gumbel.split(epoch, start), True)
            loss = _cross_entropy(logits, labels[mb])
            if aux is not None:
                loss = ad.add(loss, ad.scale(aux, 1.0 / len(mb)))
            ad.backward(loss)
            ad.adam_step(params, opt)
            epoch_loss += float(loss.data)
            n_batches += 1

        logits, penult, _ = model.logits(data.x_train)
        acc = float((logits.data.argmax(axis=1) == labels).mean())
        fb = dg.FeatureBatch(penult.data, "actor")
        row = dg.MetricsRow(step=epoch,
                            eval_return=acc,
                            critic_loss=epoch_loss / max(n_batches, 1),
                            eff_rank_actor=dg.effective_rank(fb),
                            stable_rank=dg.stable_rank(fb),
                            dormant_frac=dg.dormant_fraction(fb),
                            gini=dg.gini(fb))
        if isinstance(head_kind, (hd.Sem, hd.GumbelST)):
            row.simplex_entropy = dg.simplex_entropy(
                fb, head_kind.cfg.L, head_kind.cfg.V)
        if logger is not None:
            logger.log(row)
        rows.append(row)

    return {"rows": rows, "final_train_acc": rows[-1].eval_return,
            "model": model}

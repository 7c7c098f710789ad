"""Output head and task losses."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensorgrad as tg
from .tensorgrad import Tensor

LOG_FLOOR = np.log(1e-12)


@dataclass
class TaskOutput:
    logits: np.ndarray
    multilabel: bool = False

    @property
    def predictions(self) -> np.ndarray:
        if self.multilabel:
            return (self.logits >= 0.0).astype(np.int64)  # sigmoid >= 0.5
        return np.argmax(self.logits, axis=1)


def output_head(y, W_y, b_y) -> Tensor:
    y, W_y = tg.as_tensor(y), tg.as_tensor(W_y)
    if y.shape[1] != W_y.shape[0] or tg.as_tensor(b_y).shape != (W_y.shape[1],):
        raise ValueError(f"output head shape mismatch: y {y.shape}, W_y {W_y.shape}")
    return tg.add(tg.matmul(y, W_y), b_y)


def _train_index(train_set) -> np.ndarray:
    idx = np.asarray(train_set, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("train set is empty")
    return idx


def semi_supervised_loss(logits, labels, train_set, L_i=None, lam: float = 0.0) -> Tensor:
    """Cross-entropy summed over train nodes, each scaled by 1/num_classes, plus lam * L_i.

    ``ln`` of the softmax is floored at ``ln(1e-12)``.
    """
    idx = _train_index(train_set)
    logits = tg.as_tensor(logits)
    num_classes = logits.shape[1]
    labels = np.asarray(labels)
    target = np.zeros((len(idx), num_classes))
    target[np.arange(len(idx)), labels[idx]] = 1.0
    logp = tg.clamp_min(tg.log_softmax_rows(tg.take(logits, idx)), LOG_FLOOR)
    loss = tg.scalar_mul(tg.sum(tg.mul(logp, target)), -1.0 / num_classes)
    if L_i is not None and lam:
        loss = tg.add(loss, tg.scalar_mul(L_i, lam))
    return loss


def multi_label_loss(logits, labels, train_set, L_i=None, lam: float = 0.0, verbatim: bool = False) -> Tensor:
    """Per-node multi-label loss summed over train nodes, plus lam * L_i.

    The default is binary cross-entropy on sigmoid outputs.  ``verbatim``
    instead sums the sigmoid probabilities themselves, which is bounded in
    [-1, 0] per node and saturates on confident mistakes.
    """
    idx = _train_index(train_set)
    logits = tg.as_tensor(logits)
    labels = np.asarray(labels, dtype=np.float64)
    if labels.ndim != 2 or labels.shape[1] != logits.shape[1]:
        raise ValueError(f"label width {labels.shape[-1]} does not match {logits.shape[1]} outputs")
    num_classes = logits.shape[1]
    y = labels[idx]
    x = tg.take(logits, idx)
    squash = tg.sigmoid if verbatim else tg.log_sigmoid
    pos = squash(x)
    neg = squash(tg.scalar_mul(x, -1.0))
    total = tg.add(tg.sum(tg.mul(pos, y)), tg.sum(tg.mul(neg, 1.0 - y)))
    loss = tg.scalar_mul(total, -1.0 / num_classes)
    if L_i is not None and lam:
        loss = tg.add(loss, tg.scalar_mul(L_i, lam))
    return loss

"""Independence regularizer over the K factor subspaces."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensorgrad as tg
from .tensorgrad import Tensor


@dataclass(frozen=True)
class IndepConfig:
    shared_projection: bool = True
    lam: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")


def independence_loss(z_first, w, K: int | None = None, w_key=None) -> Tensor:
    """Mean off-diagonal softmax mass of the per-node factor similarity matrix.

    For each node the K factor vectors are projected with ``w`` (and
    ``w_key`` for the key side when given), compared by scaled dot product,
    and softmaxed row-wise.  The loss averages the off-diagonal mass over the
    K^2 - K pairs and over nodes, so it equals 1/K when all factors look alike
    and approaches 0 as their projections separate.
    """
    z = tg.as_tensor(z_first)
    n, k_dim, delta = z.shape
    if K is not None and K != k_dim:
        raise ValueError(f"z has {k_dim} factors, expected {K}")
    if not np.isfinite(z.value).all():
        raise FloatingPointError("independence_loss got non-finite input")
    if k_dim == 1:
        return tg.scalar_mul(tg.sum(z), 0.0)
    q = tg.matmul(z, w)
    k = q if w_key is None else tg.matmul(z, w_key)
    scores = tg.scalar_mul(tg.bmm_nt(q, k), 1.0 / np.sqrt(delta))
    attn = tg.softmax_rows(scores)
    off = 1.0 - np.eye(k_dim)
    pairs = k_dim * k_dim - k_dim
    return tg.scalar_mul(tg.sum(tg.mul(attn, off)), 1.0 / (n * pairs))


def mean_projected_distance(z_first: np.ndarray, w: np.ndarray) -> float:
    """Mean Euclidean distance between distinct factor projections of each node."""
    proj = np.asarray(z_first) @ np.asarray(w)
    diff = proj[:, :, None, :] - proj[:, None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    K = proj.shape[1]
    return float(dist[:, ~np.eye(K, dtype=bool)].mean())

"""Disentangled subspace projection and iterative neighborhood routing."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensorgrad as tg
from .graphstore import Graph
from .tensorgrad import Tensor


@dataclass(frozen=True)
class RoutingConfig:
    K: int = 4
    d_out: int = 64
    L: int = 4
    T: int = 6
    dropout_rate: float = 0.35

    def __post_init__(self):
        if self.K < 1 or self.L < 1 or self.T < 1:
            raise ValueError(f"K, L and T must be >= 1 (got K={self.K}, L={self.L}, T={self.T})")
        if self.d_out % self.K:
            raise ValueError(f"d_out={self.d_out} is not divisible by K={self.K}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def delta(self) -> int:
        return self.d_out // self.K


@dataclass
class ModelParams:
    """Trainable tensors.

    ``W`` stacks the K per-factor projections column-wise (``d_in x K*delta``,
    block k is W_k) and ``b`` stacks the biases.  ``w_key`` is only set when
    the independence regularizer uses separate query/key projections.
    """

    W: Tensor
    b: Tensor
    w: Tensor
    W_y: Tensor
    b_y: Tensor
    w_key: Tensor | None = None

    def named(self) -> dict[str, Tensor]:
        out = {"W": self.W, "b": self.b, "w": self.w, "W_y": self.W_y, "b_y": self.b_y}
        if self.w_key is not None:
            out["w_key"] = self.w_key
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: Tensor(v.value.copy(), requires_grad=v.requires_grad)
                              for k, v in self.named().items()})

    def W_k(self, k: int, K: int) -> np.ndarray:
        delta = self.W.shape[1] // K
        return self.W.value[:, k * delta:(k + 1) * delta]


@dataclass
class FactorState:
    """Routing state of one layer: subspace features, components, factor probabilities.

    ``p`` is indexed by directed edge occurrence (E x K), aligned with
    ``Graph.directed_edges()``.
    """

    z: Tensor
    e: Tensor
    p: Tensor


@dataclass
class DisentangledOutput:
    h: Tensor
    z_first: Tensor
    z_last: Tensor
    p_last: Tensor
    layers: list[FactorState] = field(default_factory=list)


def project_subspaces(features, params: ModelParams, config: RoutingConfig) -> Tensor:
    """``z[u, k] = normalize(relu(x_u W_k + b_k))`` as an N x K x delta tensor."""
    x = tg.as_tensor(features)
    if x.ndim != 2 or x.shape[1] != params.W.shape[0] or params.W.shape[1] != config.d_out:
        raise ValueError(f"cannot project features {x.shape} with W {params.W.shape}")
    hidden = tg.relu(tg.add(tg.matmul(x, params.W), params.b))
    return tg.l2_normalize_rows(tg.reshape(hidden, (x.shape[0], config.K, config.delta)))


class EdgeIndex:
    """Directed edge occurrences of a graph, cached for repeated routing."""

    def __init__(self, graph: Graph):
        self.num_nodes = graph.num_nodes
        self.src, self.dst = graph.directed_edges()


def routing_layer(z, graph: Graph | EdgeIndex, T: int) -> tuple[Tensor, Tensor]:
    """Run T routing iterations on unit-norm (or zero) factor features ``z``.

    Starting from ``e = z``, each iteration scores every directed edge (u, v)
    with a softmax over factors of ``z[v, k] . e[u, k]``, then sets
    ``e[u] = normalize(z[u] + sum_v p[u, v] * z[v])``.  Returns the final
    components and the probabilities of the last iteration.
    """
    edges = graph if isinstance(graph, EdgeIndex) else EdgeIndex(graph)
    z = tg.as_tensor(z)
    n, K, _ = z.shape
    z_dst = tg.take(z, edges.dst)
    e = z
    p = Tensor(np.full((len(edges.src), K), 1.0 / K))
    for _ in range(T):
        e_src = tg.take(e, edges.src)
        p = tg.softmax_rows(tg.sum(tg.mul(z_dst, e_src), axis=-1))
        msg = tg.mul(tg.reshape(p, p.shape + (1,)), z_dst)
        e = tg.l2_normalize_rows(tg.add(z, tg.segment_sum(msg, edges.src, n)))
    return e, p


def forward_disentangled(graph: Graph, params: ModelParams, config: RoutingConfig,
                         training: bool = False, seed: int | np.random.Generator = 0,
                         edges: EdgeIndex | None = None, features=None) -> DisentangledOutput:
    """Projection followed by L routing layers.

    Between layers the components pass through ReLU and dropout and are
    re-normalized before becoming the next layer's ``z``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    edges = edges or EdgeIndex(graph)
    z_first = project_subspaces(graph.features if features is None else features, params, config)
    z = z_first
    layers = []
    for layer in range(config.L):
        e, p = routing_layer(z, edges, config.T)
        layers.append(FactorState(z, e, p))
        if layer < config.L - 1:
            e_next = tg.dropout(tg.relu(e), config.dropout_rate, training, rng)
            z = tg.l2_normalize_rows(e_next)
    last = layers[-1]
    return DisentangledOutput(h=last.e, z_first=z_first, z_last=last.z, p_last=last.p, layers=layers)

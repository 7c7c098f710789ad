"""Semantic 2-hop paths discovered from hard factor assignments.

Every directed edge occurrence (u, o) is labelled with its most probable
factor.  A path u -> o -> v (v != u) is then typed by the factor pair
(k1, k2) of its two hops.  Paths are aggregated into the node representation
by placing ``z_last[v, k2]`` into factor row k1 of node u and averaging over
all path instances that start at u.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import tensorgrad as tg
from .graphstore import CappedNeighbors, Graph, neighbor_cap_view
from .tensorgrad import Tensor


@dataclass(frozen=True, eq=False)
class HardAssignment:
    """Argmax factor of every directed edge occurrence."""

    factor: np.ndarray
    K: int

    @property
    def onehot(self) -> np.ndarray:
        out = np.zeros((len(self.factor), self.K), dtype=np.int64)
        out[np.arange(len(self.factor)), self.factor] = 1
        return out


def harden(p) -> HardAssignment:
    """One-hot argmax per edge; ties go to the lowest factor index."""
    values = p.value if isinstance(p, Tensor) else np.asarray(p)
    return HardAssignment(np.argmax(values, axis=1).astype(np.int64), values.shape[1])


@dataclass(frozen=True, eq=False)
class PathEntries:
    """Path counts collapsed per (u, v, k1, k2), sorted lexicographically."""

    u: np.ndarray
    v: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    count: np.ndarray
    num_nodes: int
    K: int

    @classmethod
    def from_instances(cls, u, v, k1, k2, num_nodes: int, K: int) -> "PathEntries":
        key = ((u * num_nodes + v) * K + k1) * K + k2
        uniq, count = np.unique(key, return_counts=True)
        k2_, rest = uniq % K, uniq // K
        k1_, rest = rest % K, rest // K
        v_, u_ = rest % num_nodes, rest // num_nodes
        return cls(u_, v_, k1_, k2_, count, num_nodes, K)

    def __len__(self) -> int:
        return len(self.u)

    def instances_per_node(self) -> np.ndarray:
        return np.bincount(self.u, weights=self.count, minlength=self.num_nodes).astype(np.int64)

    def type_histogram(self) -> np.ndarray:
        """K x K path-type frequencies over the whole graph."""
        hist = np.zeros((self.K, self.K), dtype=np.int64)
        np.add.at(hist, (self.k1, self.k2), self.count)
        return hist


class DensePathAdjacency:
    """``B[u, v]``: K x K count of paths u -> o -> v typed (A[u,o], A[o,v])."""

    def __init__(self, entries: PathEntries):
        self._entries = entries

    def entries(self) -> PathEntries:
        return self._entries

    def as_dict(self) -> dict[tuple[int, int], np.ndarray]:
        e = self._entries
        out: dict[tuple[int, int], np.ndarray] = {}
        for u, v, k1, k2, c in zip(e.u, e.v, e.k1, e.k2, e.count):
            mat = out.setdefault((int(u), int(v)), np.zeros((e.K, e.K), dtype=np.int64))
            mat[k1, k2] += c
        return out

    def matrix(self, u: int, v: int) -> np.ndarray:
        e = self._entries
        sel = (e.u == u) & (e.v == v)
        mat = np.zeros((e.K, e.K), dtype=np.int64)
        np.add.at(mat, (e.k1[sel], e.k2[sel]), e.count[sel])
        return mat


def build_path_adjacency_dense(A: HardAssignment, graph: Graph) -> DensePathAdjacency:
    """Enumerate every 2-hop walk u -> o -> v with v != u over full neighbor lists."""
    src, dst = graph.directed_edges()
    deg = graph.degrees
    # pair each first hop (u, o) with every second hop (o, v)
    reps = deg[dst]
    first = np.repeat(np.arange(len(src)), reps)
    offsets = np.arange(len(first)) - np.repeat(np.cumsum(reps) - reps, reps)
    second = graph.indptr[dst[first]] + offsets
    u, v = src[first], dst[second]
    keep = u != v
    first, second, u, v = first[keep], second[keep], u[keep], v[keep]
    entries = PathEntries.from_instances(u, v, A.factor[first], A.factor[second], graph.num_nodes, A.K)
    return DensePathAdjacency(entries)


class CappedPathAdjacency:
    """Path instances enumerated through per-factor neighbor slots.

    ``slots[u, j, k]`` holds the j-th capped neighbor of ``u`` when that edge is
    assigned factor k (``slot_mask`` marks occupied slots; node 0 is a valid
    id, so no sentinel value is used).
    """

    def __init__(self, slots, slot_mask, u, o, v, k1, k2, num_nodes: int, K: int):
        self.slots = slots
        self.slot_mask = slot_mask
        self.u, self.o, self.v, self.k1, self.k2 = u, o, v, k1, k2
        self.num_nodes = num_nodes
        self.K = K

    def endpoints(self, u: int, k1: int, k2: int) -> np.ndarray:
        """Endpoints v (with multiplicity) of paths from u typed (k1, k2)."""
        sel = (self.u == u) & (self.k1 == k1) & (self.k2 == k2)
        return np.sort(self.v[sel])

    def instances(self) -> np.ndarray:
        return np.stack([self.u, self.o, self.v], axis=1)

    def entries(self) -> PathEntries:
        return PathEntries.from_instances(self.u, self.v, self.k1, self.k2, self.num_nodes, self.K)


def build_path_adjacency_capped(A: HardAssignment, graph: Graph, C: int, seed: int = 0,
                                view: CappedNeighbors | None = None) -> CappedPathAdjacency:
    """Enumerate paths through at most C neighbor slots per node at each hop."""
    view = view or neighbor_cap_view(graph, C, seed)
    n, K = graph.num_nodes, A.K
    slots = np.zeros((n, view.cap, K), dtype=np.int64)
    slot_mask = np.zeros((n, view.cap, K), dtype=bool)
    uu, jj = np.nonzero(view.mask)
    slot_factor = A.factor[view.edge_ids[uu, jj]]
    slots[uu, jj, slot_factor] = view.ids[uu, jj]
    slot_mask[uu, jj, slot_factor] = True

    # first hop u -> o through an occupied slot, second hop o -> v likewise
    fu, fj, fk = np.nonzero(slot_mask)
    o = slots[fu, fj, fk]
    occupied = slot_mask[o]  # (#first, cap, K)
    idx, sj, sk = np.nonzero(occupied)
    u = fu[idx]
    v = slots[o[idx], sj, sk]
    keep = v != u
    return CappedPathAdjacency(slots, slot_mask, u[keep], o[idx][keep], v[keep],
                               fk[idx][keep], sk[keep], n, K)


def path_operator(entries: PathEntries) -> sp.csr_matrix:
    """Sparse (N*K) x (N*K) operator that mean-pools path endpoints.

    Row ``u*K + k1`` collects ``z[v, k2]`` with weight count / (paths from u).
    The denominator counts path instances, so frequent path types weigh more.
    """
    n, K = entries.num_nodes, entries.K
    per_node = entries.instances_per_node()
    weight = entries.count / np.maximum(per_node[entries.u], 1)
    rows = entries.u * K + entries.k1
    cols = entries.v * K + entries.k2
    return sp.csr_matrix((weight, (rows, cols)), shape=(n * K, n * K))


def semantic_aggregate(h, z_last, paths) -> Tensor:
    """``y_u = h_u + mean over path instances from u`` flattened to N x d_out.

    ``paths`` is a dense or capped adjacency, a :class:`PathEntries`, or None
    (no semantic paths, y = h).  Gradients flow into ``h`` and ``z_last`` only.
    """
    h, z_last = tg.as_tensor(h), tg.as_tensor(z_last)
    n, K, delta = h.shape
    if paths is None:
        return tg.reshape(h, (n, K * delta))
    entries = paths if isinstance(paths, PathEntries) else paths.entries()
    pooled = tg.sparse_matmul(path_operator(entries), tg.reshape(z_last, (n * K, delta)))
    y = tg.add(h, tg.reshape(pooled, (n, K, delta)))
    return tg.reshape(y, (n, K * delta))

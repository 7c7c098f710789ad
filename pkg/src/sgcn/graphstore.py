"""Immutable graph datasets: loading, validation, splits and capped neighbor views."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """Raised for malformed or inconsistent dataset files."""


class SplitError(ValueError):
    """Raised when the requested split cannot be drawn."""


@dataclass(frozen=True)
class LoadReport:
    nodes: int
    undirected_edges: int
    dropped_self_loops: int = 0
    dropped_dangling: int = 0
    duplicate_edges: int = 0
    empty_label_nodes: int = 0

    def to_text(self) -> str:
        return "\n".join(f"{f.name}={getattr(self, f.name)}" for f in dataclasses.fields(self)) + "\n"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph with node features, labels and splits.

    Neighbors are stored in CSR form: the neighbors of ``u`` are
    ``indices[indptr[u]:indptr[u + 1]]`` in ascending order.  Position ``j`` in
    that flat array is also the id of the directed edge occurrence
    ``(u, indices[j])``.
    """

    num_nodes: int
    indptr: np.ndarray
    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    train: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    val: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    test: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    name: str = "graph"
    report: LoadReport | None = None

    def __post_init__(self):
        for name in ("indptr", "indices", "train", "val", "test"):
            object.__setattr__(self, name, _readonly(np.asarray(getattr(self, name), dtype=np.int64)))
        object.__setattr__(self, "features", _readonly(np.asarray(self.features, dtype=np.float64)))
        object.__setattr__(self, "labels", _readonly(np.asarray(self.labels, dtype=np.int64)))
        self.validate()

    @classmethod
    def from_edges(cls, num_nodes: int, edges, features, labels, num_classes: int, **kw) -> "Graph":
        """Build from an iterable of (u, v) pairs; drops self-loops and duplicates."""
        pairs = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64).reshape(-1, 2)
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        both = np.concatenate([pairs, pairs[:, ::-1]])
        both = np.unique(both, axis=0) if len(both) else both.reshape(0, 2)
        counts = np.bincount(both[:, 0], minlength=num_nodes) if len(both) else np.zeros(num_nodes, dtype=np.int64)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return cls(num_nodes=num_nodes, indptr=indptr, indices=both[:, 1], features=features,
                   labels=labels, num_classes=num_classes, **kw)

    # -- structure

    @property
    def multilabel(self) -> bool:
        return self.labels.ndim == 2

    @property
    def in_dim(self) -> int:
        return self.features.shape[1]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def num_edges(self) -> int:
        return len(self.indices) // 2

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def directed_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """(src, dst) of every directed edge occurrence, ordered by (src, dst)."""
        src = np.repeat(np.arange(self.num_nodes), self.degrees)
        return src, self.indices

    @property
    def edges(self) -> np.ndarray:
        """Undirected edges as an (E, 2) array with ``u < v``."""
        src, dst = self.directed_edges()
        keep = src < dst
        return np.stack([src[keep], dst[keep]], axis=1)

    def edge_id(self, u: int, v: int) -> int:
        nb = self.neighbors(u)
        j = int(np.searchsorted(nb, v))
        if j >= len(nb) or nb[j] != v:
            raise KeyError((u, v))
        return int(self.indptr[u]) + j

    def with_splits(self, train, val, test) -> "Graph":
        return dataclasses.replace(self, train=train, val=val, test=test)

    def permuted(self, perm: np.ndarray) -> "Graph":
        """Relabel node ``u`` as ``perm[u]``."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        e = perm[self.edges]
        return Graph.from_edges(self.num_nodes, e, self.features[inv], self.labels[inv], self.num_classes,
                                train=perm[self.train], val=perm[self.val], test=perm[self.test], name=self.name)

    def validate(self) -> None:
        n = self.num_nodes
        if n <= 0:
            raise GraphFormatError("graph has no nodes")
        if self.indptr.shape != (n + 1,) or self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise GraphFormatError("malformed CSR index pointer")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= n):
            raise GraphFormatError("neighbor id out of range")
        src, dst = self.directed_edges()
        if np.any(src == dst):
            raise GraphFormatError("self-loops present")
        for u in range(n):
            nb = self.indices[self.indptr[u]:self.indptr[u + 1]]
            if len(nb) > 1 and np.any(np.diff(nb) <= 0):
                raise GraphFormatError(f"neighbor list of node {u} unsorted or duplicated")
        fwd = src * n + dst
        rev = np.sort(dst * n + src)
        if not np.array_equal(fwd, rev):
            raise GraphFormatError("edge set is not symmetric")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise GraphFormatError(f"features must be {n} x d_in, got {self.features.shape}")
        if not np.isfinite(self.features).all():
            raise GraphFormatError("features contain NaN or Inf")
        if self.labels.ndim == 1:
            if self.labels.shape[0] != n or (n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes)):
                raise GraphFormatError("class labels out of range")
        elif self.labels.shape != (n, self.num_classes):
            raise GraphFormatError(f"multi-hot labels must be {n} x {self.num_classes}")
        parts = [self.train, self.val, self.test]
        for part in parts:
            if len(part) and (part.min() < 0 or part.max() >= n):
                raise SplitError("split node id out of range")
            if len(np.unique(part)) != len(part):
                raise SplitError("split contains duplicate nodes")
        for i in range(3):
            for j in range(i + 1, 3):
                if np.intersect1d(parts[i], parts[j]).size:
                    raise SplitError("train/val/test splits overlap")


@dataclass(frozen=True)
class DatasetManifest:
    content_path: str | None = None
    cites_path: str | None = None
    edges_path: str | None = None
    features_path: str | None = None
    labels_path: str | None = None
    num_classes: int | None = None
    split_seed: int = 0
    per_class_train: int = 20
    val_size: int = 500
    test_size: int = 1000
    row_normalize: bool = True

    @property
    def is_citation(self) -> bool:
        return self.content_path is not None


def row_normalize(features: np.ndarray) -> np.ndarray:
    sums = features.sum(axis=1, keepdims=True)
    return np.where(sums != 0, features / np.where(sums != 0, sums, 1.0), features)


def _require(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"dataset file not found: {p}")
    return p


def _symmetrize(num_nodes: int, pairs: list[tuple[int, int]]) -> tuple[np.ndarray, int, int]:
    """Deduplicated undirected edge array plus (self_loops, duplicates) counts."""
    loops = sum(1 for u, v in pairs if u == v)
    seen = {(min(u, v), max(u, v)) for u, v in pairs if u != v}
    dupes = len(pairs) - loops - len(seen)
    edges = np.array(sorted(seen), dtype=np.int64).reshape(-1, 2)
    return edges, loops, dupes


def load_citation_dataset(manifest: DatasetManifest, name: str = "citation") -> Graph:
    """Read ``<id> f_1 .. f_d <label>`` content and ``<id> <id>`` cites files."""
    content = _require(manifest.content_path)
    cites = _require(manifest.cites_path)
    ids: dict[str, int] = {}
    rows: list[list[float]] = []
    label_ids: dict[str, int] = {}
    labels: list[int] = []
    width = None
    with content.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise GraphFormatError(f"{content}:{lineno}: expected id, features and label")
            try:
                row = [float(x) for x in parts[1:-1]]
            except ValueError as exc:
                raise GraphFormatError(f"{content}:{lineno}: bad feature value ({exc})") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise GraphFormatError(f"{content}:{lineno}: expected {width} features, got {len(row)}")
            if parts[0] in ids:
                raise GraphFormatError(f"{content}:{lineno}: duplicate node id {parts[0]!r}")
            ids[parts[0]] = len(ids)
            rows.append(row)
            labels.append(label_ids.setdefault(parts[-1], len(label_ids)))
    if not ids:
        raise GraphFormatError(f"{content}: no nodes")

    pairs: list[tuple[int, int]] = []
    dangling = 0
    with cites.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise GraphFormatError(f"{cites}:{lineno}: expected two node ids")
            a, b = ids.get(parts[0]), ids.get(parts[1])
            if a is None or b is None:
                dangling += 1
                continue
            pairs.append((a, b))

    n = len(ids)
    edges, loops, dupes = _symmetrize(n, pairs)
    features = np.array(rows, dtype=np.float64).reshape(n, width)
    if manifest.row_normalize:
        features = row_normalize(features)
    report = LoadReport(nodes=n, undirected_edges=len(edges), dropped_self_loops=loops,
                        dropped_dangling=dangling, duplicate_edges=dupes)
    log.info("loaded %s: %s", name, report.to_text().replace("\n", " "))
    return Graph.from_edges(n, edges, features, np.array(labels), len(label_ids), name=name, report=report)


def _read_int_pairs(path: Path) -> list[tuple[int, int]]:
    pairs = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected 'u v'")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: node ids must be integers") from None
    return pairs


def _read_label_rows(path: Path, num_classes: int) -> np.ndarray:
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != num_classes:
                raise GraphFormatError(f"{path}:{lineno}: expected {num_classes} label bits, got {len(parts)}")
            try:
                rows.append([int(x) for x in parts])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: label bits must be 0/1") from None
    labels = np.array(rows, dtype=np.int64).reshape(-1, num_classes)
    if labels.size and not np.isin(labels, (0, 1)).all():
        raise GraphFormatError(f"{path}: label bits must be 0/1")
    return labels


def _edges_with_report(n: int, pairs: list[tuple[int, int]]) -> tuple[np.ndarray, dict]:
    known = [(u, v) for u, v in pairs if 0 <= u < n and 0 <= v < n]
    edges, loops, dupes = _symmetrize(n, known)
    return edges, dict(nodes=n, undirected_edges=len(edges), dropped_self_loops=loops,
                       dropped_dangling=len(pairs) - len(known), duplicate_edges=dupes)


def load_generic_dataset(manifest: DatasetManifest, name: str = "generic") -> Graph:
    """Edges ``u v`` (0-based), one feature row per node, one label per node."""
    features = np.loadtxt(_require(manifest.features_path), dtype=np.float64, ndmin=2)
    n = features.shape[0]
    if n == 0:
        raise GraphFormatError("features file is empty")
    labels_path = _require(manifest.labels_path)
    first = labels_path.read_text(encoding="utf-8").split("\n", 1)[0].split()
    if len(first) > 1:
        if manifest.num_classes is None:
            raise GraphFormatError("num_classes is required for multi-hot labels")
        labels = _read_label_rows(labels_path, manifest.num_classes)
        num_classes = manifest.num_classes
    else:
        labels = np.loadtxt(labels_path, dtype=np.int64, ndmin=1)
        num_classes = manifest.num_classes or int(labels.max()) + 1
    if len(labels) != n:
        raise GraphFormatError(f"{len(labels)} labels for {n} nodes")
    edges, info = _edges_with_report(n, _read_int_pairs(_require(manifest.edges_path)))
    if manifest.row_normalize:
        features = row_normalize(features)
    return Graph.from_edges(n, edges, features, labels, num_classes, name=name, report=LoadReport(**info))


def load_multilabel_dataset(edges_path, labels_path, num_classes: int, name: str = "multilabel") -> Graph:
    """Multi-label graph whose node features are its binary adjacency rows."""
    labels = _read_label_rows(_require(labels_path), num_classes)
    n = len(labels)
    if n == 0:
        raise GraphFormatError(f"{labels_path}: no label rows")
    edges, info = _edges_with_report(n, _read_int_pairs(_require(edges_path)))
    return adjacency_feature_graph(edges, labels, name=name, info=info)


def adjacency_feature_graph(edges, labels, name: str = "multilabel", info: dict | None = None) -> Graph:
    """Multi-hot labelled graph using binary adjacency rows as node features."""
    labels = np.asarray(labels, dtype=np.int64)
    n, num_classes = labels.shape
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    edges = edges[edges[:, 0] != edges[:, 1]]
    adjacency = np.zeros((n, n))
    adjacency[edges[:, 0], edges[:, 1]] = 1.0
    adjacency[edges[:, 1], edges[:, 0]] = 1.0
    empty = int((labels.sum(axis=1) == 0).sum())
    if empty:
        log.warning("%d nodes have no positive label", empty)
    info = info or dict(nodes=n, undirected_edges=int(np.triu(adjacency, 1).sum()))
    report = LoadReport(**info, empty_label_nodes=empty)
    return Graph.from_edges(n, edges, adjacency, labels, num_classes, name=name, report=report)


def make_splits(graph: Graph, seed: int, per_class_train: int, val_size: int, test_size: int) -> Graph:
    """Seeded split: ``per_class_train`` nodes per class, then val and test from the rest."""
    if graph.multilabel:
        raise SplitError("per-class splits need single-class labels; use make_fraction_splits")
    rng = np.random.default_rng(seed)
    train = []
    for c in range(graph.num_classes):
        members = np.flatnonzero(graph.labels == c)
        if len(members) < per_class_train:
            raise SplitError(f"class {c} has {len(members)} nodes, fewer than {per_class_train}")
        train.append(rng.choice(members, per_class_train, replace=False))
    train = np.sort(np.concatenate(train)) if train else np.zeros(0, dtype=np.int64)
    rest = np.setdiff1d(np.arange(graph.num_nodes), train)
    if val_size + test_size > len(rest):
        raise SplitError(f"val_size + test_size = {val_size + test_size} exceeds {len(rest)} remaining nodes")
    rest = rng.permutation(rest)
    return graph.with_splits(train, np.sort(rest[:val_size]), np.sort(rest[val_size:val_size + test_size]))


def make_fraction_splits(graph: Graph, seed: int, train_fraction: float) -> Graph:
    """Random train fraction; the remaining nodes split equally into val and test."""
    if not 0.0 < train_fraction < 1.0:
        raise SplitError(f"train_fraction must be in (0, 1), got {train_fraction}")
    perm = np.random.default_rng(seed).permutation(graph.num_nodes)
    n_train = max(1, int(round(train_fraction * graph.num_nodes)))
    rest = perm[n_train:]
    half = len(rest) // 2
    return graph.with_splits(np.sort(perm[:n_train]), np.sort(rest[:half]), np.sort(rest[half:]))


@dataclass(frozen=True, eq=False)
class CappedNeighbors:
    """Per-node neighbor slots truncated to at most ``cap`` entries.

    ``ids[u, j]`` is a neighbor of ``u`` when ``mask[u, j]``; ``edge_ids[u, j]``
    is the matching directed edge occurrence id in the source graph.
    """

    cap: int
    ids: np.ndarray
    edge_ids: np.ndarray
    mask: np.ndarray

    def lists(self) -> list[np.ndarray]:
        return [row[m] for row, m in zip(self.ids, self.mask)]


def neighbor_cap_view(graph: Graph, cap: int, seed: int) -> CappedNeighbors:
    """Keep all neighbors of nodes with degree <= cap, else a seeded uniform sample of cap."""
    if cap < 1:
        raise ValueError(f"neighbor cap must be >= 1, got {cap}")
    n = graph.num_nodes
    rng = np.random.default_rng(seed)
    ids = np.zeros((n, cap), dtype=np.int64)
    edge_ids = np.zeros((n, cap), dtype=np.int64)
    mask = np.zeros((n, cap), dtype=bool)
    deg = graph.degrees
    for u in range(n):
        start = graph.indptr[u]
        if deg[u] <= cap:
            pos = np.arange(deg[u])
        else:
            pos = np.sort(rng.choice(deg[u], cap, replace=False))
        k = len(pos)
        edge_ids[u, :k] = start + pos
        ids[u, :k] = graph.indices[start + pos]
        mask[u, :k] = True
    return CappedNeighbors(cap, _readonly(ids), _readonly(edge_ids), _readonly(mask))

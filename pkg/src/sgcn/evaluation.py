"""Classification and clustering metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import comb


def _node_index(node_set, n: int) -> np.ndarray:
    if node_set is None:
        return np.arange(n)
    idx = np.asarray(node_set, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("node set is empty")
    return idx


def accuracy(preds, labels, node_set=None) -> float:
    preds, labels = np.asarray(preds), np.asarray(labels)
    idx = _node_index(node_set, len(labels))
    return float(np.mean(preds[idx] == labels[idx]))


def f1_scores(pred, label, node_set=None) -> tuple[float, float]:
    """(macro_f1, micro_f1) for multi-hot predictions; 0/0 counts as 0."""
    pred, label = np.asarray(pred, dtype=bool), np.asarray(label, dtype=bool)
    if pred.shape != label.shape:
        raise ValueError(f"prediction width {pred.shape} does not match labels {label.shape}")
    idx = _node_index(node_set, len(label))
    p, y = pred[idx], label[idx]
    tp = (p & y).sum(axis=0).astype(float)
    fp = (p & ~y).sum(axis=0).astype(float)
    fn = (~p & y).sum(axis=0).astype(float)

    def f1(tp, fp, fn):
        denom = 2 * tp + fp + fn
        return np.divide(2 * tp, denom, out=np.zeros_like(np.asarray(tp, dtype=float)), where=denom > 0)

    return float(f1(tp, fp, fn).mean()), float(f1(tp.sum(), fp.sum(), fn.sum()))


@dataclass
class ClusteringResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float


def _sq_dist(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = (points ** 2).sum(1)[:, None] - 2 * points @ centroids.T + (centroids ** 2).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centroids = [points[rng.integers(n)]]
    closest = ((points - centroids[0]) ** 2).sum(1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            i = rng.integers(n)
        else:
            i = rng.choice(n, p=closest / total)
        centroids.append(points[i])
        closest = np.minimum(closest, ((points - points[i]) ** 2).sum(1))
    return np.array(centroids)


def _inertia(points, centroids, assign) -> float:
    return float(((points - centroids[assign]) ** 2).sum())


def _lloyd(points, centroids, max_iter: int, history: list | None = None):
    assign = None
    for _ in range(max_iter):
        new = np.argmin(_sq_dist(points, centroids), axis=1)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        if history is not None:
            history.append(_inertia(points, centroids, assign))
        centroids = centroids.copy()
        for c in range(len(centroids)):
            members = assign == c
            if members.any():
                centroids[c] = points[members].mean(0)
            else:
                # re-seed an empty cluster at the point farthest from its centroid
                far = np.argmax(((points - centroids[assign]) ** 2).sum(1))
                centroids[c] = points[far]
                assign = assign.copy()
                assign[far] = c
        if history is not None:
            history.append(_inertia(points, centroids, assign))
    assign = np.argmin(_sq_dist(points, centroids), axis=1)
    return assign, centroids


def kmeans(points, n_clusters: int, seed: int = 0, max_iter: int = 300, restarts: int = 20,
           history: list | None = None) -> ClusteringResult:
    """Lloyd's algorithm from k-means++ seeds; best of ``restarts`` by inertia."""
    points = np.asarray(points, dtype=np.float64)
    if n_clusters > len(points):
        raise ValueError(f"cannot form {n_clusters} clusters from {len(points)} points")
    if n_clusters < 1:
        raise ValueError("n_clusters must be >= 1")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        trace = [] if history is not None else None
        assign, centroids = _lloyd(points, _kmeans_pp(points, n_clusters, rng), max_iter, trace)
        result = ClusteringResult(assign, centroids, _inertia(points, centroids, assign))
        if best is None or result.inertia < best.inertia:
            best = result
        if history is not None:
            history.append(trace)
    return best


def contingency(a, b) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(assignments, labels, average: str = "arithmetic") -> float:
    """Mutual information normalized by the mean (arithmetic or geometric) entropy."""
    table = contingency(assignments, labels)
    n = table.sum()
    ha, hb = _entropy(table.sum(1)), _entropy(table.sum(0))
    if ha == 0 and hb == 0:
        return 1.0
    nz = table > 0
    outer = np.outer(table.sum(1), table.sum(0))
    mi = float((table[nz] / n * np.log(table[nz] * n / outer[nz])).sum())
    if average == "arithmetic":
        denom = (ha + hb) / 2
    elif average == "geometric":
        denom = np.sqrt(ha * hb)
    else:
        raise ValueError(f"unknown NMI average {average!r}")
    if denom == 0:
        return 0.0
    return float(min(max(mi / denom, 0.0), 1.0))


def ari(assignments, labels) -> float:
    """Adjusted Rand index from the pair-counting contingency formula."""
    table = contingency(assignments, labels)
    n = table.sum()
    sum_cells = comb(table, 2).sum()
    sum_a = comb(table.sum(1), 2).sum()
    sum_b = comb(table.sum(0), 2).sum()
    total = comb(n, 2)
    expected = sum_a * sum_b / total if total else 0.0
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))

"""Seeded synthetic graphs for tests, gradient checks and smoke runs."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .graphstore import Graph, row_normalize


def _planted_edges(communities: np.ndarray, p_in: float, p_out: float, rng) -> np.ndarray:
    n = len(communities)
    iu, ju = np.triu_indices(n, k=1)
    same = communities[iu] == communities[ju]
    keep = rng.random(len(iu)) < np.where(same, p_in, p_out)
    return np.stack([iu[keep], ju[keep]], axis=1)


def erdos_renyi(n: int, p: float, seed: int, d_in: int = 8, num_classes: int = 2) -> Graph:
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    features = rng.normal(size=(n, d_in))
    labels = rng.integers(num_classes, size=n)
    return Graph.from_edges(n, edges, features, labels, num_classes, name=f"er{n}")


def sbm(n: int, num_classes: int, seed: int, p_in: float = 0.25, p_out: float = 0.01,
        d_in: int = 16, signal: float = 0.5, name: str = "sbm") -> Graph:
    """Planted-partition graph with weakly class-dependent nonnegative features."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % num_classes
    rng.shuffle(labels)
    edges = _planted_edges(labels, p_in, p_out, rng)
    centers = rng.random((num_classes, d_in))
    features = np.clip(signal * centers[labels] + rng.random((n, d_in)), 0.0, None)
    return Graph.from_edges(n, edges, row_normalize(features), labels, num_classes, name=name)


def citation_like(n: int, num_classes: int, seed: int, d_in: int = 300, words_per_doc: int = 18,
                  topic_words: int = 40, topic_share: float = 0.4, p_in: float = 0.012,
                  p_out: float = 0.0012) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bag-of-words documents citing mostly within their topic.

    Returns (binary features, labels, undirected edges).
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(num_classes, size=n)
    vocab = rng.permutation(d_in)
    topics = [vocab[(c * topic_words) % d_in:][:topic_words] for c in range(num_classes)]
    features = np.zeros((n, d_in))
    for u in range(n):
        n_topic = rng.binomial(words_per_doc, topic_share)
        features[u, rng.choice(topics[labels[u]], n_topic, replace=False)] = 1.0
        features[u, rng.choice(d_in, words_per_doc - n_topic, replace=False)] = 1.0
    edges = _planted_edges(labels, p_in, p_out, rng)
    return features, labels, edges


def write_citation_files(directory, features, labels, edges, prefix: str = "data") -> tuple[Path, Path]:
    """Write features/labels/edges in the tab-separated citation layout."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    content = directory / f"{prefix}.content"
    cites = directory / f"{prefix}.cites"
    with content.open("w", encoding="utf-8") as fh:
        for u, (row, label) in enumerate(zip(features, labels)):
            fh.write("\t".join([f"n{u}", *(f"{x:g}" for x in row), f"class_{label}"]) + "\n")
    with cites.open("w", encoding="utf-8") as fh:
        for u, v in edges:
            fh.write(f"n{u}\tn{v}\n")
    return content, cites


def multilabel_sbm(n: int = 200, num_classes: int = 5, seed: int = 0, p_in: float = 0.12,
                   p_out: float = 0.005, second_label: float = 0.3) -> tuple[np.ndarray, np.ndarray]:
    """Overlapping-community graph: every node has a primary label and maybe a second.

    Nodes sharing any label connect with ``p_in``, others with ``p_out``.
    Returns (undirected edges, multi-hot labels).
    """
    rng = np.random.default_rng(seed)
    labels = np.zeros((n, num_classes), dtype=np.int64)
    primary = np.arange(n) % num_classes
    rng.shuffle(primary)
    labels[np.arange(n), primary] = 1
    extra = rng.random(n) < second_label
    other = (primary + rng.integers(1, num_classes, size=n)) % num_classes
    labels[np.flatnonzero(extra), other[extra]] = 1
    iu, ju = np.triu_indices(n, k=1)
    shared = (labels[iu] & labels[ju]).any(axis=1)
    keep = rng.random(len(iu)) < np.where(shared, p_in, p_out)
    return np.stack([iu[keep], ju[keep]], axis=1), labels


def toy_graph(seed: int = 0) -> Graph:
    """Small two-community graph for gradient checks (24 nodes)."""
    g = sbm(24, 2, seed, p_in=0.35, p_out=0.05, d_in=6, name="toy")
    order = np.random.default_rng(seed).permutation(24)
    return g.with_splits(np.sort(order[:8]), np.sort(order[8:16]), np.sort(order[16:]))

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgcn.evaluation import accuracy, ari, contingency, f1_scores, kmeans, nmi

from oracles import entropy_nmi, loop_f1, pair_ari


def test_accuracy_examples():
    assert accuracy([0, 1, 2], [0, 1, 2]) == 1.0
    assert accuracy([1, 2, 0], [0, 1, 2]) == 0.0
    assert accuracy([0, 1, 2, 0], [0, 1, 2, 3]) == 0.75
    assert accuracy([9, 1, 9], [0, 1, 2], node_set=[1]) == 1.0
    with pytest.raises(ValueError):
        accuracy([0], [0], node_set=[])


def test_f1_examples():
    y = np.array([[1, 0, 1], [0, 1, 0], [1, 1, 0]])
    assert f1_scores(y, y) == (1.0, 1.0)
    assert f1_scores(np.zeros_like(y), y) == (0.0, 0.0)
    with pytest.raises(ValueError):
        f1_scores(y[:, :2], y)


@pytest.mark.parametrize("seed", range(3))
def test_f1_matches_confusion_loop(seed):
    rng = np.random.default_rng(seed)
    pred, label = rng.integers(0, 2, (20, 5)), rng.integers(0, 2, (20, 5))
    label[:, 4] = 0
    pred[:, 4] = 0  # an absent class: 0/0 counts as 0
    macro, micro = f1_scores(pred, label)
    ref_macro, ref_micro = loop_f1(pred.tolist(), label.tolist())
    assert abs(macro - ref_macro) <= 1e-12 and abs(micro - ref_micro) <= 1e-12


def test_nmi_examples():
    a = np.array([0, 0, 1, 1, 2, 2])
    assert nmi(a, a) == pytest.approx(1.0)
    assert nmi(a, (a + 1) % 3) == pytest.approx(1.0)
    assert nmi(np.zeros(6, dtype=int), [0, 1, 0, 1, 0, 1]) == 0.0
    with pytest.raises(ValueError):
        nmi(a, a, average="max")


@pytest.mark.parametrize("average", ["arithmetic", "geometric"])
@pytest.mark.parametrize("seed", range(3))
def test_nmi_matches_entropy_oracle(seed, average):
    rng = np.random.default_rng(seed)
    a, b = rng.integers(0, 4, 30), rng.integers(0, 3, 30)
    assert abs(nmi(a, b, average) - entropy_nmi(a.tolist(), b.tolist(), average)) <= 1e-10


def test_ari_examples():
    a = np.array([0, 0, 1, 1, 2, 2])
    assert ari(a, a) == pytest.approx(1.0)
    assert ari(a, [5, 5, 3, 3, 4, 4]) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    assert abs(ari(rng.integers(0, 4, 1000), np.arange(1000) % 4)) <= 0.1


@pytest.mark.parametrize("seed", range(3))
def test_ari_matches_pair_oracle(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.integers(0, 4, 30), rng.integers(0, 3, 30)
    assert abs(ari(a, b) - pair_ari(a.tolist(), b.tolist())) <= 1e-10


def test_metrics_agree_with_scikit_learn():
    sk = pytest.importorskip("sklearn.metrics")
    rng = np.random.default_rng(9)
    for _ in range(10):
        a, b = rng.integers(0, 5, 80), rng.integers(0, 4, 80)
        assert abs(nmi(a, b) - sk.normalized_mutual_info_score(b, a)) <= 1e-10
        assert abs(ari(a, b) - sk.adjusted_rand_score(b, a)) <= 1e-10


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=2, max_size=40), st.integers(0, 10_000))
def test_metric_symmetry_and_range(a, seed):
    a = np.array(a)
    b = np.random.default_rng(seed).integers(0, 3, len(a))
    assert 0.0 <= nmi(a, b) <= 1.0
    assert abs(nmi(a, b) - nmi(b, a)) <= 1e-12
    assert abs(ari(a, b) - ari(b, a)) <= 1e-12
    assert contingency(a, b).sum() == len(a)


def test_kmeans_exact_locations():
    points = np.repeat(np.array([[0.0, 0.0], [5.0, 5.0], [-3.0, 4.0]]), 4, axis=0)
    result = kmeans(points, 3, seed=0)
    assert result.inertia == 0.0
    assert nmi(result.assignments, np.repeat([0, 1, 2], 4)) == pytest.approx(1.0)


def test_kmeans_single_cluster_is_mean():
    points = np.random.default_rng(1).normal(size=(50, 3))
    result = kmeans(points, 1, seed=0)
    assert np.allclose(result.centroids[0], points.mean(axis=0))


def test_kmeans_recovers_blobs_and_is_deterministic():
    rng = np.random.default_rng(2)
    truth = np.repeat([0, 1], 100)
    points = rng.normal(size=(200, 4)) * 0.5 + np.where(truth[:, None] == 0, -4.0, 4.0)
    a, b = kmeans(points, 2, seed=3), kmeans(points, 2, seed=3)
    assert ari(a.assignments, truth) == pytest.approx(1.0)
    assert np.array_equal(a.assignments, b.assignments)


def test_kmeans_inertia_never_increases():
    points = np.random.default_rng(4).normal(size=(120, 2))
    history = []
    kmeans(points, 5, seed=0, restarts=3, history=history)
    for trace in history:
        assert (np.diff(trace) <= 1e-9).all()


def test_kmeans_errors():
    with pytest.raises(ValueError):
        kmeans(np.zeros((2, 2)), 3)
    with pytest.raises(ValueError):
        kmeans(np.zeros((2, 2)), 0)

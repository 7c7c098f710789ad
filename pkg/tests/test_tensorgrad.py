import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sgcn import tensorgrad as tg
from sgcn.tensorgrad import Tape, Tensor, backward


def numeric_grad(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``fn`` at ``x``."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = fn(x)
        flat[i] = old - h
        down = fn(x)
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return g


def analytic_grad(build, x: np.ndarray) -> np.ndarray:
    t = Tensor(x.copy(), requires_grad=True)
    with Tape() as tape:
        loss = build(t)
    backward(tape, loss)
    return t.grad


def assert_gradcheck(build, x, tol=1e-3):
    analytic = analytic_grad(build, x)
    numeric = numeric_grad(lambda v: build(Tensor(v)).item(), x.copy())
    rel = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    assert rel.max() <= tol


def test_matmul_identity():
    b = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(tg.matmul(np.eye(2), b).value, b)


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                expected[i, j] += a[i, k] * b[k, j]
    assert np.allclose(tg.matmul(a, b).value, expected, rtol=0, atol=1e-12)


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        tg.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_grad_of_sum_matmul_is_b_transposed_broadcast():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    grad = analytic_grad(lambda t: tg.sum(tg.matmul(t, b)), a)
    assert np.allclose(grad, np.broadcast_to(b.sum(axis=1), (3, 4)))


def test_relu_values_and_mask():
    x = np.array([-1.0, 0.0, 2.0])
    assert np.array_equal(tg.relu(x).value, [0.0, 0.0, 2.0])
    assert np.array_equal(analytic_grad(lambda t: tg.sum(tg.relu(t)), x), [0.0, 0.0, 1.0])


def test_relu_finite_differences_away_from_kink():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(4, 5))
    x[np.abs(x) < 1e-3] = 0.5
    assert_gradcheck(lambda t: tg.sum(tg.mul(tg.relu(t), t)), x, tol=1e-6)


def test_l2_normalize_examples():
    assert np.allclose(tg.l2_normalize_rows(np.array([[3.0, 4.0]])).value, [[0.6, 0.8]])
    zero = tg.l2_normalize_rows(np.zeros((1, 3))).value
    assert np.array_equal(zero, np.zeros((1, 3)))
    grad = analytic_grad(lambda t: tg.sum(tg.l2_normalize_rows(t)), np.zeros((2, 3)))
    assert np.array_equal(grad, np.zeros((2, 3)))


def test_l2_normalize_unit_norm_on_random_rows():
    x = np.random.default_rng(3).normal(size=(50, 7))
    norms = np.linalg.norm(tg.l2_normalize_rows(x).value, axis=1)
    assert np.abs(norms - 1).max() <= 1e-12


def test_softmax_examples():
    assert np.allclose(tg.softmax_rows(np.zeros((1, 2))).value, [[0.5, 0.5]])
    big = tg.softmax_rows(np.array([[1000.0, 0.0]])).value
    assert abs(big[0, 0] - 1) <= 1e-12 and big[0, 1] <= 1e-12
    rows = tg.softmax_rows(np.random.default_rng(4).normal(size=(20, 6)) * 5).value
    assert np.abs(rows.sum(axis=1) - 1).max() <= 1e-12


def test_dropout_modes():
    x = np.random.default_rng(5).normal(size=(10, 10))
    assert np.array_equal(tg.dropout(x, 0.0, True).value, x)
    assert np.array_equal(tg.dropout(x, 0.9, False).value, x)
    with pytest.raises(ValueError):
        tg.dropout(x, 1.0, True)
    with pytest.raises(ValueError):
        tg.dropout(x, -0.1, True)


def test_dropout_kept_fraction_and_scale():
    x = np.ones((200, 200))
    out = tg.dropout(x, 0.5, True, np.random.default_rng(6)).value
    kept = out != 0
    assert abs(kept.mean() - 0.5) <= 0.02
    assert np.allclose(out[kept], 2.0)


def test_backward_sum_and_square():
    x = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(analytic_grad(lambda t: tg.sum(t), x), np.ones(3))
    assert np.allclose(analytic_grad(lambda t: tg.sum(tg.mul(t, t)), x), 2 * x)


def test_backward_requires_scalar_and_clears_tape():
    t = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        vec = tg.scalar_mul(t, 2.0)
    with pytest.raises(ValueError):
        backward(tape, vec)
    with Tape() as tape:
        loss = tg.sum(tg.scalar_mul(t, 2.0))
    backward(tape, loss)
    assert len(tape) == 0
    assert np.array_equal(t.grad, [2.0, 2.0, 2.0])


def test_backward_visits_records_in_reverse_order():
    order = []
    t = Tensor(np.ones(2), requires_grad=True)
    with Tape() as tape:
        a = tg.scalar_mul(t, 3.0)
        b = tg.sum(a)
    for rec in tape.records:
        rule = rec.rule
        rec.rule = (lambda r, name: (lambda g: (order.append(name), r(g))[1]))(rule, rec.output.tape_id)
    backward(tape, b)
    assert order == [1, 0]


def test_no_recording_without_tape():
    t = Tensor(np.ones(2), requires_grad=True)
    out = tg.sum(t)
    assert out.tape_id is None
    assert tg.active_tape() is None


@pytest.mark.filterwarnings("ignore:overflow")
def test_non_finite_results_rejected():
    with pytest.raises(FloatingPointError):
        tg.scalar_mul(np.array([1e308]), 10.0)


# every differentiable op, checked at smooth random points

SMOOTH_OPS = {
    "matmul": lambda t, c: tg.sum(tg.mul(tg.matmul(t, c["b"]), c["r"])),
    "add": lambda t, c: tg.sum(tg.mul(tg.add(t, c["row"]), c["s"])),
    "sub": lambda t, c: tg.sum(tg.mul(tg.sub(c["s"], t), c["s"])),
    "mul": lambda t, c: tg.sum(tg.mul(t, t)),
    "scalar_mul": lambda t, c: tg.sum(tg.mul(tg.scalar_mul(t, -1.5), c["s"])),
    "l2_normalize_rows": lambda t, c: tg.sum(tg.mul(tg.l2_normalize_rows(t), c["s"])),
    "softmax_rows": lambda t, c: tg.sum(tg.mul(tg.softmax_rows(t), c["s"])),
    "log_softmax_rows": lambda t, c: tg.sum(tg.mul(tg.log_softmax_rows(t), c["s"])),
    "sigmoid": lambda t, c: tg.sum(tg.mul(tg.sigmoid(t), c["s"])),
    "log_sigmoid": lambda t, c: tg.sum(tg.mul(tg.log_sigmoid(t), c["s"])),
    "take": lambda t, c: tg.sum(tg.mul(tg.take(t, [2, 0, 2, 1]), c["t4"])),
    "segment_sum": lambda t, c: tg.sum(tg.mul(tg.segment_sum(t, [1, 1, 0, 1], 2), c["seg"])),
    "reshape": lambda t, c: tg.sum(tg.mul(tg.reshape(t, (2, 2, 3)), c["s"].reshape(2, 2, 3))),
    "sum_axis": lambda t, c: tg.sum(tg.mul(tg.sum(t, axis=-1), c["s"][:, 0])),
    "bmm_nt": lambda t, c: tg.sum(tg.mul(tg.bmm_nt(tg.reshape(t, (2, 2, 3)), c["s"].reshape(2, 2, 3)), c["bm"])),
    "sparse_matmul": lambda t, c: tg.sum(tg.mul(tg.sparse_matmul(c["sp"], t), c["s"])),
}


@pytest.mark.parametrize("name", sorted(SMOOTH_OPS))
def test_op_gradcheck(name):
    import scipy.sparse as sp

    rng = np.random.default_rng(7)
    consts = {
        "b": rng.normal(size=(3, 5)), "r": rng.normal(size=(4, 5)), "row": rng.normal(size=3),
        "s": rng.normal(size=(4, 3)), "t4": rng.normal(size=(4, 3)), "seg": rng.normal(size=(2, 3)),
        "bm": rng.normal(size=(2, 2, 2)), "sp": sp.random(4, 4, density=0.5, random_state=1),
    }
    x = rng.normal(size=(4, 3))
    assert_gradcheck(lambda t: SMOOTH_OPS[name](t, consts), x)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 4), elements=st.floats(-50, 50)))
def test_softmax_rows_positive_simplex(x):
    y = tg.softmax_rows(x).value
    assert (y > 0).all()
    assert np.abs(y.sum(axis=1) - 1).max() <= 1e-10


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (5, 4), elements=st.floats(-1e3, 1e3)))
def test_l2_normalize_idempotent(x):
    once = tg.l2_normalize_rows(x).value
    twice = tg.l2_normalize_rows(once).value
    assert np.abs(twice - once).max() <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_normalize_softmax_chain_gradcheck(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 4))
    weights = rng.normal(size=(3, 4))
    assert_gradcheck(lambda t: tg.sum(tg.mul(tg.softmax_rows(tg.l2_normalize_rows(t)), weights)), x)

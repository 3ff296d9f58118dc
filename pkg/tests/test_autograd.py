import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from histnorm import autograd as ag
from histnorm.autograd import ShapeError, Tape, TapeError, Tensor, apply_primitive, backward

from gradcheck import fd_gradient, rel_error
from primitive_cases import CASES
from gradcheck import check_op


def test_tanh_of_zero_is_zero():
    out = apply_primitive("tanh", [Tensor(np.zeros((2, 3)))])
    assert out.shape == (2, 3)
    assert np.all(out.data == 0)


def test_softmax_symmetric_pair():
    np.testing.assert_allclose(ag.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])


def test_matmul_shapes():
    out = ag.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 4))))
    assert out.shape == (2, 4)
    with pytest.raises(ShapeError, match=r"matmul.*3.*4"):
        ag.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 4))))


def test_elementwise_shape_error_names_primitive():
    with pytest.raises(ShapeError, match="add"):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))


def test_tensor_values_row_major():
    t = Tensor(np.arange(6.0).reshape(2, 3))
    assert list(t.values) == [0, 1, 2, 3, 4, 5]
    assert t.values.size == int(np.prod(t.shape))


def test_default_precision_is_32_bit():
    assert Tensor([1, 2]).dtype == np.float32
    assert Tensor(np.zeros(2)).dtype == np.float64


def test_grad_of_sum_is_ones(rng):
    w = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    with Tape() as tape:
        loss = w.sum()
    g = backward(tape, loss)
    np.testing.assert_array_equal(g[w.node_id], np.ones((3, 4)))
    np.testing.assert_array_equal(w.grad, np.ones((3, 4)))


def test_constant_loss_gives_empty_map():
    w = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        loss = Tensor(0.0)
    assert backward(tape, loss) == {}
    assert w.grad is None


def test_shared_leaf_accumulates():
    w = Tensor(np.array([2.0, 3.0]), requires_grad=True)
    with Tape() as tape:
        loss = (w * w + w).sum()
    g = backward(tape, loss)
    np.testing.assert_allclose(g[w.node_id], 2 * w.data + 1)


def test_backward_twice_is_an_error():
    w = Tensor(np.ones(2), requires_grad=True)
    with Tape() as tape:
        loss = (w * w).sum()
    backward(tape, loss)
    with pytest.raises(TapeError):
        backward(tape, loss)


def test_loss_from_another_tape_is_an_error():
    w = Tensor(np.ones(2), requires_grad=True)
    with Tape():
        loss = (w * w).sum()
    with Tape() as other:
        pass
    with pytest.raises(TapeError):
        backward(other, loss)


def test_non_scalar_loss_is_an_error():
    w = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        out = w * 2.0
    with pytest.raises(ShapeError):
        backward(tape, out)


def test_no_recording_outside_a_tape():
    w = Tensor(np.ones(3), requires_grad=True)
    out = ag.tanh(w)
    assert ag.active_tape() is None
    assert not out.requires_grad


def test_unknown_primitive():
    with pytest.raises(ValueError):
        apply_primitive("conv2d", [])


def test_embedding_range_check():
    with pytest.raises(ValueError):
        ag.embedding(Tensor(np.ones((4, 2))), np.array([0, 4]))


def test_dropout_identity_at_inference(rng):
    x = Tensor(rng.standard_normal((5, 5)))
    assert ag.dropout(x, 0.5, rng, train=False) is x


def test_dropout_preserves_expectation():
    x = Tensor(np.ones(200_000))
    y = ag.dropout(x, 0.3, np.random.default_rng(1))
    assert abs(y.data.mean() - 1.0) < 0.01
    assert set(np.unique(y.data).round(6)) <= {0.0, round(1 / 0.7, 6)}


def test_cross_entropy_uniform_logits_is_log_v():
    V = 7
    logits = Tensor(np.zeros((2, 3, V)))
    loss = ag.cross_entropy(logits, np.zeros((2, 3), dtype=int))
    assert abs(float(loss.data) - np.log(V)) < 1e-12


def test_cross_entropy_respects_mask():
    logits = np.log(np.array([[[0.5, 0.5], [0.9, 0.1]]]))
    loss = ag.cross_entropy(Tensor(logits), np.array([[0, 1]]), np.array([[1.0, 0.0]]))
    assert abs(float(loss.data) - np.log(2)) < 1e-12


@pytest.mark.parametrize("name", sorted(CASES))
def test_primitive_matches_finite_differences(name):
    worst = max(check_op(*CASES[name](np.random.default_rng(s)), seed=s) for s in range(20))
    assert worst < 1e-4


def test_two_layer_tanh_network_cross_entropy():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((4, 5))
    W1, b1 = rng.standard_normal((5, 6)), rng.standard_normal(6)
    W2, b2 = rng.standard_normal((6, 3)), rng.standard_normal(3)
    y = np.array([[0], [2], [1], [2]])

    def loss_of(W1, b1, W2, b2):
        h = ag.tanh(ag.matmul(Tensor(x), W1) + b1)
        logits = ag.matmul(h, W2) + b2
        return ag.cross_entropy(ag.reshape(logits, (4, 1, 3)), y)

    params = [Tensor(a.copy(), requires_grad=True) for a in (W1, b1, W2, b2)]
    with Tape() as tape:
        loss = loss_of(*params)
    g = backward(tape, loss)
    numeric = fd_gradient(lambda *a: float(loss_of(*[Tensor(v) for v in a]).data),
                          [W1, b1, W2, b2])
    for p, n in zip(params, numeric):
        assert rel_error(g[p.node_id].reshape(-1), n).max() < 1e-4


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 8)),
              elements=st.floats(-50, 50)))
def test_softmax_is_a_distribution(x):
    p = ag.softmax(Tensor(x), axis=-1).data
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(-1), 1.0, atol=1e-6)


@given(arrays(np.float32, st.integers(1, 10), elements=st.floats(-1e3, 1e3, width=32)))
def test_softmax_float32_large_inputs(x):
    p = ag.softmax(Tensor(x)).data
    assert np.all(np.isfinite(p))
    assert abs(float(p.sum()) - 1.0) < 1e-5


@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_unbroadcast_gradient_shapes(a, b, c):
    x = Tensor(np.ones((a, b, c)), requires_grad=True)
    y = Tensor(np.ones((1, c)), requires_grad=True)
    with Tape() as tape:
        loss = (x * y).sum()
    g = backward(tape, loss)
    assert g[x.node_id].shape == x.shape
    assert g[y.node_id].shape == y.shape
    assert np.all(g[y.node_id] == a * b)

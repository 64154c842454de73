import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from depfuse.errors import BackwardTwice, DetachedGraph, EmptyMaskRow, IndexOutOfRange, ShapeMismatch
from depfuse.nn import (
    AdamW,
    Parameter,
    Tensor,
    adamw_step,
    backward,
    concat,
    cross_entropy,
    dropout,
    embedding_lookup,
    finite_difference_gradients,
    leaky_relu,
    masked_softmax,
    matmul,
    mean_rows,
    neighbor_sum,
    relative_error,
    relu,
    softmax,
    tsum,
)
from oracles import scalar_adamw

finite = st.floats(-5, 5, allow_nan=False)


def param(rng, *shape, name="p", lo=-1.0, hi=1.0):
    return Parameter(rng.uniform(lo, hi, size=shape), name)


# ------------------------------------------------------------- primitives

@pytest.mark.parametrize("logits,mask,expected", [
    ([1.0, 1.0], [True, True], [0.5, 0.5]),
    ([0.0, math.log(3.0)], [True, True], [0.25, 0.75]),
    ([5.0, 99.0], [True, False], [1.0, 0.0]),
])
def test_masked_softmax_examples(logits, mask, expected):
    out = masked_softmax(Tensor(logits), mask).data
    np.testing.assert_allclose(out, expected, atol=1e-15)


def test_masked_entries_exactly_zero():
    out = masked_softmax(Tensor(np.array([[3.0, -2.0, 7.0]])), [[False, True, False]]).data
    assert out.tolist() == [[0.0, 1.0, 0.0]]


def test_empty_mask_row():
    with pytest.raises(EmptyMaskRow):
        masked_softmax(Tensor(np.zeros((2, 2))), [[True, False], [False, False]])


def test_mask_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        masked_softmax(Tensor(np.zeros((2, 2))), np.ones((2, 3), dtype=bool))


@st.composite
def masked_rows(draw):
    rows, cols = draw(st.integers(1, 5)), draw(st.integers(1, 6))
    x = draw(arrays(np.float64, (rows, cols), elements=st.floats(-50, 50)))
    mask = draw(arrays(np.bool_, (rows, cols)))
    mask[np.arange(rows), draw(st.integers(0, cols - 1))] = True
    shift = draw(st.floats(-20, 20))
    return x, mask, shift


@settings(max_examples=150, deadline=None)
@given(masked_rows())
def test_masked_softmax_rows_and_shift(case):
    x, mask, shift = case
    y = masked_softmax(Tensor(x), mask).data
    assert np.all(y[~mask] == 0.0)
    np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-12)
    shifted = masked_softmax(Tensor(x + shift), mask).data
    np.testing.assert_allclose(shifted, y, atol=1e-12)


def test_relu_example():
    assert relu(Tensor([-1.0, 2.0])).data.tolist() == [0.0, 2.0]


def test_leaky_relu_example():
    assert leaky_relu(Tensor([-1.0, 2.0]), 0.2).data.tolist() == [-0.2, 2.0]


def test_concat_and_shape_errors():
    out = concat([Tensor(np.ones((2, 1))), Tensor(np.zeros((2, 2)))], axis=1)
    assert out.shape == (2, 3)
    with pytest.raises(ShapeMismatch):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_mean_rows_example():
    x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 9.0]]))
    assert mean_rows(x, [[0, 1], [2]]).data.tolist() == [[2.0, 3.0], [5.0, 9.0]]


def test_embedding_lookup_repeats():
    table = Parameter(np.arange(6.0).reshape(3, 2), "t")
    out = embedding_lookup(table, [2, 2, 0])
    backward(tsum(out))
    assert table.grad.tolist() == [[1, 1], [0, 0], [2, 2]]


def test_dropout_identity_when_off(rng):
    x = Tensor(rng.normal(size=(4, 4)))
    assert dropout(x, 0.5, False, rng) is x
    assert dropout(x, 0.0, True, rng) is x


def test_dropout_inverted_scaling(rng):
    x = Tensor(np.ones((200, 50)))
    y = dropout(x, 0.3, True, rng).data
    kept = y[y != 0]
    np.testing.assert_allclose(kept, 1 / 0.7)
    assert abs((y == 0).mean() - 0.3) < 0.02


def test_neighbor_sum_matches_matmul(rng):
    w, v = rng.normal(size=(5, 5)), rng.normal(size=(5, 3))
    np.testing.assert_allclose(neighbor_sum(Tensor(w), Tensor(v)).data, w @ v, atol=1e-12)


def test_neighbor_sum_permutation_exact(rng):
    w, v = rng.normal(size=(6, 6)), rng.normal(size=(6, 4))
    perm = rng.permutation(6)
    a = neighbor_sum(Tensor(w), Tensor(v)).data
    b = neighbor_sum(Tensor(w[perm][:, perm]), Tensor(v[perm])).data
    assert np.array_equal(a[perm], b)


# -------------------------------------------------------------- cross entropy

def test_cross_entropy_uniform():
    assert cross_entropy(Tensor([[0.0, 0.0, 0.0]]), [0]).item() == pytest.approx(math.log(3), abs=1e-12)


def test_cross_entropy_confident():
    expected = math.log1p(2 * math.exp(-20.0))  # hand log-sum-exp
    got = cross_entropy(Tensor([[10.0, -10.0, -10.0]]), [0]).item()
    assert got == pytest.approx(expected, rel=1e-9)
    assert got == pytest.approx(4.1e-9, rel=0.01)


def test_cross_entropy_batch_mean():
    one = cross_entropy(Tensor([[0.3, -1.0, 2.0]]), [1]).item()
    two = cross_entropy(Tensor([[0.3, -1.0, 2.0]] * 2), [1, 1]).item()
    assert one == pytest.approx(two, abs=1e-15)


@pytest.mark.parametrize("gold", [[3], [-1]])
def test_cross_entropy_bad_index(gold):
    with pytest.raises(IndexOutOfRange):
        cross_entropy(Tensor([[0.0, 0.0, 0.0]]), gold)


def test_cross_entropy_stable_for_huge_logits():
    assert np.isfinite(cross_entropy(Tensor([[1000.0, -1000.0, 0.0]]), [1]).item())


# ---------------------------------------------------------------- backward

def test_outer_product_gradient(rng):
    W = param(rng, 3, 4, name="W")
    x = rng.normal(size=4)
    backward(tsum(matmul(W, Tensor(x))))
    np.testing.assert_allclose(W.grad, np.outer(np.ones(3), x), atol=1e-12)
    fd = finite_difference_gradients(lambda: float((W.data @ x).sum()), [W])
    assert relative_error([W.grad], fd) < 1e-8


def test_non_participating_gets_zero(rng):
    a, b = param(rng, 2, name="a"), param(rng, 2, name="b")
    grads = backward(tsum(a * a), [a, b])
    assert np.array_equal(grads[1], np.zeros(2))


def test_backward_twice_raises(rng):
    a = param(rng, 2)
    loss = tsum(a * a)
    backward(loss)
    with pytest.raises(BackwardTwice):
        backward(loss)


def test_detached_and_non_scalar(rng):
    with pytest.raises(DetachedGraph):
        backward(tsum(Tensor([1.0, 2.0])))
    with pytest.raises(ShapeMismatch):
        backward(param(rng, 2) * 2.0)


def test_diamond_graph_visits_each_node_once(rng):
    # y feeds two branches; a double visit would double-count its gradient
    a = Parameter(np.array([1.5]), "a")
    y = a * a
    loss = tsum(y * 3.0 + y * 2.0)
    backward(loss)
    assert a.grad.tolist() == [5 * 2 * 1.5]


def test_tape_reverse_order_long_chain():
    a = Parameter(np.array([0.9]), "a")
    x = a
    for _ in range(50):
        x = x * 1.01 + 0.0
    backward(tsum(x))
    assert a.grad[0] == pytest.approx(1.01 ** 50, rel=1e-12)


def test_non_finite_detected():
    with pytest.raises(FloatingPointError):
        Tensor([1.0]) * np.inf


# ------------------------------------------------------------ gradient checks

def _away_from_kinks(x, margin=1e-3):
    x = np.where(np.abs(x) < margin, np.sign(x + 1e-12) * 0.5, x)
    return x


def _check(loss_fn_tensor, params, tol=1e-6):
    for p in params:
        p.grad = None
    analytic = backward(loss_fn_tensor(), params)
    numeric = finite_difference_gradients(lambda: loss_fn_tensor().item(), params)
    assert relative_error(analytic, numeric) < tol


def test_gradcheck_matmul_add_relu(rng):
    W, b = param(rng, 4, 3, name="W"), param(rng, 4, name="b")
    x = Tensor(rng.normal(size=(5, 3)))
    W.data[...] = _away_from_kinks(W.data)
    _check(lambda: tsum(relu(matmul(x, W.T) + b) * 1.3), [W, b])


def test_gradcheck_leaky_relu(rng):
    p = Parameter(_away_from_kinks(rng.normal(size=(3, 3))), "p")
    _check(lambda: tsum(leaky_relu(p, 0.2) * p), [p])


def test_gradcheck_masked_softmax_and_neighbor_sum(rng):
    logits, vals = param(rng, 4, 4, name="l"), param(rng, 4, 2, name="v")
    mask = rng.random((4, 4)) < 0.6
    mask[np.arange(4), np.arange(4)] = True
    weights = Tensor(rng.normal(size=(4, 2)))
    _check(lambda: tsum(neighbor_sum(masked_softmax(logits, mask), vals) * weights), [logits, vals])


def test_gradcheck_concat_mean_rows_embedding(rng):
    table, extra = param(rng, 5, 2, name="t"), param(rng, 3, 1, name="e")
    w = Tensor(rng.normal(size=(2, 3)))

    def loss():
        h = concat([embedding_lookup(table, [4, 0, 4]), extra], axis=1)
        return tsum(mean_rows(h, [[0, 1], [2]]) * w)

    _check(loss, [table, extra])


def test_gradcheck_cross_entropy_softmax(rng):
    z = param(rng, 3, 3, name="z")
    _check(lambda: cross_entropy(z, [0, 2, 1]) + tsum(softmax(z) * z), [z])


def test_gradcheck_getitem_reshape_transpose(rng):
    p = param(rng, 2, 6, name="p")
    _check(lambda: tsum(p.reshape(3, 4).T[1:3] * p.reshape(4, 3)[0:2]), [p])


@pytest.mark.parametrize("theta,fn,expected", [
    (3.0, lambda t: t * t, 6.0),
    (1.0, lambda t: max(t, 0.0), 1.0),
])
def test_finite_difference_closed_forms(theta, fn, expected):
    arr = np.array([theta])
    (g,) = finite_difference_gradients(lambda: fn(arr[0]), [arr])
    assert g[0] == pytest.approx(expected, abs=1e-6)


def test_relative_error_definition():
    assert relative_error([np.array([2.0])], [np.array([1.0])]) == pytest.approx(0.5)
    assert relative_error([np.array([0.1])], [np.array([0.0])]) == pytest.approx(0.1)


# ------------------------------------------------------------------ AdamW

def test_adamw_zero_grad_no_decay():
    p = Parameter(np.array([1.25]), "p")
    adamw_step([p], [np.zeros(1)], lr=0.1)
    assert p.data.tolist() == [1.25]


@settings(max_examples=60, deadline=None)
@given(finite, finite, st.floats(1e-4, 0.1), st.floats(0.0, 0.1), st.integers(1, 5))
def test_adamw_matches_scalar_reference(theta, g, lr, wd, steps):
    p = Parameter(np.array([theta]), "p")
    opt = AdamW([p], lr=lr, weight_decay=wd)
    for _ in range(steps):
        opt.step([np.array([g])])
    assert p.data[0] == pytest.approx(scalar_adamw(theta, g, lr, wd=wd, steps=steps), rel=1e-12, abs=1e-12)


def test_adamw_first_step_is_sign_scaled(rng):
    p = Parameter(np.array([0.0, 0.0]), "p")
    adamw_step([p], [np.array([3.0, -0.02])], lr=1e-3)
    np.testing.assert_allclose(p.data, [-1e-3, 1e-3], rtol=1e-5)


def test_adamw_skips_decay_for_ineligible():
    kept = Parameter(np.array([2.0]), "bias", weight_decay_eligible=False)
    decayed = Parameter(np.array([2.0]), "w")
    AdamW([kept, decayed], lr=0.1, weight_decay=0.5).step([np.zeros(1), np.zeros(1)])
    assert kept.data.tolist() == [2.0]
    assert decayed.data[0] == pytest.approx(2.0 * (1 - 0.05))


def test_adamw_reads_grad_attribute(rng):
    p = Parameter(np.array([1.0]), "p")
    opt = AdamW([p], lr=0.1)
    backward(tsum(p * p))
    opt.step()
    assert p.data[0] == pytest.approx(0.9, abs=1e-6)
    opt.zero_grad()
    assert p.grad is None
    assert opt.state_dict()["t"] == 1

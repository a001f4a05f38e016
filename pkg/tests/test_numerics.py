import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fmri2vid.numerics import (AdamW, Attention, LayerNorm, Linear, Parameter, Tensor, clip_grad_norm,
                               concat, cross_entropy, dropout, exp, gelu, grad_check, layer_norm, linear, log,
                               log_softmax, matmul, mse, no_grad, relu, reshape, sinusoidal_embedding,
                               softmax, sqrt, stack, swapaxes, take, tanh)
from fmri2vid.numerics import tensor as T

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


# -- matmul -----------------------------------------------------------------------
def test_matmul_hand_multiplied():
    out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0], [6.0]]))
    assert out.data.tolist() == [[17.0], [39.0]]


@given(arrays(np.float64, (2, 2), elements=finite))
def test_matmul_identity(a):
    assert np.array_equal(matmul(Tensor(np.eye(2)), Tensor(a)).data, a)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_sum_gradient_is_row_sums_of_b(rng):
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 5))
    x = Tensor(a, requires_grad=True)
    matmul(x, Tensor(b)).sum().backward()
    np.testing.assert_allclose(x.grad, np.broadcast_to(b.sum(axis=1), (3, 4)), atol=1e-12)
    assert grad_check(lambda t: matmul(t, Tensor(b)).sum(), a) < 1e-6


def test_batched_matmul_fast_path_matches_general(rng):
    a = rng.normal(size=(2, 3, 4, 5))
    w = rng.normal(size=(5, 6))
    fast = matmul(Tensor(a), Tensor(w)).data
    assert np.allclose(fast, np.einsum("...ij,jk->...ik", a, w), atol=1e-12)
    assert grad_check(lambda t: (matmul(t, Tensor(w)) ** 2).sum(), a, max_elements=30) < 1e-6
    assert grad_check(lambda t: (matmul(Tensor(a), t) ** 2).sum(), w) < 1e-6


def test_linear_matches_matmul_plus_bias(rng):
    x, w, b = rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 5)), rng.normal(size=5)
    assert np.allclose(linear(x, w, b).data, x @ w + b, atol=1e-12)
    assert np.allclose(linear(x, w).data, x @ w, atol=1e-12)
    assert grad_check(lambda t: (linear(t, Tensor(w), Tensor(b)) ** 2).sum(), x) < 1e-6
    assert grad_check(lambda t: (linear(Tensor(x), t, Tensor(b)) ** 2).sum(), w) < 1e-6
    assert grad_check(lambda t: (linear(Tensor(x), Tensor(w), t) ** 2).sum(), b) < 1e-6
    with pytest.raises(ValueError):
        linear(x, w.T)


# -- softmax / cross-entropy ------------------------------------------------------
def test_softmax_values():
    assert softmax(Tensor([0.0, 0.0])).data.tolist() == [0.5, 0.5]
    e = [math.exp(v) for v in (1.0, 2.0, 3.0)]
    expected = [v / sum(e) for v in e]
    np.testing.assert_allclose(softmax(Tensor([1.0, 2.0, 3.0])).data, [0.0900, 0.2447, 0.6652], atol=1e-4)
    np.testing.assert_allclose(softmax(Tensor([1.0, 2.0, 3.0])).data, expected, rtol=1e-12)


# logit gaps up to 30 keep 1 - p representable in float64
@given(arrays(np.float64, (3, 5), elements=st.floats(-15, 15)), st.floats(-50, 50))
def test_softmax_simplex_and_shift_invariance(x, c):
    p = softmax(Tensor(x), axis=-1).data
    assert np.all(p > 0) and np.all(p < 1)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)
    np.testing.assert_allclose(softmax(Tensor(x + c)).data, p, atol=1e-12)


def test_softmax_rejects_bad_axis():
    with pytest.raises(ValueError):
        softmax(Tensor(np.ones((2, 2))), axis=2)


def test_cross_entropy_cases():
    assert cross_entropy(Tensor([[3.7]]), np.array([0])).item() == 0.0
    assert cross_entropy(Tensor(100 * np.eye(4)), np.arange(4)).item() < 1e-40
    assert cross_entropy(Tensor(np.zeros((4, 4))), np.arange(4)).item() == pytest.approx(math.log(4), abs=1e-12)


def test_cross_entropy_rejects_out_of_range():
    with pytest.raises(IndexError):
        cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 3]))
    with pytest.raises(IndexError):
        cross_entropy(Tensor(np.zeros((2, 3))), np.array([-1, 0]))


# -- gradient checks over every primitive ----------------------------------------
PRIMITIVES = {
    "add": lambda t: (t + t * 0.5 + 1.0).sum(),
    "sub_div": lambda t: ((t - 2.0) / (t * t + 1.0)).sum(),
    "rdiv": lambda t: (1.0 / (t * t + 2.0)).sum(),
    "pow": lambda t: ((t * t + 1.0) ** 1.5).sum(),
    "exp_log": lambda t: log(exp(t) + 1.0).sum(),
    "sqrt": lambda t: sqrt(t * t + 0.5).sum(),
    "tanh": lambda t: tanh(t).sum(),
    "relu": lambda t: (relu(t) * t).sum(),
    "gelu": lambda t: gelu(t).sum(),
    "sum_axis": lambda t: (t.sum(axis=1, keepdims=True) ** 2).sum(),
    "mean_axis": lambda t: (t.mean(axis=0) ** 2).sum(),
    "reshape_transpose": lambda t: (reshape(t, (3, 4)).transpose(1, 0) * np.arange(12.0).reshape(4, 3)).sum(),
    "swapaxes": lambda t: (swapaxes(t, 0, 1) ** 2 * np.arange(12.0).reshape(4, 3)).sum(),
    "take": lambda t: (take(t, (np.array([0, 0, 2]), np.array([1, 1, 3]))) ** 2).sum(),
    "slice": lambda t: (t[1:, ::2] ** 2).sum(),
    "concat_stack": lambda t: (concat([t, t * 2.0], axis=1) ** 2).sum() + (stack([t, t], axis=0) ** 3).sum(),
    "matmul": lambda t: (matmul(t, swapaxes(t, 0, 1)) ** 2).sum(),
    "softmax": lambda t: (softmax(t, axis=-1) * np.arange(12.0).reshape(3, 4)).sum(),
    "log_softmax": lambda t: (log_softmax(t, axis=0) * np.arange(12.0).reshape(3, 4)).sum(),
    "layer_norm": lambda t: (layer_norm(t) * np.arange(12.0).reshape(3, 4)).sum(),
    "cross_entropy": lambda t: cross_entropy(t, np.array([0, 3, 1])),
    "mse": lambda t: mse(t, np.ones((3, 4))),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients_at_random_points(name):
    f = PRIMITIVES[name]
    for seed in range(10):
        x = np.random.default_rng([seed, 5]).normal(size=(3, 4))
        assert grad_check(f, x) < 1e-4, (name, seed)


def test_layer_norm_affine_gradients(rng):
    ln = LayerNorm(4)
    ln.weight.data = rng.normal(size=4)
    ln.bias.data = rng.normal(size=4)
    x = rng.normal(size=(2, 3, 4))
    w0 = ln.weight.data.copy()

    def f(w):
        return (layer_norm(Tensor(x), w, ln.bias) * np.arange(24.0).reshape(2, 3, 4)).sum()
    assert grad_check(f, w0) < 1e-6


def test_grad_check_sum_of_squares_and_constant(rng):
    x = rng.normal(size=(4, 3))
    assert grad_check(lambda t: (t * t).sum(), x) < 1e-6
    t = Tensor(x, requires_grad=True)
    (t * 0.0).sum().backward()
    assert np.all(t.grad == 0)
    assert grad_check(lambda t: (t * 0.0).sum() + 3.0, x) == 0.0


def test_grad_check_rejects_non_finite():
    with pytest.raises(FloatingPointError), np.errstate(divide="ignore"):
        grad_check(lambda t: log(t * 0.0).sum(), np.ones(3))


# -- graph semantics --------------------------------------------------------------
def test_leaf_accumulates_from_every_consumer():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    y = x * 3.0 + x * x
    y.sum().backward()
    np.testing.assert_array_equal(x.grad, 3.0 + 2 * x.data)


def test_diamond_graph_visits_each_node_once():
    x = Tensor(np.array([2.0]), requires_grad=True)
    h = x * x
    (h + h).sum().backward()
    assert x.grad.tolist() == [8.0]


def test_backward_is_bit_deterministic(rng):
    w = rng.normal(size=(5, 5))
    x = rng.normal(size=(4, 5))

    def run():
        t = Tensor(w, requires_grad=True)
        (softmax(matmul(Tensor(x), t), axis=-1) ** 2).sum().backward()
        return t.grad
    assert np.array_equal(run(), run())


def test_gradients_share_tensor_shape(rng):
    a = Tensor(rng.normal(size=(2, 1, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    (a * b).sum().backward()
    assert a.grad.shape == a.shape and b.grad.shape == b.shape


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad


def test_dropout_scales_kept_entries(rng):
    x = Tensor(np.ones((100, 100)))
    y = dropout(x, 0.6, rng).data
    kept = y[y != 0]
    np.testing.assert_allclose(kept, 1 / 0.4)
    assert abs((y == 0).mean() - 0.6) < 0.02
    assert dropout(x, 0.6, None) is x


# -- modules ----------------------------------------------------------------------
def test_state_dict_round_trip(rng):
    lin = Linear(3, 2, rng)
    state = lin.state_dict()
    other = Linear(3, 2, np.random.default_rng(99))
    other.load_state_dict(state)
    assert all(np.array_equal(state[k], v) for k, v in other.state_dict().items())
    with pytest.raises(KeyError):
        other.load_state_dict({"weight": state["weight"]})
    with pytest.raises(ValueError):
        other.load_state_dict({"weight": np.zeros((2, 2)), "bias": state["bias"]})


def test_attention_zero_out_is_identity_on_residual(rng):
    attn = Attention(8, 2, rng, zero_out=True)
    x = Tensor(rng.normal(size=(3, 5, 8)))
    out = attn(x)
    assert np.all(out.data == attn.to_out.bias.data)


def test_attention_gradient(rng):
    attn = Attention(8, 2, rng)
    ctx = rng.normal(size=(2, 4, 8))

    def f(t):
        return (attn(t, Tensor(ctx)) ** 2).sum()
    assert grad_check(f, rng.normal(size=(2, 3, 8))) < 1e-4


def test_sinusoidal_embedding_distinguishes_positions():
    emb = sinusoidal_embedding(np.arange(64), 64)
    assert emb.shape == (64, 64)
    d = np.linalg.norm(emb[:, None] - emb[None], axis=-1)
    assert d[~np.eye(64, dtype=bool)].min() > 0.1
    assert sinusoidal_embedding(np.arange(3), 5).shape == (3, 5)


# -- optimiser -----------------------------------------------------------------
def test_adamw_first_step_matches_closed_form():
    # after one step the bias-corrected moments are g and g^2
    g = np.array([[0.3, -0.2], [0.1, 0.05]])
    w0 = np.array([[1.0, -1.0], [0.5, 2.0]])
    p = Parameter(w0.copy())
    p.grad = g.copy()
    opt = AdamW([p], lr=0.1, weight_decay=0.01, clip=0.0)
    opt.step()
    expected = w0 * (1 - 0.1 * 0.01) - 0.1 * g / (np.abs(g) + 1e-8)
    np.testing.assert_allclose(p.data, expected, rtol=1e-12)


def test_adamw_skips_decay_for_vectors():
    p = Parameter(np.array([1.0, 2.0]))
    p.grad = np.zeros(2)
    AdamW([p], lr=0.1, weight_decay=0.5).step()
    np.testing.assert_array_equal(p.data, [1.0, 2.0])


def test_clip_grad_norm():
    a, b = Parameter(np.zeros(2)), Parameter(np.zeros(1))
    a.grad, b.grad = np.array([3.0, 0.0]), np.array([4.0])
    total = clip_grad_norm([a, b], 0.8)
    assert total == pytest.approx(5.0)
    norm = math.sqrt(float((a.grad ** 2).sum() + (b.grad ** 2).sum()))
    assert norm == pytest.approx(0.8, rel=1e-9)


def test_unbroadcast_sums_leading_and_kept_axes():
    g = np.ones((2, 3, 4))
    assert T._unbroadcast(g, (3, 1)).tolist() == [[8.0]] * 3
    assert T._unbroadcast(g, (4,)).tolist() == [6.0] * 4

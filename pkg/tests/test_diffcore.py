import numpy as np
import pytest
from hypothesis import given, strategies as st

from trajanomaly import diffcore as dc
from trajanomaly.diffcore import ShapeError, Tape, Tensor, backward, grad_check


def leaf(rng, *shape, positive=False):
    x = rng.normal(size=shape)
    return Tensor(np.abs(x) + 0.5 if positive else x, requires_grad=True)


def scalarize(out, weights):
    # random linear read-out so every output coordinate matters
    return dc.sum(dc.mul(out, Tensor(weights)))


def check(fn_out, params, rng, tol=1e-5):
    w = rng.normal(size=fn_out().shape)
    return grad_check(lambda: scalarize(fn_out(), w), params, epsilon=1e-5) < tol


def test_backward_examples():
    x = Tensor(3.0, requires_grad=True)
    with Tape() as tape:
        y = dc.square(x)
    assert backward(tape, y)[x] == 6.0
    x, y = Tensor(2.0, requires_grad=True), Tensor(5.0, requires_grad=True)
    with Tape() as tape:
        f = x * y + x
    g = backward(tape, f)
    assert (g[x], g[y]) == (6.0, 2.0)


def test_non_scalar_loss_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = dc.exp(x)
    with pytest.raises(ShapeError):
        backward(tape, y)


def test_unused_leaf_gets_zero():
    x, unused = Tensor(np.ones(2), requires_grad=True), Tensor(np.ones(4), requires_grad=True)
    with Tape() as tape:
        y = dc.sum(x)
    g = backward(tape, y, [x, unused])
    assert np.array_equal(g[unused], np.zeros(4))


def test_fan_out_accumulates():
    x = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    with Tape() as tape:
        y = dc.sum(x * x + x * 3.0 + dc.exp(x))
    assert np.allclose(backward(tape, y)[x], 2 * x.data + 3 + np.exp(x.data), rtol=0, atol=1e-14)


def test_shape_mismatch_message():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(3, 2\)|\(3, 2\).*\(2, 3\)"):
        dc.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))


def test_identity_examples(rng):
    X = rng.normal(size=(4, 3))
    assert np.array_equal((Tensor(X) @ Tensor(np.eye(3))).data, X)
    x = rng.normal(size=(7, 2, 3))
    assert np.array_equal(dc.conv1d(Tensor(x), Tensor(np.eye(3)[None]), Tensor(np.zeros(3))).data, x)
    A = Tensor(np.broadcast_to(np.eye(2), (7, 2, 2)).copy())
    assert np.array_equal(dc.aggregate(A, Tensor(x)).data, x)


def test_elementwise_pullbacks(rng):
    a, b = leaf(rng, 3, 4), leaf(rng, 3, 4)
    p = leaf(rng, 3, 4, positive=True)
    bias = leaf(rng, 4)
    slope = leaf(rng, 4)
    for fn, params in [
        (lambda: a + b, [a, b]),
        (lambda: a + bias, [a, bias]),
        (lambda: a - b, [a, b]),
        (lambda: a * b, [a, b]),
        (lambda: a / p, [a, p]),
        (lambda: dc.exp(a), [a]),
        (lambda: dc.log(p), [p]),
        (lambda: dc.tanh(a), [a]),
        (lambda: dc.square(a), [a]),
        (lambda: dc.prelu(a, slope), [a, slope]),
        (lambda: 2.0 * a - 1.0, [a]),
    ]:
        assert check(fn, params, rng), fn


def test_structural_pullbacks(rng):
    a = leaf(rng, 2, 3, 4)
    m = leaf(rng, 4, 5)
    for fn, params in [
        (lambda: dc.reshape(a, (6, 4)), [a]),
        (lambda: dc.permute(a, (2, 0, 1)), [a]),
        (lambda: a[:, 1:, ::2], [a]),
        (lambda: dc.sum(a, axis=1), [a]),
        (lambda: dc.mean(a, axis=-1), [a]),
        (lambda: a @ m, [a, m]),
        (lambda: dc.einsum("tnc,cf->tnf", a, m), [a, m]),
    ]:
        assert check(fn, params, rng), fn


def test_graph_and_conv_pullbacks(rng):
    A = leaf(rng, 4, 3, 3)
    x = leaf(rng, 4, 3, 2)
    w1, b1 = leaf(rng, 3, 2, 2), leaf(rng, 2)
    w2, b2 = leaf(rng, 3, 1, 2, 2), leaf(rng, 2)
    assert check(lambda: dc.aggregate(A, x), [A, x], rng)
    assert check(lambda: dc.conv1d(x, w1, b1, padding=1), [x, w1, b1], rng)
    assert check(lambda: dc.conv1d(x, w1), [x, w1], rng)
    assert check(lambda: dc.conv2d(x, w2, b2, padding=(1, 0)), [x, w2, b2], rng)


@given(st.integers(0, 10_000))
def test_random_small_shapes(seed):
    rng = np.random.default_rng(seed)
    shape = tuple(int(s) for s in rng.integers(1, 4, size=int(rng.integers(1, 4))))
    a, b = leaf(rng, *shape), leaf(rng, *shape)
    assert check(lambda: dc.tanh(a * b) + dc.exp(dc.neg(dc.square(a))), [a, b], rng)


def test_conv1d_matches_direct_sum(rng):
    x, w, b = rng.normal(size=(6, 2, 3)), rng.normal(size=(3, 3, 4)), rng.normal(size=4)
    out = dc.conv1d(Tensor(x), Tensor(w), Tensor(b), padding=1).data
    xp = np.concatenate([np.zeros((1, 2, 3)), x, np.zeros((1, 2, 3))])
    direct = np.stack([sum(xp[t + k] @ w[k] for k in range(3)) + b for t in range(6)])
    assert np.allclose(out, direct, rtol=0, atol=1e-12)


def test_accumulation_linearity(rng):
    x = leaf(rng, 5)

    def grad_of(fn):
        with Tape() as tape:
            y = fn()
        return backward(tape, y)[x].copy()

    f = lambda: dc.sum(dc.tanh(x))
    g = lambda: dc.sum(dc.square(x) * 0.5)
    both = grad_of(lambda: f() + g())
    assert np.allclose(both, grad_of(f) + grad_of(g), rtol=0, atol=1e-12)


def test_grad_check_examples(rng):
    a = leaf(rng, 4)
    w = Tensor(rng.normal(size=4))
    assert grad_check(lambda: dc.sum(a * w), [a]) < 1e-9
    assert grad_check(lambda: dc.sum(dc.tanh(dc.tanh(a) * 2.0)), [a]) < 1e-6


def test_grad_check_detects_corrupted_pullback(rng):
    a = leaf(rng, 4)

    def bad_square(x):
        return dc.primitive(x.data ** 2, (x,), lambda g: (g * 3.0 * x.data,))

    assert grad_check(lambda: dc.sum(bad_square(a)), [a]) > 1e-2


def test_determinism(rng):
    a, m = leaf(rng, 3, 4), leaf(rng, 4, 2)

    def run():
        with Tape() as tape:
            y = dc.sum(dc.tanh(a @ m))
        g = backward(tape, y)
        return y.data.copy(), g[a].copy(), g[m].copy()

    for u, v in zip(run(), run()):
        assert np.array_equal(u, v)


def test_tensor_rejects_non_finite():
    with pytest.raises(ValueError):
        Tensor([1.0, np.nan])

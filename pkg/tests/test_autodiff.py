import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taxocomplete import autodiff as ad
from taxocomplete.autodiff import Tensor, grad_check
from taxocomplete.errors import ShapeMismatch


def rand(rng, *shape):
    return Tensor(rng.normal(size=shape))


def test_softmax_uniform():
    out = ad.softmax(Tensor(np.zeros(3)))
    assert np.allclose(out.data, 1 / 3, atol=0, rtol=1e-15)


def test_mask_fill_then_softmax_zeroes_masked():
    x = Tensor(np.array([[1.0, 2.0, 3.0, 4.0]]))
    mask = np.array([[False, True, False, True]])
    p = ad.softmax(ad.mask_fill(x, mask), axis=-1)
    assert p.data[0, 1] == 0.0 and p.data[0, 3] == 0.0
    assert abs(p.data.sum() - 1.0) < 1e-12


def test_matmul_hand_values():
    a = Tensor(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    b = Tensor(np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]))
    assert np.array_equal((a @ b).data, [[1.0, 2.0], [4.0, 5.0]])
    with pytest.raises(ShapeMismatch):
        ad.matmul(a, Tensor(np.ones((2, 2))))


def test_square_gradient():
    x = Tensor(np.array([3.0]))
    err = grad_check(lambda v: (v * v).sum(), x)
    assert err < 1e-8
    assert np.allclose(x.grad, [6.0])


def test_softmax_log_composite(rng):
    x = rand(rng, 4, 5)
    w = rng.normal(size=(4, 5))
    assert grad_check(lambda v: (ad.log(ad.softmax(v, -1)) * Tensor(w)).sum(), x) < 1e-6


PRIMITIVES = {
    "add": lambda a, b, c: ad.add(a, b).sum(),
    "add_bias": lambda a, b, c: (a + c).sum(),
    "mul": lambda a, b, c: (ad.mul(a, b) * a).sum(),
    "scale": lambda a, b, c: ((a / 4.0) * b).sum(),
    "matmul": lambda a, b, c: ((a @ b.transpose(1, 0)) * (a @ b.transpose(1, 0))).sum(),
    "softmax": lambda a, b, c: (ad.softmax(a, -1) * b).sum(),
    "layer_norm": lambda a, b, c: (ad.layer_norm(a, c + 1.0, c) * b).sum(),
    "relu": lambda a, b, c: (ad.relu(a) * b).sum(),
    "concat": lambda a, b, c: (ad.concat([a, b], axis=0) * ad.concat([b, a], axis=0)).sum(),
    "embedding": lambda a, b, c: (ad.embedding_lookup(a, np.array([0, 2, 0])) * b[:3]).sum(),
    "mask_fill": lambda a, b, c: (ad.softmax(ad.mask_fill(a, np.eye(3, 4, dtype=bool)), -1) * b).sum(),
    "log": lambda a, b, c: (ad.log(a * a + 1.0) * b).sum(),
    "getitem_reshape": lambda a, b, c: (a[1:, ::2].reshape(-1) * b[1:, ::2].reshape(-1)).sum(),
    "mean": lambda a, b, c: (a * b).mean(axis=0).sum(),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_primitive_gradients(name, seed):
    rng = np.random.default_rng(seed)
    a, b, c = rand(rng, 3, 4), rand(rng, 3, 4), rand(rng, 4)
    fn = PRIMITIVES[name]
    for theta in (a, b, c):
        assert grad_check(lambda _: fn(a, b, c), theta, h=1e-5, floor=1e-4) < 1e-5


def test_batched_matmul_gradient(rng):
    a, b = rand(rng, 2, 3, 4), rand(rng, 4, 5)
    assert grad_check(lambda v: ((v @ b) * (v @ b)).sum(), a) < 1e-6
    assert grad_check(lambda v: ((a @ v) * (a @ v)).sum(), b) < 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6), st.integers(1, 6))
def test_softmax_sums_to_one(seed, n, m):
    x = Tensor(np.random.default_rng(seed).normal(scale=20, size=(n, m)))
    assert np.allclose(ad.softmax(x, -1).data.sum(-1), 1.0, atol=1e-9, rtol=0)


def test_shared_subexpression_accumulates(rng):
    x = Tensor(rng.normal(size=(3,)), requires_grad=True)
    y = x * x
    (y + y * 2.0).sum().backward()
    shared = x.grad.copy()

    x2 = Tensor(x.data.copy(), requires_grad=True)
    (x2 * x2 + (x2 * x2) * 2.0).sum().backward()
    assert np.allclose(shared, x2.grad, rtol=1e-14, atol=0)
    assert np.allclose(shared, 6 * x.data)


def test_no_grad_records_nothing(rng):
    x = Tensor(rng.normal(size=(2,)), requires_grad=True)
    with ad.no_grad():
        y = (x * x).sum()
    assert not y.requires_grad
    assert ad.is_grad_enabled()


def test_dropout_identity_at_zero_rate(rng):
    x = rand(rng, 3, 3)
    assert ad.dropout(x, 0.0, rng) is x

import numpy as np
import pytest

from unlearnkit import ShapeError, StateError, Tensor
from unlearnkit import tensor as T


def _grad_of(build, wrt):
    out = build()
    out.backward()
    return [w.grad.copy() for w in wrt]


def _fd(build_value, arrays, h=1e-6):
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gf = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = build_value()
            flat[i] = orig - h
            down = build_value()
            flat[i] = orig
            gf[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


@pytest.mark.parametrize("seed", range(5))
def test_matmul_add_relu_tanh_grads_match_fd(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))
    c = rng.standard_normal(2)

    def build():
        ta = Tensor(a, requires_grad=True)
        tb = Tensor(b, requires_grad=True)
        tc = Tensor(c, requires_grad=True)
        out = T.tanh(T.relu(T.matmul(ta, tb) + tc)).sum()
        return out, (ta, tb, tc)

    out, wrt = build()
    out.backward()
    got = [w.grad for w in wrt]
    want = _fd(lambda: build()[0].item(), [a, b, c])
    for g, w in zip(got, want):
        assert np.allclose(g, w, rtol=1e-5, atol=1e-7)


def test_bias_broadcast_gradient_sums_over_batch():
    x = Tensor(np.ones((4, 3)))
    b = Tensor(np.zeros(3), requires_grad=True)
    (x + b).sum().backward()
    assert np.array_equal(b.grad, np.full(3, 4.0))


def test_mean_gradient():
    t = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    t.mean().backward()
    assert np.allclose(t.grad, np.full((2, 3), 1.0 / 6.0))


def test_mul_and_neg():
    a = Tensor(np.array([2.0, -3.0]), requires_grad=True)
    ((a * a) + (-a)).sum().backward()
    assert np.allclose(a.grad, 2 * a.data - 1.0)


def test_grad_accumulates_when_tensor_reused():
    a = Tensor(np.array([3.0]), requires_grad=True)
    (a * a).sum().backward()
    assert np.allclose(a.grad, [6.0])


def test_backward_requires_scalar():
    t = Tensor(np.ones((2, 2)))
    with pytest.raises(StateError):
        t.backward()


def test_matmul_shape_errors():
    with pytest.raises(ShapeError):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError):
        T.matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 2))))


def test_item_requires_scalar():
    with pytest.raises(ShapeError):
        Tensor(np.ones(3)).item()

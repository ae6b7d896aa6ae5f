"""Finite-difference verification of every autodiff primitive."""

import numpy as np
import pytest

from interpdn.autodiff import Tensor, concat, no_grad, pad_last_edge


def numeric_grad(fn, param, h=1e-6):
    """Central differences of a scalar-valued fn() w.r.t. param.data."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn().item()
        flat[i] = orig - h
        down = fn().item()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def check(fn, params, tol=1e-6):
    for p in params:
        p.grad = None
    out = fn()
    out.backward()
    for p in params:
        numeric = numeric_grad(fn, p)
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        np.testing.assert_allclose(analytic, numeric, rtol=tol, atol=tol)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


class TestArithmetic:
    def test_add_mul_broadcast(self, rng):
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4,)), requires_grad=True)
        check(lambda: ((a + b) * b + 2.0 * a).sum(), [a, b])

    def test_div_pow(self, rng):
        a = Tensor(rng.uniform(0.5, 2.0, size=(5,)), requires_grad=True)
        b = Tensor(rng.uniform(0.5, 2.0, size=(5,)), requires_grad=True)
        check(lambda: ((a / b) ** 3).sum(), [a, b])

    def test_matmul_batched(self, rng):
        x = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        w = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
        check(lambda: ((x @ w) ** 2).sum(), [x, w])

    def test_reuse_accumulates(self, rng):
        a = Tensor(np.array([3.0]), requires_grad=True)
        out = (a * a) + a
        out.backward()
        np.testing.assert_allclose(a.grad, [7.0])


class TestNonlinearities:
    def test_exp_abs(self, rng):
        a = Tensor(rng.normal(size=(6,)) + 0.1, requires_grad=True)
        check(lambda: (a.exp() + a.abs()).sum(), [a])

    def test_abs_subgradient_zero_at_zero(self):
        a = Tensor(np.zeros(3), requires_grad=True)
        a.abs().sum().backward()
        np.testing.assert_array_equal(a.grad, np.zeros(3))

    def test_gelu(self, rng):
        a = Tensor(rng.normal(size=(7,)), requires_grad=True)
        check(lambda: a.gelu().sum(), [a])

    def test_gelu_values(self):
        # gelu(0) = 0, gelu(large) ~ identity, gelu(-large) ~ 0
        x = Tensor(np.array([0.0, 10.0, -10.0]))
        y = x.gelu().data
        np.testing.assert_allclose(y, [0.0, 10.0, 0.0], atol=1e-6)

    def test_softmax_rows(self, rng):
        a = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        probs = a.softmax().data
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-12)
        check(lambda: (a.softmax() * np.arange(6.0)).sum(), [a])


class TestReductions:
    def test_sum_axes(self, rng):
        a = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        check(lambda: (a.sum(axis=(1, 2)) ** 2).sum(), [a])

    def test_mean(self, rng):
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        check(lambda: (a.mean(axis=-1) ** 2).sum(), [a])
        np.testing.assert_allclose(a.mean().item(), a.data.mean())

    def test_max_last(self, rng):
        a = Tensor(rng.normal(size=(5, 7)), requires_grad=True)
        check(lambda: (a.max_last() ** 2).sum(), [a])


class TestShapes:
    def test_reshape_swapaxes(self, rng):
        a = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        check(lambda: (a.swapaxes(-1, -2).reshape(2, 12) ** 2).sum(), [a])

    def test_getitem(self, rng):
        a = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        check(lambda: (a[1:, 2:5] ** 2).sum(), [a])

    def test_concat(self, rng):
        a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(2, 5)), requires_grad=True)
        check(lambda: (concat([a, b], axis=-1) ** 2).sum(), [a, b])

    def test_pad_last_edge(self, rng):
        a = Tensor(rng.normal(size=(2, 4)), requires_grad=True)
        padded = pad_last_edge(a, 3)
        assert padded.shape == (2, 7)
        np.testing.assert_array_equal(padded.data[:, 4:],
                                      np.repeat(a.data[:, -1:], 3, axis=1))
        check(lambda: (pad_last_edge(a, 3) ** 2).sum(), [a])


class TestSequenceOps:
    def test_ema_values(self):
        x = Tensor(np.array([0.0, 1.0]))
        np.testing.assert_allclose(x.ema_last(0.5).data, [0.0, 0.5])

    def test_ema_grad(self, rng):
        a = Tensor(rng.normal(size=(3, 6)), requires_grad=True)
        weights = rng.normal(size=6)
        check(lambda: (a.ema_last(0.3) * weights).sum(), [a])

    def test_take_last(self, rng):
        a = Tensor(rng.normal(size=(2, 8)), requires_grad=True)
        idx = np.array([[0, 1], [3, 4], [7, 7]])
        out = a.take_last(idx)
        assert out.shape == (2, 3, 2)
        check(lambda: (a.take_last(idx) ** 2).sum(), [a])

    def test_conv3_same(self, rng):
        x = Tensor(rng.normal(size=(2, 3, 6)), requires_grad=True)
        k = Tensor(rng.normal(size=3), requires_grad=True)
        b = Tensor(np.array(0.2), requires_grad=True)
        # forward agrees with np.convolve per slice (correlation orientation)
        out = x.conv3_same(k, b).data
        ref = np.empty_like(out)
        for i in range(2):
            for j in range(3):
                ref[i, j] = np.correlate(
                    np.pad(x.data[i, j], 1), k.data, mode="valid") + b.data
        np.testing.assert_allclose(out, ref, atol=1e-12)
        check(lambda: (x.conv3_same(k, b) ** 2).sum(), [x, k, b])

    def test_avgpool(self, rng):
        a = Tensor(rng.normal(size=(2, 8)), requires_grad=True)
        np.testing.assert_allclose(
            a.avgpool_last(2).data,
            a.data.reshape(2, 4, 2).mean(axis=-1))
        check(lambda: (a.avgpool_last(4) ** 2).sum(), [a])
        with pytest.raises(ValueError):
            a.avgpool_last(3)


class TestGraph:
    def test_no_grad_builds_no_graph(self):
        a = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            out = (a * 2).sum()
        assert out._backward is None
        assert not out.requires_grad

    def test_backward_needs_scalar(self):
        a = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError):
            (a * 2).backward()

    def test_dtype_preserved(self):
        a = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
        out = (a * 2.0).gelu().softmax()
        assert out.dtype == np.float32
        out.sum().backward()
        assert a.grad.dtype == np.float32

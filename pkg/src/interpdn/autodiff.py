"""Minimal reverse-mode automatic differentiation over numpy arrays.

A micrograd-style tape: every operation returns a new :class:`Tensor`
holding the forward value, references to its parents, and a closure that
routes the incoming gradient to those parents.  ``backward()`` on a scalar
loss walks the graph in reverse topological order.

Only the handful of operations the forecaster needs are implemented, but
each supports arbitrary leading (batch) dimensions and both float32 and
float64 data.  Gradients always accumulate in the dtype of the forward
data, so a float64 graph yields float64 gradients (used by the
finite-difference checker) while training runs in float32.
"""

from __future__ import annotations

import numpy as np
from scipy import special as _special

_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph construction (inference mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    # collapse extra leading axes
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    # collapse axes that were broadcast from size 1
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """An ndarray plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward",
                 "_grad_owned")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None
        self._grad_owned = False

    # -- construction helpers -------------------------------------------

    @staticmethod
    def _make(data, parents, backward):
        out = Tensor(data)
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    def _accumulate(self, grad):
        if not self.requires_grad:
            return
        if self.grad is None:
            # store by reference; incoming buffers are never mutated later,
            # but they may be shared, so only add in place once we own one
            self.grad = grad
            self._grad_owned = False
        elif self._grad_owned:
            self.grad += grad
        else:
            self.grad = self.grad + grad
            self._grad_owned = True

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- arithmetic ------------------------------------------------------

    def _coerce(self, other) -> "Tensor":
        """Wrap a constant; scalars adopt this tensor's dtype (no upcasting)."""
        if isinstance(other, Tensor):
            return other
        arr = np.asarray(other)
        if arr.ndim == 0:
            arr = arr.astype(self.data.dtype)
        return Tensor(arr)

    def __add__(self, other):
        other = self._coerce(other)
        out_data = self.data + other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))

        return Tensor._make(out_data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g):
            self._accumulate(-g)

        return Tensor._make(-self.data, (self,), backward)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        out_data = self.data * other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        return Tensor._make(out_data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        out_data = self.data / other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(-g * out_data / other.data, other.data.shape)
                )

        return Tensor._make(out_data, (self, other), backward)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        out_data = self.data ** exponent

        def backward(g):
            self._accumulate(g * exponent * self.data ** (exponent - 1))

        return Tensor._make(out_data, (self,), backward)

    def __matmul__(self, other):
        """Matrix product with a 2-D weight: (..., m) @ (m, k) -> (..., k)."""
        other = as_tensor(other)
        if other.data.ndim != 2:
            raise ValueError("matmul right operand must be 2-D")
        out_data = self.data @ other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(g @ other.data.T)
            if other.requires_grad:
                m = other.data.shape[0]
                gw = self.data.reshape(-1, m).T @ g.reshape(
                    -1, other.data.shape[1])
                other._accumulate(gw)

        return Tensor._make(out_data, (self, other), backward)

    # -- elementwise nonlinearities ---------------------------------------

    def exp(self):
        out_data = np.exp(self.data)

        def backward(g):
            self._accumulate(g * out_data)

        return Tensor._make(out_data, (self,), backward)

    def abs(self):
        """|x| with subgradient 0 at x == 0 (np.sign convention)."""
        out_data = np.abs(self.data)

        def backward(g):
            self._accumulate(g * np.sign(self.data))

        return Tensor._make(out_data, (self,), backward)

    def gelu(self):
        """Exact Gaussian-error-function GELU."""
        x = self.data
        cdf = 0.5 * (1.0 + _special.erf(x / np.sqrt(2.0, dtype=x.dtype)))
        out_data = x * cdf

        def backward(g):
            pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi, dtype=x.dtype)
            self._accumulate(g * (cdf + x * pdf))

        return Tensor._make(out_data, (self,), backward)

    def softmax(self):
        """Softmax along the last axis."""
        shifted = self.data - self.data.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        out_data = e / e.sum(axis=-1, keepdims=True)

        def backward(g):
            inner = (g * out_data).sum(axis=-1, keepdims=True)
            self._accumulate(out_data * (g - inner))

        return Tensor._make(out_data, (self,), backward)

    # -- reductions --------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is None:
                self._accumulate(np.broadcast_to(g, self.data.shape).copy())
                return
            if not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.data.shape).copy())

        return Tensor._make(out_data, (self,), backward)

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in np.atleast_1d(axis)]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def max_last(self):
        """Maximum along the last axis; gradient routes to the argmax."""
        idx = self.data.argmax(axis=-1)
        out_data = np.take_along_axis(self.data, idx[..., None], axis=-1)[..., 0]

        def backward(g):
            gx = np.zeros_like(self.data)
            np.put_along_axis(gx, idx[..., None], g[..., None], axis=-1)
            self._accumulate(gx)

        return Tensor._make(out_data, (self,), backward)

    # -- shape manipulation -------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old_shape = self.data.shape
        out_data = self.data.reshape(shape)

        def backward(g):
            self._accumulate(g.reshape(old_shape))

        return Tensor._make(out_data, (self,), backward)

    def swapaxes(self, a, b):
        out_data = self.data.swapaxes(a, b)

        def backward(g):
            self._accumulate(g.swapaxes(a, b))

        return Tensor._make(out_data, (self,), backward)

    def __getitem__(self, key):
        out_data = self.data[key]

        def backward(g):
            gx = np.zeros_like(self.data)
            np.add.at(gx, key, g)
            self._accumulate(gx)

        return Tensor._make(out_data, (self,), backward)

    # -- sequence primitives (operate on the last axis) ----------------------

    def ema_last(self, alpha: float):
        """Exponential moving average along the last axis.

        out[..., 0] = x[..., 0];
        out[..., t] = alpha * x[..., t] + (1 - alpha) * out[..., t - 1].
        """
        x = self.data
        n = x.shape[-1]
        lead = x.shape[:-1]
        # run the recurrence time-major so each step touches contiguous memory
        xt = np.ascontiguousarray(x.reshape(-1, n).T)
        out_t = np.empty_like(xt)
        out_t[0] = xt[0]
        decay = 1.0 - alpha
        # incremental form: previous + alpha * (new - previous); identical
        # algebra, but constant inputs stay exact fixed points
        for t in range(1, n):
            prev = out_t[t - 1]
            out_t[t] = prev + alpha * (xt[t] - prev)
        out_data = np.ascontiguousarray(out_t.T).reshape(x.shape)

        def backward(g):
            gt = np.ascontiguousarray(g.reshape(-1, n).T)
            gx_t = np.empty_like(gt)
            acc = gt[n - 1].copy()  # running adjoint of out[..., t]
            gx_t[n - 1] = alpha * acc if n > 1 else acc
            for t in range(n - 2, -1, -1):
                acc = gt[t] + decay * acc
                gx_t[t] = alpha * acc if t > 0 else acc
            self._accumulate(np.ascontiguousarray(gx_t.T).reshape(g.shape))

        return Tensor._make(out_data, (self,), backward)

    def take_last(self, index: np.ndarray):
        """Gather along the last axis with an integer index array.

        The result has shape ``leading + index.shape``; used to slice a
        padded sequence into overlapping patches.
        """
        out_data = self.data[..., index]

        def backward(g):
            gx = np.zeros_like(self.data)
            if (index.ndim == 2 and np.all(np.diff(index[0]) == 1)
                    and np.array_equal(
                        index, index[:, :1] + index[:1, :] - index[0, 0])):
                # regular window grid: scatter whole contiguous rows at once
                for row in range(index.shape[0]):
                    lo, hi = index[row, 0], index[row, -1] + 1
                    gx[..., lo:hi] += g[..., row, :]
            else:
                flat_idx = index.reshape(-1)
                g_flat = g.reshape(
                    g.shape[: self.data.ndim - 1] + (flat_idx.size,))
                for pos in range(flat_idx.size):
                    gx[..., flat_idx[pos]] += g_flat[..., pos]
            self._accumulate(gx)

        return Tensor._make(out_data, (self,), backward)

    def conv3_same(self, kernel: "Tensor", bias: "Tensor"):
        """Width-3 correlation along the last axis, zero-padded at the ends.

        One shared 3-tap kernel and a scalar bias are applied to every
        1-D slice along the last axis.
        """
        x = self.data
        k = kernel.data
        out_data = k[1] * x
        out_data[..., 1:] += k[0] * x[..., :-1]
        out_data[..., :-1] += k[2] * x[..., 1:]
        out_data += bias.data

        def backward(g):
            gx = k[1] * g
            gx[..., :-1] += k[0] * g[..., 1:]
            gx[..., 1:] += k[2] * g[..., :-1]
            self._accumulate(gx)
            gk = np.array(
                [
                    (g[..., 1:] * x[..., :-1]).sum(),
                    (g * x).sum(),
                    (g[..., :-1] * x[..., 1:]).sum(),
                ],
                dtype=k.dtype,
            )
            kernel._accumulate(gk)
            bias._accumulate(np.asarray(g.sum(), dtype=bias.data.dtype))

        return Tensor._make(out_data, (self, kernel, bias), backward)

    def avgpool_last(self, k: int):
        """Non-overlapping mean pooling along the last axis (k must divide it)."""
        n = self.data.shape[-1]
        if n % k != 0:
            raise ValueError(f"pool factor {k} does not divide axis length {n}")
        return self.reshape(self.data.shape[:-1] + (n // k, k)).mean(axis=-1)

    # -- graph traversal ------------------------------------------------------

    def backward(self):
        """Reverse-accumulate gradients from this (scalar) tensor."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None:
                continue  # leaf: keep the accumulated gradient
            if node.grad is not None:
                node._backward(node.grad)
            # interior grads and closures are dead once processed; release
            # them eagerly so large training graphs free memory during the
            # walk instead of at the end
            node.grad = None
            node._backward = None
            node._parents = ()


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t._accumulate(piece)

    return Tensor._make(out_data, tuple(tensors), backward)


def pad_last_edge(x: Tensor, n: int) -> Tensor:
    """Extend the last axis by `n` copies of its final element."""
    if n == 0:
        return x
    tail = x[..., -1:]
    ones = Tensor(np.ones(n, dtype=x.data.dtype))
    return concat([x, tail * ones], axis=-1)

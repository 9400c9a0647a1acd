"""Reverse-mode automatic differentiation over flat numpy buffers.

A Tensor wraps a row-major numpy array (float32 or float64) and remembers
the operation that produced it. Calling ``backward()`` on a scalar builds a
GradTape (a topological ordering of the graph) and replays it in reverse,
accumulating ``grad`` on every tensor that asked for it.

Tensors are never mutated by operations; every op allocates fresh output.
Broadcasting is limited to leading batch dimensions plus the usual
size-1 axis rules of numpy.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Tensor",
    "GradTape",
    "ShapeError",
    "no_grad",
    "concat",
    "linear",
    "layer_norm",
    "softmax",
    "gelu",
    "grad_check",
    "GradCheckReport",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


_FLOAT_DTYPES = (np.float32, np.float64)

_grad_enabled = True


class no_grad:
    """Context manager that suppresses tape recording (forward-only mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _as_array(data, dtype=None):
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in _FLOAT_DTYPES:
        arr = arr.astype(np.float64)
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (the inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_done")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple = ()
        self._backward = None
        self._done = False

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _from_op(data: np.ndarray, parents: tuple, backward) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out._done = False
        if _grad_enabled and any(_wants_grad(p) for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # -- basic properties -----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # -- arithmetic -----------------------------------------------------------

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other):
        other = self._coerce(other)
        out_data = self.data + other.data

        def backward(g):
            return _unbroadcast(g, self.data.shape), _unbroadcast(g, other.data.shape)

        return Tensor._from_op(out_data, (self, other), backward)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        out_data = self.data - other.data

        def backward(g):
            return _unbroadcast(g, self.data.shape), _unbroadcast(-g, other.data.shape)

        return Tensor._from_op(out_data, (self, other), backward)

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __mul__(self, other):
        other = self._coerce(other)
        a, b = self.data, other.data
        out_data = a * b

        def backward(g):
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

        return Tensor._from_op(out_data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        a, b = self.data, other.data
        out_data = a / b

        def backward(g):
            return (
                _unbroadcast(g / b, a.shape),
                _unbroadcast(-g * a / (b * b), b.shape),
            )

        return Tensor._from_op(out_data, (self, other), backward)

    def __neg__(self):
        out_data = -self.data

        def backward(g):
            return (-g,)

        return Tensor._from_op(out_data, (self,), backward)

    def __pow__(self, exponent):
        if isinstance(exponent, Tensor):
            raise TypeError("tensor exponents are not supported")
        p = float(exponent)
        a = self.data
        out_data = a ** p

        def backward(g):
            return (g * p * a ** (p - 1.0),)

        return Tensor._from_op(out_data, (self,), backward)

    # -- matmul ---------------------------------------------------------------

    def matmul(self, other: "Tensor") -> "Tensor":
        other = self._coerce(other)
        a, b = self.data, other.data
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
        try:
            out_data = np.matmul(a, b)
        except ValueError as exc:
            raise ShapeError(f"matmul batch dims incompatible: {a.shape} x {b.shape}") from exc

        def backward(g):
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b, -1, -2)), a.shape)
            gb = _unbroadcast(np.matmul(np.swapaxes(a, -1, -2), g), b.shape)
            return ga, gb

        return Tensor._from_op(out_data, (self, other), backward)

    __matmul__ = matmul

    # -- reductions -----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self.data
        out_data = a.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is None:
                return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)
            g2 = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g2, a.shape).astype(a.dtype, copy=True),)

        return Tensor._from_op(out_data, (self,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- shape manipulation ---------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self.data
        out_data = a.reshape(shape)

        def backward(g):
            return (g.reshape(a.shape),)

        return Tensor._from_op(out_data, (self,), backward)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        a = self.data
        out_data = a.transpose(axes) if axes else a.T
        inv = np.argsort(axes) if axes else None

        def backward(g):
            return (g.transpose(inv) if inv is not None else g.T,)

        return Tensor._from_op(out_data, (self,), backward)

    def __getitem__(self, key) -> "Tensor":
        a = self.data
        out_data = a[key]
        if not isinstance(out_data, np.ndarray):
            out_data = np.asarray(out_data)

        def backward(g):
            ga = np.zeros_like(a)
            np.add.at(ga, key, g)
            return (ga,)

        return Tensor._from_op(out_data, (self,), backward)

    # -- elementwise nonlinear ------------------------------------------------

    def exp(self) -> "Tensor":
        out_data = np.exp(self.data)

        def backward(g):
            return (g * out_data,)

        return Tensor._from_op(out_data, (self,), backward)

    def sqrt(self) -> "Tensor":
        out_data = np.sqrt(self.data)

        def backward(g):
            return (g * 0.5 / out_data,)

        return Tensor._from_op(out_data, (self,), backward)

    def tanh(self) -> "Tensor":
        out_data = np.tanh(self.data)

        def backward(g):
            return (g * (1.0 - out_data * out_data),)

        return Tensor._from_op(out_data, (self,), backward)

    def backward(self):
        """Reverse-accumulate gradients from this scalar into the graph."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar output, got shape {self.data.shape}")
        if self._done:
            raise RuntimeError("backward() already ran on this output; rebuild the graph first")
        tape = GradTape(self)
        tape.backward()
        self._done = True


def _wants_grad(t: Tensor) -> bool:
    return t.requires_grad or t._backward is not None


class GradTape:
    """Topologically ordered record of the operations behind one output.

    Built on demand from the parent links; replaying it in reverse populates
    ``grad`` on every reachable tensor that participates in differentiation.
    """

    def __init__(self, root: Tensor):
        self.root = root
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.nodes = order  # parents before children

    def backward(self):
        root = self.root
        root.grad = np.ones_like(root.data)
        for node in reversed(self.nodes):
            if node._backward is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._backward(node.grad)):
                if not _wants_grad(parent):
                    continue
                if parent.grad is None:
                    parent.grad = np.array(g, dtype=parent.data.dtype, copy=True)
                else:
                    parent.grad = parent.grad + g


# -- composite / primitive layers ---------------------------------------------


def concat(tensors: list, axis: int = 0) -> Tensor:
    """Concatenate tensors along ``axis`` with gradient routing back to each."""
    datas = [t.data for t in tensors]
    out_data = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._from_op(out_data, tuple(tensors), backward)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map ``x @ w + b`` over the last dimension."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight rows {w.shape[0]}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"linear: bias shape {b.shape} != ({w.shape[1]},)")
    return x.matmul(w) + b


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row of the last axis to zero mean, unit variance, then affine."""
    if eps <= 0:
        raise ValueError(f"layer_norm eps must be positive, got {eps}")
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias must have shape ({d},)")
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = (var + eps) ** -0.5
    return xc * inv * gain + bias


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stabilized softmax along ``axis`` (max-subtraction)."""
    nd = x.data.ndim
    if not -nd <= axis < nd:
        raise ShapeError(f"softmax axis {axis} out of range for rank {nd}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        return (out_data * (g - dot),)

    return Tensor._from_op(out_data, (x,), backward)


_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_erf = np.vectorize(math.erf, otypes=[np.float64])


def gelu(x: Tensor, exact: bool = False) -> Tensor:
    """Gaussian-error linear unit.

    Default is the tanh approximation used throughout transformer practice;
    ``exact=True`` evaluates the erf form (slower, oracle comparisons only).
    """
    if exact:
        a = x.data
        cdf = 0.5 * (1.0 + _erf(a / math.sqrt(2.0)).astype(a.dtype))
        out_data = a * cdf

        def backward(g):
            pdf = np.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
            return (g * (cdf + a * pdf),)

        return Tensor._from_op(out_data.astype(a.dtype), (x,), backward)
    inner = _SQRT_2_OVER_PI * (x + 0.044715 * x * x * x)
    return 0.5 * x * (1.0 + inner.tanh())


# -- gradient checking --------------------------------------------------------


class GradCheckReport:
    """Per-input comparison of tape gradients against central differences."""

    def __init__(self, max_rel_errors: list, tolerance: float):
        self.max_rel_errors = max_rel_errors
        self.tolerance = tolerance
        self.passed = all(e < tolerance for e in max_rel_errors)

    @property
    def worst(self) -> float:
        return max(self.max_rel_errors) if self.max_rel_errors else 0.0

    def __repr__(self):
        status = "pass" if self.passed else "FAIL"
        return f"GradCheckReport({status}, worst={self.worst:.3e}, tol={self.tolerance:.1e})"


def grad_check(f, inputs: list, step: float = 1e-5, tolerance: float = 1e-4) -> GradCheckReport:
    """Check tape gradients of scalar-valued ``f(*inputs)`` by central differences.

    Each element of every ``requires_grad`` input is perturbed by ``±step``
    and the resulting slope compared against the tape gradient. The relative
    error denominator is floored at 1e-2 so finite-difference noise on
    near-zero gradients does not dominate.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    out = f(*inputs)
    if out.data.size != 1:
        raise ValueError(f"grad_check target must be scalar, got shape {out.data.shape}")
    out.backward()
    checked = [t for t in inputs if t.requires_grad]
    analytic = []
    for t in checked:
        if t.grad is None:
            analytic.append(np.zeros_like(t.data))
        else:
            analytic.append(np.array(t.grad, copy=True))

    errors = []
    with no_grad():
        for t, a in zip(checked, analytic):
            numeric = np.zeros_like(t.data, dtype=np.float64)
            flat = t.data.reshape(-1)
            nflat = numeric.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                hi = float(f(*inputs).data)
                flat[i] = orig - step
                lo = float(f(*inputs).data)
                flat[i] = orig
                nflat[i] = (hi - lo) / (2.0 * step)
            a64 = a.astype(np.float64)
            denom = np.maximum(np.maximum(np.abs(a64), np.abs(numeric)), 1e-2)
            errors.append(float(np.max(np.abs(a64 - numeric) / denom)) if flat.size else 0.0)
    return GradCheckReport(errors, tolerance)

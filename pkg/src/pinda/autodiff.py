"""Dense float64 tensors with reverse-mode automatic differentiation.

Every tensor produced by a primitive remembers its parents and a closure
mapping the upstream gradient to gradients for those parents.  Tensors get
a monotonically increasing id at creation, so sorting a graph by id gives
the recording order of the computation (the tape); ``backward`` walks it in
reverse and then frees the graph.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64

_ids = itertools.count()


class DimensionError(ValueError):
    """Shapes or axes are incompatible with the requested operation."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ContractError(ValueError):
    """A caller violated an operation's precondition."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf appeared in a computation."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward", "_id")
    # make numpy defer to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, *, _parents=(), _backward=None, op: str = "leaf"):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.op = op
        self._parents: tuple[Tensor, ...] = _parents
        self._backward: Callable | None = _backward
        self._id = next(_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def validate(self) -> None:
        """Raise :class:`NonFiniteError` if any value is NaN or Inf."""
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteError(f"tensor from op '{self.op}' holds non-finite values")
        if self.grad is not None and self.grad.shape != self.data.shape:
            raise DimensionError("grad shape differs from data shape")

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def relu(self):
        return relu(self)

    def softplus(self):
        return softplus(self)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, _parents=tuple(parents), _backward=backward, op=op)
    return Tensor(data, op=op)


def _check_broadcast(a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise DimensionError(f"cannot broadcast shapes {a.shape} and {b.shape}") from exc


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data)
    if np.any(b.data == 0):
        raise DomainError("division by zero")
    out = a.data / b.data

    def backward(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return _make(out, (a, b), backward, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log of a non-positive value")
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(np.maximum(a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def softplus(a) -> Tensor:
    """``log(1 + exp(a))`` computed without overflow."""
    a = as_tensor(a)

    def backward(g):
        # d/dx softplus = logistic(x); tanh form is stable for large |x|
        return (g * 0.5 * (1.0 + np.tanh(0.5 * a.data)),)

    return _make(np.logaddexp(0.0, a.data), (a,), backward, "softplus")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt of a negative value")
    out = np.sqrt(a.data)

    def backward(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (np.where(out > 0, g / (2.0 * out), 0.0),)

    return _make(out, (a,), backward, "sqrt")


# ---------------------------------------------------------------- linear algebra / shape


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions differ: {a.shape} @ {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _make(a.data @ b.data, (a, b), backward, "matmul")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.T, (a,), lambda g: (g.T,), "transpose")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except (ValueError, np.exceptions.AxisError) as exc:
        raise DimensionError(str(exc)) from exc
    splits = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, ts, backward, "concat")


def take_rows(a, index) -> Tensor:
    """Gather rows ``a[index]``; repeated indices accumulate gradient."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, index, g)
        return (out,)

    return _make(a.data[index], (a,), backward, "take_rows")


# ---------------------------------------------------------------- reductions


def _check_axis(a: Tensor, axis) -> None:
    if axis is None:
        return
    for ax in np.atleast_1d(axis):
        if not -a.ndim <= int(ax) < max(a.ndim, 1):
            raise DimensionError(f"axis {ax} invalid for shape {a.shape}")


def _expand(g: np.ndarray, a: Tensor, axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, a.shape)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    _check_axis(a, axis)

    def backward(g):
        return (np.array(_expand(g, a, axis, keepdims)),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    _check_axis(a, axis)
    count = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    if count == 0:
        raise ContractError("mean over an empty extent")

    def backward(g):
        return (np.array(_expand(g, a, axis, keepdims)) / count,)

    return _make(a.data.mean(axis=axis, keepdims=keepdims), (a,), backward, "mean")


def l2_norm(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    _check_axis(a, axis)
    out = np.sqrt(np.sum(a.data * a.data, axis=axis, keepdims=keepdims))

    def backward(g):
        norm = _expand(out, a, axis, keepdims)
        with np.errstate(divide="ignore", invalid="ignore"):
            local = np.where(norm > 0, a.data / norm, 0.0)
        return (_expand(g, a, axis, keepdims) * local,)

    return _make(out, (a,), backward, "l2_norm")


def logsumexp(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    _check_axis(a, axis)
    shift = np.max(a.data, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(a.data - shift), axis=axis, keepdims=True)) + shift

    def backward(g):
        soft = np.exp(a.data - lse)
        return (_expand(g, a, axis, keepdims) * soft,)

    out = lse if keepdims else np.squeeze(lse, axis=axis)
    return _make(out, (a,), backward, "logsumexp")


# ---------------------------------------------------------------- tape and backward


class ComputationTape:
    """The recorded primitives reachable from a root, in recording order."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_root(cls, root: Tensor) -> ComputationTape:
        seen: dict[int, Tensor] = {}
        stack = [root]
        while stack:
            node = stack.pop()
            if node._id in seen:
                continue
            seen[node._id] = node
            stack.extend(p for p in node._parents if p.requires_grad)
        return cls(sorted(seen.values(), key=lambda t: t._id))

    def first_nonfinite(self) -> Tensor | None:
        """The earliest recorded tensor holding NaN or Inf, if any."""
        for node in self.nodes:
            if not np.all(np.isfinite(node.data)):
                return node
        return None

    def __len__(self) -> int:
        return len(self.nodes)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring grad.

    Intermediate graph references are dropped afterwards, so a graph can be
    differentiated only once.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    tape = ComputationTape.from_root(loss)
    grads: dict[int, np.ndarray] = {loss._id: np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(node._id, None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad or pg is None:
                continue
            if parent._id in grads:
                grads[parent._id] = grads[parent._id] + pg
            else:
                grads[parent._id] = np.asarray(pg, dtype=DTYPE)
    for node in tape.nodes:
        if not node.is_leaf:
            node._parents = ()
            node._backward = None


def check_finite(root: Tensor) -> None:
    """Raise :class:`NonFiniteError` naming the first op that produced NaN/Inf."""
    if np.all(np.isfinite(root.data)):
        return
    bad = ComputationTape.from_root(root).first_nonfinite() if root.requires_grad else root
    name = bad.op if bad is not None else root.op
    raise NonFiniteError(f"non-finite value first produced by op '{name}'")


# ---------------------------------------------------------------- gradient checking


def finite_difference_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``."""
    if h <= 0:
        raise ContractError("step h must be positive")
    x = np.array(x.data if isinstance(x, Tensor) else x, dtype=DTYPE)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = _scalar(f(x))
        flat[i] = orig - h
        down = _scalar(f(x))
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def _scalar(v) -> float:
    return float(v.data) if isinstance(v, Tensor) else float(v)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-wise relative error; falls back to absolute error near zero."""
    a = np.ravel(a)
    b = np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    diff = np.linalg.norm(a - b)
    return float(diff / scale) if scale > 1e-8 else float(diff)


def gradcheck(loss_fn: Callable[[], Tensor], params: Iterable[Tensor], h: float = 1e-5) -> float:
    """Largest relative error between backward() and finite differences.

    ``loss_fn`` rebuilds the scalar loss from the current contents of
    ``params``; each parameter's data is perturbed in place.
    """
    params = list(params)
    for p in params:
        p.grad = None
    backward(loss_fn())
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad

        def f(values, p=p):
            saved = p.data
            p.data = values
            try:
                return loss_fn().item()
            finally:
                p.data = saved

        numeric = finite_difference_grad(f, p.data, h)
        worst = max(worst, relative_error(analytic, numeric))
    return worst

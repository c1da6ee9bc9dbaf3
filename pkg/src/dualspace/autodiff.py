"""Reverse-mode differentiation over a fixed set of array ops.

Every differentiable computation in the package is built from the ops
registered here.  A :class:`Tensor` records the op that produced it together
with its inputs, so :func:`backward` can replay the graph in reverse.  Each
op exposes its forward function separately from its vector-Jacobian product,
which lets :mod:`dualspace.gradcheck` audit ops one at a time.

All data is held as float64.
"""

from __future__ import annotations

import contextlib
from typing import Callable

import numpy as np

__all__ = [
    "Tensor",
    "Op",
    "OPS",
    "NonFiniteError",
    "as_tensor",
    "backward",
    "no_grad",
    "grad_enabled",
    "decision",
    "record_decisions",
    "replay_decisions",
]


class NonFiniteError(FloatingPointError):
    """A forward value or a gradient became NaN/inf.

    ``op`` names the op whose output (or input gradient) was non-finite.
    """

    def __init__(self, op: str, stage: str = "forward"):
        self.op = op
        self.stage = stage
        super().__init__(f"non-finite {stage} value produced by op '{op}'")


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the graph."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


# Discrete, data-dependent choices (threshold masks, top-k picks) pass
# through decision().  While recording, each choice is stored in order; while
# replaying, the stored choice is returned instead of the fresh one.  The
# finite-difference checker uses this to stay on one smooth piece.
_TAPE: dict | None = None


def decision(value):
    if _TAPE is None:
        return value
    if _TAPE["mode"] == "record":
        _TAPE["items"].append(value)
        return value
    i = _TAPE["pos"]
    _TAPE["pos"] = i + 1
    return _TAPE["items"][i]


@contextlib.contextmanager
def record_decisions():
    global _TAPE
    prev = _TAPE
    _TAPE = {"mode": "record", "items": []}
    try:
        yield _TAPE["items"]
    finally:
        _TAPE = prev


@contextlib.contextmanager
def replay_decisions(items: list):
    global _TAPE
    prev = _TAPE
    _TAPE = {"mode": "replay", "items": items, "pos": 0}
    try:
        yield
    finally:
        _TAPE = prev


class Op:
    """A primitive: ``forward(*arrays, **kw)`` and ``vjp(g, out, *arrays, **kw)``.

    ``vjp`` returns one gradient (or None) per array input.  Keyword
    arguments are non-differentiable constants (axes, masks, indices).
    """

    def __init__(self, name: str, forward: Callable, vjp: Callable):
        self.name = name
        self.forward = forward
        self.vjp = vjp

    def __repr__(self):
        return f"Op({self.name!r})"


OPS: dict[str, Op] = {}


def _register(name):
    def deco(pair):
        fwd, vjp = pair()
        OPS[name] = Op(name, fwd, vjp)
        return OPS[name]

    return deco


class Tensor:
    """A float64 array that may carry a gradient and its producing op."""

    __array_priority__ = 1000
    __slots__ = ("data", "grad", "requires_grad", "name", "_op", "_parents", "_kw")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._op = None
        self._parents = ()
        self._kw = None

    # -- numpy interop -------------------------------------------------
    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __float__(self):
        return float(self.data)

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        op = f", op={self._op.name}" if self._op is not None else ""
        return f"Tensor({self.data!r}{op})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def op(self) -> str | None:
        return None if self._op is None else self._op.name

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- operators -----------------------------------------------------
    def __add__(self, other):
        return apply("add", self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return apply("sub", self, other)

    def __rsub__(self, other):
        return apply("sub", other, self)

    def __mul__(self, other):
        return apply("mul", self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return apply("div", self, other)

    def __rtruediv__(self, other):
        return apply("div", other, self)

    def __neg__(self):
        return apply("neg", self)

    def __matmul__(self, other):
        return apply("matmul", self, other)

    def __rmatmul__(self, other):
        return apply("matmul", other, self)

    def __getitem__(self, index):
        return apply("getitem", self, index=index)

    @property
    def T(self):
        return apply("transpose", self)

    def sum(self, axis=None, keepdims=False):
        return apply("sum", self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return apply("reshape", self, shape=shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def apply(name: str, *inputs, **kw) -> Tensor:
    """Run op ``name`` on ``inputs`` and record it when gradients are on."""
    op = OPS[name]
    tensors = tuple(as_tensor(x) for x in inputs)
    out = op.forward(*(t.data for t in tensors), **kw)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(name)
    result = Tensor(out)
    if _GRAD_ENABLED and any(t.requires_grad for t in tensors):
        result.requires_grad = True
        result._op = op
        result._parents = tensors
        result._kw = kw
    return result


def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
    if loss.data.size != 1:
        raise ValueError("backward() needs a scalar loss")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._op is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = node._op.vjp(g, node.data, *(p.data for p in node._parents), **node._kw)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if not np.all(np.isfinite(pg)):
                raise NonFiniteError(node._op.name, stage="gradient")
            key = id(p)
            grads[key] = pg if key not in grads else grads[key] + pg


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


@_register("add")
def _():
    return (
        lambda a, b: a + b,
        lambda g, out, a, b: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


@_register("sub")
def _():
    return (
        lambda a, b: a - b,
        lambda g, out, a, b: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


@_register("mul")
def _():
    return (
        lambda a, b: a * b,
        lambda g, out, a, b: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
    )


@_register("div")
def _():
    return (
        lambda a, b: a / b,
        lambda g, out, a, b: (
            _unbroadcast(g / b, a.shape),
            _unbroadcast(-g * out / b, b.shape),
        ),
    )


@_register("neg")
def _():
    return (lambda a: -a, lambda g, out, a: (-g,))


@_register("matmul")
def _():
    def vjp(g, out, a, b):
        if a.ndim == 1 and b.ndim == 1:
            return g * b, g * a
        if a.ndim == 1:
            return b @ g, np.outer(a, g)
        if b.ndim == 1:
            return np.outer(g, b), a.T @ g
        return g @ b.T, a.T @ g

    return (lambda a, b: a @ b, vjp)


@_register("transpose")
def _():
    return (lambda a: a.T, lambda g, out, a: (g.T,))


@_register("reshape")
def _():
    return (
        lambda a, shape: a.reshape(shape),
        lambda g, out, a, shape: (g.reshape(a.shape),),
    )


@_register("sum")
def _():
    def vjp(g, out, a, axis, keepdims):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return (lambda a, axis, keepdims: np.sum(a, axis=axis, keepdims=keepdims), vjp)


@_register("getitem")
def _():
    def vjp(g, out, a, index):
        full = np.zeros_like(a)
        np.add.at(full, index, g)
        return (full,)

    return (lambda a, index: a[index], vjp)


@_register("concat")
def _():
    def fwd(*arrays, axis):
        return np.concatenate(arrays, axis=axis)

    def vjp(g, out, *arrays, axis):
        cuts = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return tuple(np.split(g, cuts, axis=axis))

    return (fwd, vjp)


@_register("stack")
def _():
    def fwd(*arrays, axis):
        return np.stack(arrays, axis=axis)

    def vjp(g, out, *arrays, axis):
        return tuple(np.moveaxis(g, axis, 0))

    return (fwd, vjp)


@_register("exp")
def _():
    return (np.exp, lambda g, out, a: (g * out,))


@_register("log")
def _():
    return (np.log, lambda g, out, a: (g / a,))


@_register("sqrt")
def _():
    # zero-safe: the subgradient at 0 is taken as 0
    def vjp(g, out, a):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g / (2.0 * safe), 0.0),)

    return (np.sqrt, vjp)


@_register("abs")
def _():
    return (np.abs, lambda g, out, a: (g * np.sign(a),))


@_register("square")
def _():
    return (np.square, lambda g, out, a: (2.0 * a * g,))


@_register("cosh")
def _():
    return (np.cosh, lambda g, out, a: (g * np.sinh(a),))


@_register("sinh")
def _():
    return (np.sinh, lambda g, out, a: (g * np.cosh(a),))


def _sinhc(a):
    small = np.abs(a) < 1e-4
    safe = np.where(small, 1.0, a)
    a2 = a * a
    return np.where(small, 1.0 + a2 / 6.0 + a2 * a2 / 120.0, np.sinh(safe) / safe)


def _sinhc_grad(a):
    small = np.abs(a) < 1e-4
    safe = np.where(small, 1.0, a)
    series = a / 3.0 + a**3 / 30.0
    return np.where(small, series, (safe * np.cosh(safe) - np.sinh(safe)) / (safe * safe))


@_register("sinhc")
def _():
    """sinh(a)/a, smooth through a = 0."""
    return (_sinhc, lambda g, out, a: (g * _sinhc_grad(a),))


def _arsinhc(a):
    small = np.abs(a) < 1e-4
    safe = np.where(small, 1.0, a)
    a2 = a * a
    return np.where(small, 1.0 - a2 / 6.0 + 3.0 * a2 * a2 / 40.0, np.arcsinh(safe) / safe)


def _arsinhc_grad(a):
    small = np.abs(a) < 1e-4
    safe = np.where(small, 1.0, a)
    series = -a / 3.0 + 3.0 * a**3 / 10.0
    exact = (safe / np.sqrt(1.0 + safe * safe) - np.arcsinh(safe)) / (safe * safe)
    return np.where(small, series, exact)


@_register("arsinhc")
def _():
    """arcsinh(a)/a, smooth through a = 0."""
    return (_arsinhc, lambda g, out, a: (g * _arsinhc_grad(a),))


ARCOSH_GRAD_FLOOR = 1.0 + 1e-12


@_register("arcosh")
def _():
    # value clamped at 1; gradient stopped where the argument is within
    # 1e-12 of the boundary (or below it)
    def fwd(a):
        return np.arccosh(np.maximum(a, 1.0))

    def vjp(g, out, a):
        live = a > ARCOSH_GRAD_FLOOR
        safe = np.where(live, a, 2.0)
        return (np.where(live, g / np.sqrt(safe * safe - 1.0), 0.0),)

    return (fwd, vjp)


def _sigmoid(a):
    return np.where(a >= 0, 1.0 / (1.0 + np.exp(-np.abs(a))), np.exp(-np.abs(a)) / (1.0 + np.exp(-np.abs(a))))


@_register("sigmoid")
def _():
    return (_sigmoid, lambda g, out, a: (g * out * (1.0 - out),))


@_register("log_sigmoid")
def _():
    """log(sigmoid(a)) = -softplus(-a); finite gradient for any a."""
    return (lambda a: -np.logaddexp(0.0, -a), lambda g, out, a: (g * _sigmoid(-a),))


@_register("logsumexp")
def _():
    def fwd(a, axis=-1):
        top = a.max(axis=axis, keepdims=True)
        return np.squeeze(top, axis) + np.log(np.exp(a - top).sum(axis=axis))

    def vjp(g, out, a, axis=-1):
        return (np.expand_dims(g, axis) * np.exp(a - np.expand_dims(out, axis)),)

    return (fwd, vjp)


@_register("relu")
def _():
    return (lambda a: np.maximum(a, 0.0), lambda g, out, a: (g * (a > 0),))


@_register("clip")
def _():
    # stop-gradient outside [lo, hi]
    return (
        lambda a, lo, hi: np.clip(a, lo, hi),
        lambda g, out, a, lo, hi: (g * ((a >= lo) & (a <= hi)),),
    )


@_register("maximum")
def _():
    # ties route the gradient to the first argument
    def vjp(g, out, a, b):
        first = a >= b
        return _unbroadcast(g * first, a.shape), _unbroadcast(g * ~first, b.shape)

    return (np.maximum, vjp)


def _masked_softmax(a, axis, mask):
    if mask is None:
        z = a - a.max(axis=axis, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=axis, keepdims=True)
    filled = np.where(mask, a, -np.inf)
    top = filled.max(axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.where(mask, np.exp(np.where(mask, a, 0.0) - top), 0.0)
    s = e.sum(axis=axis, keepdims=True)
    return np.where(s > 0, e / np.where(s > 0, s, 1.0), 0.0)


@_register("softmax")
def _():
    """Softmax along ``axis``, optionally restricted to ``mask``.

    Rows with no surviving entry come out as zeros.
    """

    def fwd(a, axis=-1, mask=None):
        return _masked_softmax(a, axis, mask)

    def vjp(g, out, a, axis=-1, mask=None):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return (fwd, vjp)


# ---------------------------------------------------------------------------
# functional wrappers
# ---------------------------------------------------------------------------


def _unary(name):
    def f(x):
        return apply(name, x)

    f.__name__ = name
    return f


exp = _unary("exp")
log = _unary("log")
sqrt = _unary("sqrt")
absolute = _unary("abs")
square = _unary("square")
cosh = _unary("cosh")
sinh = _unary("sinh")
sinhc = _unary("sinhc")
arsinhc = _unary("arsinhc")
arcosh = _unary("arcosh")
sigmoid = _unary("sigmoid")
log_sigmoid = _unary("log_sigmoid")
relu = _unary("relu")


def clip(x, lo: float, hi: float) -> Tensor:
    return apply("clip", x, lo=lo, hi=hi)


def maximum(a, b) -> Tensor:
    return apply("maximum", a, b)


def logsumexp(x, axis: int = -1) -> Tensor:
    return apply("logsumexp", x, axis=axis)


def softmax(x, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    return apply("softmax", x, axis=axis, mask=mask)


def concat(tensors, axis: int = -1) -> Tensor:
    return apply("concat", *tensors, axis=axis)


def stack(tensors, axis: int = 0) -> Tensor:
    return apply("stack", *tensors, axis=axis)


def where_mask(x, mask: np.ndarray) -> Tensor:
    """Zero out entries of ``x`` where ``mask`` is False (mask is constant)."""
    return apply("mul", x, np.asarray(mask, dtype=np.float64))

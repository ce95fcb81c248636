"""Dense float64 arithmetic with a differentiation tape.

Reverse mode is the primitive: every op records its parents and knows its
vector-Jacobian product, and those products are themselves written with
tape ops, so a backward sweep can be recorded and differentiated again.
Forward mode is layered on top as :class:`Dual` numbers whose tangents are
ordinary tape tensors, which makes ``jvp`` nestable under ``grad``.

Differentiation order is capped at two in practice; nothing here enforces it.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "NonFiniteError",
    "ShapeError",
    "Tensor",
    "Dual",
    "Tape",
    "as_tensor",
    "no_record",
    "recording",
    "differentiating",
    "backward",
    "grad",
    "value_and_grad",
    "jvp",
    "vjp",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "transpose",
    "tanh",
    "sigmoid",
    "softplus",
    "exp",
    "log",
    "sqrt",
    "sin",
    "cos",
    "atan2",
    "square",
    "maximum",
    "reshape",
    "broadcast_to",
    "sum_to",
    "sum",
    "take_rows",
]


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf. ``node`` names the op and its sequence number."""

    def __init__(self, node: str):
        super().__init__(f"non-finite value produced by {node}")
        self.node = node


class ShapeError(ValueError):
    pass


_state = threading.local()
_uids = itertools.count()


def _recording() -> bool:
    return getattr(_state, "record", True)


def _depth() -> int:
    return getattr(_state, "depth", 0)


def _tapes() -> list:
    if not hasattr(_state, "tapes"):
        _state.tapes = []
    return _state.tapes


@contextmanager
def _set_record(flag: bool):
    prev = _recording()
    _state.record = flag
    try:
        yield
    finally:
        _state.record = prev


@contextmanager
def no_record():
    """Evaluate ops as plain numpy: nothing is linked into the graph."""
    with _set_record(False):
        yield


@contextmanager
def recording():
    """Force graph recording, e.g. for a pullback computed inside ``no_record``."""
    with _set_record(True):
        yield


@contextmanager
def differentiating():
    """Mark that an enclosing ``grad`` will differentiate whatever is built here.

    Inner ``jvp``/``vjp`` calls then keep their results on the tape and return
    tensors instead of arrays.
    """
    _state.depth = _depth() + 1
    try:
        yield
    finally:
        _state.depth -= 1


class Tensor:
    """A float64 array plus the op and parents that produced it."""

    __slots__ = ("value", "parents", "op", "tracked", "uid")
    __array_priority__ = 100.0

    def __init__(self, value, parents=(), op=None, tracked=False):
        self.value = value
        self.parents = parents
        self.op = op
        self.tracked = tracked
        self.uid = next(_uids)

    @classmethod
    def leaf(cls, value) -> "Tensor":
        return cls(np.asarray(value, dtype=np.float64), tracked=True)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        kind = self.op.name if self.op is not None else "leaf" if self.tracked else "const"
        return f"Tensor({kind}, shape={self.value.shape})"

    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __pow__(self, k):
        if k != 2:
            raise ValueError("only squaring is supported")
        return mul(self, self)


class Dual:
    """Forward-mode pair. ``tangent`` of None stands for an exact zero."""

    __slots__ = ("primal", "tangent")
    __array_priority__ = 200.0

    def __init__(self, primal, tangent=None):
        self.primal = as_tensor(primal)
        self.tangent = None if tangent is None else as_tensor(tangent)

    @property
    def shape(self):
        return self.primal.shape

    @property
    def ndim(self):
        return self.primal.ndim

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Dual(shape={self.shape})"

    __add__ = Tensor.__add__
    __radd__ = Tensor.__radd__
    __sub__ = Tensor.__sub__
    __rsub__ = Tensor.__rsub__
    __mul__ = Tensor.__mul__
    __rmul__ = Tensor.__rmul__
    __truediv__ = Tensor.__truediv__
    __rtruediv__ = Tensor.__rtruediv__
    __neg__ = Tensor.__neg__
    __matmul__ = Tensor.__matmul__
    __rmatmul__ = Tensor.__rmatmul__
    __pow__ = Tensor.__pow__


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, Dual):
        raise TypeError("cannot lower a Dual to a Tensor")
    return Tensor(np.asarray(x, dtype=np.float64))


class Tape:
    """Records every op evaluated while active, in evaluation order.

    ``replay`` re-runs the recorded forward computations, optionally with new
    leaf values, and reproduces the original values bit for bit when nothing
    is overridden.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        _tapes().append(self)
        return self

    def __exit__(self, *exc):
        _tapes().remove(self)
        return False

    def replay(self, overrides: dict | None = None) -> dict[int, np.ndarray]:
        values = {}
        if overrides:
            values.update({t.uid: np.asarray(v, dtype=np.float64) for t, v in overrides.items()})
        for node in self.nodes:
            args = [values.get(p.uid, p.value) for p in node.parents]
            values[node.uid] = node.op.forward(*args)
        return values

    def value_of(self, t: Tensor, overrides: dict | None = None) -> np.ndarray:
        return self.replay(overrides).get(t.uid, t.value)


# -- op machinery -----------------------------------------------------------


class _Op:
    name = "op"

    def forward(self, *xs):
        raise NotImplementedError

    def vjp(self, g, out, xs, needs):
        raise NotImplementedError

    def jvp(self, out, xs, ts):
        raise NotImplementedError


_seq = itertools.count()


def _apply(op: _Op, xs: Sequence[Tensor]) -> Tensor:
    value = op.forward(*[x.value for x in xs])
    if not np.isfinite(value).all():
        raise NonFiniteError(f"{op.name} (node #{next(_seq)})")
    tracked = _recording() and any(x.tracked for x in xs)
    tapes = _tapes()
    if tracked or tapes:
        out = Tensor(value, tuple(xs), op, tracked)
        for tape in tapes:
            tape.nodes.append(out)
        return out
    return Tensor(value)


def _call(op: _Op, *args):
    if any(isinstance(a, Dual) for a in args):
        primals = [a.primal if isinstance(a, Dual) else as_tensor(a) for a in args]
        tangents = [a.tangent if isinstance(a, Dual) else None for a in args]
        out = _apply(op, primals)
        if all(t is None for t in tangents):
            return Dual(out)
        return Dual(out, op.jvp(out, primals, tangents))
    return _apply(op, [as_tensor(a) for a in args])


def _tsum(*terms):
    """Sum of tensors where None means zero; returns None if all are zero."""
    acc = None
    for t in terms:
        if t is None:
            continue
        acc = t if acc is None else add(acc, t)
    return acc


def _fit(t, shape):
    """Broadcast a tangent up to an output shape."""
    if t is None or t.shape == shape:
        return t
    return broadcast_to(t, shape)


class _Add(_Op):
    name = "add"

    def forward(self, a, b):
        return a + b

    def vjp(self, g, out, xs, needs):
        a, b = xs
        return (sum_to(g, a.shape) if needs[0] else None, sum_to(g, b.shape) if needs[1] else None)

    def jvp(self, out, xs, ts):
        return _fit(_tsum(_fit(ts[0], out.shape), _fit(ts[1], out.shape)), out.shape)


class _Sub(_Op):
    name = "sub"

    def forward(self, a, b):
        return a - b

    def vjp(self, g, out, xs, needs):
        a, b = xs
        return (sum_to(g, a.shape) if needs[0] else None, sum_to(neg(g), b.shape) if needs[1] else None)

    def jvp(self, out, xs, ts):
        ta, tb = _fit(ts[0], out.shape), _fit(ts[1], out.shape)
        if tb is None:
            return ta
        return neg(tb) if ta is None else sub(ta, tb)


class _Mul(_Op):
    name = "mul"

    def forward(self, a, b):
        return a * b

    def vjp(self, g, out, xs, needs):
        a, b = xs
        return (
            sum_to(mul(g, b), a.shape) if needs[0] else None,
            sum_to(mul(g, a), b.shape) if needs[1] else None,
        )

    def jvp(self, out, xs, ts):
        a, b = xs
        return _fit(
            _tsum(None if ts[0] is None else mul(ts[0], b), None if ts[1] is None else mul(a, ts[1])),
            out.shape,
        )


class _Div(_Op):
    name = "div"

    def forward(self, a, b):
        return a / b

    def vjp(self, g, out, xs, needs):
        a, b = xs
        ga = sum_to(div(g, b), a.shape) if needs[0] else None
        gb = sum_to(neg(div(mul(g, out), b)), b.shape) if needs[1] else None
        return ga, gb

    def jvp(self, out, xs, ts):
        a, b = xs
        num = _tsum(ts[0], None if ts[1] is None else neg(mul(out, ts[1])))
        return _fit(div(num, b), out.shape)


class _Neg(_Op):
    name = "neg"

    def forward(self, a):
        return -a

    def vjp(self, g, out, xs, needs):
        return (neg(g),)

    def jvp(self, out, xs, ts):
        return neg(ts[0])


class _MatMul(_Op):
    name = "matmul"

    def forward(self, a, b):
        return a @ b

    def vjp(self, g, out, xs, needs):
        a, b = xs
        return (
            matmul(g, transpose(b)) if needs[0] else None,
            matmul(transpose(a), g) if needs[1] else None,
        )

    def jvp(self, out, xs, ts):
        a, b = xs
        return _tsum(
            None if ts[0] is None else matmul(ts[0], b),
            None if ts[1] is None else matmul(a, ts[1]),
        )


class _Transpose(_Op):
    name = "transpose"

    def forward(self, a):
        return a.T

    def vjp(self, g, out, xs, needs):
        return (transpose(g),)

    def jvp(self, out, xs, ts):
        return transpose(ts[0])


class _Tanh(_Op):
    name = "tanh"

    def forward(self, a):
        return np.tanh(a)

    def _slope(self, out):
        return sub(1.0, mul(out, out))

    def vjp(self, g, out, xs, needs):
        return (mul(g, self._slope(out)),)

    def jvp(self, out, xs, ts):
        return mul(ts[0], self._slope(out))


class _Sigmoid(_Op):
    name = "sigmoid"

    def forward(self, a):
        # split by sign so exp never overflows
        out = np.empty_like(a)
        pos = a >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
        e = np.exp(a[~pos])
        out[~pos] = e / (1.0 + e)
        return out

    def _slope(self, out):
        return mul(out, sub(1.0, out))

    def vjp(self, g, out, xs, needs):
        return (mul(g, self._slope(out)),)

    def jvp(self, out, xs, ts):
        return mul(ts[0], self._slope(out))


class _Softplus(_Op):
    name = "softplus"

    def forward(self, a):
        return np.logaddexp(0.0, a)

    def vjp(self, g, out, xs, needs):
        return (mul(g, sigmoid(xs[0])),)

    def jvp(self, out, xs, ts):
        return mul(ts[0], sigmoid(xs[0]))


class _Exp(_Op):
    name = "exp"

    def forward(self, a):
        return np.exp(a)

    def vjp(self, g, out, xs, needs):
        return (mul(g, out),)

    def jvp(self, out, xs, ts):
        return mul(ts[0], out)


class _Log(_Op):
    name = "log"

    def forward(self, a):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(a)

    def vjp(self, g, out, xs, needs):
        return (div(g, xs[0]),)

    def jvp(self, out, xs, ts):
        return div(ts[0], xs[0])


class _Sqrt(_Op):
    name = "sqrt"

    def forward(self, a):
        with np.errstate(invalid="ignore"):
            return np.sqrt(a)

    def vjp(self, g, out, xs, needs):
        return (div(g, mul(2.0, out)),)

    def jvp(self, out, xs, ts):
        return div(ts[0], mul(2.0, out))


class _Sin(_Op):
    name = "sin"

    def forward(self, a):
        return np.sin(a)

    def vjp(self, g, out, xs, needs):
        return (mul(g, cos(xs[0])),)

    def jvp(self, out, xs, ts):
        return mul(ts[0], cos(xs[0]))


class _Cos(_Op):
    name = "cos"

    def forward(self, a):
        return np.cos(a)

    def vjp(self, g, out, xs, needs):
        return (neg(mul(g, sin(xs[0]))),)

    def jvp(self, out, xs, ts):
        return neg(mul(ts[0], sin(xs[0])))


class _Atan2(_Op):
    name = "atan2"

    def forward(self, y, x):
        return np.arctan2(y, x)

    def vjp(self, g, out, xs, needs):
        y, x = xs
        r2 = add(mul(x, x), mul(y, y))
        return (
            sum_to(div(mul(g, x), r2), y.shape) if needs[0] else None,
            sum_to(neg(div(mul(g, y), r2)), x.shape) if needs[1] else None,
        )

    def jvp(self, out, xs, ts):
        y, x = xs
        r2 = add(mul(x, x), mul(y, y))
        num = _tsum(
            None if ts[0] is None else mul(x, ts[0]),
            None if ts[1] is None else neg(mul(y, ts[1])),
        )
        return _fit(div(num, r2), out.shape)


class _Maximum(_Op):
    """max(x, floor) for a constant floor; the subgradient at a tie is zero."""

    name = "maximum"

    def __init__(self, floor: float):
        self.floor = floor

    def forward(self, a):
        return np.maximum(a, self.floor)

    def _mask(self, x):
        return Tensor((x.value > self.floor).astype(np.float64))

    def vjp(self, g, out, xs, needs):
        return (mul(g, self._mask(xs[0])),)

    def jvp(self, out, xs, ts):
        return mul(ts[0], self._mask(xs[0]))


class _Reshape(_Op):
    name = "reshape"

    def __init__(self, shape):
        self.shape = tuple(shape)

    def forward(self, a):
        return np.reshape(a, self.shape)

    def vjp(self, g, out, xs, needs):
        return (reshape(g, xs[0].shape),)

    def jvp(self, out, xs, ts):
        return reshape(ts[0], self.shape)


class _BroadcastTo(_Op):
    name = "broadcast_to"

    def __init__(self, shape):
        self.shape = tuple(shape)

    def forward(self, a):
        return np.array(np.broadcast_to(a, self.shape))

    def vjp(self, g, out, xs, needs):
        return (sum_to(g, xs[0].shape),)

    def jvp(self, out, xs, ts):
        return broadcast_to(ts[0], self.shape)


def _reduce_to(a: np.ndarray, shape) -> np.ndarray:
    lead = a.ndim - len(shape)
    if lead:
        a = a.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and a.shape[i] != 1)
    if axes:
        a = a.sum(axis=axes, keepdims=True)
    return a.reshape(shape)


class _SumTo(_Op):
    name = "sum_to"

    def __init__(self, shape):
        self.shape = tuple(shape)

    def forward(self, a):
        return _reduce_to(a, self.shape)

    def vjp(self, g, out, xs, needs):
        return (broadcast_to(g, xs[0].shape),)

    def jvp(self, out, xs, ts):
        return sum_to(ts[0], self.shape)


class _TakeRows(_Op):
    """Row permutation along axis 0."""

    name = "take_rows"

    def __init__(self, perm):
        self.perm = np.asarray(perm)

    def forward(self, a):
        return a[self.perm]

    def vjp(self, g, out, xs, needs):
        return (take_rows(g, np.argsort(self.perm, kind="stable")),)

    def jvp(self, out, xs, ts):
        return take_rows(ts[0], self.perm)


_ADD, _SUB, _MUL, _DIV, _NEG = _Add(), _Sub(), _Mul(), _Div(), _Neg()
_MATMUL, _TRANSPOSE = _MatMul(), _Transpose()
_TANH, _SIGMOID, _SOFTPLUS = _Tanh(), _Sigmoid(), _Softplus()
_EXP, _LOG, _SQRT, _SIN, _COS, _ATAN2 = _Exp(), _Log(), _Sqrt(), _Sin(), _Cos(), _Atan2()


def add(a, b):
    return _call(_ADD, a, b)


def sub(a, b):
    return _call(_SUB, a, b)


def mul(a, b):
    return _call(_MUL, a, b)


def div(a, b):
    return _call(_DIV, a, b)


def neg(a):
    return _call(_NEG, a)


def square(a):
    return _call(_MUL, a, a)


def matmul(a, b):
    sa, sb = np.shape(a), np.shape(b)
    if len(sa) != 2 or len(sb) != 2 or sa[1] != sb[0]:
        raise ShapeError(f"matmul of shapes {sa} and {sb}")
    return _call(_MATMUL, a, b)


def transpose(a):
    return _call(_TRANSPOSE, a)


def tanh(a):
    return _call(_TANH, a)


def sigmoid(a):
    return _call(_SIGMOID, a)


def softplus(a):
    return _call(_SOFTPLUS, a)


def exp(a):
    return _call(_EXP, a)


def log(a):
    return _call(_LOG, a)


def sqrt(a):
    return _call(_SQRT, a)


def sin(a):
    return _call(_SIN, a)


def cos(a):
    return _call(_COS, a)


def atan2(y, x):
    return _call(_ATAN2, y, x)


def maximum(a, floor: float):
    return _call(_Maximum(float(floor)), a)


def reshape(a, shape):
    if tuple(np.shape(a)) == tuple(shape):
        return a
    return _call(_Reshape(shape), a)


def broadcast_to(a, shape):
    if tuple(np.shape(a)) == tuple(shape):
        return a
    return _call(_BroadcastTo(shape), a)


def sum_to(a, shape):
    if tuple(np.shape(a)) == tuple(shape):
        return a
    return _call(_SumTo(shape), a)


def take_rows(a, perm):
    return _call(_TakeRows(perm), a)


def sum(a, axis=None, keepdims=False):
    """Sum over one axis or all axes, as a composition of ``sum_to`` and ``reshape``."""
    shape = np.shape(a)
    if axis is None:
        kept = tuple(1 for _ in shape)
    else:
        axis = axis % len(shape)
        kept = tuple(1 if i == axis else n for i, n in enumerate(shape))
    out = sum_to(a, kept)
    if keepdims:
        return out
    final = () if axis is None else tuple(n for i, n in enumerate(shape) if i != axis)
    return reshape(out, final)


def _shape_of(x):
    return x.shape if isinstance(x, (Tensor, Dual)) else np.shape(x)


# -- reverse sweep ----------------------------------------------------------


def _relevant_order(outputs: Sequence[Tensor], targets: set[int]):
    """Topological order of tracked nodes lying between the targets and outputs."""
    relevant: dict[int, bool] = {}
    order: list[Tensor] = []
    for root in outputs:
        if root.uid in relevant:
            continue
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if node.uid in relevant and not expanded:
                continue
            if expanded:
                rel = node.uid in targets or any(relevant.get(p.uid, False) for p in node.parents)
                relevant[node.uid] = rel
                if rel:
                    order.append(node)
                continue
            if node.uid in targets or not node.tracked or not node.parents:
                relevant[node.uid] = node.uid in targets
                if relevant[node.uid]:
                    order.append(node)
                continue
            relevant[node.uid] = False
            stack.append((node, True))
            for p in node.parents:
                if p.uid not in relevant:
                    stack.append((p, False))
    return order, relevant


def backward(outputs, wrt, seeds, create_graph: bool | None = None) -> list:
    """Accumulate ``sum_k seeds[k] . d outputs[k] / d wrt`` by a reverse sweep.

    With ``create_graph`` the sweep itself is recorded, so the returned
    tensors can be differentiated again. Entries are None where an input does
    not influence any output.
    """
    if create_graph is None:
        create_graph = _depth() > 0 and _recording()
    outputs = [as_tensor(o) for o in outputs]
    targets = {t.uid for t in wrt}
    order, relevant = _relevant_order(outputs, targets)
    grads: dict[int, Tensor] = {}
    with _set_record(create_graph):
        for out, seed in zip(outputs, seeds):
            if not relevant.get(out.uid, False):
                continue
            seed = as_tensor(seed) if create_graph else Tensor(np.asarray(_value(seed), dtype=np.float64))
            if seed.shape != out.shape:
                raise ShapeError(f"seed shape {seed.shape} does not match output {out.shape}")
            grads[out.uid] = add(grads[out.uid], seed) if out.uid in grads else seed
        for node in reversed(order):
            g = grads.get(node.uid)
            if g is None or node.uid in targets or not node.parents:
                continue
            needs = [relevant.get(p.uid, False) for p in node.parents]
            for p, pg in zip(node.parents, node.op.vjp(g, node, node.parents, needs)):
                if pg is None or not relevant.get(p.uid, False):
                    continue
                grads[p.uid] = add(grads[p.uid], pg) if p.uid in grads else pg
    return [grads.get(t.uid) for t in wrt]


def _value(x):
    return x.value if isinstance(x, Tensor) else x


def value_and_grad(fn: Callable, *arrays) -> tuple[float, list[np.ndarray]]:
    """Evaluate scalar ``fn(*tensors)`` and its gradient w.r.t. every argument."""
    leaves = [Tensor.leaf(a) for a in arrays]
    with _set_record(True), differentiating():
        out = as_tensor(fn(*leaves))
    if out.value.size != 1:
        raise ShapeError(f"objective must be scalar, got shape {out.shape}")
    gs = backward([out], leaves, [np.ones_like(out.value)], create_graph=False)
    result = [np.zeros_like(l.value) if g is None else np.array(g.value) for l, g in zip(leaves, gs)]
    return float(out.value.reshape(())), result


def grad(objective: Callable, at) -> np.ndarray:
    """Reverse-accumulated gradient of a scalar objective of one vector."""
    return value_and_grad(objective, np.asarray(at, dtype=np.float64))[1][0]


def _finish(t: Tensor):
    return t if _depth() > 0 else np.array(t.value)


def jvp(fn: Callable, at, direction):
    """J(at) . direction by forward propagation of dual numbers.

    Inside an active ``grad`` the result stays on the tape.
    """
    if _shape_of(direction) != _shape_of(at):
        raise ShapeError(f"direction shape {_shape_of(direction)} != input shape {_shape_of(at)}")
    out = fn(Dual(at, direction))
    if not isinstance(out, Dual):
        return _finish(Tensor(np.zeros_like(_value(as_tensor(out)))))
    if out.tangent is None:
        return _finish(Tensor(np.zeros_like(out.primal.value)))
    return _finish(out.tangent)


def vjp(fn: Callable, at, covector):
    """J(at)^T . covector by one reverse sweep over ``fn``.

    Inside an active ``grad`` the sweep is recorded so the result can be
    differentiated with respect to whatever ``fn`` closes over.
    """
    x = at if isinstance(at, Tensor) and at.tracked else Tensor.leaf(_value(at))
    with _set_record(True):
        y = as_tensor(fn(x))
    if _shape_of(covector) != y.shape:
        raise ShapeError(f"covector shape {_shape_of(covector)} != output shape {y.shape}")
    (gx,) = backward([y], [x], [covector])
    if gx is None:
        gx = Tensor(np.zeros_like(x.value))
    return _finish(gx)

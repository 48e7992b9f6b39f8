"""Minimal reverse-mode gradient engine over float64 ndarrays.

Only real values live on the tape.  Complex circuit math is carried as
``(re, im)`` pairs of real tensors (see ``cmul``/``cmatmul``/``expi``) so
every gradient is an ordinary real gradient.

Each node stores its value, its parents and a vector-Jacobian closure;
``backward`` walks the graph in reverse topological order.
"""

import numpy as np

from ..errors import GraphError, NonFiniteError, ShapeError


class Tensor:
    __slots__ = ("value", "parents", "op", "vjp", "requires_grad", "grad", "name")

    def __init__(self, value, parents=(), op="leaf", vjp=None, requires_grad=False, name=None):
        self.value = value
        self.parents = parents
        self.op = op
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @classmethod
    def param(cls, value, name=None):
        arr = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"parameter {name or ''} contains NaN or Inf")
        return cls(arr, requires_grad=True, name=name)

    @classmethod
    def const(cls, value):
        return cls(np.asarray(value, dtype=np.float64))

    @property
    def shape(self):
        return self.value.shape

    @property
    def is_leaf(self):
        return not self.parents

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.value.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor.const(x)


def make_node(value, parents, op, vjp):
    """Create a result node; drops the closure when nothing upstream needs grads."""
    if any(p.requires_grad for p in parents):
        return Tensor(value, tuple(parents), op, vjp, requires_grad=True)
    return Tensor(value, op=op)


def unbroadcast(g, shape):
    if g.shape == shape:
        return g
    ndim_extra = g.ndim - len(shape)
    if ndim_extra > 0:
        g = g.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a, b, opname):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{opname}: shapes {a.shape} and {b.shape} do not broadcast") from None


# elementwise arithmetic

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.value, b.value, "add")
    return make_node(a.value + b.value, (a, b), "add",
                     lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.value, b.value, "sub")
    return make_node(a.value - b.value, (a, b), "sub",
                     lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.value, b.value, "mul")
    return make_node(a.value * b.value, (a, b), "mul",
                     lambda g: (unbroadcast(g * b.value, a.shape), unbroadcast(g * a.value, b.shape)))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.value, b.value, "div")
    out = a.value / b.value
    return make_node(out, (a, b), "div",
                     lambda g: (unbroadcast(g / b.value, a.shape),
                                unbroadcast(-g * out / b.value, b.shape)))


def neg(a):
    a = as_tensor(a)
    return make_node(-a.value, (a,), "neg", lambda g: (-g,))


def relu(a):
    a = as_tensor(a)
    mask = a.value > 0
    # np.maximum keeps NaN so a bad batch surfaces as a non-finite loss
    return make_node(np.maximum(a.value, 0.0), (a,), "relu", lambda g: (g * mask,))


def cos(a):
    a = as_tensor(a)
    return make_node(np.cos(a.value), (a,), "cos", lambda g: (-g * np.sin(a.value),))


def sin(a):
    a = as_tensor(a)
    return make_node(np.sin(a.value), (a,), "sin", lambda g: (g * np.cos(a.value),))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.value)
    return make_node(out, (a,), "sqrt", lambda g: (g * 0.5 / out,))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.value)
    return make_node(out, (a,), "exp", lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    return make_node(np.log(a.value), (a,), "log", lambda g: (g / a.value,))


def square(a):
    a = as_tensor(a)
    return make_node(a.value * a.value, (a,), "square", lambda g: (2.0 * g * a.value,))


def clip(a, lo, hi):
    """Clamp with zero gradient outside ``[lo, hi]``."""
    a = as_tensor(a)
    inside = (a.value >= lo) & (a.value <= hi)
    return make_node(np.clip(a.value, lo, hi), (a,), "clip", lambda g: (g * inside,))


def abs2(z):
    """Squared modulus of a complex pair ``(re, im)``."""
    re, im = as_tensor(z[0]), as_tensor(z[1])
    _check_broadcast(re.value, im.value, "abs2")
    return make_node(re.value ** 2 + im.value ** 2, (re, im), "abs2",
                     lambda g: (unbroadcast(2.0 * g * re.value, re.shape),
                                unbroadcast(2.0 * g * im.value, im.shape)))


# reductions and shape ops

def reduce_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_node(np.asarray(out, dtype=np.float64), (a,), "reduce_sum", vjp)


def mean(a, axis=None):
    a = as_tensor(a)
    count = a.value.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return reduce_sum(a, axis) * (1.0 / count)


def reshape(a, shape):
    a = as_tensor(a)
    try:
        out = a.value.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {a.shape} into {shape}") from None
    return make_node(out, (a,), "reshape", lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    a = as_tensor(a)
    out = np.transpose(a.value, axes)
    inv = None if axes is None else np.argsort(axes)
    return make_node(out, (a,), "transpose", lambda g: (np.transpose(g, inv),))


def take(a, index, axis=0):
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)
    out = np.take(a.value, index, axis=axis)

    def vjp(g):
        full = np.zeros(a.shape)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, index, np.moveaxis(g, axis, 0))
        return (full,)

    return make_node(out, (a,), "take", vjp)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    out = np.concatenate([t.value for t in tensors], axis=axis)
    splits = np.cumsum(sizes)[:-1]
    return make_node(out, tuple(tensors), "concat",
                     lambda g: tuple(np.split(g, splits, axis=axis)))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim < 2 or b.value.ndim < 2:
        raise ShapeError(f"matmul expects operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    out = a.value @ b.value

    def vjp(g):
        ga = g @ np.swapaxes(b.value, -1, -2)
        gb = np.swapaxes(a.value, -1, -2) @ g
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return make_node(out, (a, b), "matmul", vjp)


def detach(a):
    a = as_tensor(a)
    return Tensor(a.value, op="detach")


def straight_through(a, value, mask=None):
    """Forward ``value``; backward passes the gradient to ``a`` (times ``mask``)."""
    a = as_tensor(a)
    value = np.asarray(value, dtype=np.float64)
    if value.shape != a.shape:
        raise ShapeError(f"straight-through value shape {value.shape} != input shape {a.shape}")
    if mask is None:
        return make_node(value, (a,), "ste", lambda g: (g,))
    return make_node(value, (a,), "ste", lambda g: (g * mask,))


def softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of ``softmax(logits)`` against integer labels."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.intp)
    if logits.value.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} and labels {labels.shape} are incompatible")
    n = logits.shape[0]
    z = logits.value - logits.value.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    loss = np.mean(logsum - z[np.arange(n), labels])

    def vjp(g):
        p = np.exp(z - logsum[:, None])
        p[np.arange(n), labels] -= 1.0
        return (g * p / n,)

    return make_node(np.asarray(loss), (logits,), "softmax_cross_entropy", vjp)


# complex pairs

def cmul(a, b):
    ar, ai = a
    br, bi = b
    return sub(mul(ar, br), mul(ai, bi)), add(mul(ar, bi), mul(ai, br))


def cmatmul(a, b):
    ar, ai = a
    br, bi = b
    return sub(matmul(ar, br), matmul(ai, bi)), add(matmul(ar, bi), matmul(ai, br))


def expi(phi):
    return cos(phi), sin(phi)


def complex_value(z):
    return np.asarray(as_tensor(z[0]).value) + 1j * np.asarray(as_tensor(z[1]).value)


# backward pass

def _topological_order(root):
    WHITE, GREY, BLACK = 0, 1, 2
    color = {}
    order = []
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        key = id(node)
        if expanded:
            color[key] = BLACK
            order.append(node)
            continue
        state = color.get(key, WHITE)
        if state == BLACK:
            continue
        if state == GREY:
            raise GraphError("cycle detected in gradient graph")
        color[key] = GREY
        stack.append((node, True))
        for p in node.parents:
            pstate = color.get(id(p), WHITE)
            if pstate == GREY:
                raise GraphError("cycle detected in gradient graph")
            if pstate == WHITE and p.requires_grad:
                stack.append((p, False))
    return order


def backward(output):
    """Reverse-mode sweep from a scalar node.

    Returns ``{leaf: gradient}`` for every reachable leaf that requires a
    gradient; the gradient is also stored on ``leaf.grad``.
    """
    if not isinstance(output, Tensor):
        raise GraphError("backward expects a Tensor")
    if output.value.size != 1:
        raise GraphError(f"backward needs a scalar output, got shape {output.shape}")
    if not output.requires_grad:
        return {}
    order = _topological_order(output)
    grads = {id(output): np.ones_like(output.value, dtype=np.float64)}
    leaves = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            leaves[node] = g
            continue
        parent_grads = node.vjp(g)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            prev = grads.get(id(p))
            grads[id(p)] = pg if prev is None else prev + pg
    for leaf, g in leaves.items():
        leaf.grad = g
    return leaves

"""Tape-based reverse-mode automatic differentiation over numpy arrays.

Operations are recorded on the innermost active :class:`Tape` whenever at
least one input requires a gradient. Outside a tape every primitive is a
plain numpy computation, which is what inference uses.
"""
from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

_ids = itertools.count(1)
_local = threading.local()


class ShapeError(ValueError):
    pass


class TapeError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "node_id", "grad", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(dtype or DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.node_id = next(_ids) if requires_grad else None
        self.grad = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        """Row-major flattened values."""
        return self.data.reshape(-1)

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __matmul__ = lambda self, other: matmul(self, other)
    __neg__ = lambda self: neg(self)
    __getitem__ = lambda self, idx: getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)


@dataclass
class Node:
    kind: str
    inputs: tuple  # tensors (or None for non-differentiable inputs)
    output_id: int
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Append-only record of primitive applications.

    Use as a context manager; primitives evaluated inside the block are
    recorded here. A tape supports exactly one :func:`backward` call.
    """

    nodes: list[Node] = field(default_factory=list)
    consumed: bool = False
    _produced: set = field(default_factory=set, repr=False)

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False

    def record(self, kind, inputs, output, vjp):
        if self.consumed:
            raise TapeError("cannot record on a tape after backward()")
        self.nodes.append(Node(kind, tuple(inputs), output.node_id, vjp))
        self._produced.add(output.node_id)


def _stack() -> list[Tape]:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def active_tape() -> Tape | None:
    s = _stack()
    return s[-1] if s else None


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype or DEFAULT_DTYPE))


def _wrap(kind, out: np.ndarray, inputs, vjp) -> Tensor:
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs if t is not None):
        res = Tensor(out, requires_grad=True)
        tape.record(kind, inputs, res, vjp)
        return res
    return Tensor(out)


def _coerce(a, b):
    """Bring python scalars / arrays to Tensors, matching the other operand's dtype."""
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    elif not isinstance(a, Tensor):
        a, b = as_tensor(a), as_tensor(b)
    return a, b


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(kind, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = _coerce(a, b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _wrap("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _coerce(a, b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _wrap("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _coerce(a, b)
    _broadcast_shape("mul", a, b)
    ad, bd = a.data, b.data

    def vjp(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return _wrap("mul", ad * bd, (a, b), vjp)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _wrap("neg", -a.data, (a,), lambda g: (-g,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _wrap("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # tanh form is overflow-free
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _wrap("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a) -> Tensor:
    """Tanh approximation of GELU; smooth everywhere, unlike relu."""
    a = as_tensor(a)
    x = a.data
    u = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(u)
    out = 0.5 * x * (1.0 + t)

    def vjp(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du),)

    return _wrap("gelu", out, (a,), vjp)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _wrap("relu", a.data * mask, (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# linear algebra and shape manipulation


def matmul(a, b) -> Tensor:
    a, b = _coerce(a, b)
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeError("matmul: scalar operands are not allowed")
    ka = a.shape[-1]
    kb = b.shape[-2] if b.ndim > 1 else b.shape[0]
    if ka != kb:
        raise ShapeError(
            f"matmul: inner dimensions differ ({a.shape} @ {b.shape}: {ka} != {kb})")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as e:
        raise ShapeError(f"matmul: incompatible batch dims {a.shape} @ {b.shape}") from e
    ad, bd = a.data, b.data

    def vjp(g):
        ga = gb = None
        a2 = ad[None, :] if ad.ndim == 1 else ad
        b2 = bd[:, None] if bd.ndim == 1 else bd
        g2 = g
        if ad.ndim == 1:
            g2 = np.expand_dims(g2, -2)
        if bd.ndim == 1:
            g2 = np.expand_dims(g2, -1)
        if a.requires_grad:
            ga = np.matmul(g2, np.swapaxes(b2, -1, -2))
            if ad.ndim == 1:
                ga = ga.reshape(ga.shape[:-2] + (ga.shape[-1],))
                ga = _unbroadcast(ga, ad.shape)
            else:
                ga = _unbroadcast(ga, ad.shape)
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a2, -1, -2), g2)
            if bd.ndim == 1:
                gb = gb.reshape(gb.shape[:-1])
            gb = _unbroadcast(gb, bd.shape)
        return ga, gb

    return _wrap("matmul", out, (a, b), vjp)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    orig = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {orig} into {tuple(shape)}") from None
    return _wrap("reshape", out, (a,), lambda g: (g.reshape(orig),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _wrap("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    shape, dtype = a.shape, a.dtype

    def vjp(g):
        out = np.zeros(shape, dtype=dtype)
        np.add.at(out, idx, g) if _fancy(idx) else out.__setitem__(idx, g)
        return (out,)

    return _wrap("getitem", a.data[idx], (a,), vjp)


def _fancy(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat: no inputs")
    nd = ts[0].ndim
    ax = axis % nd
    for t in ts[1:]:
        if t.ndim != nd or any(t.shape[i] != ts[0].shape[i] for i in range(nd) if i != ax):
            raise ShapeError(
                f"concat: shapes {[t.shape for t in ts]} differ outside axis {axis}")
    sizes = np.cumsum([t.shape[ax] for t in ts])[:-1]
    out = np.concatenate([t.data for t in ts], axis=ax)
    return _wrap("concat", out, ts, lambda g: tuple(np.split(g, sizes, axis=ax)))


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in ts}
    if len(shapes) != 1:
        raise ShapeError(f"stack: all inputs need one shape, got {sorted(shapes)}")
    out = np.stack([t.data for t in ts], axis=axis)
    n = len(ts)
    return _wrap("stack", out, ts,
                 lambda g: tuple(np.squeeze(p, axis) for p in np.split(g, n, axis=axis)))


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _wrap("sum", np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), vjp)


# ---------------------------------------------------------------------------
# network primitives


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    x = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(x)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _wrap("softmax", out, (a,), vjp)


def embedding(weight: Tensor, ids) -> Tensor:
    """Row lookup ``weight[ids]``; ``ids`` is an integer array of any shape."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ShapeError(f"embedding: ids must be integers, got {ids.dtype}")
    n = weight.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise ShapeError(f"embedding: id out of range [0, {n}) (max id {ids.max()})")
    shape, dtype = weight.shape, weight.dtype

    def vjp(g):
        out = np.zeros(shape, dtype=dtype)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, shape[1]))
        return (out,)

    return _wrap("embedding", weight.data[ids], (weight,), vjp)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(
            f"layer_norm: gain/bias shapes {gamma.shape}/{beta.shape} do not match last dim {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data
    gd = gamma.data
    lead = tuple(range(x.ndim - 1))

    def vjp(g):
        gx = ggam = gbet = None
        if x.requires_grad:
            gh = g * gd
            gx = inv * (gh - gh.mean(-1, keepdims=True)
                        - xhat * (gh * xhat).mean(-1, keepdims=True))
        if gamma.requires_grad:
            ggam = (g * xhat).sum(axis=lead)
        if beta.requires_grad:
            gbet = g.sum(axis=lead)
        return gx, ggam, gbet

    return _wrap("layer_norm", out, (x, gamma, beta), vjp)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, train: bool = True) -> Tensor:
    """Inverted dropout; identity when not training or rate is zero."""
    if not train or rate <= 0.0 or rng is None:
        return x
    if rate >= 1.0:
        raise ValueError("dropout: rate must be < 1")
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return _wrap("dropout", x.data * mask, (x,), lambda g: (g * mask,))


def cross_entropy(logits: Tensor, targets, mask=None) -> Tensor:
    """Mean negative log-likelihood of ``targets`` over unmasked positions.

    ``logits`` has shape ``(..., V)``, ``targets`` integer ``(...)`` and
    ``mask`` (optional) float ``(...)`` with 1 for counted positions.
    """
    targets = np.asarray(targets)
    if logits.shape[:-1] != targets.shape:
        raise ShapeError(
            f"cross_entropy: logits {logits.shape} do not match targets {targets.shape}")
    m = np.ones(targets.shape, logits.dtype) if mask is None else np.asarray(mask, logits.dtype)
    count = m.sum()
    if count <= 0:
        raise ValueError("cross_entropy: no unmasked positions")
    x = logits.data - logits.data.max(-1, keepdims=True)
    lse = np.log(np.exp(x).sum(-1, keepdims=True))
    logp = x - lse
    picked = np.take_along_axis(logp, targets[..., None], -1)[..., 0]
    loss = -(picked * m).sum() / count

    def vjp(g):
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, targets[..., None], 1.0, -1)
        return ((p - onehot) * (m / count)[..., None] * g,)

    return _wrap("cross_entropy", np.asarray(loss, dtype=logits.dtype), (logits,), vjp)


# ---------------------------------------------------------------------------

PRIMITIVES = {
    "add": add, "sub": sub, "mul": mul, "neg": neg, "matmul": matmul,
    "tanh": tanh, "sigmoid": sigmoid, "relu": relu, "gelu": gelu, "softmax": softmax,
    "concat": concat, "stack": stack, "reshape": reshape, "transpose": transpose,
    "getitem": getitem, "sum": tsum, "embedding": embedding,
    "layer_norm": layer_norm, "dropout": dropout, "cross_entropy": cross_entropy,
}


def apply_primitive(kind: str, inputs: Sequence, **kwargs) -> Tensor:
    try:
        fn = PRIMITIVES[kind]
    except KeyError:
        raise ValueError(f"unknown primitive {kind!r}") from None
    return fn(*inputs, **kwargs)


def backward(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    """Reverse sweep over ``tape``; returns ``{node_id: gradient}`` for leaves.

    Leaves that received no gradient signal are absent from the map. Sets
    ``.grad`` on every leaf that did.
    """
    if tape.consumed:
        raise TapeError("backward() already ran on this tape; run a new forward pass")
    if loss.data.size != 1 or loss.ndim > 1:
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    tape.consumed = True
    if loss.node_id is None:
        return {}
    if loss.node_id not in tape._produced:
        raise TapeError("backward: loss was not produced on this tape")

    grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        g = grads.pop(node.output_id, None)
        if g is None:
            continue
        contribs = node.vjp(g)
        for t, c in zip(node.inputs, contribs):
            if t is None or c is None or not t.requires_grad:
                continue
            if t.node_id not in tape._produced:
                leaves[t.node_id] = t
            prev = grads.get(t.node_id)
            grads[t.node_id] = c if prev is None else prev + c
        node.vjp = None  # free saved activations
    out = {}
    for nid, t in leaves.items():
        g = grads.get(nid)
        if g is not None:
            g = g.astype(t.dtype, copy=False)
            t.grad = g
            out[nid] = g
    return out

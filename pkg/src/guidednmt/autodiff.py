"""Dense float64 tensors with reverse-mode automatic differentiation.

The gradient graph is define-by-run: every op records its parents and a
closure that maps the output gradient to parent gradients. `backward`
walks the graph in reverse topological order, keeping intermediate
gradients in a scratch dict and accumulating only into leaf tensors that
were created with ``requires_grad=True`` (so calling it twice on the same
graph accumulates exactly twice).
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class MaskError(ValueError):
    """A softmax row has no allowed position."""


def _as_array(data) -> np.ndarray:
    return np.asarray(data, dtype=np.float64)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad=False, _parents=(), _grad_fn=None):
        self.data = _as_array(data)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if (requires_grad and _grad_fn is None) else None
        self._parents = tuple(_parents)
        self._grad_fn = _grad_fn

    # -- introspection -------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_leaf(self):
        return self._grad_fn is None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def detach(self) -> "Tensor":
        """Same values, cut out of the gradient graph."""
        return Tensor(self.data.copy())

    def item(self) -> float:
        return float(self.data)

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return scale(self, 1.0 / float(scalar))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def sum(self):
        return tensor_sum(self)

    def mean(self):
        return scale(tensor_sum(self), 1.0 / self.data.size)

    # -- backprop ------------------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar, got shape {self.data.shape}")
        order = _toposort(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._grad_fn is None:
                if node.requires_grad:
                    node.grad += g
                continue
            for parent, pg in zip(node._parents, node._grad_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                acc = grads.get(id(parent))
                if acc is None:
                    # copy views/aliases so later in-place accumulation is safe
                    if pg is g or not pg.flags.owndata or not pg.flags.writeable:
                        pg = pg.copy()
                    grads[id(parent)] = pg
                else:
                    acc += pg


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    order.reverse()
    return order


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data, parents, grad_fn) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    if not requires:
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=parents, _grad_fn=grad_fn)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to `shape` by summing."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise ops ---------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def grad_fn(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))

    return _make(out, (a, b), grad_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def grad_fn(g):
        return (_unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape))

    return _make(out, (a, b), grad_fn)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return _make(a.data * factor, (a,), lambda g: (g * factor,))


def power(a: Tensor, exponent) -> Tensor:
    exponent = float(exponent)
    out = a.data ** exponent

    def grad_fn(g):
        return (g * exponent * a.data ** (exponent - 1.0),)

    return _make(out, (a,), grad_fn)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)

    def grad_fn(g):
        return (g * (a.data > 0.0),)

    return _make(out, (a,), grad_fn)


def tensor_sum(a: Tensor) -> Tensor:
    out = a.data.sum()

    def grad_fn(g):
        return (np.broadcast_to(g, a.data.shape),)

    return _make(out, (a,), grad_fn)


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate == 0."""
    if rate <= 0.0:
        return a
    keep = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    return _make(a.data * keep, (a,), lambda g: (g * keep,))


# -- linear algebra ----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.data.shape} x {b.data.shape}")
    out = a.data @ b.data

    def grad_fn(g):
        return _matmul_backward(a.data, b.data, g)

    return _make(out, (a, b), grad_fn)


def _matmul_backward(a_data, b_data, g):
    # dA = dC @ B^T, dB = A^T @ dC
    return (g @ b_data.T, a_data.T @ g)


def transpose(a: Tensor) -> Tensor:
    return _make(a.data.T, (a,), lambda g: (g.T,))


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    out = a.data[:, start:stop]

    def grad_fn(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return (full,)

    return _make(out, (a,), grad_fn)


def concat_cols(parts: list[Tensor]) -> Tensor:
    out = np.concatenate([p.data for p in parts], axis=1)
    widths = [p.data.shape[1] for p in parts]

    def grad_fn(g):
        grads = []
        at = 0
        for w in widths:
            grads.append(g[:, at:at + w])
            at += w
        return grads

    return _make(out, tuple(parts), grad_fn)


def embedding(table: Tensor, ids) -> Tensor:
    """Gather rows of `table`; backward scatter-adds into the table."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError(f"token id out of range [0, {table.data.shape[0]})")
    out = table.data[ids]

    def grad_fn(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)

    return _make(out, (table,), grad_fn)


# -- neural-net primitives ---------------------------------------------------


def softmax_masked(x: Tensor, mask) -> Tensor:
    """Rowwise softmax over the last axis with boolean `mask` (True = allowed).

    Masked positions get probability exactly 0; a fully masked row raises.
    """
    allowed = np.asarray(mask, dtype=bool)
    if allowed.shape != x.data.shape:
        raise ShapeError(f"mask shape {allowed.shape} != input shape {x.data.shape}")
    if not allowed.any(axis=-1).all():
        raise MaskError("softmax row with every position masked")
    shifted = np.where(allowed, x.data, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.exp(shifted, where=allowed, out=np.zeros_like(x.data))
    p = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        inner = (g * p).sum(axis=-1, keepdims=True)
        return (p * (g - inner),)

    return _make(p, (x,), grad_fn)


def softmax(x: Tensor) -> Tensor:
    return softmax_masked(x, np.ones(x.data.shape, dtype=bool))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    d = x.data.shape[-1]
    if d < 2:
        raise ShapeError("layer_norm needs at least 2 features per row")
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(f"gain/bias must have shape ({d},)")
    if eps <= 0:
        raise ValueError("eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = xhat * gain.data + bias.data

    def grad_fn(g):
        dgain = _unbroadcast(g * xhat, gain.data.shape)
        dbias = _unbroadcast(g, bias.data.shape)
        dxhat = g * gain.data
        dx = inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return (dx, dgain, dbias)

    return _make(out, (x, gain, bias), grad_fn)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy(logits: Tensor, targets, ignore_index: int = -1,
                  reduction: str = "mean") -> Tensor:
    """Mean (or sum) of -log softmax(logits)[target] over non-ignored rows.

    An all-ignored batch is defined as loss 0 with zero gradient.
    """
    targets = np.asarray(targets, dtype=np.int64)
    n, vocab = logits.data.shape
    if targets.shape != (n,):
        raise ShapeError(f"targets shape {targets.shape} != ({n},)")
    active = targets != ignore_index
    if active.any():
        live = targets[active]
        if live.min() < 0 or live.max() >= vocab:
            raise IndexError(f"target id out of range [0, {vocab})")
    count = int(active.sum())
    if count == 0:
        return _make(np.float64(0.0), (logits,), lambda g: (np.zeros_like(logits.data),))
    logp = _log_softmax(logits.data)
    picked = logp[np.arange(n), np.where(active, targets, 0)]
    total = -(picked * active).sum()
    weight = 1.0 / count if reduction == "mean" else 1.0
    out = total * weight

    def grad_fn(g):
        p = np.exp(logp)
        dlogits = p.copy()
        dlogits[np.arange(n), np.where(active, targets, 0)] -= 1.0
        dlogits *= active[:, None]
        return (dlogits * (float(g) * weight),)

    return _make(out, (logits,), grad_fn)


def weighted_nll(logits: Tensor, targets, weights, reduction: str = "sum") -> Tensor:
    """-sum_i w_i * log softmax(logits)_i[target_i]; weights are constants."""
    targets = np.asarray(targets, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    n, vocab = logits.data.shape
    if targets.shape != (n,) or weights.shape != (n,):
        raise ShapeError(f"targets/weights must have shape ({n},)")
    if n and (targets.min() < 0 or targets.max() >= vocab):
        raise IndexError(f"target id out of range [0, {vocab})")
    logp = _log_softmax(logits.data)
    norm = 1.0 / n if (reduction == "mean" and n) else 1.0
    out = -(weights * logp[np.arange(n), targets]).sum() * norm

    def grad_fn(g):
        p = np.exp(logp)
        onehot_scaled = np.zeros_like(p)
        onehot_scaled[np.arange(n), targets] = 1.0
        dlogits = weights[:, None] * (p - onehot_scaled)
        return (dlogits * (float(g) * norm),)

    return _make(out, (logits,), grad_fn)


def kl_from_logits(logits: Tensor, teacher_probs, row_mask) -> Tensor:
    """Sum over masked rows of KL(teacher || softmax(logits)); teacher is constant."""
    q = np.asarray(teacher_probs, dtype=np.float64)
    rows = np.asarray(row_mask, dtype=bool)
    if q.shape != logits.data.shape:
        raise ShapeError(f"teacher shape {q.shape} != logits shape {logits.data.shape}")
    if not rows.any():
        return _make(np.float64(0.0), (logits,), lambda g: (np.zeros_like(logits.data),))
    logp = _log_softmax(logits.data)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(q > 0.0, q * (np.log(q) - logp), 0.0)
    out = terms[rows].sum()

    def grad_fn(g):
        p = np.exp(logp)
        dlogits = (p * q.sum(axis=-1, keepdims=True) - q) * rows[:, None]
        return (dlogits * float(g),)

    return _make(out, (logits,), grad_fn)

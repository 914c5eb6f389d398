"""Minimal reverse-mode autodiff over numpy arrays.

A deliberately small, fixed operation set: enough for an LSTM
encoder/decoder with attention and pluggable output heads, nothing more.
Ops build a DAG of `Tensor` nodes when gradients are enabled; `backward`
walks it once in reverse topological order.  Custom nodes (loss heads, the
Bessel-ratio gradient) plug in through `custom_op`.

Embedding lookups record sparse (row-ids, row-grads) pairs on the
parameter instead of materializing a dense vocabulary-sized gradient, so
the training path of an embedding-output model never touches an O(V)
buffer.  `Adam` understands both dense and sparse gradients (sparse rows
are updated lazily) and applies global-norm clipping across everything.
"""

from __future__ import annotations

import contextlib

import numpy as np

__all__ = [
    "Tensor",
    "no_grad",
    "backward",
    "const",
    "param",
    "custom_op",
    "add",
    "mul",
    "neg",
    "scale",
    "matmul",
    "tanh",
    "sigmoid",
    "slice_cols",
    "concat_cols",
    "stack_steps",
    "attn_scores",
    "attn_context",
    "masked_softmax",
    "embedding_lookup",
    "Adam",
]

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "sparse_grads", "_parents", "_bwd")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.sparse_grads: list[tuple[np.ndarray, np.ndarray]] = []
        self._parents: tuple["Tensor", ...] = ()
        self._bwd = None

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None
        self.sparse_grads.clear()

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def const(data) -> Tensor:
    return Tensor(data)


def param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _acc(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _node(data, parents, bwd) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True)
        out._parents = tuple(parents)
        out._bwd = bwd
        return out
    return Tensor(data)


def custom_op(parents, data, bwd) -> Tensor:
    """Create a node with user-supplied backward(out_grad) -> None that
    accumulates into the parents itself (use tape._acc)."""
    return _node(data, parents, bwd)


def backward(root: Tensor) -> None:
    """Reverse-mode sweep from a scalar (or any) root, seeding with ones."""
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        if node._bwd is not None and node.grad is not None:
            node._bwd(node.grad)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def bwd(g):
        _acc(a, _unbroadcast(g, a.data.shape))
        _acc(b, _unbroadcast(g, b.data.shape))

    return _node(data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def bwd(g):
        _acc(a, _unbroadcast(g * b.data, a.data.shape))
        _acc(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: _acc(a, -g))


def scale(a: Tensor, s: float) -> Tensor:
    return _node(a.data * s, (a,), lambda g: _acc(a, g * s))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data @ b.data

    def bwd(g):
        _acc(a, g @ b.data.T)
        _acc(b, a.data.T @ g)

    return _node(data, (a, b), bwd)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _node(y, (a,), lambda g: _acc(a, g * (1.0 - y * y)))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return _node(y, (a,), lambda g: _acc(a, g * y * (1.0 - y)))


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    data = a.data[:, start:stop]

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[:, start:stop] = g
        _acc(a, ga)

    return _node(data, (a,), bwd)


def concat_cols(parts: list[Tensor]) -> Tensor:
    data = np.concatenate([p.data for p in parts], axis=1)
    widths = [p.data.shape[1] for p in parts]

    def bwd(g):
        off = 0
        for p, w in zip(parts, widths):
            _acc(p, g[:, off : off + w])
            off += w

    return _node(data, tuple(parts), bwd)


def stack_steps(steps: list[Tensor]) -> Tensor:
    """Stack S tensors of shape (B, H) into (B, S, H)."""
    data = np.stack([s.data for s in steps], axis=1)

    def bwd(g):
        for i, s in enumerate(steps):
            _acc(s, g[:, i, :])

    return _node(data, tuple(steps), bwd)


def attn_scores(query: Tensor, keys: Tensor) -> Tensor:
    """(B, H) x (B, S, H) -> (B, S) batched dot products."""
    data = np.einsum("bh,bsh->bs", query.data, keys.data)

    def bwd(g):
        _acc(query, np.einsum("bs,bsh->bh", g, keys.data))
        _acc(keys, np.einsum("bs,bh->bsh", g, query.data))

    return _node(data, (query, keys), bwd)


def attn_context(alpha: Tensor, keys: Tensor) -> Tensor:
    """(B, S) x (B, S, H) -> (B, H) attention-weighted sum."""
    data = np.einsum("bs,bsh->bh", alpha.data, keys.data)

    def bwd(g):
        _acc(alpha, np.einsum("bh,bsh->bs", g, keys.data))
        _acc(keys, np.einsum("bs,bh->bsh", alpha.data, g))

    return _node(data, (alpha, keys), bwd)


def masked_softmax(scores: Tensor, mask: np.ndarray) -> Tensor:
    """Row softmax over positions where mask > 0; masked entries get 0.

    Every row must have at least one unmasked position.
    """
    mask = np.asarray(mask, dtype=np.float64)
    s = np.where(mask > 0, scores.data, -np.inf)
    m = np.max(s, axis=1, keepdims=True)
    e = np.exp(s - m) * (mask > 0)
    p = e / np.sum(e, axis=1, keepdims=True)

    def bwd(g):
        dot = np.sum(g * p, axis=1, keepdims=True)
        _acc(scores, p * (g - dot))

    return _node(p, (scores,), bwd)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows; gradient is recorded sparsely on the parameter."""
    ids = np.asarray(ids, dtype=np.intp)
    data = table.data[ids]

    def bwd(g):
        if table.requires_grad:
            table.sparse_grads.append((ids, g))

    return _node(data, (table,), bwd)


class Adam:
    """Adam with global-norm clipping, dense and lazy-sparse updates.

    Sparse gradients (from embedding lookups) only touch the rows that
    appeared in the batch: their first/second moments and parameters are
    updated lazily, so a step costs O(touched rows), not O(V).  Bias
    correction uses the global step count for all parameters.
    """

    def __init__(self, params: dict[str, Tensor], lr: float, betas=(0.9, 0.999),
                 eps: float = 1e-8, clip_norm: float | None = 5.0):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def _gather_sparse(self, p: Tensor):
        ids = np.concatenate([i.ravel() for i, _ in p.sparse_grads])
        rows = np.concatenate([g.reshape(-1, p.data.shape[1]) for _, g in p.sparse_grads])
        uniq, inv = np.unique(ids, return_inverse=True)
        agg = np.zeros((uniq.size, p.data.shape[1]))
        np.add.at(agg, inv, rows)
        return uniq, agg

    def step(self):
        self.t += 1
        dense: dict[str, np.ndarray] = {}
        sparse: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        total_sq = 0.0
        for name, p in self.params.items():
            if p.sparse_grads:
                uniq, agg = self._gather_sparse(p)
                if p.grad is not None:  # mixed dense+sparse is not expected
                    agg = agg + p.grad[uniq]
                sparse[name] = (uniq, agg)
                total_sq += float(np.sum(agg * agg))
            elif p.grad is not None:
                dense[name] = p.grad
                total_sq += float(np.sum(p.grad * p.grad))
        factor = 1.0
        if self.clip_norm is not None and total_sq > self.clip_norm**2:
            factor = self.clip_norm / np.sqrt(total_sq)

        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for name, g in dense.items():
            g = g * factor
            m, v = self.m[name], self.v[name]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            self.params[name].data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        for name, (uniq, agg) in sparse.items():
            g = agg * factor
            m, v = self.m[name], self.v[name]
            m[uniq] = self.b1 * m[uniq] + (1 - self.b1) * g
            v[uniq] = self.b2 * v[uniq] + (1 - self.b2) * g * g
            self.params[name].data[uniq] -= self.lr * (m[uniq] / bc1) / (np.sqrt(v[uniq] / bc2) + self.eps)

"""Dense tensors with reverse-mode automatic differentiation.

Values live in numpy arrays; every differentiable operation records a
backward closure and its parents, and ``Tensor.backward()`` replays the
tape in reverse topological order. The engine is deliberately small:
just the operations the parsing models need, each one gradient-checked.

Tensors are immutable after creation except for gradient accumulation
(and optimizer updates to leaf parameters between graphs).
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

_DEFAULT_DTYPE = np.float64

_erf = np.vectorize(math.erf, otypes=[np.float64])


def set_default_dtype(dtype) -> None:
    """Set the dtype used for new leaf tensors.

    64-bit is required for tests and gradient checks; 32-bit is an
    opt-in for training speed.
    """
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype: {dtype!r}")
    _DEFAULT_DTYPE = dt.type


def default_dtype():
    return _DEFAULT_DTYPE


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce gradient ``g`` back to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _accum(t: "Tensor", g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._backward: Callable[[], None] | None = None
        self._prev: tuple = ()

    @classmethod
    def _from_op(cls, data: np.ndarray, prev: Sequence["Tensor"]) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        live = tuple(p for p in prev if p.requires_grad)
        out.requires_grad = bool(live)
        out._prev = live
        out._backward = None
        return out

    # -- convenience -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(())[()])

    def __repr__(self) -> str:
        req = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{req})"

    def detach(self) -> "Tensor":
        """Forward identity whose gradient path is severed exactly."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out._prev = ()
        out._backward = None
        return out

    # -- autodiff core -----------------------------------------------

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward()

    # -- operator sugar ----------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape) -> "Tensor":
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def sum(self, axis=None) -> "Tensor":
        return tsum(self, axis)

    def mean(self, axis=None) -> "Tensor":
        return tmean(self, axis)

    def relu(self) -> "Tensor":
        return relu(self)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=_DEFAULT_DTYPE))


# -- elementwise ------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = Tensor._from_op(a.data + b.data, (a, b))

    def _bw():
        g = out.grad
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    out._backward = _bw if out.requires_grad else None
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor._from_op(-a.data, (a,))

    def _bw():
        _accum(a, -out.grad)

    out._backward = _bw if out.requires_grad else None
    return out


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = Tensor._from_op(a.data * b.data, (a, b))

    def _bw():
        g = out.grad
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    out._backward = _bw if out.requires_grad else None
    return out


def relu(a: Tensor) -> Tensor:
    out = Tensor._from_op(np.maximum(a.data, 0.0), (a,))

    def _bw():
        _accum(a, out.grad * (a.data > 0))

    out._backward = _bw if out.requires_grad else None
    return out


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    x = a.data
    cdf = 0.5 * (1.0 + _erf(x / math.sqrt(2.0)))
    out = Tensor._from_op(x * cdf, (a,))

    def _bw():
        pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        _accum(a, out.grad * (cdf + x * pdf))

    out._backward = _bw if out.requires_grad else None
    return out


def dropout(a: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: scales kept activations by 1/(1-p) at train time.

    With p=0 or in eval mode this is the identity (the same tensor is
    returned, bitwise).
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate out of range: {p}")
    if not training or p == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    mask = (rng.random(a.data.shape) >= p).astype(a.data.dtype) / (1.0 - p)
    out = Tensor._from_op(a.data * mask, (a,))

    def _bw():
        _accum(a, out.grad * mask)

    out._backward = _bw if out.requires_grad else None
    return out


# -- linear algebra ---------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.data.shape} @ {b.data.shape}")
    out = Tensor._from_op(a.data @ b.data, (a, b))

    def _bw():
        g = out.grad
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    out._backward = _bw if out.requires_grad else None
    return out


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError(f"transpose expects a 2-D tensor, got shape {a.data.shape}")
    out = Tensor._from_op(a.data.T.copy(), (a,))

    def _bw():
        _accum(a, out.grad.T)

    out._backward = _bw if out.requires_grad else None
    return out


def bilinear(h: Tensor, t: Tensor, m: Tensor) -> Tensor:
    """out[c] = sum_{a,b} h[a] * t[a,c,b] * m[b]."""
    if h.data.ndim != 1 or m.data.ndim != 1 or t.data.ndim != 3:
        raise ValueError(f"bilinear expects (d,), (d,r,d), (d,); got {h.data.shape}, {t.data.shape}, {m.data.shape}")
    if t.data.shape[0] != h.data.shape[0] or t.data.shape[2] != m.data.shape[0]:
        raise ValueError(f"bilinear dimension mismatch: {h.data.shape}, {t.data.shape}, {m.data.shape}")
    out = Tensor._from_op(np.einsum("a,acb,b->c", h.data, t.data, m.data), (h, t, m))

    def _bw():
        g = out.grad
        _accum(h, np.einsum("c,acb,b->a", g, t.data, m.data))
        _accum(t, np.einsum("a,c,b->acb", h.data, g, m.data))
        _accum(m, np.einsum("a,acb,c->b", h.data, t.data, g))

    out._backward = _bw if out.requires_grad else None
    return out


def pairwise_bilinear(H: Tensor, t: Tensor, M: Tensor) -> Tensor:
    """All-pairs bilinear: out[i,j,c] = sum_{a,b} H[i,a] * t[a,c,b] * M[j,b]."""
    if H.data.ndim != 2 or M.data.ndim != 2 or t.data.ndim != 3:
        raise ValueError("pairwise_bilinear expects (p,d), (d,r,d), (q,d)")
    if t.data.shape[0] != H.data.shape[1] or t.data.shape[2] != M.data.shape[1]:
        raise ValueError(f"pairwise_bilinear dimension mismatch: {H.data.shape}, {t.data.shape}, {M.data.shape}")
    out = Tensor._from_op(np.einsum("ia,acb,jb->ijc", H.data, t.data, M.data), (H, t, M))

    def _bw():
        g = out.grad
        _accum(H, np.einsum("ijc,acb,jb->ia", g, t.data, M.data))
        _accum(t, np.einsum("ia,ijc,jb->acb", H.data, g, M.data))
        _accum(M, np.einsum("ia,acb,ijc->jb", H.data, t.data, g))

    out._backward = _bw if out.requires_grad else None
    return out


def paired_bilinear(H: Tensor, t: Tensor, M: Tensor) -> Tensor:
    """Row-aligned bilinear: out[i,c] = sum_{a,b} H[i,a] * t[a,c,b] * M[i,b]."""
    if H.data.shape[0] != M.data.shape[0]:
        raise ValueError(f"paired_bilinear row mismatch: {H.data.shape} vs {M.data.shape}")
    if t.data.shape[0] != H.data.shape[1] or t.data.shape[2] != M.data.shape[1]:
        raise ValueError(f"paired_bilinear dimension mismatch: {H.data.shape}, {t.data.shape}, {M.data.shape}")
    out = Tensor._from_op(np.einsum("ia,acb,ib->ic", H.data, t.data, M.data), (H, t, M))

    def _bw():
        g = out.grad
        _accum(H, np.einsum("ic,acb,ib->ia", g, t.data, M.data))
        _accum(t, np.einsum("ia,ic,ib->acb", H.data, g, M.data))
        _accum(M, np.einsum("ia,acb,ic->ib", H.data, t.data, g))

    out._backward = _bw if out.requires_grad else None
    return out


# -- shape ops --------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor._from_op(a.data.reshape(shape), (a,))

    def _bw():
        _accum(a, out.grad.reshape(a.data.shape))

    out._backward = _bw if out.requires_grad else None
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of zero tensors")
    out = Tensor._from_op(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]

    def _bw():
        g = out.grad
        offset = 0
        for t, s in zip(tensors, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offset, offset + s)
            _accum(t, g[tuple(idx)])
            offset += s

    out._backward = _bw if out.requires_grad else None
    return out


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    if start < 0 or length < 0 or start + length > a.data.shape[axis]:
        raise ValueError(f"narrow out of range: axis {axis}, [{start}, {start + length}) of {a.data.shape}")
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = Tensor._from_op(a.data[idx].copy(), (a,))

    def _bw():
        buf = np.zeros_like(a.data)
        buf[idx] = out.grad
        _accum(a, buf)

    out._backward = _bw if out.requires_grad else None
    return out


def embedding_gather(table: Tensor, ids) -> Tensor:
    """Gather rows of a 2-D tensor; the gradient scatter-adds back."""
    ids = np.asarray(ids, dtype=np.intp)
    if table.data.ndim != 2:
        raise ValueError(f"embedding_gather expects a 2-D table, got {table.data.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ValueError(f"gather index out of range for table with {table.data.shape[0]} rows")
    out = Tensor._from_op(table.data[ids], (table,))

    def _bw():
        buf = np.zeros_like(table.data)
        np.add.at(buf, ids, out.grad)
        _accum(table, buf)

    out._backward = _bw if out.requires_grad else None
    return out


def row_scatter(base: Tensor, ids, rows: Tensor) -> Tensor:
    """Copy of ``base`` with rows at ``ids`` replaced by ``rows``.

    Gradients pass to ``base`` everywhere except the replaced rows,
    which route to ``rows``.
    """
    ids = np.asarray(ids, dtype=np.intp)
    if len(np.unique(ids)) != len(ids):
        raise ValueError("row_scatter indices must be unique")
    if rows.data.shape != (len(ids),) + base.data.shape[1:]:
        raise ValueError(f"row_scatter shape mismatch: {rows.data.shape} into {base.data.shape}")
    data = base.data.copy()
    data[ids] = rows.data
    out = Tensor._from_op(data, (base, rows))

    def _bw():
        g = out.grad
        gb = g.copy()
        gb[ids] = 0.0
        _accum(base, gb)
        _accum(rows, g[ids])

    out._backward = _bw if out.requires_grad else None
    return out


# -- reductions and normalization --------------------------------------


def tsum(a: Tensor, axis=None) -> Tensor:
    out = Tensor._from_op(np.sum(a.data, axis=axis), (a,))

    def _bw():
        g = out.grad
        if axis is not None:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    out._backward = _bw if out.requires_grad else None
    return out


def tmean(a: Tensor, axis=None) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    out = Tensor._from_op(np.mean(a.data, axis=axis), (a,))

    def _bw():
        g = out.grad / count
        if axis is not None:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    out._backward = _bw if out.requires_grad else None
    return out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Max-stabilized softmax; -inf entries yield exact zeros.

    Raises if any slice along ``axis`` is entirely -inf.
    """
    x = a.data
    m = np.max(x, axis=axis, keepdims=True)
    if np.isneginf(m).any():
        raise ValueError("softmax over a fully masked (all -inf) slice")
    e = np.exp(x - m)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor._from_op(y, (a,))

    def _bw():
        g = out.grad
        dot = np.sum(g * y, axis=axis, keepdims=True)
        _accum(a, y * (g - dot))

    out._backward = _bw if out.requires_grad else None
    return out


def layer_norm(a: Tensor, gain: Tensor | None = None, bias: Tensor | None = None,
               eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    width = a.data.shape[-1]
    if width < 2:
        raise ValueError("layer_norm needs at least 2 features")
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = xhat
    if gain is not None:
        data = data * gain.data
    if bias is not None:
        data = data + bias.data
    prev = (a,) + tuple(p for p in (gain, bias) if p is not None)
    out = Tensor._from_op(data, prev)

    def _bw():
        g = out.grad
        if gain is not None:
            _accum(gain, (g * xhat).reshape(-1, width).sum(axis=0))
        if bias is not None:
            _accum(bias, g.reshape(-1, width).sum(axis=0))
        gx = g * gain.data if gain is not None else g
        gmean = gx.mean(axis=-1, keepdims=True)
        gxhat = (gx * xhat).mean(axis=-1, keepdims=True)
        _accum(a, inv * (gx - gmean - xhat * gxhat))

    out._backward = _bw if out.requires_grad else None
    return out


def cross_entropy_from_logits(logits: Tensor, targets) -> Tensor:
    """Mean cross-entropy of rows of logits against integer targets."""
    targets = np.asarray(targets, dtype=np.intp)
    if logits.data.ndim != 2:
        raise ValueError(f"cross_entropy expects 2-D logits, got {logits.data.shape}")
    t, c = logits.data.shape
    if targets.shape != (t,):
        raise ValueError(f"targets shape {targets.shape} does not match {t} rows")
    if targets.size and (targets.min() < 0 or targets.max() >= c):
        raise ValueError("target class out of range")
    x = logits.data
    m = x.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(x - m).sum(axis=1))
    losses = lse - x[np.arange(t), targets]
    out = Tensor._from_op(np.asarray(losses.mean()), (logits,))

    def _bw():
        g = float(out.grad)
        p = np.exp(x - m)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(t), targets] -= 1.0
        _accum(logits, g * p / t)

    out._backward = _bw if out.requires_grad else None
    return out


def straight_through(hard: Tensor, surrogate: Tensor) -> Tensor:
    """Forward takes ``hard``'s values bitwise; backward routes the whole
    gradient into ``surrogate`` and none into ``hard``.

    Equivalent to hard - detach(surrogate) + surrogate, without the
    floating-point cancellation.
    """
    if hard.data.shape != surrogate.data.shape:
        raise ValueError(f"straight_through shape mismatch: {hard.data.shape} vs {surrogate.data.shape}")
    out = Tensor._from_op(hard.data.copy(), (surrogate,))

    def _bw():
        _accum(surrogate, out.grad)

    out._backward = _bw if out.requires_grad else None
    return out


# -- non-differentiable index ops --------------------------------------


def argsort_descending(x) -> np.ndarray:
    """Indices sorting a 1-D array high-to-low; ties keep ascending index."""
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    if arr.ndim != 1:
        raise ValueError(f"argsort_descending expects 1-D input, got shape {arr.shape}")
    return np.argsort(-arr, kind="stable")


# -- verification harness ----------------------------------------------


def grad_check(f: Callable[[], Tensor], theta: Tensor, eps: float = 1e-5,
               max_coords: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Compare autodiff against central differences on scalar f().

    Returns max over checked coordinates of
    |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
    ``f`` must rebuild its graph from ``theta.data`` on every call.
    """
    if _DEFAULT_DTYPE is not np.float64:
        raise RuntimeError("grad_check requires 64-bit mode")
    if not 1e-7 <= eps <= 1e-4:
        raise ValueError(f"eps out of range: {eps}")
    theta.grad = None
    out = f()
    if out.data.size != 1 or not np.isfinite(out.data).all():
        raise ValueError("grad_check objective is non-scalar or non-finite")
    out.backward()
    g_ad = theta.grad.reshape(-1) if theta.grad is not None else np.zeros(theta.data.size)
    flat = theta.data.reshape(-1)
    n = flat.size
    if max_coords is None or n <= max_coords:
        coords = range(n)
    else:
        # favor coordinates that carry gradient; unused ones (e.g. embedding
        # rows absent from the sentence) are trivially zero on both sides
        rng = rng or np.random.default_rng(0)
        nonzero = np.flatnonzero(g_ad)
        if nonzero.size > max_coords:
            coords = rng.choice(nonzero, size=max_coords, replace=False)
        elif nonzero.size:
            rest = np.setdiff1d(np.arange(n), nonzero)
            extra = rng.choice(rest, size=min(max_coords - nonzero.size, rest.size), replace=False)
            coords = np.concatenate([nonzero, extra])
        else:
            coords = rng.choice(n, size=max_coords, replace=False)
    worst = 0.0
    for c in coords:
        orig = flat[c]
        flat[c] = orig + eps
        fp = f().item()
        flat[c] = orig - eps
        fm = f().item()
        flat[c] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise ValueError("grad_check objective became non-finite under perturbation")
        g_fd = (fp - fm) / (2.0 * eps)
        err = abs(g_ad[c] - g_fd) / max(1.0, abs(g_ad[c]), abs(g_fd))
        worst = max(worst, err)
    return worst

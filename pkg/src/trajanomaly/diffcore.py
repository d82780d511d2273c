"""Small reverse-mode autodiff over dense float64 arrays.

Operations build ``Tensor`` nodes. While a ``Tape`` is active, every node that
depends on a differentiable leaf is appended to it in creation order, which is
already a topological order. ``backward`` walks the tape in reverse and applies
each node's pullback.

No broadcasting is supported apart from bias addition (a trailing-shape operand)
and Python scalars. Shapes must otherwise match exactly.
"""
from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

_state = threading.local()


class ShapeError(ValueError):
    pass


def _active_tape() -> "Tape | None":
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "parents", "pullback", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor data must be finite")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.parents: tuple[Tensor, ...] = ()
        self.pullback = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


def primitive(value: np.ndarray, parents: Sequence[Tensor], pullback: Callable) -> Tensor:
    """Create an op output node.

    ``pullback(g)`` receives the gradient w.r.t. the output and returns one
    gradient (or ``None``) per parent, in order.
    """
    out = Tensor.__new__(Tensor)
    out.data = value
    out.grad = None
    out.name = None
    out.requires_grad = any(p.requires_grad for p in parents)
    out.parents = ()
    out.pullback = None
    if out.requires_grad:
        tape = _active_tape()
        if tape is not None:
            out.parents = tuple(parents)
            out.pullback = pullback
            tape.nodes.append(out)
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Records differentiable operations executed inside its ``with`` block."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        if not hasattr(_state, "stack"):
            _state.stack = []
        _state.stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state.stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)


def backward(tape: Tape, loss: Tensor, params: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Reverse sweep from a scalar ``loss``.

    Returns a mapping leaf -> gradient for every differentiable leaf reached by
    the tape, plus any ``params`` given explicitly. Leaves that do not influence
    the loss get zeros. Gradients are also stored on ``leaf.grad``.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    if loss.requires_grad and not loss.parents:
        leaves[id(loss)] = loss
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            for p in node.parents:
                if p.requires_grad and not p.parents:
                    leaves.setdefault(id(p), p)
            continue
        for p, pg in zip(node.parents, node.pullback(g)):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if not p.parents and key not in leaves:
                leaves[key] = p
            prev = grads.get(key)
            grads[key] = pg if prev is None else prev + pg
    if params is not None:
        for p in params:
            leaves.setdefault(id(p), p)
    out = {}
    for key, leaf in leaves.items():
        g = grads.get(key)
        leaf.grad = np.zeros_like(leaf.data) if g is None else np.asarray(g, dtype=np.float64).reshape(leaf.shape)
        out[leaf] = leaf.grad
    return out


# ---------------------------------------------------------------- elementwise

def _check_same(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _is_bias(a: Tensor, b: Tensor) -> bool:
    return b.ndim <= a.ndim and a.shape[a.ndim - b.ndim:] == b.shape


def _sum_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    lead = g.ndim - len(shape)
    return g.sum(axis=tuple(range(lead))) if lead else g


def add(a, b) -> Tensor:
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        c = float(b)
        return primitive(a.data + c, (a,), lambda g: (g,))
    if a.shape == b.shape:
        return primitive(a.data + b.data, (a, b), lambda g: (g, g))
    if _is_bias(a, b):
        return primitive(a.data + b.data, (a, b), lambda g: (g, _sum_to(g, b.shape)))
    if _is_bias(b, a):
        return add(b, a)
    raise ShapeError(f"add: shape mismatch {a.shape} vs {b.shape}")


def neg(a: Tensor) -> Tensor:
    return primitive(-a.data, (a,), lambda g: (-g,))


def sub(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        return add(a, -float(b))
    return add(a, neg(b))


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        c = float(b)
        return primitive(a.data * c, (a,), lambda g: (g * c,))
    _check_same("mul", a, b)
    ad, bd = a.data, b.data
    return primitive(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def div(a, b) -> Tensor:
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        return mul(a, 1.0 / float(b))
    _check_same("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd
    return primitive(out, (a, b), lambda g: (g / bd, -g * out / bd))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return primitive(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return primitive(np.log(ad), (a,), lambda g: (g / ad,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return primitive(out, (a,), lambda g: (g * (1.0 - out * out),))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return primitive(ad * ad, (a,), lambda g: (2.0 * g * ad,))


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """Parametric rectifier with one slope per channel (last axis)."""
    if slope.shape != x.shape[-1:]:
        raise ShapeError(f"prelu: slope shape {slope.shape} does not match channels of {x.shape}")
    xd = x.data
    neg_part = np.minimum(xd, 0.0)
    factor = np.where(xd > 0, 1.0, slope.data)
    out = xd * factor

    def pullback(g):
        gs = (g * neg_part).reshape(-1, slope.shape[0]).sum(axis=0)
        return g * factor, gs

    return primitive(out, (x, slope), pullback)


# ------------------------------------------------------------------ structure

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    old = a.shape
    return primitive(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def permute(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return primitive(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def getitem(a: Tensor, index) -> Tensor:
    """Basic (slice/integer) indexing only; no fancy indexing."""
    out = a.data[index]
    if out.base is None and out.ndim > 0:
        raise ShapeError("getitem supports basic slicing only")

    def pullback(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return primitive(np.array(out), (a,), pullback)


def sum(a: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = a.shape
    out = a.data.sum(axis=axis)

    def pullback(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return primitive(np.asarray(out), (a,), pullback)


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis), 1.0 / float(n))


# ---------------------------------------------------------------- contraction

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` for ``a`` of shape (..., n, k) and a 2-D ``b`` of shape (k, m)."""
    if b.ndim != 2 or a.ndim < 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: shape mismatch {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data

    def pullback(g):
        ga = g @ bd.T
        gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return primitive(ad @ bd, (a, b), pullback)


def einsum(subscripts: str, *operands: Tensor) -> Tensor:
    """Explicit-output einsum (``"ij,jk->ik"``) with einsum-based pullbacks.

    Every index of an operand must appear in the output or in another operand,
    and no operand may repeat an index.
    """
    if "->" not in subscripts:
        raise ShapeError("einsum needs an explicit output, e.g. 'ij,jk->ik'")
    lhs, out_idx = subscripts.replace(" ", "").split("->")
    ins = lhs.split(",")
    if len(ins) != len(operands):
        raise ShapeError(f"einsum: {len(ins)} subscripts for {len(operands)} operands")
    sizes: dict[str, int] = {}
    for sub_, op in zip(ins, operands):
        if len(sub_) != op.ndim or len(set(sub_)) != len(sub_):
            raise ShapeError(f"einsum: subscript {sub_!r} does not fit shape {op.shape}")
        for ch, n in zip(sub_, op.shape):
            if sizes.setdefault(ch, n) != n:
                raise ShapeError(f"einsum: index {ch!r} has sizes {sizes[ch]} and {n} "
                                 f"(shapes {[o.shape for o in operands]})")
    for k, sub_ in enumerate(ins):
        rest = set(out_idx).union(*(set(s) for j, s in enumerate(ins) if j != k))
        if not set(sub_) <= rest:
            raise ShapeError(f"einsum: operand {k} has indices summed away alone")
    datas = [op.data for op in operands]

    def pullback(g):
        grads = []
        for k, sub_ in enumerate(ins):
            others = [s for j, s in enumerate(ins) if j != k]
            other_data = [d for j, d in enumerate(datas) if j != k]
            grads.append(np.einsum(",".join([out_idx] + others) + "->" + sub_, g, *other_data))
        return tuple(grads)

    return primitive(np.einsum(subscripts, *datas), tuple(operands), pullback)


def aggregate(adj: Tensor, x: Tensor) -> Tensor:
    """Neighbour aggregation ``out[t, i, c] = sum_j adj[t, i, j] * x[t, j, c]``.

    Terms are sorted before summation, so the result does not depend on the
    order in which neighbours are listed (exact permutation equivariance).
    """
    if adj.ndim != 3 or x.ndim != 3 or adj.shape[:2] != x.shape[:2] or adj.shape[2] != x.shape[1]:
        raise ShapeError(f"aggregate: shape mismatch {adj.shape} vs {x.shape}")
    ad, xd = adj.data, x.data
    terms = np.sort(ad[:, :, :, None] * xd[:, None, :, :], axis=2)
    out = terms.sum(axis=2)

    def pullback(g):
        return np.einsum("tic,tjc->tij", g, xd), np.einsum("tij,tic->tjc", ad, g)

    return primitive(out, (adj, x), pullback)


def _pad_front(a: np.ndarray, pads: Sequence[int]) -> np.ndarray:
    """Zero-pad the leading axes symmetrically by ``pads``."""
    if not any(pads):
        return a
    shape = list(a.shape)
    region = []
    for k, p in enumerate(pads):
        shape[k] += 2 * p
        region.append(slice(p, p + a.shape[k]))
    out = np.zeros(shape)
    out[tuple(region)] = a
    return out


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, padding: int = 0) -> Tensor:
    """Stride-1 correlation along axis 0, with optional per-channel bias.

    ``x``: (T, ..., C_in); ``w``: (K, C_in, C_out). Middle axes are batch axes.
    Output: (T + 2*padding - K + 1, ..., C_out).

    The forward contraction avoids BLAS so each batch position is computed by
    the same instruction sequence (results do not depend on batch position).
    """
    if w.ndim != 3 or x.ndim < 2 or x.shape[-1] != w.shape[1]:
        raise ShapeError(f"conv1d: shape mismatch input {x.shape} vs kernel {w.shape}")
    if b is not None and b.shape != (w.shape[2],):
        raise ShapeError(f"conv1d: bias shape {b.shape} vs {w.shape[2]} output channels")
    K, c_in, c_out = w.shape
    T = x.shape[0]
    t_out = T + 2 * padding - K + 1
    if t_out < 1:
        raise ShapeError(f"conv1d: input length {T} too short for kernel {K}")
    flat = _pad_front(x.data.reshape(T, -1, c_in), (padding,))
    cols = np.concatenate([flat[k:k + t_out] for k in range(K)], axis=-1)  # (t, B, K*c_in)
    w2 = w.data.reshape(K * c_in, c_out)
    out = np.einsum("tbj,jo->tbo", cols, w2)
    if b is not None:
        out += b.data
    out = out.reshape((t_out,) + x.shape[1:-1] + (c_out,))

    def pullback(g):
        g2 = g.reshape(-1, c_out)
        gw = (cols.reshape(-1, K * c_in).T @ g2).reshape(K, c_in, c_out)
        gcols = (g2 @ w2.T).reshape(t_out, -1, K * c_in)
        gxp = np.zeros_like(flat)
        for k in range(K):
            gxp[k:k + t_out] += gcols[..., k * c_in:(k + 1) * c_in]
        gx = gxp[padding:padding + T].reshape(x.shape)
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return primitive(out, parents, pullback)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, padding: tuple[int, int] = (0, 0)) -> Tensor:
    """Stride-1 2-D correlation over the first two axes, with optional bias.

    ``x``: (H, W, C_in); ``w``: (KH, KW, C_in, C_out). Output: (H', W', C_out).
    """
    if w.ndim != 4 or x.ndim != 3 or x.shape[-1] != w.shape[2]:
        raise ShapeError(f"conv2d: shape mismatch input {x.shape} vs kernel {w.shape}")
    if b is not None and b.shape != (w.shape[3],):
        raise ShapeError(f"conv2d: bias shape {b.shape} vs {w.shape[3]} output channels")
    KH, KW, c_in, c_out = w.shape
    H, W = x.shape[:2]
    ph, pw = padding
    h_out, w_out = H + 2 * ph - KH + 1, W + 2 * pw - KW + 1
    if h_out < 1 or w_out < 1:
        raise ShapeError(f"conv2d: input {x.shape} too small for kernel {w.shape}")
    xp = _pad_front(x.data, (ph, pw))
    cols = np.concatenate([xp[a:a + h_out, c:c + w_out] for a in range(KH) for c in range(KW)], axis=-1)
    cols2 = cols.reshape(-1, KH * KW * c_in)
    w2 = w.data.reshape(KH * KW * c_in, c_out)
    out = cols2 @ w2
    if b is not None:
        out += b.data
    out = out.reshape(h_out, w_out, c_out)

    def pullback(g):
        g2 = g.reshape(-1, c_out)
        gw = (cols2.T @ g2).reshape(w.shape)
        gcols = (g2 @ w2.T).reshape(h_out, w_out, -1)
        gxp = np.zeros_like(xp)
        k = 0
        for a in range(KH):
            for c in range(KW):
                gxp[a:a + h_out, c:c + w_out] += gcols[..., k * c_in:(k + 1) * c_in]
                k += 1
        gx = gxp[ph:ph + H, pw:pw + W]
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return primitive(out, parents, pullback)


# ------------------------------------------------------------- gradient check

def grad_check(fn: Callable[[], Tensor], params: Sequence[Tensor], epsilon: float = 1e-5) -> float:
    """Largest coordinatewise relative error between tape and central-difference gradients.

    ``fn`` takes no arguments and reads ``params`` through its closure. The
    relative error is |ga - gn| / max(1e-8, |ga| + |gn|).
    """
    with Tape() as tape:
        loss = fn()
    analytic = backward(tape, loss, params)
    worst = 0.0
    for p in params:
        ga = analytic[p].ravel()
        flat = p.data.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + epsilon
            up = float(fn().data)
            flat[k] = orig - epsilon
            down = float(fn().data)
            flat[k] = orig
            gn = (up - down) / (2.0 * epsilon)
            err = abs(ga[k] - gn) / max(1e-8, abs(ga[k]) + abs(gn))
            worst = max(worst, err)
    return worst

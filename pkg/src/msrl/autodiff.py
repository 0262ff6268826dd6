"""Minimal reverse-mode autodiff over dense numpy tensors.

The op set is exactly what the training pipeline needs: elementwise
add/mul/scale, matmul, 3x3 same-padded convolution, relu, 2x2 average pool,
global average pool, row L2-normalization, dtype cast, exponential map at the
origin, the Busemann matrix against boundary prototypes, row softmax, clamped
log, reductions, and a fused softmax cross-entropy for the probe. Each op
records a closure on the tape; `backward` replays them in reverse topological
order.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError, UsageError

__all__ = [
    "Tensor",
    "tensor",
    "backward",
    "add", "mul", "scale", "matmul", "linear", "relu",
    "conv3x3", "avgpool2", "global_avg_pool",
    "l2_normalize_rows", "cast", "exp0", "busemann_matrix",
    "softmax_rows", "log_clamped", "sum_all", "mean_all", "mean_axis0",
    "softmax_xent",
    "grad_check",
]


class Tensor:
    """A dense array plus the tape metadata needed for reverse mode."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data: np.ndarray, requires_grad: bool = False):
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad)


def _result(data: np.ndarray, parents, backward_fn) -> Tensor:
    out = Tensor(data, any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad += g.astype(t.data.dtype, copy=False)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum-reduce a gradient back to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss; accumulates into leaf .grad."""
    if not loss.requires_grad:
        raise UsageError("backward called on a tensor with no recorded graph")
    if loss.data.size != 1:
        raise UsageError("backward expects a scalar loss tensor")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise and linear algebra

def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def back(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _result(data, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def back(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _result(data, (a, b), back)


def scale(a: Tensor, s: float) -> Tensor:
    data = a.data * a.data.dtype.type(s)

    def back(g):
        _accumulate(a, g * a.data.dtype.type(s))

    return _result(data, (a,), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data @ b.data

    def back(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _result(data, (a, b), back)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with b broadcast over rows."""
    return add(matmul(x, w), b)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    data = np.where(mask, a.data, 0)

    def back(g):
        _accumulate(a, g * mask)

    return _result(data, (a,), back)


# ---------------------------------------------------------------------------
# convolution stack; layout is (N, C, H, W)

def _im2col(x: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((n, h * w, c * 9), dtype=x.dtype)
    idx = 0
    for dy in range(3):
        for dx in range(3):
            patch = padded[:, :, dy:dy + h, dx:dx + w]
            cols[:, :, idx * c:(idx + 1) * c] = patch.transpose(0, 2, 3, 1).reshape(n, h * w, c)
            idx += 1
    return cols


def _col2im(cols: np.ndarray, shape) -> np.ndarray:
    n, c, h, w = shape
    padded = np.zeros((n, c, h + 2, w + 2), dtype=cols.dtype)
    idx = 0
    for dy in range(3):
        for dx in range(3):
            patch = cols[:, :, idx * c:(idx + 1) * c].reshape(n, h, w, c).transpose(0, 3, 1, 2)
            padded[:, :, dy:dy + h, dx:dx + w] += patch
            idx += 1
    return padded[:, :, 1:1 + h, 1:1 + w]


def conv3x3(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Same-padded 3x3 convolution. w: (F, C, 3, 3), b: (F,)."""
    n, c, h, wd = x.data.shape
    f = w.data.shape[0]
    if w.data.shape[1] != c:
        raise InvalidInputError(f"conv expects {w.data.shape[1]} input channels, got {c}")
    cols = _im2col(x.data)                                # (N, HW, C*9)
    wmat = w.data.transpose(2, 3, 1, 0).reshape(c * 9, f)  # rows ordered as im2col
    out = cols @ wmat + b.data
    data = out.reshape(n, h, wd, f).transpose(0, 3, 1, 2)

    def back(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(n, h * wd, f)
        if w.requires_grad:
            gw = np.tensordot(cols, gmat, axes=([0, 1], [0, 1]))  # (C*9, F)
            _accumulate(w, gw.reshape(3, 3, c, f).transpose(3, 2, 0, 1))
        if b.requires_grad:
            _accumulate(b, gmat.sum(axis=(0, 1)))
        if x.requires_grad:
            gcols = gmat @ wmat.T
            _accumulate(x, _col2im(gcols, x.data.shape))

    return _result(data, (x, w, b), back)


def avgpool2(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2; H and W must be even."""
    n, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise InvalidInputError(f"avgpool2 needs even spatial dims, got {h}x{w}")
    r = x.data.reshape(n, c, h // 2, 2, w // 2, 2)
    data = r.mean(axis=(3, 5))

    def back(g):
        gx = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * x.data.dtype.type(0.25)
        _accumulate(x, gx)

    return _result(data, (x,), back)


def global_avg_pool(x: Tensor) -> Tensor:
    """(N, C, H, W) -> (N, C) spatial mean."""
    n, c, h, w = x.data.shape
    data = x.data.mean(axis=(2, 3))

    def back(g):
        gx = np.broadcast_to(g[:, :, None, None] / x.data.dtype.type(h * w), x.data.shape)
        _accumulate(x, gx)

    return _result(data, (x,), back)


# ---------------------------------------------------------------------------
# geometry and assignment ops (double precision expected)

def cast(x: Tensor, dtype) -> Tensor:
    data = x.data.astype(dtype)

    def back(g):
        _accumulate(x, g.astype(x.data.dtype))

    return _result(data, (x,), back)


def l2_normalize_rows(x: Tensor, eps: float = 1e-12) -> Tensor:
    norm = np.sqrt(np.sum(x.data * x.data, axis=-1, keepdims=True))
    n_safe = np.maximum(norm, eps)
    data = x.data / n_safe

    def back(g):
        dot = np.sum(g * data, axis=-1, keepdims=True)
        _accumulate(x, (g - data * dot) / n_safe)

    return _result(data, (x,), back)


def exp0(v: Tensor, max_norm: float = 1.0 - 1e-5) -> Tensor:
    """Exponential map at the origin for curvature 1, rows of (N, d).

    z = tanh(|v|) * v / |v|, with the output norm capped at max_norm so every
    embedding stays strictly inside the clamp radius.
    """
    r = np.sqrt(np.sum(v.data * v.data, axis=-1, keepdims=True))
    small = r < 1e-12
    r_safe = np.where(small, 1.0, r)
    t = np.tanh(r)
    capped = t > max_norm
    s = np.where(capped, max_norm, t) / r_safe
    s = np.where(small, 1.0, s)
    data = v.data * s

    def back(g):
        u = v.data / r_safe
        dot = np.sum(g * u, axis=-1, keepdims=True)
        sech2 = 1.0 - t * t
        # radial derivative: d(tanh r)/dr off the cap, 0 on the capped branch
        radial = np.where(capped, 0.0, sech2)
        gv = s * g + (radial - s) * dot * u
        gv = np.where(small, g, gv)
        _accumulate(v, gv)

    return _result(data, (v,), back)


def busemann_matrix(z: Tensor, c: Tensor) -> Tensor:
    """Busemann values of every row of z (N, d) toward every row of c (K, d)."""
    zz = np.sum(z.data * z.data, axis=-1, keepdims=True)        # (N, 1)
    cc = np.sum(c.data * c.data, axis=-1)                        # (K,)
    sq = np.maximum(zz + cc[None, :] - 2.0 * (z.data @ c.data.T), 1e-30)
    one_minus = 1.0 - zz
    data = np.log(sq) - np.log(one_minus)

    def back(g):
        if z.requires_grad:
            w = g / sq                                           # (N, K)
            gz = 2.0 * (w.sum(axis=1, keepdims=True) * z.data - w @ c.data)
            gz += 2.0 * g.sum(axis=1, keepdims=True) * z.data / one_minus
            _accumulate(z, gz)
        if c.requires_grad:
            w = g / sq
            gc = 2.0 * (w.sum(axis=0)[:, None] * c.data - w.T @ z.data)
            _accumulate(c, gc)

    return _result(data, (z, c), back)


def softmax_rows(x: Tensor) -> Tensor:
    shifted = x.data - np.max(x.data, axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / np.sum(e, axis=-1, keepdims=True)

    def back(g):
        dot = np.sum(g * data, axis=-1, keepdims=True)
        _accumulate(x, data * (g - dot))

    return _result(data, (x,), back)


def log_clamped(x: Tensor, floor: float = 1e-12) -> Tensor:
    clamped = np.maximum(x.data, floor)
    data = np.log(clamped)

    def back(g):
        _accumulate(x, np.where(x.data > floor, g / clamped, 0.0))

    return _result(data, (x,), back)


def sum_all(x: Tensor) -> Tensor:
    data = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def back(g):
        _accumulate(x, np.broadcast_to(g, x.data.shape))

    return _result(data, (x,), back)


def mean_all(x: Tensor) -> Tensor:
    return scale(sum_all(x), 1.0 / x.data.size)


def mean_axis0(x: Tensor) -> Tensor:
    """Column means of a 2-D tensor."""
    n = x.data.shape[0]
    data = x.data.mean(axis=0)

    def back(g):
        _accumulate(x, np.broadcast_to(g / x.data.dtype.type(n), x.data.shape))

    return _result(data, (x,), back)


def softmax_xent(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy against integer labels; fused forward/backward."""
    labels = np.asarray(labels)
    n = logits.data.shape[0]
    shifted = logits.data - np.max(logits.data, axis=-1, keepdims=True)
    logz = np.log(np.sum(np.exp(shifted), axis=-1))
    picked = shifted[np.arange(n), labels]
    data = np.asarray((logz - picked).mean(), dtype=logits.data.dtype)

    def back(g):
        p = np.exp(shifted - logz[:, None])
        p[np.arange(n), labels] -= 1.0
        _accumulate(logits, g * p / logits.data.dtype.type(n))

    return _result(data, (logits,), back)


# ---------------------------------------------------------------------------

def grad_check(f, params: dict, h: float = 1e-5) -> float:
    """Max relative error between analytic gradients and central differences.

    `f(params) -> Tensor` must build a fresh scalar graph from the given
    parameter dict of float64 arrays. Returns max over every coordinate of
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    leaves = {k: Tensor(np.asarray(v, dtype=np.float64), requires_grad=True)
              for k, v in params.items()}
    loss = f(leaves)
    backward(loss)
    worst = 0.0
    for name, leaf in leaves.items():
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        flat = leaf.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(leaves).data)
            flat[i] = orig - h
            fm = float(f(leaves).data)
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            a = float(analytic.reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst

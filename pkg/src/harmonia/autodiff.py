"""Reverse-mode automatic differentiation on numpy arrays.

A Tensor wraps a float64 ndarray plus the closures needed to push gradients
back to its parents; backward() topologically sorts the DAG reachable from a
scalar loss and accumulates grads. Everything runs in double precision so
finite-difference checks are meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GraphStateError(RuntimeError):
    """Backward invoked in an invalid state (no forward pass, reused loss)."""


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_vjps", "_done")

    def __init__(self, value, requires_grad=False, parents=(), vjps=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._vjps = vjps
        self._done = False

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

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

    def __neg__(self):
        return mul(self, -1.0)

    def detach(self) -> "Tensor":
        return Tensor(self.value.copy())


def constant(value) -> Tensor:
    return Tensor(value)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    return Tensor(
        a.value + b.value,
        parents=(a, b),
        vjps=(
            lambda g: _unbroadcast(g, a.value.shape),
            lambda g: _unbroadcast(g, b.value.shape),
        ),
    )


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    return Tensor(
        a.value - b.value,
        parents=(a, b),
        vjps=(
            lambda g: _unbroadcast(g, a.value.shape),
            lambda g: _unbroadcast(-g, b.value.shape),
        ),
    )


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    return Tensor(
        a.value * b.value,
        parents=(a, b),
        vjps=(
            lambda g: _unbroadcast(g * b.value, a.value.shape),
            lambda g: _unbroadcast(g * a.value, b.value.shape),
        ),
    )


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    return Tensor(
        a.value / b.value,
        parents=(a, b),
        vjps=(
            lambda g: _unbroadcast(g / b.value, a.value.shape),
            lambda g: _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape),
        ),
    )


def relu(x) -> Tensor:
    x = _lift(x)
    mask = x.value > 0
    return Tensor(np.where(mask, x.value, 0.0), parents=(x,), vjps=(lambda g: g * mask,))


def leaky_relu(x, slope=0.2) -> Tensor:
    x = _lift(x)
    mask = x.value > 0
    factor = np.where(mask, 1.0, slope)
    return Tensor(x.value * factor, parents=(x,), vjps=(lambda g: g * factor,))


def sigmoid(x) -> Tensor:
    x = _lift(x)
    v = x.value
    s = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    return Tensor(s, parents=(x,), vjps=(lambda g: g * s * (1.0 - s),))


def softplus(x) -> Tensor:
    x = _lift(x)
    v = x.value
    out = np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))
    sig = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    return Tensor(out, parents=(x,), vjps=(lambda g: g * sig,))


def log_clamped(x, eps=1e-7) -> Tensor:
    """log(max(x, eps)); gradient is zero in the clamped region."""
    x = _lift(x)
    clamped = np.maximum(x.value, eps)
    passthru = x.value > eps
    return Tensor(np.log(clamped), parents=(x,), vjps=(lambda g: g * passthru / clamped,))


def abs_t(x) -> Tensor:
    x = _lift(x)
    s = np.sign(x.value)
    return Tensor(np.abs(x.value), parents=(x,), vjps=(lambda g: g * s,))


def clamp01(x) -> Tensor:
    x = _lift(x)
    inside = (x.value >= 0.0) & (x.value <= 1.0)
    return Tensor(np.clip(x.value, 0.0, 1.0), parents=(x,), vjps=(lambda g: g * inside,))


def clamp_min(x, floor) -> Tensor:
    x = _lift(x)
    passthru = x.value > floor
    return Tensor(np.maximum(x.value, floor), parents=(x,), vjps=(lambda g: g * passthru,))


def sum_t(x, axis=None, keepdims=False) -> Tensor:
    x = _lift(x)
    shape = x.value.shape

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, shape).copy()

    return Tensor(x.value.sum(axis=axis, keepdims=keepdims), parents=(x,), vjps=(vjp,))


def mean_t(x, axis=None, keepdims=False) -> Tensor:
    x = _lift(x)
    shape = x.value.shape
    count = x.value.size if axis is None else np.prod([shape[a] for a in np.atleast_1d(axis)])

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g / count, shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg / count, shape).copy()

    return Tensor(x.value.mean(axis=axis, keepdims=keepdims), parents=(x,), vjps=(vjp,))


def cumsum_t(x, axis=-1) -> Tensor:
    x = _lift(x)

    def vjp(g):
        return np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis)

    return Tensor(np.cumsum(x.value, axis=axis), parents=(x,), vjps=(vjp,))


def reshape(x, shape) -> Tensor:
    x = _lift(x)
    orig = x.value.shape
    return Tensor(x.value.reshape(shape), parents=(x,), vjps=(lambda g: g.reshape(orig),))


def narrow(x, axis, start, length) -> Tensor:
    """Slice `length` entries from `start` along `axis`."""
    x = _lift(x)
    idx = [slice(None)] * x.value.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def vjp(g):
        out = np.zeros_like(x.value)
        out[idx] = g
        return out

    return Tensor(x.value[idx], parents=(x,), vjps=(vjp,))


def concat(tensors, axis=0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    sizes = [t.value.shape[axis] for t in tensors]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def make_vjp(i):
        def vjp(g):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
            return g[tuple(idx)]

        return vjp

    return Tensor(
        np.concatenate([t.value for t in tensors], axis=axis),
        parents=tuple(tensors),
        vjps=tuple(make_vjp(i) for i in range(len(tensors))),
    )


def linear(x, w, b) -> Tensor:
    """x (N, F) @ w (F, O) + b (O,)."""
    x, w, b = _lift(x), _lift(w), _lift(b)
    return Tensor(
        x.value @ w.value + b.value,
        parents=(x, w, b),
        vjps=(
            lambda g: g @ w.value.T,
            lambda g: x.value.T @ g,
            lambda g: g.sum(axis=0),
        ),
    )


def conv2d(x, w, b, stride=1, pad=None) -> Tensor:
    """2-D convolution, NCHW layout, square kernel. pad defaults to k//2."""
    x, w, b = _lift(x), _lift(w), _lift(b)
    n, c, h, wid = x.value.shape
    o, c2, kh, kw = w.value.shape
    if c != c2:
        raise ValueError(f"conv2d channel mismatch: input {c}, weight {c2}")
    p = kh // 2 if pad is None else pad
    s = stride
    xp = np.pad(x.value, ((0, 0), (0, 0), (p, p), (p, p)))
    ho = (h + 2 * p - kh) // s + 1
    wo = (wid + 2 * p - kw) // s + 1

    # im2col by kernel-offset slicing: cols[(c, ki, kj)] spatial maps
    cols = np.empty((n, c, kh, kw, ho, wo))
    for ki in range(kh):
        for kj in range(kw):
            cols[:, :, ki, kj] = xp[:, :, ki : ki + s * ho : s, kj : kj + s * wo : s]
    cols2 = cols.reshape(n, c * kh * kw, ho * wo)
    w2 = w.value.reshape(o, c * kh * kw)
    out = np.matmul(w2, cols2).reshape(n, o, ho, wo) + b.value[None, :, None, None]

    def vjp_x(g):
        g2 = g.reshape(n, o, ho * wo)
        dcols = np.matmul(w2.T, g2).reshape(n, c, kh, kw, ho, wo)
        dxp = np.zeros_like(xp)
        for ki in range(kh):
            for kj in range(kw):
                dxp[:, :, ki : ki + s * ho : s, kj : kj + s * wo : s] += dcols[:, :, ki, kj]
        return dxp[:, :, p : p + h, p : p + wid] if p else dxp

    def vjp_w(g):
        g2 = g.reshape(n, o, ho * wo)
        return np.matmul(g2, cols2.transpose(0, 2, 1)).sum(axis=0).reshape(o, c, kh, kw)

    return Tensor(
        out,
        parents=(x, w, b),
        vjps=(vjp_x, vjp_w, lambda g: g.sum(axis=(0, 2, 3))),
    )


def nearest_up2(x) -> Tensor:
    """Nearest-neighbor 2x spatial upsample, NCHW."""
    x = _lift(x)
    n, c, h, w = x.value.shape
    out = np.repeat(np.repeat(x.value, 2, axis=2), 2, axis=3)

    def vjp(g):
        return g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))

    return Tensor(out, parents=(x,), vjps=(vjp,))


def _axis_interp_indices(in_size, out_size):
    pos = (np.arange(out_size) + 0.5) * (in_size / out_size) - 0.5
    lo = np.floor(pos).astype(np.int64)
    t = pos - lo
    i0 = np.clip(lo, 0, in_size - 1)
    i1 = np.clip(lo + 1, 0, in_size - 1)
    return i0, i1, t


def bilinear_hw(x, out_h, out_w) -> Tensor:
    """Bilinear resample over the last two axes (half-pixel centers).

    Same sampling convention as image.resize_bilinear, but without value
    clamping: shading gains above 1 must survive.
    """
    x = _lift(x)
    in_h, in_w = x.value.shape[-2:]
    if (out_h, out_w) == (in_h, in_w):
        return Tensor(x.value.copy(), parents=(x,), vjps=(lambda g: g,))

    r0, r1, ty = _axis_interp_indices(in_h, out_h)
    c0, c1, tx = _axis_interp_indices(in_w, out_w)
    tyb = ty.reshape((1,) * (x.value.ndim - 2) + (out_h, 1))
    txb = tx.reshape((1,) * (x.value.ndim - 2) + (1, out_w))

    a = x.value[..., r0, :]
    b = x.value[..., r1, :]
    rows = a + tyb * (b - a)  # (..., out_h, in_w)
    left = rows[..., :, c0]
    right = rows[..., :, c1]
    out = left + txb * (right - left)

    def vjp(g):
        drows = np.zeros(x.value.shape[:-2] + (out_h, in_w))
        np.add.at(drows.swapaxes(-1, 0), c0, ((1.0 - txb) * g).swapaxes(-1, 0))
        np.add.at(drows.swapaxes(-1, 0), c1, (txb * g).swapaxes(-1, 0))
        dx = np.zeros_like(x.value)
        np.add.at(dx.swapaxes(-2, 0), r0, ((1.0 - tyb) * drows).swapaxes(-2, 0))
        np.add.at(dx.swapaxes(-2, 0), r1, (tyb * drows).swapaxes(-2, 0))
        return dx

    return Tensor(out, parents=(x,), vjps=(vjp,))


def piecewise_linear(values: np.ndarray, x, y) -> Tensor:
    """Evaluate per-channel piecewise-linear curves at constant pixel values.

    values: (N, 3, H, W) constants in [0, 1]; x, y: (N, 3, K) knot tensors
    with x strictly increasing, endpoints 0 and 1. Differentiable with
    respect to both knot coordinates; at a knot the right segment's
    derivative is used.
    """
    x, y = _lift(x), _lift(y)
    n, ch, k = x.value.shape
    vals = np.asarray(values, dtype=np.float64)
    out = np.empty_like(vals)
    cache = []
    for i in range(n):
        for c in range(ch):
            xv, yv = x.value[i, c], y.value[i, c]
            v = vals[i, c].ravel()
            seg = np.clip(np.searchsorted(xv, v, side="right") - 1, 0, k - 2)
            dx = xv[seg + 1] - xv[seg]
            dy = yv[seg + 1] - yv[seg]
            slope = dy / dx
            out[i, c] = (yv[seg] + slope * (v - xv[seg])).reshape(vals[i, c].shape)
            cache.append((i, c, v, seg, dx, dy))

    def vjp_x(g):
        dxk = np.zeros_like(x.value)
        for i, c, v, seg, dx, dy in cache:
            gv = g[i, c].ravel()
            d0 = gv * dy * (v - x.value[i, c][seg + 1]) / (dx * dx)
            d1 = -gv * dy * (v - x.value[i, c][seg]) / (dx * dx)
            dxk[i, c] += np.bincount(seg, weights=d0, minlength=k)
            dxk[i, c] += np.bincount(seg + 1, weights=d1, minlength=k)
        return dxk

    def vjp_y(g):
        dyk = np.zeros_like(y.value)
        for i, c, v, seg, dx, dy in cache:
            gv = g[i, c].ravel()
            t = (v - x.value[i, c][seg]) / dx
            dyk[i, c] += np.bincount(seg, weights=gv * (1.0 - t), minlength=k)
            dyk[i, c] += np.bincount(seg + 1, weights=gv * t, minlength=k)
        return dyk

    return Tensor(out, parents=(x, y), vjps=(vjp_x, vjp_y))


def backward(loss: Tensor) -> None:
    """Propagate d(loss)/d(node) through the DAG; accumulates into .grad."""
    if loss.value.size != 1:
        raise GraphStateError(f"loss must be scalar, got shape {loss.value.shape}")
    if loss._done:
        raise GraphStateError("backward already ran for this loss; rerun the forward pass")
    if not loss._parents and not loss.requires_grad:
        raise GraphStateError("loss is not connected to any differentiable forward pass")

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

    loss.grad = np.ones_like(loss.value)
    loss._done = True
    for node in reversed(topo):
        if node.grad is None:
            continue
        for parent, vjp in zip(node._parents, node._vjps):
            if not parent.requires_grad:
                continue
            contrib = vjp(node.grad)
            if parent.grad is None:
                parent.grad = np.array(contrib, dtype=np.float64)
            else:
                parent.grad = parent.grad + contrib


class ModelGraph:
    """Named trainable parameters plus the backward entry point."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}

    def parameter(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"parameter {name!r} already registered")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        return t

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = np.zeros_like(t.value)

    def backward(self, loss: Tensor) -> dict[str, np.ndarray]:
        backward(loss)
        return self.gradients()

    def gradients(self) -> dict[str, np.ndarray]:
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.value))
            for name, t in self.params.items()
        }

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.value.copy() for name, t in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, t in self.params.items():
            if name not in state:
                raise KeyError(f"missing parameter {name!r} in state")
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.value.shape:
                raise ValueError(f"shape mismatch for {name!r}: {arr.shape} vs {t.value.shape}")
            t.value = arr.copy()

    def num_params(self) -> int:
        return sum(t.value.size for t in self.params.values())


@dataclass
class GradCheckReport:
    per_param: dict[str, float] = field(default_factory=dict)
    max_rel_error: float = 0.0
    tolerance: float = 0.0
    passed: bool = False

    def __str__(self):
        lines = [f"grad check (tol {self.tolerance:g}): max rel err {self.max_rel_error:.3e}"]
        for name, err in sorted(self.per_param.items(), key=lambda kv: -kv[1]):
            lines.append(f"  {name}: {err:.3e}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def grad_check(graph: ModelGraph, loss_fn, epsilon=1e-4, tolerance=1e-4) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    loss_fn re-runs the forward pass and returns the scalar loss Tensor.
    Relative error uses max(|analytic|, |numeric|, 1e-6) as denominator so
    near-zero gradients do not produce spurious failures.
    """
    if graph.num_params() > 10_000:
        raise ValueError(f"grad_check limited to 1e4 parameters, graph has {graph.num_params()}")

    graph.zero_grad()
    backward(loss_fn())
    analytic = {name: t.grad.copy() for name, t in graph.params.items()}

    report = GradCheckReport(tolerance=tolerance)
    for name, t in graph.params.items():
        flat = t.value.ravel()
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = float(loss_fn().value)
            flat[i] = orig - epsilon
            down = float(loss_fn().value)
            flat[i] = orig
            numeric[i] = (up - down) / (2.0 * epsilon)
        a = analytic[name].ravel()
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-6)
        report.per_param[name] = float(np.max(np.abs(a - numeric) / denom)) if flat.size else 0.0
    report.max_rel_error = max(report.per_param.values(), default=0.0)
    report.passed = report.max_rel_error < tolerance
    return report

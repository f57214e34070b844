"""Minimal reverse-mode automatic differentiation over dense numpy tensors.

Covers exactly what the descriptor pipeline and the toy waveform GAN need:
elementwise math, full reductions, affine maps, causal 1-D convolution,
2x average up/downsampling, and the power spectrum of a real signal as a
differentiable map. No general broadcasting: binary ops accept equal shapes
or a scalar (0-d) on either side. Division, log, and sqrt floor their
critical inputs at EPS_FLOOR = 1e-12 so the pipeline stays differentiable
at silence; the registered backward rules are the exact derivatives of the
floored forward functions, so finite differences agree.

A graph is confined to one thread during forward/backward; distinct graphs
may run concurrently. Gradients accumulate into ``Tensor.grad`` across all
uses of a node.
"""

from __future__ import annotations

import numpy as np

EPS_FLOOR = 1e-12


class Tensor:
    """A dense array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self):
        """Reverse-topological backward pass from a scalar root."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar root")
        order = []
        seen = set()
        stack = [(self, False)]
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
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_lift(other, self.dtype), self)

    def __neg__(self):
        return mul(self, -1.0)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def reshape(self, shape):
        return reshape(self, shape)

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def _lift(x, dtype=np.float64):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _check_elementwise(a: Tensor, b: Tensor):
    if a.shape != b.shape and a.data.size != 1 and b.data.size != 1:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def _reduce_to(g, shape):
    # undo scalar broadcast: a 0-d operand receives the sum of its uses
    if g.shape != shape:
        return np.asarray(np.sum(g)).reshape(shape)
    return g


def _node(data, parents, backward):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, _parents=tuple(parents) if req else (),
                  _backward=backward if req else None)


def add(a, b) -> Tensor:
    a = _lift(a)
    b = _lift(b, a.dtype)
    _check_elementwise(a, b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_reduce_to(g, a.shape))
        if b.requires_grad:
            b._accumulate(_reduce_to(g, b.shape))

    return _node(out_data, (a, b), backward)


def sub(a, b) -> Tensor:
    a = _lift(a)
    b = _lift(b, a.dtype)
    _check_elementwise(a, b)
    out_data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_reduce_to(g, a.shape))
        if b.requires_grad:
            b._accumulate(_reduce_to(-g, b.shape))

    return _node(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = _lift(a)
    b = _lift(b, a.dtype)
    _check_elementwise(a, b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_reduce_to(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_reduce_to(g * a.data, b.shape))

    return _node(out_data, (a, b), backward)


def div(a, b) -> Tensor:
    """a / b with |b| floored at EPS_FLOOR (documented smoothing)."""
    a = _lift(a)
    b = _lift(b, a.dtype)
    _check_elementwise(a, b)
    denom = np.where(np.abs(b.data) < EPS_FLOOR, np.copysign(EPS_FLOOR, b.data), b.data)
    out_data = a.data / denom

    def backward(g):
        if a.requires_grad:
            a._accumulate(_reduce_to(g / denom, a.shape))
        if b.requires_grad:
            live = (np.abs(b.data) >= EPS_FLOOR).astype(b.dtype)
            b._accumulate(_reduce_to(-g * a.data / (denom * denom) * live, b.shape))

    return _node(out_data, (a, b), backward)


def tsum(x: Tensor) -> Tensor:
    x = _lift(x)
    out_data = np.asarray(x.data.sum(), dtype=x.dtype)

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.broadcast_to(g, x.shape).astype(x.dtype, copy=True))

    return _node(out_data, (x,), backward)


def tmean(x: Tensor) -> Tensor:
    x = _lift(x)
    n = x.data.size
    out_data = np.asarray(x.data.mean(), dtype=x.dtype)

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.broadcast_to(g / n, x.shape).astype(x.dtype, copy=True))

    return _node(out_data, (x,), backward)


def sqrt(x) -> Tensor:
    """sqrt of the input floored at EPS_FLOOR."""
    x = _lift(x)
    clamped = np.maximum(x.data, EPS_FLOOR)
    out_data = np.sqrt(clamped)

    def backward(g):
        if x.requires_grad:
            live = x.data > EPS_FLOOR
            x._accumulate(np.where(live, 0.5 * g / out_data, 0.0).astype(x.dtype))

    return _node(out_data, (x,), backward)


def log(x) -> Tensor:
    """Natural log of the input floored at EPS_FLOOR."""
    x = _lift(x)
    clamped = np.maximum(x.data, EPS_FLOOR)
    out_data = np.log(clamped)

    def backward(g):
        if x.requires_grad:
            live = x.data > EPS_FLOOR
            x._accumulate(np.where(live, g / clamped, 0.0).astype(x.dtype))

    return _node(out_data, (x,), backward)


def exp(x) -> Tensor:
    x = _lift(x)
    out_data = np.exp(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * out_data)

    return _node(out_data, (x,), backward)


def sigmoid(x) -> Tensor:
    x = _lift(x)
    out_data = np.where(x.data >= 0,
                        1.0 / (1.0 + np.exp(-x.data)),
                        np.exp(x.data) / (1.0 + np.exp(x.data)))

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * out_data * (1.0 - out_data))

    return _node(out_data, (x,), backward)


def sin(x) -> Tensor:
    x = _lift(x)
    out_data = np.sin(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * np.cos(x.data))

    return _node(out_data, (x,), backward)


def cos(x) -> Tensor:
    x = _lift(x)
    out_data = np.cos(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(-g * np.sin(x.data))

    return _node(out_data, (x,), backward)


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = _lift(x)
    out_data = np.where(x.data >= 0, x.data, slope * x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * np.where(x.data >= 0, 1.0, slope).astype(x.dtype))

    return _node(out_data, (x,), backward)


def reshape(x, shape) -> Tensor:
    x = _lift(x)
    shape = tuple(shape)
    out_data = x.data.reshape(shape)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.reshape(x.shape))

    return _node(out_data, (x,), backward)


def concat(parts) -> Tensor:
    """Concatenate 1-D tensors."""
    parts = [_lift(p) for p in parts]
    for p in parts:
        if p.data.ndim != 1:
            raise ValueError("concat expects 1-D tensors")
    out_data = np.concatenate([p.data for p in parts])

    def backward(g):
        off = 0
        for p in parts:
            n = p.data.size
            if p.requires_grad:
                p._accumulate(g[off : off + n])
            off += n

    return _node(out_data, tuple(parts), backward)


def matmul(a, b) -> Tensor:
    a = _lift(a)
    b = _lift(b, a.dtype)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _node(out_data, (a, b), backward)


def affine(x, w, b) -> Tensor:
    """w @ x + b for x of shape (in,) or (in, T); bias is per output row."""
    x = _lift(x)
    w = _lift(w, x.dtype)
    b = _lift(b, x.dtype)
    vector = x.data.ndim == 1
    if w.data.ndim != 2 or b.data.ndim != 1 or w.shape[0] != b.shape[0]:
        raise ValueError("affine expects w (out, in) and b (out,)")
    if (vector and w.shape[1] != x.shape[0]) or (not vector and w.shape[1] != x.shape[0]):
        raise ValueError(f"affine shape mismatch: w {w.shape}, x {x.shape}")
    if vector:
        out_data = w.data @ x.data + b.data
    else:
        out_data = w.data @ x.data + b.data[:, None]

    def backward(g):
        if x.requires_grad:
            x._accumulate(w.data.T @ g)
        if w.requires_grad:
            w._accumulate(np.outer(g, x.data) if vector else g @ x.data.T)
        if b.requires_grad:
            b._accumulate(g if vector else g.sum(axis=1))

    return _node(out_data, (x, w, b), backward)


def causal_conv1d(x, w) -> Tensor:
    """Causal 1-D convolution along the last axis.

    x is (C_in, T) or batched (B, C_in, T); w is (C_out, C_in, K).
    output[..., t] depends only on input[..., max(0, t-K+1) .. t].

    Implemented as one stacked-kernel matmul over left-padded input in
    (channel, batch, time) layout; the backward pass reuses the same
    stacked layout for both the weight and input gradients.
    """
    x = _lift(x)
    w = _lift(w, x.dtype)
    batched = x.data.ndim == 3
    if w.data.ndim != 3 or x.data.ndim not in (2, 3) or w.shape[1] != x.shape[-2]:
        raise ValueError(f"causal_conv1d shape mismatch: x {x.shape}, w {w.shape}")
    xb = x.data if batched else x.data[None]
    n_batch, c_in, t_len = xb.shape
    c_out, _, k = w.shape
    t_pad = t_len + k - 1
    padded = np.zeros((c_in, n_batch, t_pad), dtype=x.dtype)
    padded[:, :, k - 1 :] = xb.transpose(1, 0, 2)
    flat_in = padded.reshape(c_in, n_batch * t_pad)
    # kernel taps reversed so y[t] = sum_k w[k] * x[t - k] (impulse response
    # reproduces the kernel, placed causally)
    w_stack = np.ascontiguousarray(w.data[:, :, ::-1].transpose(0, 2, 1)).reshape(c_out * k, c_in)
    staged = (w_stack @ flat_in).reshape(c_out, k, n_batch, t_pad)
    y = np.zeros((c_out, n_batch, t_len), dtype=x.dtype)
    for j in range(k):
        y += staged[:, j, :, j : j + t_len]
    out = np.ascontiguousarray(y.transpose(1, 0, 2))
    out_data = out if batched else out[0]

    def backward(g):
        gb = g if batched else g[None]
        g_stack = np.zeros((c_out, k, n_batch, t_pad), dtype=x.dtype)
        gt = gb.transpose(1, 0, 2)
        for j in range(k):
            g_stack[:, j, :, j : j + t_len] = gt
        g_flat = g_stack.reshape(c_out * k, n_batch * t_pad)
        if w.requires_grad:
            dw = (g_flat @ flat_in.T).reshape(c_out, k, c_in)[:, ::-1, :].transpose(0, 2, 1)
            w._accumulate(np.ascontiguousarray(dw))
        if x.requires_grad:
            dpad = (w_stack.T @ g_flat).reshape(c_in, n_batch, t_pad)
            dx = dpad[:, :, k - 1 :].transpose(1, 0, 2)
            x._accumulate(dx if batched else dx[0])

    return _node(out_data, (x, w), backward)


def avg_upsample2x(x) -> Tensor:
    """2x upsample along the last axis by an averaging filter.

    Even outputs copy the source sample; odd outputs average it with the
    next one (last sample repeats at the right edge). Accepts (C, T) or
    (B, C, T).
    """
    x = _lift(x)
    if x.data.ndim not in (2, 3):
        raise ValueError("avg_upsample2x expects (C, T) or (B, C, T)")
    t_len = x.shape[-1]
    out_data = np.empty(x.shape[:-1] + (2 * t_len,), dtype=x.dtype)
    out_data[..., 0::2] = x.data
    out_data[..., 1:-1:2] = 0.5 * (x.data[..., :-1] + x.data[..., 1:])
    out_data[..., -1] = x.data[..., -1]

    def backward(g):
        if x.requires_grad:
            dx = g[..., 0::2].copy()
            dx[..., :-1] += 0.5 * g[..., 1:-1:2]
            dx[..., 1:] += 0.5 * g[..., 1:-1:2]
            dx[..., -1] += g[..., -1]
            x._accumulate(dx)

    return _node(out_data, (x,), backward)


def avg_downsample2x(x) -> Tensor:
    """2x downsample along the last (even-length) axis by pairwise averaging."""
    x = _lift(x)
    if x.data.ndim not in (2, 3) or x.shape[-1] % 2 != 0:
        raise ValueError("avg_downsample2x expects (..., T) with even T")
    out_data = 0.5 * (x.data[..., 0::2] + x.data[..., 1::2])

    def backward(g):
        if x.requires_grad:
            dx = np.empty_like(x.data)
            dx[..., 0::2] = 0.5 * g
            dx[..., 1::2] = 0.5 * g
            x._accumulate(dx)

    return _node(out_data, (x,), backward)


def real_dft_power(x) -> Tensor:
    """Power spectrum of a real signal over bins k = 0 .. N//2.

    p[k] = |X[k]|^2 with X the length-N DFT along the last axis; accepts a
    single signal (N,) or a batch (B, N). Differentiable map whose adjoint
    routes through the inverse transform.
    """
    x = _lift(x)
    if x.data.ndim not in (1, 2):
        raise ValueError("real_dft_power expects (N,) or (B, N)")
    n = x.shape[-1]
    spectrum = np.fft.rfft(x.data, axis=-1)
    out_data = (spectrum.real**2 + spectrum.imag**2).astype(x.dtype)

    def backward(g):
        if x.requires_grad:
            weighted = np.zeros(x.shape[:-1] + (n,), dtype=np.complex128)
            weighted[..., : spectrum.shape[-1]] = g * spectrum
            gx = 2.0 * np.real(np.fft.ifft(weighted, axis=-1) * n)
            x._accumulate(gx.astype(x.dtype))

    return _node(out_data, (x,), backward)


def transpose2d(x) -> Tensor:
    x = _lift(x)
    if x.data.ndim != 2:
        raise ValueError("transpose2d expects a 2-D tensor")
    out_data = x.data.T.copy()

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.T)

    return _node(out_data, (x,), backward)


def vstack(parts) -> Tensor:
    """Concatenate 2-D tensors along axis 0 (equal column counts)."""
    parts = [_lift(p) for p in parts]
    if any(p.data.ndim != 2 for p in parts):
        raise ValueError("vstack expects 2-D tensors")
    out_data = np.concatenate([p.data for p in parts], axis=0)

    def backward(g):
        off = 0
        for p in parts:
            n = p.shape[0]
            if p.requires_grad:
                p._accumulate(g[off : off + n])
            off += n

    return _node(out_data, tuple(parts), backward)


def scale_channels(x, g) -> Tensor:
    """Per-channel, per-item gains: x (B, C, T) * g (B, C) broadcast over time."""
    x = _lift(x)
    g = _lift(g, x.dtype)
    if x.data.ndim != 3 or g.shape != x.shape[:2]:
        raise ValueError(f"scale_channels shape mismatch: x {x.shape}, g {g.shape}")
    out_data = x.data * g.data[:, :, None]

    def backward(grad):
        if x.requires_grad:
            x._accumulate(grad * g.data[:, :, None])
        if g.requires_grad:
            g._accumulate((grad * x.data).sum(axis=2))

    return _node(out_data, (x, g), backward)


def add_channel_bias(x, b) -> Tensor:
    """x (B, C, T) + b (C,) broadcast over batch and time."""
    x = _lift(x)
    b = _lift(b, x.dtype)
    if x.data.ndim != 3 or b.shape != (x.shape[1],):
        raise ValueError(f"add_channel_bias shape mismatch: x {x.shape}, b {b.shape}")
    out_data = x.data + b.data[None, :, None]

    def backward(g):
        if x.requires_grad:
            x._accumulate(g)
        if b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2)))

    return _node(out_data, (x, b), backward)


def add_scaled_signal(x, g, signal: np.ndarray) -> Tensor:
    """x (B, C, T) + g (B, C) * signal (B, T): one fixed time signal per
    item, shared across channels, scaled by learned per-channel gains."""
    x = _lift(x)
    g = _lift(g, x.dtype)
    signal = np.asarray(signal, dtype=x.dtype)
    if x.data.ndim != 3 or g.shape != x.shape[:2] or signal.shape != (x.shape[0], x.shape[2]):
        raise ValueError("add_scaled_signal shape mismatch")
    out_data = x.data + g.data[:, :, None] * signal[:, None, :]

    def backward(grad):
        if x.requires_grad:
            x._accumulate(grad)
        if g.requires_grad:
            g._accumulate((grad * signal[:, None, :]).sum(axis=2))

    return _node(out_data, (x, g), backward)


def repeat_batch(x, n_batch: int) -> Tensor:
    """Tile a (C, T) tensor into (B, C, T); backward sums over the batch."""
    x = _lift(x)
    if x.data.ndim != 2:
        raise ValueError("repeat_batch expects (C, T)")
    out_data = np.broadcast_to(x.data, (n_batch,) + x.shape).copy()

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.sum(axis=0))

    return _node(out_data, (x,), backward)


def time_mean(x) -> Tensor:
    """Mean over the time axis: (B, C, T) -> (B, C)."""
    x = _lift(x)
    if x.data.ndim != 3:
        raise ValueError("time_mean expects (B, C, T)")
    t_len = x.shape[2]
    out_data = x.data.mean(axis=2)

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.repeat(g[:, :, None], t_len, axis=2) / t_len)

    return _node(out_data, (x,), backward)


def relu(x) -> Tensor:
    return leaky_relu(x, slope=0.0)


def dot_const(x: Tensor, weights: np.ndarray) -> Tensor:
    """Weighted sum of x (1-D) against a constant vector (no grad to weights)."""
    w = Tensor(np.asarray(weights, dtype=x.dtype))
    return tsum(mul(x, w))


def zero_grad(tensors):
    for t in tensors:
        t.grad = None


def grad_check(f, x: Tensor, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per coordinate is |analytic - numeric| divided by
    max(1e-8, |analytic| + |numeric|).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = Tensor(x.data.astype(np.float64), requires_grad=True)
    out = f(x)
    out.backward()
    analytic = x.grad.copy()
    numeric = np.zeros_like(analytic)
    flat = x.data.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(Tensor(x.data.copy())).item()
        flat[i] = orig - h
        fm = f(Tensor(x.data.copy())).item()
        flat[i] = orig
        num_flat[i] = (fp - fm) / (2.0 * h)
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))

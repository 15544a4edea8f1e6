"""Differentiable layers and losses used by the attention TCN and the LSTM.

Every function takes and returns :class:`~causalaffect.numkernel.tensor.Tensor`
objects.  Time-major axes follow the ``(..., L, D)`` convention: the second
to last axis is time, the last axis is the feature/channel axis.

Masks are boolean arrays shaped like the time axes ``(..., L)``; ``True``
marks a real frame.  All losses average over valid frames only, so padded
frames contribute exactly nothing to values or gradients.
"""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor


def _check_shape(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def _chan_dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sum of ``a * b`` over every axis but the last."""
    D = a.shape[-1]
    return np.einsum("ij,ij->j", a.reshape(-1, D), b.reshape(-1, D))


def _windows(a: np.ndarray, n_taps: int, dilation: int, left: bool) -> np.ndarray:
    """Strided view ``(..., L, D, n_taps)`` of ``a`` padded on one side.

    With ``left=True`` entry ``j`` of frame ``t`` is ``a[t - (n_taps - 1 - j) * dilation]``;
    with ``left=False`` it is ``a[t + j * dilation]``.  Out-of-range frames read zero.
    """
    span = (n_taps - 1) * dilation
    zeros = np.zeros(a.shape[:-2] + (span, a.shape[-1]))
    padded = np.concatenate([zeros, a] if left else [a, zeros], axis=-2)
    view = np.lib.stride_tricks.sliding_window_view(padded, span + 1, axis=-2)
    return view[..., ::dilation]


def depthwise_causal_conv(x: Tensor, weight: Tensor, bias: Tensor, dilation: int = 1) -> Tensor:
    """Per-channel dilated causal convolution.

    ``weight`` is ``(D, K)``; tap ``K - 1`` multiplies the current frame and
    tap ``k`` the frame ``(K - 1 - k) * dilation`` steps in the past.  Frames
    before the start read zero, so ``out[t]`` never sees ``x[t' > t]``.
    Channels never mix.
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    D, K = weight.shape
    _check_shape(x.shape[-1] == D, f"conv expects {D} channels, got {x.shape[-1]}")
    _check_shape(bias.shape == (D,), f"conv bias must have shape ({D},)")
    L = x.shape[-2]
    # taps reaching back L frames or more only ever see padding
    n_taps = min(K, (L - 1) // dilation + 1)
    w = weight.data[:, K - n_taps :]
    sub = "nt"[-(x.data.ndim - 1):]
    out = np.einsum(f"{sub}dk,dk->{sub}d", _windows(x.data, n_taps, dilation, left=True), w) + bias.data

    def backward(g):
        gx = np.einsum(f"{sub}dk,dk->{sub}d", _windows(g, n_taps, dilation, left=False), w[:, ::-1])
        gw = np.zeros_like(weight.data)
        gw[:, K - n_taps :] = np.einsum(f"{sub}dk,{sub}d->dk", _windows(x.data, n_taps, dilation, left=True), g)
        gb = g.reshape(-1, D).sum(axis=0)
        return gx, gw, gb

    return Tensor(out, (x, weight, bias), backward, "depthwise_causal_conv")


def attention_mul(x: Tensor, a: Tensor) -> Tensor:
    """Scale every feature channel by its attention weight."""
    x, a = as_tensor(x), as_tensor(a)
    _check_shape(a.shape == (x.shape[-1],), f"attention length {a.shape} does not match {x.shape[-1]} features")

    def backward(g):
        ga = _chan_dot(g, x.data)
        return g * a.data, ga

    return Tensor(x.data * a.data, (x, a), backward, "attention_mul")


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """Parametric ReLU with one slope per channel."""
    x, slope = as_tensor(x), as_tensor(slope)
    pos = x.data > 0
    out = np.where(pos, x.data, slope.data * x.data)

    def backward(g):
        gx = np.where(pos, g, g * slope.data)
        gs = np.where(pos, 0.0, g * x.data)
        gs = gs.reshape(-1, gs.shape[-1]).sum(axis=0) if slope.shape else gs.sum()
        return gx, gs

    return Tensor(out, (x, slope), backward, "prelu")


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = _sigmoid(x.data)

    def backward(g):
        return (g * out * (1.0 - out),)

    return Tensor(out, (x,), backward, "sigmoid")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    a = as_tensor(a)
    e = np.exp(a.data - a.data.max(axis=-1, keepdims=True))
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return Tensor(out, (a,), backward, "softmax")


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - p)`` while training."""
    x = as_tensor(x)
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must be in [0, 1)")
    if not train or p == 0.0:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)

    def backward(g):
        return (g * keep,)

    return Tensor(x.data * keep, (x,), backward, "dropout")


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight + bias`` over the last axis; ``weight`` is (in, out)."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    _check_shape(x.shape[-1] == weight.shape[0], f"linear expects width {weight.shape[0]}, got {x.shape[-1]}")
    out = x.data @ weight.data + bias.data

    def backward(g):
        gx = g @ weight.data.T
        g2 = g.reshape(-1, g.shape[-1])
        gw = x.data.reshape(-1, x.shape[-1]).T @ g2
        return gx, gw, g2.sum(axis=0)

    return Tensor(out, (x, weight, bias), backward, "linear")


def lstm(x: Tensor, w_in: Tensor, w_rec: Tensor, bias: Tensor) -> Tensor:
    """Single-layer LSTM over ``x`` shaped ``(N, L, H_in)``; returns ``(N, L, H)``.

    Gate blocks in ``w_in`` (H_in, 4H), ``w_rec`` (H, 4H) and ``bias`` (4H,)
    are ordered input, forget, cell candidate, output.  Initial hidden and
    cell states are zero.
    """
    x, w_in, w_rec, bias = (as_tensor(t) for t in (x, w_in, w_rec, bias))
    H = w_rec.shape[0]
    _check_shape(x.data.ndim == 3, "lstm expects input shaped (N, L, H_in)")
    _check_shape(w_in.shape == (x.shape[-1], 4 * H), f"lstm input weights must be ({x.shape[-1]}, {4 * H})")
    _check_shape(w_rec.shape == (H, 4 * H) and bias.shape == (4 * H,), "lstm recurrent weight/bias shape mismatch")
    N, L, _ = x.shape
    Wx, Wh, b = w_in.data, w_rec.data, bias.data

    # input projections for all frames at once
    xproj = x.data @ Wx + b
    hs = np.zeros((N, L, H))
    cs = np.zeros((N, L, H))
    gates = np.zeros((N, L, 4 * H))
    h = np.zeros((N, H))
    c = np.zeros((N, H))
    for t in range(L):
        z = xproj[:, t] + h @ Wh
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H : 2 * H])
        gg = np.tanh(z[:, 2 * H : 3 * H])
        o = _sigmoid(z[:, 3 * H :])
        c = f * c + i * gg
        h = o * np.tanh(c)
        gates[:, t, :H], gates[:, t, H : 2 * H], gates[:, t, 2 * H : 3 * H], gates[:, t, 3 * H :] = i, f, gg, o
        hs[:, t], cs[:, t] = h, c

    def backward(g):
        dz_all = np.zeros((N, L, 4 * H))
        dh_next = np.zeros((N, H))
        dc_next = np.zeros((N, H))
        for t in range(L - 1, -1, -1):
            i = gates[:, t, :H]
            f = gates[:, t, H : 2 * H]
            gg = gates[:, t, 2 * H : 3 * H]
            o = gates[:, t, 3 * H :]
            c = cs[:, t]
            c_prev = cs[:, t - 1] if t > 0 else np.zeros((N, H))
            tc = np.tanh(c)
            dh = g[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = dz_all[:, t]
            dz[:, :H] = dc * gg * i * (1.0 - i)
            dz[:, H : 2 * H] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * H : 3 * H] = dc * i * (1.0 - gg * gg)
            dz[:, 3 * H :] = dh * tc * o * (1.0 - o)
            dh_next = dz @ Wh.T
            dc_next = dc * f
        h_prev = np.concatenate([np.zeros((N, 1, H)), hs[:, :-1]], axis=1)
        dz2 = dz_all.reshape(-1, 4 * H)
        gWx = x.data.reshape(-1, x.shape[-1]).T @ dz2
        gWh = h_prev.reshape(-1, H).T @ dz2
        gb = dz2.sum(axis=0)
        gx = dz_all @ Wx.T
        return gx, gWx, gWh, gb

    return Tensor(hs, (x, w_in, w_rec, bias), backward, "lstm")


def shift_right(x: Tensor, steps: int = 1) -> Tensor:
    """Delay the sequence by ``steps`` frames, filling the front with zeros."""
    x = as_tensor(x)
    L = x.shape[-2]
    out = np.zeros_like(x.data)
    if steps < L:
        out[..., steps:, :] = x.data[..., : L - steps, :]

    def backward(g):
        gx = np.zeros_like(g)
        if steps < L:
            gx[..., : L - steps, :] = g[..., steps:, :]
        return (gx,)

    return Tensor(out, (x,), backward, "shift_right")


# losses -----------------------------------------------------------------


def _valid(mask: np.ndarray, pred: Tensor) -> tuple[np.ndarray, int]:
    """Broadcast a time mask over trailing channel axes; return weights and count."""
    m = np.asarray(mask, dtype=bool)
    _check_shape(m.shape == pred.shape[: m.ndim], f"mask shape {m.shape} does not match prediction {pred.shape}")
    w = m.reshape(m.shape + (1,) * (pred.data.ndim - m.ndim)).astype(np.float64)
    w = np.broadcast_to(w, pred.shape)
    n = int(m.sum())
    if n == 0:
        raise ValueError("mask has no valid frames")
    return w, n


def mse(pred: Tensor, target, mask) -> Tensor:
    """Mean squared error over valid frames (and all channels)."""
    pred = as_tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    _check_shape(target.shape == pred.shape, f"target shape {target.shape} != prediction {pred.shape}")
    w, _ = _valid(mask, pred)
    count = w.sum()
    diff = np.where(w > 0, pred.data - target, 0.0)
    val = float(np.sum(diff * diff) / count)

    def backward(g):
        return (g * 2.0 * diff / count,)

    return Tensor(val, (pred,), backward, "mse")


def rmse_loss(pred: Tensor, target, mask) -> Tensor:
    from .tensor import sqrt

    return sqrt(mse(pred, target, mask))


def ccc_loss(pred: Tensor, target, mask) -> Tensor:
    """``1 - CCC`` pooled over valid frames, averaged over channels.

    Uses population moments, matching :func:`causalaffect.metrics.ccc`.
    """
    pred = as_tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    _check_shape(target.shape == pred.shape, f"target shape {target.shape} != prediction {pred.shape}")
    m = np.asarray(mask, dtype=bool)
    _valid(mask, pred)
    P = pred.data[m]
    T = target[m]
    if P.ndim == 1:
        P, T = P[:, None], T[:, None]
    n, C = P.shape
    if n < 2:
        raise ValueError("ccc loss needs at least two valid frames")
    mx, my = P.mean(axis=0), T.mean(axis=0)
    dx, dy = P - mx, T - my
    sxy = (dx * dy).mean(axis=0)
    sxx = (dx * dx).mean(axis=0)
    syy = (dy * dy).mean(axis=0)
    den = sxx + syy + (mx - my) ** 2
    safe = den > 0
    ccc = np.where(safe, 2.0 * sxy / np.where(safe, den, 1.0), 0.0)
    val = 1.0 - float(ccc.mean())

    def backward(g):
        num = 2.0 * sxy
        d = np.where(safe, den, 1.0)
        dccc = (2.0 * dy / n) / d - num / d**2 * (2.0 * dx / n + 2.0 * (mx - my) / n)
        dccc = np.where(safe, dccc, 0.0)
        gP = -g * dccc / C
        gfull = np.zeros_like(pred.data)
        gfull[m] = gP.reshape(gfull[m].shape)
        return (gfull,)

    return Tensor(val, (pred,), backward, "ccc_loss")

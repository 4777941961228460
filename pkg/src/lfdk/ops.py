"""Differentiable operators on (n, c, h, w) arrays.

All forward functions are pure; the layer classes add weight storage plus a
one-deep cache so a backward call can follow each forward.  Convolution uses
cross-correlation semantics (no kernel flip) with zero padding.  Every
reduction runs in a fixed order, so results are reproducible run to run.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pair(v) -> tuple[int, int]:
    if isinstance(v, int):
        return (v, v)
    a, b = v
    return (int(a), int(b))


def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


class Conv2D:
    """2D cross-correlation layer with bias.

    Weights are (out_ch, in_ch, kh, kw); init is uniform in
    +-sqrt(6 / (in_ch * kh * kw)) from the supplied RNG, bias zero.
    """

    def __init__(self, in_ch, out_ch, kernel=(3, 3), stride=(1, 1), pad=(1, 1),
                 rng=None, dtype=np.float32):
        kh, kw = _pair(kernel)
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kernel = (kh, kw)
        self.stride = _pair(stride)
        self.pad = _pair(pad)
        if rng is None:
            rng = np.random.default_rng(0)
        lim = np.sqrt(6.0 / (in_ch * kh * kw))
        self.w = rng.uniform(-lim, lim, size=(out_ch, in_ch, kh, kw)).astype(dtype)
        self.b = np.zeros(out_ch, dtype=dtype)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)
        self._cache = None

    @property
    def param_count(self) -> int:
        return self.w.size + self.b.size

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        y = conv2d_forward(self, x)
        self._cache = x if train else None
        return y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("backward without a preceding forward(train=True)")
        gx, gw, gb = conv2d_backward(self, self._cache, grad_out)
        self.gw += gw
        self.gb += gb
        return gx

    def zero_grad(self):
        self.gw[...] = 0
        self.gb[...] = 0


def _zero_pad(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    n, c, h, w = x.shape
    out = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
    out[:, :, ph:ph + h, pw:pw + w] = x
    return out


def _im2col(x: np.ndarray, kh, kw, sh, sw, ph, pw):
    n, c, h, w = x.shape
    if ph or pw:
        x = _zero_pad(x, ph, pw)
    oh = conv_out_size(h, kh, sh, ph)
    ow = conv_out_size(w, kw, sw, pw)
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return cols, oh, ow


def conv2d_forward(layer: Conv2D, x: np.ndarray) -> np.ndarray:
    if x.ndim != 4:
        raise ValueError(f"expected (n, c, h, w) input, got shape {x.shape}")
    if x.shape[1] != layer.in_ch:
        raise ValueError(f"channel mismatch: layer expects {layer.in_ch}, got {x.shape[1]}")
    n = x.shape[0]
    kh, kw = layer.kernel
    sh, sw = layer.stride
    ph, pw = layer.pad
    cols, oh, ow = _im2col(x, kh, kw, sh, sw, ph, pw)
    wmat = layer.w.reshape(layer.out_ch, -1)
    y = cols @ wmat.T + layer.b
    return np.ascontiguousarray(y.reshape(n, oh, ow, layer.out_ch).transpose(0, 3, 1, 2))


def conv2d_backward(layer: Conv2D, x: np.ndarray, grad_out: np.ndarray):
    """Gradients of sum(grad_out * conv2d_forward(layer, x)) w.r.t. x, w, b."""
    n, c, h, w = x.shape
    kh, kw = layer.kernel
    sh, sw = layer.stride
    ph, pw = layer.pad
    oh = conv_out_size(h, kh, sh, ph)
    ow = conv_out_size(w, kw, sw, pw)
    if grad_out.shape != (n, layer.out_ch, oh, ow):
        raise ValueError(
            f"grad_out shape {grad_out.shape} does not match output ({n},{layer.out_ch},{oh},{ow})"
        )
    cols, _, _ = _im2col(x, kh, kw, sh, sw, ph, pw)
    go = grad_out.transpose(0, 2, 3, 1).reshape(n * oh * ow, layer.out_ch)

    gb = go.sum(axis=0)
    gw = (go.T @ cols).reshape(layer.w.shape)

    gcols = go @ layer.w.reshape(layer.out_ch, -1)
    gcols = gcols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    gxp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
    for ki in range(kh):
        for kj in range(kw):
            gxp[:, :, ki:ki + sh * oh:sh, kj:kj + sw * ow:sw] += gcols[..., ki, kj]
    gx = gxp[:, :, ph:ph + h, pw:pw + w]
    return np.ascontiguousarray(gx), gw, gb


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is 0
    return np.where(x > 0, grad_out, 0)


def concat_channels(xs) -> np.ndarray:
    """Stack tensors along the channel axis (axis 1 of 4D, axis 2 of 5D)."""
    xs = list(xs)
    if not xs:
        raise ValueError("nothing to concatenate")
    axis = 1 if xs[0].ndim == 4 else 2
    base = xs[0].shape[:axis] + xs[0].shape[axis + 1:]
    for x in xs[1:]:
        if x.shape[:axis] + x.shape[axis + 1:] != base:
            raise ValueError("concat inputs disagree on non-channel dims")
    if len(xs) == 1:
        return xs[0]
    return np.concatenate(xs, axis=axis)


def split_channels(g: np.ndarray, widths) -> list[np.ndarray]:
    """Inverse of concat_channels on a gradient: slice per input width."""
    axis = 1 if g.ndim == 4 else 2
    if sum(widths) != g.shape[axis]:
        raise ValueError(f"split widths {widths} do not sum to {g.shape[axis]} channels")
    out, at = [], 0
    for wd in widths:
        idx = [slice(None)] * g.ndim
        idx[axis] = slice(at, at + wd)
        out.append(g[tuple(idx)])
        at += wd
    return out


def pixel_shuffle(x: np.ndarray, r: int) -> np.ndarray:
    """Rearrange (n, c*r^2, h, w) into (n, c, h*r, w*r).

    out(n, c, y*r + i, x*r + j) = in(n, c*r^2 + i*r + j, y, x).
    """
    n, cr2, h, w = x.shape
    if cr2 % (r * r):
        raise ValueError(f"channel count {cr2} not divisible by r^2 = {r * r}")
    c = cr2 // (r * r)
    y = x.reshape(n, c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(y).reshape(n, c, h * r, w * r)


def pixel_unshuffle(x: np.ndarray, r: int) -> np.ndarray:
    """Exact inverse of pixel_shuffle."""
    n, c, hr, wr = x.shape
    if hr % r or wr % r:
        raise ValueError(f"spatial dims {hr}x{wr} not divisible by {r}")
    h, w = hr // r, wr // r
    y = x.reshape(n, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(y).reshape(n, c * r * r, h, w)


def maxpool2(x: np.ndarray):
    """2x2 stride-2 max pooling; returns (output, argmax mask for backward)."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"spatial dims {h}x{w} must be even")
    win = x.reshape(n, c, h // 2, 2, w // 2, 2)
    flat = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = flat.argmax(axis=4)
    out = np.take_along_axis(flat, arg[..., None], axis=4)[..., 0]
    return out, arg


def maxpool2_backward(grad_out: np.ndarray, arg: np.ndarray, in_shape) -> np.ndarray:
    n, c, h, w = in_shape
    flat = np.zeros((n, c, h // 2, w // 2, 4), dtype=grad_out.dtype)
    np.put_along_axis(flat, arg[..., None], grad_out[..., None], axis=4)
    win = flat.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(win).reshape(n, c, h, w)


class Adam:
    """Adam with bias correction; moment slots mirror the parameter list."""

    def __init__(self, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params, grads):
        """One update over aligned parameter/gradient arrays, in place."""
        params = list(params)
        grads = list(grads)
        if len(params) != len(grads):
            raise ValueError("parameter and gradient lists differ in length")
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ValueError(f"shape mismatch: param {p.shape} vs grad {g.shape}")
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * np.square(g)
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)

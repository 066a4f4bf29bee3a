"""Differentiable primitives over :class:`~sweepdepth.grad.tensor.Tensor`.

Layout conventions used by the whole pipeline:
  * images / feature maps: (H, W, C)
  * cost volumes:          (H, W, M) with M depth hypotheses last
  * sampling grids:        (..., 2) carrying (u, v) in source pixel units

Every op returns finite values or raises; backward closures are pure numpy.
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .tensor import Tensor, as_tensor

Number = Union[int, float]
TensorLike = Union[Tensor, np.ndarray, Number]


def _data(x: TensorLike):
    if isinstance(x, Tensor):
        return x.data
    if isinstance(x, (bool, int, float)) or isinstance(x, np.floating):
        return float(x)  # weak scalar: numpy keeps the array operand's dtype
    return np.asarray(x)


def _parents(*xs: TensorLike):
    return tuple(x for x in xs if isinstance(x, Tensor))


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a: TensorLike, b: TensorLike) -> Tensor:
    ad, bd = _data(a), _data(b)
    out = ad + bd

    def backward(g):
        if isinstance(a, Tensor):
            a.accumulate(g)
        if isinstance(b, Tensor):
            b.accumulate(g)

    return Tensor.make(out, _parents(a, b), backward, "add")


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    ad, bd = _data(a), _data(b)
    out = ad - bd

    def backward(g):
        if isinstance(a, Tensor):
            a.accumulate(g)
        if isinstance(b, Tensor):
            b.accumulate(-g)

    return Tensor.make(out, _parents(a, b), backward, "sub")


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    ad, bd = _data(a), _data(b)
    out = ad * bd

    def backward(g):
        if isinstance(a, Tensor):
            a.accumulate(g * bd)
        if isinstance(b, Tensor):
            b.accumulate(g * ad)

    return Tensor.make(out, _parents(a, b), backward, "mul")


def div(a: TensorLike, b: TensorLike) -> Tensor:
    ad, bd = _data(a), _data(b)
    out = ad / bd

    def backward(g):
        if isinstance(a, Tensor):
            a.accumulate(g / bd)
        if isinstance(b, Tensor):
            b.accumulate(-g * ad / (bd * bd))

    return Tensor.make(out, _parents(a, b), backward, "div")


def neg(a: Tensor) -> Tensor:
    def backward(g):
        a.accumulate(-g)

    return Tensor.make(-a.data, (a,), backward, "neg")


def pow_scalar(a: Tensor, exponent: float) -> Tensor:
    out = a.data ** exponent

    def backward(g):
        a.accumulate(g * exponent * a.data ** (exponent - 1))

    return Tensor.make(out, (a,), backward, "pow")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def backward(g):
        a.accumulate(g * out)

    return Tensor.make(out, (a,), backward, "exp")


def log(a: Tensor) -> Tensor:
    out = np.log(a.data)

    def backward(g):
        a.accumulate(g / a.data)

    return Tensor.make(out, (a,), backward, "log")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def backward(g):
        a.accumulate(g * 0.5 / out)

    return Tensor.make(out, (a,), backward, "sqrt")


def absolute(a: Tensor) -> Tensor:
    out = np.abs(a.data)

    def backward(g):
        a.accumulate(g * np.sign(a.data))

    return Tensor.make(out, (a,), backward, "abs")


def sin(a: Tensor) -> Tensor:
    def backward(g):
        a.accumulate(g * np.cos(a.data))

    return Tensor.make(np.sin(a.data), (a,), backward, "sin")


def cos(a: Tensor) -> Tensor:
    def backward(g):
        a.accumulate(-g * np.sin(a.data))

    return Tensor.make(np.cos(a.data), (a,), backward, "cos")


def clamp(a: Tensor, lo: Optional[float], hi: Optional[float]) -> Tensor:
    out = np.clip(a.data, lo, hi)
    passthrough = np.ones_like(a.data, dtype=bool)
    if lo is not None:
        passthrough &= a.data >= lo
    if hi is not None:
        passthrough &= a.data <= hi

    def backward(g):
        a.accumulate(g * passthrough)

    return Tensor.make(out, (a,), backward, "clamp")


def where(cond: np.ndarray, a: TensorLike, b: TensorLike) -> Tensor:
    """Elementwise select with a constant boolean condition."""
    cond = np.asarray(cond, dtype=bool)
    out = np.where(cond, _data(a), _data(b))

    def backward(g):
        if isinstance(a, Tensor):
            a.accumulate(np.where(cond, g, 0))
        if isinstance(b, Tensor):
            b.accumulate(np.where(cond, 0, g))

    return Tensor.make(out, _parents(a, b), backward, "where")


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0)

    def backward(g):
        a.accumulate(g * (a.data > 0))

    return Tensor.make(out, (a,), backward, "relu")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def backward(g):
        a.accumulate(g * (1 - out * out))

    return Tensor.make(out, (a,), backward, "tanh")


def sigmoid(a: Tensor) -> Tensor:
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ex = np.exp(a.data[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        a.accumulate(g * out * (1 - out))

    return Tensor.make(out, (a,), backward, "sigmoid")


def softmax_lastdim(a: Tensor) -> Tensor:
    """Numerically stabilized softmax along the last dimension."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        a.accumulate(out * (g - inner))

    return Tensor.make(out, (a,), backward, "softmax_lastdim")


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    old = a.data.shape

    def backward(g):
        a.accumulate(g.reshape(old))

    return Tensor.make(a.data.reshape(shape), (a,), backward, "reshape")


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        a.accumulate(g.transpose(inverse))

    return Tensor.make(a.data.transpose(axes), (a,), backward, "transpose")


def concat(tensors: Sequence[TensorLike], axis: int = -1) -> Tensor:
    datas = [_data(t) for t in tensors]
    out = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if isinstance(t, Tensor):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(start, stop)
                t.accumulate(g[tuple(sl)])

    return Tensor.make(out, _parents(*tensors), backward, "concat")


def getitem(a: Tensor, idx) -> Tensor:
    out = a.data[idx]
    if np.isscalar(out) or out.ndim == 0:
        out = np.asarray(out)

    def backward(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        a.accumulate(buf)

    return Tensor.make(out, (a,), backward, "getitem")


def index_axis(a: Tensor, axis: int, idx: np.ndarray) -> Tensor:
    """Gather along one axis with an integer index array (may repeat)."""
    idx = np.asarray(idx)
    out = np.take(a.data, idx, axis=axis)

    def backward(g):
        buf = np.zeros_like(a.data)
        sl = [slice(None)] * a.data.ndim
        sl[axis] = idx
        np.add.at(buf, tuple(sl), g)
        a.accumulate(buf)

    return Tensor.make(out, (a,), backward, "index_axis")


def pad_zero2d(a: Tensor, pad: int) -> Tensor:
    """Zero-pad the two leading (spatial) axes of an (H, W, ...) tensor."""
    widths = [(pad, pad), (pad, pad)] + [(0, 0)] * (a.data.ndim - 2)
    out = np.pad(a.data, widths)

    def backward(g):
        a.accumulate(g[pad:g.shape[0] - pad, pad:g.shape[1] - pad])

    return Tensor.make(out, (a,), backward, "pad_zero2d")


def replicate_pad2d(a: Tensor, pad: int) -> Tensor:
    """Edge-replicating pad of the two leading axes."""
    h, w = a.data.shape[:2]
    ys = np.clip(np.arange(-pad, h + pad), 0, h - 1)
    xs = np.clip(np.arange(-pad, w + pad), 0, w - 1)
    return index_axis(index_axis(a, 0, ys), 1, xs)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            a.accumulate(np.broadcast_to(g, a.data.shape))
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate(np.broadcast_to(g, a.data.shape))

    return Tensor.make(np.asarray(out), (a,), backward, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.data.shape[ax] for ax in axis]))
    else:
        count = a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def matmul(a: TensorLike, b: TensorLike) -> Tensor:
    """Matrix product; supports identical leading batch dims (for heads)."""
    ad, bd = _data(a), _data(b)
    out = np.matmul(ad, bd)

    def backward(g):
        if isinstance(a, Tensor):
            ga = np.matmul(g, np.swapaxes(bd, -1, -2))
            a.accumulate(ga)
        if isinstance(b, Tensor):
            gb = np.matmul(np.swapaxes(ad, -1, -2), g)
            b.accumulate(gb)

    return Tensor.make(out, _parents(a, b), backward, "matmul")


# ---------------------------------------------------------------------------
# convolution / normalization / resampling
# ---------------------------------------------------------------------------

def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int):
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(0, 1))
    windows = windows[::stride, ::stride]           # (Ho, Wo, C, kh, kw)
    return np.ascontiguousarray(windows.transpose(0, 1, 3, 4, 2))


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2D convolution, x (H, W, Cin), w (kh, kw, Cin, Cout), zero padding."""
    kh, kw, cin, cout = w.data.shape
    if x.data.ndim != 3 or x.data.shape[2] != cin:
        raise ValueError(
            f"conv2d shape mismatch: input {x.data.shape}, kernel {w.data.shape}")
    xp = np.pad(x.data, ((padding, padding), (padding, padding), (0, 0))) \
        if padding else x.data
    hp, wp = xp.shape[:2]
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    cols = _im2col(xp, kh, kw, stride)               # (Ho, Wo, kh, kw, Cin)
    cols2 = cols.reshape(ho * wo, kh * kw * cin)
    wflat = w.data.reshape(kh * kw * cin, cout)
    out = cols2 @ wflat
    if b is not None:
        out = out + b.data
    out = out.reshape(ho, wo, cout)

    def backward(g):
        gflat = g.reshape(ho * wo, cout)
        w.accumulate((cols2.T @ gflat).reshape(kh, kw, cin, cout))
        if b is not None:
            b.accumulate(gflat.sum(axis=0))
        if x.requires_grad or x._backward is not None:
            dcols = (gflat @ wflat.T).reshape(ho, wo, kh, kw, cin)
            dxp = np.zeros((hp, wp, cin), dtype=g.dtype)
            for di in range(kh):
                for dj in range(kw):
                    dxp[di:di + stride * ho:stride,
                        dj:dj + stride * wo:stride] += dcols[:, :, di, dj]
            if padding:
                dxp = dxp[padding:hp - padding, padding:wp - padding]
            x.accumulate(dxp)

    return Tensor.make(out, _parents(x, w, b), backward, "conv2d")


def batch_norm_train(x: Tensor, gamma: Tensor, beta: Tensor,
                     eps: float = 1e-5) -> Tuple[Tensor, np.ndarray, np.ndarray]:
    """Normalize (H, W, C) over the spatial axes using current moments.

    Returns the normalized tensor plus the (mean, biased variance) numpy
    moments so the caller can maintain running statistics.
    """
    axes = tuple(range(x.data.ndim - 1))
    m = x.data.mean(axis=axes)
    v = x.data.var(axis=axes)
    inv = 1.0 / np.sqrt(v + eps)
    xhat = (x.data - m) * inv
    out = gamma.data * xhat + beta.data

    def backward(g):
        beta.accumulate(g.sum(axis=axes))
        gamma.accumulate((g * xhat).sum(axis=axes))
        gx = g * gamma.data
        dx = inv * (gx - gx.mean(axis=axes)
                    - xhat * (gx * xhat).mean(axis=axes))
        x.accumulate(dx)

    return Tensor.make(out, (x, gamma, beta), backward, "batch_norm"), m, v


def batch_norm_eval(x: Tensor, gamma: Tensor, beta: Tensor,
                    running_mean: np.ndarray, running_var: np.ndarray,
                    eps: float = 1e-5) -> Tensor:
    inv = 1.0 / np.sqrt(running_var + eps)
    scale = mul(gamma, inv)
    return add(mul(sub(x, running_mean), scale), beta)


def avg_pool_spatial(x: Tensor, k: int) -> Tensor:
    """Average pool the two leading axes by factor k (shape must divide)."""
    h, w = x.data.shape[:2]
    if h % k or w % k:
        raise ValueError(f"spatial dims {h}x{w} not divisible by {k}")
    trailing = x.data.shape[2:]
    out = x.data.reshape(h // k, k, w // k, k, *trailing).mean(axis=(1, 3))

    def backward(g):
        gg = g / (k * k)
        gg = np.repeat(np.repeat(gg, k, axis=0), k, axis=1)
        x.accumulate(gg)

    return Tensor.make(out, (x,), backward, "avg_pool_spatial")


def upsample_nearest(x: Tensor, k: int) -> Tensor:
    out = np.repeat(np.repeat(x.data, k, axis=0), k, axis=1)
    h, w = x.data.shape[:2]
    trailing = x.data.shape[2:]

    def backward(g):
        x.accumulate(g.reshape(h, k, w, k, *trailing).sum(axis=(1, 3)))

    return Tensor.make(out, (x,), backward, "upsample_nearest")


_BLEND_CACHE: dict = {}


def _blend_matrix(n_in: int, k: int, dtype) -> np.ndarray:
    """Row-stochastic matrix mapping n_in samples to n_in*k, edge-clamped."""
    key = (n_in, k, np.dtype(dtype).str)
    cached = _BLEND_CACHE.get(key)
    if cached is not None:
        return cached
    coords = np.clip((np.arange(n_in * k) + 0.5) / k - 0.5, 0, n_in - 1)
    lo = np.clip(np.floor(coords).astype(np.int64), 0, max(n_in - 2, 0))
    frac = coords - lo
    blend = np.zeros((n_in * k, n_in), dtype=dtype)
    blend[np.arange(n_in * k), lo] = 1.0 - frac
    blend[np.arange(n_in * k), np.minimum(lo + 1, n_in - 1)] += frac
    _BLEND_CACHE[key] = blend
    return blend


def upsample_bilinear(x: Tensor, k: int) -> Tensor:
    """Bilinear spatial upsample by factor k with edge-clamped sampling.

    Separable: one blend matrix per axis, applied as matrix products, so
    wide channel counts stay cheap.
    """
    h, w, c = x.data.shape
    by = _blend_matrix(h, k, x.data.dtype)
    bx = _blend_matrix(w, k, x.data.dtype)
    rows = (by @ x.data.reshape(h, w * c)).reshape(h * k, w, c)
    out = np.tensordot(rows, bx, axes=([1], [1])).transpose(0, 2, 1)
    out = np.ascontiguousarray(out)

    def backward(g):
        d_rows = np.tensordot(g, bx, axes=([1], [0])).transpose(0, 2, 1)
        dx = by.T @ d_rows.reshape(h * k, w * c)
        x.accumulate(dx.reshape(h, w, c))

    return Tensor.make(out, (x,), backward, "upsample_bilinear")


def avg_pool_depth(x: Tensor) -> Tensor:
    """Mean-pool the last (depth hypothesis) dimension with kernel 2."""
    m = x.data.shape[-1]
    if m % 2:
        raise ValueError(f"depth extent {m} is odd; kernel-2 pooling needs even")
    lead = x.data.shape[:-1]
    out = x.data.reshape(*lead, m // 2, 2).mean(axis=-1)

    def backward(g):
        gg = np.repeat(g / 2.0, 2, axis=-1)
        x.accumulate(gg)

    return Tensor.make(out, (x,), backward, "avg_pool_depth")


def grid_sample_bilinear(src: Tensor, grid: TensorLike
                         ) -> Tuple[Tensor, np.ndarray]:
    """Bilinear sampling of src (H, W, C) at pixel coordinates grid (..., 2).

    Coordinates are (u, v) with u along the width axis.  Locations outside
    [0, W-1] x [0, H-1] produce value 0 and a False entry in the returned
    validity mask.  Differentiable w.r.t. both src and grid.
    """
    gd = _data(grid)
    if gd.shape[-1] != 2:
        raise ValueError(f"grid last dimension must be 2, got {gd.shape}")
    h, w, c = src.data.shape
    lead = gd.shape[:-1]
    u = gd[..., 0].reshape(-1)
    v = gd[..., 1].reshape(-1)

    inside = (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    uc = np.clip(u, 0, w - 1)
    vc = np.clip(v, 0, h - 1)
    x0 = np.clip(np.floor(uc), 0, max(w - 2, 0)).astype(np.int64)
    y0 = np.clip(np.floor(vc), 0, max(h - 2, 0)).astype(np.int64)
    fx = (uc - x0).astype(src.data.dtype)
    fy = (vc - y0).astype(src.data.dtype)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)

    flat = src.data.reshape(h * w, c)
    i00 = y0 * w + x0
    i10 = y0 * w + x1
    i01 = y1 * w + x0
    i11 = y1 * w + x1
    w00 = ((1 - fx) * (1 - fy))[:, None]
    w10 = (fx * (1 - fy))[:, None]
    w01 = ((1 - fx) * fy)[:, None]
    w11 = (fx * fy)[:, None]
    vals = (flat[i00] * w00 + flat[i10] * w10
            + flat[i01] * w01 + flat[i11] * w11)
    vals[~inside] = 0
    out = vals.reshape(*lead, c)
    mask = inside.reshape(lead)

    def backward(g):
        gflat = g.reshape(-1, c) * inside[:, None]
        if isinstance(src, Tensor):
            buf = np.zeros_like(flat)
            np.add.at(buf, i00, gflat * w00)
            np.add.at(buf, i10, gflat * w10)
            np.add.at(buf, i01, gflat * w01)
            np.add.at(buf, i11, gflat * w11)
            src.accumulate(buf.reshape(h, w, c))
        if isinstance(grid, Tensor):
            top = flat[i10] - flat[i00]
            bot = flat[i11] - flat[i01]
            du = (top * (1 - fy)[:, None] + bot * fy[:, None])
            left = flat[i01] - flat[i00]
            right = flat[i11] - flat[i10]
            dv = (left * (1 - fx)[:, None] + right * fx[:, None])
            gu = (gflat * du).sum(axis=1)
            gv = (gflat * dv).sum(axis=1)
            gg = np.stack([gu, gv], axis=-1).reshape(gd.shape)
            grid.accumulate(gg)

    return Tensor.make(out, _parents(src, grid), backward, "grid_sample"), mask


def lookup_depth_linear(vol: Tensor, pos: TensorLike) -> Tensor:
    """Linear interpolation of vol (H, W, M) along depth at positions (H, W, K).

    Integer neighbors outside [0, M-1] contribute zero, so taps fade out
    continuously at the volume boundary.  Differentiable w.r.t. vol and pos.
    """
    pd = _data(pos)
    h, w, m = vol.data.shape
    lo = np.floor(pd).astype(np.int64)
    hi = lo + 1
    frac = (pd - lo).astype(vol.data.dtype)
    ok_lo = (lo >= 0) & (lo <= m - 1)
    ok_hi = (hi >= 0) & (hi <= m - 1)
    lo_c = np.clip(lo, 0, m - 1)
    hi_c = np.clip(hi, 0, m - 1)

    flat = vol.data.reshape(h * w, m)
    rows = np.arange(h * w)[:, None]
    k = pd.shape[-1]
    v_lo = flat[rows, lo_c.reshape(h * w, k)] * ok_lo.reshape(h * w, k)
    v_hi = flat[rows, hi_c.reshape(h * w, k)] * ok_hi.reshape(h * w, k)
    out = ((1 - frac.reshape(h * w, k)) * v_lo
           + frac.reshape(h * w, k) * v_hi).reshape(h, w, k)

    def backward(g):
        g2 = g.reshape(h * w, k)
        f2 = frac.reshape(h * w, k)
        if isinstance(vol, Tensor):
            buf = np.zeros_like(flat)
            np.add.at(buf, (rows.repeat(k, axis=1), lo_c.reshape(h * w, k)),
                      g2 * (1 - f2) * ok_lo.reshape(h * w, k))
            np.add.at(buf, (rows.repeat(k, axis=1), hi_c.reshape(h * w, k)),
                      g2 * f2 * ok_hi.reshape(h * w, k))
            vol.accumulate(buf.reshape(h, w, m))
        if isinstance(pos, Tensor):
            dpos = (v_hi - v_lo) * g2
            pos.accumulate(dpos.reshape(pd.shape))

    return Tensor.make(out, _parents(vol, pos), backward, "lookup_depth_linear")


def gather_lastdim(x: Tensor, idx: np.ndarray,
                   valid: Optional[np.ndarray] = None) -> Tensor:
    """Pick entries of the last axis of x at integer channel indices.

    idx has the shape of the output; invalid entries (per ``valid``) give 0.
    """
    idx = np.asarray(idx, dtype=np.int64)
    m = x.data.shape[-1]
    lead = x.data.shape[:-1]
    k = idx.shape[-1]
    idx_c = np.clip(idx, 0, m - 1)
    flat = x.data.reshape(-1, m)
    rows = np.arange(flat.shape[0])[:, None]
    out = flat[rows, idx_c.reshape(-1, k)]
    if valid is not None:
        out = out * valid.reshape(-1, k)
    out = out.reshape(*lead, k)

    def backward(g):
        g2 = g.reshape(-1, k)
        if valid is not None:
            g2 = g2 * valid.reshape(-1, k)
        buf = np.zeros_like(flat)
        np.add.at(buf, (rows.repeat(k, axis=1), idx_c.reshape(-1, k)), g2)
        x.accumulate(buf.reshape(x.data.shape))

    return Tensor.make(out, (x,), backward, "gather_lastdim")


# ---------------------------------------------------------------------------
# operator sugar on Tensor
# ---------------------------------------------------------------------------

def _coerce(other):
    return other


Tensor.__add__ = lambda self, o: add(self, _coerce(o))
Tensor.__radd__ = lambda self, o: add(_coerce(o), self)
Tensor.__sub__ = lambda self, o: sub(self, _coerce(o))
Tensor.__rsub__ = lambda self, o: sub(_coerce(o), self)
Tensor.__mul__ = lambda self, o: mul(self, _coerce(o))
Tensor.__rmul__ = lambda self, o: mul(_coerce(o), self)
Tensor.__truediv__ = lambda self, o: div(self, _coerce(o))
Tensor.__rtruediv__ = lambda self, o: div(_coerce(o), self)
Tensor.__neg__ = lambda self: neg(self)
Tensor.__pow__ = lambda self, e: pow_scalar(self, e)
Tensor.__matmul__ = lambda self, o: matmul(self, o)
Tensor.__getitem__ = lambda self, idx: getitem(self, idx)
Tensor.reshape = lambda self, *s: reshape(self, s[0] if len(s) == 1 and
                                          isinstance(s[0], (tuple, list)) else s)
Tensor.transpose = lambda self, *axes: transpose(
    self, axes[0] if len(axes) == 1 and isinstance(axes[0], (tuple, list))
    else axes)
Tensor.sum = lambda self, axis=None, keepdims=False: sum_(self, axis, keepdims)
Tensor.mean = lambda self, axis=None, keepdims=False: mean(self, axis, keepdims)
Tensor.clamp = lambda self, lo=None, hi=None: clamp(self, lo, hi)
Tensor.relu = lambda self: relu(self)
Tensor.tanh = lambda self: tanh(self)
Tensor.sigmoid = lambda self: sigmoid(self)
Tensor.abs = lambda self: absolute(self)
Tensor.exp = lambda self: exp(self)
Tensor.log = lambda self: log(self)
Tensor.sqrt = lambda self: sqrt(self)

"""Forward/backward primitives for the 3D conv graph.

Public activations are (C, T, H, W) arrays and conv kernels
(C_out, C_in, kT, kH, kW). Internally the model runs batched
channels-last tensors (N, T, H, W, C), which keeps the patch matrix copy
contiguous along channels; the ``*_cl_*`` functions are that path and the
(C, T, H, W) functions wrap it.

Everything is dtype-generic: parameters live in float32, gradcheck re-runs
the same code in float64.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when tensor extents are incompatible with a layer."""


_DIM_NAMES = ("T", "H", "W")
# upper bound on patch-matrix elements materialized at once
_COLS_BUDGET = 1 << 25


def _triple(v) -> tuple[int, int, int]:
    if isinstance(v, (int, np.integer)):
        return (int(v),) * 3
    t = tuple(int(x) for x in v)
    if len(t) != 3:
        raise ShapeError(f"expected 3 values, got {v!r}")
    return t


def out_extent(n: int, k: int, s: int, p: int) -> int:
    return (n + 2 * p - k) // s + 1


def output_dims(in_dims, kernel, stride, padding) -> tuple[int, int, int]:
    """Floor-mode output extents for (T, H, W)."""
    kernel, stride, padding = _triple(kernel), _triple(stride), _triple(padding)
    dims = []
    for name, n, k, s, p in zip(_DIM_NAMES, in_dims, kernel, stride, padding):
        if s < 1 or p < 0:
            raise ShapeError(f"dim {name}: stride must be >= 1 and padding >= 0")
        if n + 2 * p < k:
            raise ShapeError(f"dim {name}: kernel {k} exceeds padded input {n}+2*{p}")
        dims.append(out_extent(n, k, s, p))
    return tuple(dims)


def _useful_offsets(n: int, k: int, s: int, p: int, n_out: int) -> tuple[int, int]:
    # Kernel offsets whose taps only ever land in padding contribute zeros; skip them.
    lo, hi = k, -1
    for d in range(k):
        o_min = max(0, -(-(p - d) // s))
        if o_min < n_out and o_min * s + d - p < n:
            lo, hi = min(lo, d), max(hi, d)
    if hi < lo:  # every tap sees only padding; keep one so the shapes stay valid
        return 0, 1
    return lo, hi + 1


def _pad_cl(x: np.ndarray, padding, value=0.0) -> np.ndarray:
    pT, pH, pW = padding
    if pT == pH == pW == 0:
        return x
    return np.pad(x, ((0, 0), (pT, pT), (pH, pH), (pW, pW), (0, 0)), constant_values=value)


def _windows_cl(xp, ksize, stride, out_dims, origin=(0, 0, 0)):
    """(N, T', H', W', C, kt, kh, kw) strided view of patches."""
    t0, h0, w0 = origin
    sT, sH, sW = stride
    To, Ho, Wo = out_dims
    sub = xp[:, t0:, h0:, w0:]
    view = sliding_window_view(sub, ksize, axis=(1, 2, 3))
    return view[:, : (To - 1) * sT + 1 : sT, : (Ho - 1) * sH + 1 : sH, : (Wo - 1) * sW + 1 : sW]


def _im2col_cl(xp, ksize, stride, out_dims, origin):
    """Patch matrix (N*T'*H'*W', kt*kh*kw*C), channel fastest."""
    view = _windows_cl(xp, ksize, stride, out_dims, origin)
    n = xp.shape[0]
    c = xp.shape[-1]
    rows = n * int(np.prod(out_dims))
    return view.transpose(0, 1, 2, 3, 5, 6, 7, 4).reshape(rows, int(np.prod(ksize)) * c)


@dataclass
class ConvCache:
    input: np.ndarray            # channels-last (N, T, H, W, C)
    stride: tuple[int, int, int]
    padding: tuple[int, int, int]
    window: tuple[tuple[int, int], ...]
    out_dims: tuple[int, int, int]


def _check_conv(x_cl, kernel, bias):
    if kernel.ndim != 5:
        raise ShapeError(f"conv3d kernel must be rank 5, got rank {kernel.ndim}")
    c_out, c_in = kernel.shape[:2]
    if x_cl.shape[-1] != c_in:
        raise ShapeError(f"dim C: input has {x_cl.shape[-1]} channels, kernel expects {c_in}")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"bias must have shape ({c_out},), got {bias.shape}")


def _chunks(n, per_sample):
    step = max(1, _COLS_BUDGET // max(1, per_sample))
    return [(i, min(n, i + step)) for i in range(0, n, step)]


def _kernel_matrix(kernel, window):
    (t0, t1), (h0, h1), (w0, w1) = window
    sub = kernel[:, :, t0:t1, h0:h1, w0:w1]
    # rows ordered (kt, kh, kw, C_in) to match the patch matrix
    return sub.transpose(2, 3, 4, 1, 0).reshape(-1, kernel.shape[0])


def conv3d_cl_forward(x, kernel, bias, stride=1, padding=0):
    """Batched channels-last conv: (N, T, H, W, C_in) -> (N, T', H', W', C_out)."""
    stride, padding = _triple(stride), _triple(padding)
    if x.ndim != 5:
        raise ShapeError(f"batched conv3d input must be rank 5, got rank {x.ndim}")
    _check_conv(x, kernel, bias)
    ksize = kernel.shape[2:]
    out_dims = output_dims(x.shape[1:4], ksize, stride, padding)
    window = tuple(_useful_offsets(n, k, s, p, o)
                   for n, k, s, p, o in zip(x.shape[1:4], ksize, stride, padding, out_dims))
    sub_k = tuple(b - a for a, b in window)
    origin = tuple(a for a, _ in window)
    wmat = _kernel_matrix(kernel, window)
    xp = _pad_cl(x, padding)
    N, c_out = x.shape[0], kernel.shape[0]
    P = int(np.prod(out_dims))
    out = np.empty((N * P, c_out), dtype=np.result_type(x, kernel))
    for a, b in _chunks(N, P * wmat.shape[0]):
        cols = _im2col_cl(xp[a:b], sub_k, stride, out_dims, origin)
        np.matmul(cols, wmat, out=out[a * P : b * P])
    if bias is not None:
        out += bias
    cache = ConvCache(x, stride, padding, window, out_dims)
    return out.reshape((N,) + out_dims + (c_out,)), cache


def conv3d_cl_backward(grad_out, cache: ConvCache, kernel, need_input_grad=True):
    """Returns (grad_input, grad_kernel, grad_bias) summed over the batch."""
    x = cache.input
    N = x.shape[0]
    c_out, c_in = kernel.shape[:2]
    out_dims = cache.out_dims
    if grad_out.shape != (N,) + out_dims + (c_out,):
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match forward output "
                         f"{(N,) + out_dims + (c_out,)}")
    window = cache.window
    sub_k = tuple(b - a for a, b in window)
    origin = tuple(a for a, _ in window)
    P = int(np.prod(out_dims))
    g = grad_out.reshape(N * P, c_out)
    xp = _pad_cl(x, cache.padding)
    K = int(np.prod(sub_k)) * c_in

    gw = np.zeros((K, c_out), dtype=g.dtype)
    for a, b in _chunks(N, P * K):
        cols = _im2col_cl(xp[a:b], sub_k, cache.stride, out_dims, origin)
        gw += cols.T @ g[a * P : b * P]
        del cols
    grad_kernel = np.zeros_like(kernel)
    (t0, t1), (h0, h1), (w0, w1) = window
    grad_kernel[:, :, t0:t1, h0:h1, w0:w1] = (
        gw.reshape(sub_k + (c_in, c_out)).transpose(4, 3, 0, 1, 2))
    grad_bias = g.sum(axis=0)
    if not need_input_grad:
        return None, grad_kernel, grad_bias

    wmat = _kernel_matrix(kernel, window)
    gxp = np.zeros(xp.shape, dtype=g.dtype)
    sT, sH, sW = cache.stride
    To, Ho, Wo = out_dims
    kt, kh, kw = sub_k
    for a, b in _chunks(N, P * K):
        gcols = (g[a * P : b * P] @ wmat.T).reshape((b - a,) + out_dims + sub_k + (c_in,))
        dst = gxp[a:b]
        for i in range(kt):
            ti = t0 + i
            for j in range(kh):
                hj = h0 + j
                for k in range(kw):
                    wk = w0 + k
                    dst[:, ti : ti + (To - 1) * sT + 1 : sT,
                        hj : hj + (Ho - 1) * sH + 1 : sH,
                        wk : wk + (Wo - 1) * sW + 1 : sW] += gcols[:, :, :, :, i, j, k]
        del gcols
    pT, pH, pW = cache.padding
    T, H, W = x.shape[1:4]
    grad_input = gxp[:, pT : pT + T, pH : pH + H, pW : pW + W]
    return np.ascontiguousarray(grad_input), grad_kernel, grad_bias


def _to_cl(x):
    return np.ascontiguousarray(np.moveaxis(x, 0, -1))[None]


def _from_cl(y):
    return np.ascontiguousarray(np.moveaxis(y[0], -1, 0))


def conv3d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
                   stride=1, padding=0) -> tuple[np.ndarray, ConvCache]:
    """Cross-correlation of a (C_in, T, H, W) input with a 5-D kernel, plus bias."""
    if x.ndim != 4:
        raise ShapeError(f"conv3d input must be rank 4 (C,T,H,W), got rank {x.ndim}")
    y, cache = conv3d_cl_forward(_to_cl(x), kernel, bias, stride, padding)
    return _from_cl(y), cache


def conv3d_backward(grad_out: np.ndarray, cache: ConvCache, kernel: np.ndarray,
                    need_input_grad: bool = True):
    """(grad_input, grad_kernel, grad_bias) for a (C_out, T', H', W') output gradient."""
    want = (kernel.shape[0],) + cache.out_dims
    if grad_out.shape != want:
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match forward output {want}")
    gx, gk, gb = conv3d_cl_backward(_to_cl(grad_out), cache, kernel, need_input_grad)
    return (None if gx is None else _from_cl(gx)), gk, gb


@dataclass
class PoolCache:
    in_shape: tuple[int, ...]
    argmax: np.ndarray  # flat index into the unpadded input, one per output cell


def _check_pool_windows(in_dims, kernel, stride, padding, out_dims):
    for name, n, k, s, p, o in zip(_DIM_NAMES, in_dims, kernel, stride, padding, out_dims):
        # windows are monotone in position, so checking both ends covers all
        for i in (0, o - 1):
            start = i * s - p
            if start + k <= 0 or start >= n:
                raise ShapeError(f"dim {name}: pooling window {i} lies entirely in padding")


def maxpool3d_cl_forward(x, kernel, stride=None, padding=0):
    """Batched channels-last max pooling in floor mode.

    Padding cells are -inf and never win; ties resolve to the first cell in
    (t, h, w) order, i.e. the lowest flat input index.
    """
    kernel = _triple(kernel)
    stride = kernel if stride is None else _triple(stride)
    padding = _triple(padding)
    if x.ndim != 5:
        raise ShapeError(f"batched maxpool3d input must be rank 5, got rank {x.ndim}")
    N, T, H, W, C = x.shape
    out_dims = output_dims((T, H, W), kernel, stride, padding)
    _check_pool_windows((T, H, W), kernel, stride, padding, out_dims)
    xp = _pad_cl(x, padding, value=-np.inf)
    view = _windows_cl(xp, kernel, stride, out_dims)
    To, Ho, Wo = out_dims
    flat = view.reshape(N, To, Ho, Wo, C, -1)
    local = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]

    kt, kh, kw = kernel
    lt, rem = np.divmod(local, kh * kw)
    lh, lw = np.divmod(rem, kw)
    sT, sH, sW = stride
    pT, pH, pW = padding
    it = np.arange(To)[None, :, None, None, None] * sT - pT + lt
    ih = np.arange(Ho)[None, None, :, None, None] * sH - pH + lh
    iw = np.arange(Wo)[None, None, None, :, None] * sW - pW + lw
    iN = np.arange(N)[:, None, None, None, None]
    iC = np.arange(C)[None, None, None, None, :]
    argmax = (((iN * T + it) * H + ih) * W + iw) * C + iC
    return np.ascontiguousarray(out), PoolCache(x.shape, argmax)


def maxpool3d_cl_backward(grad_out, cache: PoolCache):
    if grad_out.shape != cache.argmax.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match pooled output "
                         f"{cache.argmax.shape}")
    size = int(np.prod(cache.in_shape))
    g = np.bincount(cache.argmax.ravel(), weights=grad_out.ravel(), minlength=size)
    return g.astype(grad_out.dtype, copy=False).reshape(cache.in_shape)


def maxpool3d_forward(x: np.ndarray, kernel, stride=None, padding=0):
    """(C, T, H, W) max pooling; returns (output, cache holding argmax indices)."""
    if x.ndim != 4:
        raise ShapeError(f"maxpool3d input must be rank 4 (C,T,H,W), got rank {x.ndim}")
    y, cache = maxpool3d_cl_forward(_to_cl(x), kernel, stride, padding)
    return _from_cl(y), cache


def maxpool3d_backward(grad_out: np.ndarray, cache: PoolCache) -> np.ndarray:
    g = maxpool3d_cl_backward(_to_cl(grad_out), cache)
    return _from_cl(g)


def relu_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mask = x > 0
    return x * mask, mask


def relu_backward(grad_out: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return grad_out * mask


def linear_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map on the last axis; x may be a vector or a (batch, n_in) matrix."""
    if weight.ndim != 2:
        raise ShapeError(f"linear weight must be a matrix, got rank {weight.ndim}")
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"fan-in mismatch: input has {x.shape[-1]}, weight expects {weight.shape[1]}")
    return x @ weight.T + bias


def linear_backward(grad_out: np.ndarray, x: np.ndarray, weight: np.ndarray):
    """Returns (grad_input, grad_weight, grad_bias); batch rows are summed."""
    if grad_out.shape[-1] != weight.shape[0]:
        raise ShapeError(f"grad_out has {grad_out.shape[-1]} features, weight has {weight.shape[0]} rows")
    g2 = np.atleast_2d(grad_out)
    x2 = np.atleast_2d(x)
    grad_w = g2.T @ x2
    grad_b = g2.sum(axis=0)
    grad_x = grad_out @ weight
    return grad_x, grad_w, grad_b


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Cross-entropy of one logit vector against a class id, with its gradient."""
    logits = np.asarray(logits)
    if not 0 <= int(label) < logits.shape[-1]:
        raise ValueError(f"label {label} outside [0, {logits.shape[-1]})")
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits")
    z = logits - logits.max()
    lse = np.log(np.exp(z).sum())
    loss = float(lse - z[label])
    grad = np.exp(z - lse)
    grad[label] -= 1
    return loss, grad


def flatten(x: np.ndarray) -> np.ndarray:
    return x.reshape(-1)


def concat(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.concatenate([a, b], axis=-1)

"""Neural building blocks: convolutions, linear, normalizations, activations.

Convolutions are same-padded cross-correlations implemented as im2col plus
BLAS matrix products, with hand-derived backward rules; the transposed
convolution is the exact linear adjoint of the matching strided convolution,
so its output length is input_length * stride.

Parameter initialization follows the audio-GAN conventions: weights from
N(0, 0.02), biases zero, layer-norm affine at identity, GRN affine at zero.
"""

from __future__ import annotations

from typing import Iterator, Optional

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.special import erf

from .errors import ShapeError
from .tensor import Tensor, apply_op

WEIGHT_STD = 0.02


class Parameter(Tensor):
    """A trainable tensor; modules discover these structurally."""

    __slots__ = ()

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class Module:
    """Minimal parameter container with dotted-name discovery."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{key}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{key}.{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def set_trainable(self, flag: bool) -> None:
        for p in self.parameters():
            p.requires_grad = flag


def same_pad(length: int, kernel: int, stride: int, dilation: int = 1) -> tuple[int, int, int]:
    """(output_length, pad_left, pad_right) keeping output = ceil(length/stride)."""
    effective = (kernel - 1) * dilation + 1
    out = -(-length // stride)
    total = max((out - 1) * stride + effective - length, 0)
    return out, total // 2, total - total // 2


# ---------------------------------------------------------------------------
# 1-D convolution kernels
# ---------------------------------------------------------------------------

def _cols1d(xp: np.ndarray, out_len: int, kernel: int, stride: int, dilation: int):
    sb, sc, sl = xp.strides
    return as_strided(xp, (xp.shape[0], xp.shape[1], out_len, kernel),
                      (sb, sc, stride * sl, dilation * sl))


def _col2im1d(dcols: np.ndarray, padded_len: int, stride: int, dilation: int) -> np.ndarray:
    b, c, out_len, kernel = dcols.shape
    buf = np.zeros((b, c, padded_len), dtype=dcols.dtype)
    for t in range(kernel):
        start = t * dilation
        buf[:, :, start:start + stride * (out_len - 1) + 1:stride] += dcols[:, :, :, t]
    return buf


def _conv1d_value(x, w, stride, dilation, groups):
    b, ci, length = x.shape
    co, cig, kernel = w.shape
    out_len, pl, pr = same_pad(length, kernel, stride, dilation)
    xp = np.pad(x, ((0, 0), (0, 0), (pl, pr)))
    cols = _cols1d(xp, out_len, kernel, stride, dilation)
    if groups == 1:
        flat = cols.transpose(0, 2, 1, 3).reshape(b * out_len, ci * kernel)
        y = (flat @ w.reshape(co, ci * kernel).T).reshape(b, out_len, co)
        y = np.ascontiguousarray(y.transpose(0, 2, 1))
    elif groups == ci and ci == co:
        y = np.einsum("bclk,ck->bcl", cols, w[:, 0, :], optimize=True)
    else:
        colsg = cols.reshape(b, groups, cig, out_len, kernel)
        y = np.einsum("bgilk,goik->bgol", colsg,
                      w.reshape(groups, co // groups, cig, kernel),
                      optimize=True).reshape(b, co, out_len)
    return y, xp, (out_len, pl)


def _conv1d_grads(g, xp, w, stride, dilation, groups, length,
                  need_x: bool, need_w: bool):
    b, ci = xp.shape[0], xp.shape[1]
    co, cig, kernel = w.shape
    out_len = g.shape[2]
    cols = _cols1d(xp, out_len, kernel, stride, dilation)
    gw = gx = None
    if groups == 1:
        if need_w:
            gw = np.einsum("bol,bilk->oik", g, cols, optimize=True)
        if need_x:
            dcols = np.einsum("bol,oik->bilk", g, w, optimize=True)
    elif groups == ci and ci == co:
        if need_w:
            gw = np.einsum("bcl,bclk->ck", g, cols, optimize=True)[:, None, :]
        if need_x:
            dcols = g[:, :, :, None] * w[:, 0, :][None, :, None, :]
    else:
        colsg = cols.reshape(b, groups, cig, out_len, kernel)
        gg = g.reshape(b, groups, co // groups, out_len)
        if need_w:
            gw = np.einsum("bgol,bgilk->goik", gg, colsg,
                           optimize=True).reshape(co, cig, kernel)
        if need_x:
            dcols = np.einsum("bgol,goik->bgilk", gg,
                              w.reshape(groups, co // groups, cig, kernel),
                              optimize=True).reshape(b, ci, out_len, kernel)
    if need_x:
        pl = (same_pad(length, kernel, stride, dilation))[1]
        gx = _col2im1d(dcols, xp.shape[2], stride, dilation)[:, :, pl:pl + length]
    return gx, gw


def conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, dilation: int = 1, groups: int = 1) -> Tensor:
    """Same-padded 1-D cross-correlation, [B, C_in, L] -> [B, C_out, ceil(L/stride)]."""
    if x.ndim != 3:
        raise ShapeError(f"conv1d expects [B, C, L], got {x.shape}")
    co, cig, _ = weight.shape
    if x.shape[1] != cig * groups:
        raise ShapeError(
            f"conv1d channel mismatch: input has {x.shape[1]}, weight wants {cig * groups}")
    length = x.shape[2]
    value, xp, _ = _conv1d_value(x.data, weight.data, stride, dilation, groups)
    if bias is not None:
        value += bias.data[:, None]
    need_x, need_w = x._in_graph(), weight._in_graph()
    wv = weight.data

    def backward(g):
        gx, gw = _conv1d_grads(g, xp, wv, stride, dilation, groups, length,
                               need_x, need_w)
        if bias is None:
            return (gx, gw)
        return (gx, gw, g.sum(axis=(0, 2)))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return apply_op(value, parents, backward)


def conv_transpose1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
                     stride: int = 1) -> Tensor:
    """Adjoint of the matching same-padded conv1d; [B, C_in, L] -> [B, C_out, L*stride].

    `weight` has shape [C_in, C_out, kernel]; with equal weights and zero
    bias, <conv1d(u), v> == <u, conv_transpose1d(v)> holds exactly.
    """
    if x.ndim != 3:
        raise ShapeError(f"conv_transpose1d expects [B, C, L], got {x.shape}")
    ci, co, kernel = weight.shape
    if x.shape[1] != ci:
        raise ShapeError(
            f"conv_transpose1d channel mismatch: input has {x.shape[1]}, weight wants {ci}")
    length = x.shape[2]
    full = length * stride
    _, pl, pr = same_pad(full, kernel, stride)
    wv = weight.data

    dcols = np.einsum("bol,oik->bilk", x.data, wv, optimize=True)
    value = _col2im1d(dcols, full + pl + pr, stride, 1)[:, :, pl:pl + full]
    if bias is not None:
        value += bias.data[:, None]
    need_x, need_w = x._in_graph(), weight._in_graph()

    def backward(g):
        gx = gw = None
        gp = np.pad(g, ((0, 0), (0, 0), (pl, pr)))
        cols = _cols1d(gp, length, kernel, stride, 1)
        if need_x:
            flat = cols.transpose(0, 2, 1, 3).reshape(g.shape[0] * length, co * kernel)
            gx = flat @ wv.reshape(ci, co * kernel).T
            gx = np.ascontiguousarray(
                gx.reshape(g.shape[0], length, ci).transpose(0, 2, 1))
        if need_w:
            gw = np.einsum("bol,bilk->oik", x.data, cols, optimize=True)
        if bias is None:
            return (gx, gw)
        return (gx, gw, g.sum(axis=(0, 2)))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return apply_op(value, parents, backward)


# ---------------------------------------------------------------------------
# 2-D convolution kernels
# ---------------------------------------------------------------------------

def _cols2d(xp: np.ndarray, out_h: int, out_w: int, kh: int, kw: int,
            sh: int, sw: int):
    s0, s1, s2, s3 = xp.strides
    return as_strided(
        xp, (xp.shape[0], xp.shape[1], out_h, out_w, kh, kw),
        (s0, s1, sh * s2, sw * s3, s2, s3))


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: tuple[int, int] = (1, 1)) -> Tensor:
    """Same-padded 2-D cross-correlation, [B, C, H, W] -> [B, C_out, H', W']."""
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects [B, C, H, W], got {x.shape}")
    co, ci, kh, kw = weight.shape
    if x.shape[1] != ci:
        raise ShapeError(
            f"conv2d channel mismatch: input has {x.shape[1]}, weight wants {ci}")
    b, _, h, w = x.shape
    sh, sw = stride
    oh, pt, pb = same_pad(h, kh, sh)
    ow, pleft, pright = same_pad(w, kw, sw)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pleft, pright)))
    cols = _cols2d(xp, oh, ow, kh, kw, sh, sw)
    flat = cols.transpose(0, 2, 3, 1, 4, 5).reshape(b * oh * ow, ci * kh * kw)
    wv = weight.data
    value = (flat @ wv.reshape(co, -1).T).reshape(b, oh, ow, co)
    value = np.ascontiguousarray(value.transpose(0, 3, 1, 2))
    if bias is not None:
        value += bias.data[:, None, None]
    need_x, need_w = x._in_graph(), weight._in_graph()

    def backward(g):
        gx = gw = None
        if need_w:
            gw = np.einsum("bohw,bihwjk->oijk", g, cols, optimize=True)
        if need_x:
            dcols = np.einsum("bohw,oijk->bihwjk", g, wv, optimize=True)
            buf = np.zeros_like(xp)
            for j in range(kh):
                for t in range(kw):
                    buf[:, :, j:j + sh * (oh - 1) + 1:sh,
                        t:t + sw * (ow - 1) + 1:sw] += dcols[:, :, :, :, j, t]
            gx = buf[:, :, pt:pt + h, pleft:pleft + w]
        if bias is None:
            return (gx, gw)
        return (gx, gw, g.sum(axis=(0, 2, 3)))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return apply_op(value, parents, backward)


# ---------------------------------------------------------------------------
# activations and normalizations
# ---------------------------------------------------------------------------

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x) with the erf-based normal CDF."""
    xv = x.data
    cdf = 0.5 * (1.0 + erf(xv * _INV_SQRT2))
    return apply_op(xv * cdf, (x,),
                    lambda g: (g * (cdf + xv * _INV_SQRT_2PI * np.exp(-0.5 * xv * xv)),))


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    xv = x.data
    pos = xv >= 0
    return apply_op(np.where(pos, xv, slope * xv), (x,),
                    lambda g: (g * np.where(pos, 1.0, slope),))


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize the trailing feature dimension, then apply the affine pair."""
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = centered.square().mean(axis=-1, keepdims=True)
    return centered / (var + eps).sqrt() * gamma + beta


def grn(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Global response normalization over [B, L, F] (ConvNeXt v2 form)."""
    if x.ndim != 3:
        raise ShapeError(f"grn expects [B, L, F], got {x.shape}")
    norms = x.square().sum(axis=1, keepdims=True).sqrt()
    scaled = norms / (norms.mean(axis=-1, keepdims=True) + eps)
    return x * scaled * gamma + beta + x


# ---------------------------------------------------------------------------
# layer objects
# ---------------------------------------------------------------------------

class Conv1d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, stride: int = 1, dilation: int = 1,
                 groups: int = 1, dtype=np.float64):
        if in_channels % groups or out_channels % groups:
            raise ShapeError("groups must divide both channel counts")
        self.stride = stride
        self.dilation = dilation
        self.groups = groups
        self.weight = Parameter(
            rng.normal(0.0, WEIGHT_STD,
                       (out_channels, in_channels // groups, kernel_size)),
            dtype=dtype)
        self.bias = Parameter(np.zeros(out_channels), dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d(x, self.weight, self.bias, self.stride, self.dilation,
                      self.groups)


class ConvTranspose1d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, stride: int = 1, dtype=np.float64):
        self.stride = stride
        self.weight = Parameter(
            rng.normal(0.0, WEIGHT_STD, (in_channels, out_channels, kernel_size)),
            dtype=dtype)
        self.bias = Parameter(np.zeros(out_channels), dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return conv_transpose1d(x, self.weight, self.bias, self.stride)


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int,
                 kernel_size: tuple[int, int], rng: np.random.Generator,
                 stride: tuple[int, int] = (1, 1), dtype=np.float64):
        self.stride = stride
        self.weight = Parameter(
            rng.normal(0.0, WEIGHT_STD, (out_channels, in_channels) + tuple(kernel_size)),
            dtype=dtype)
        self.bias = Parameter(np.zeros(out_channels), dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.stride)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator, dtype=np.float64, zero_init: bool = False):
        if zero_init:
            w = np.zeros((in_features, out_features))
        else:
            w = rng.normal(0.0, WEIGHT_STD, (in_features, out_features))
        self.weight = Parameter(w, dtype=dtype)
        self.bias = Parameter(np.zeros(out_features), dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise ShapeError(
                f"linear expects trailing dim {self.weight.shape[0]}, got {x.shape}")
        return x @ self.weight + self.bias


class LayerNorm(Module):
    def __init__(self, features: int, dtype=np.float64, eps: float = 1e-6):
        self.eps = eps
        self.gamma = Parameter(np.ones(features), dtype=dtype)
        self.beta = Parameter(np.zeros(features), dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


class GRN(Module):
    def __init__(self, features: int, dtype=np.float64, eps: float = 1e-6):
        self.eps = eps
        self.gamma = Parameter(np.zeros(features), dtype=dtype)
        self.beta = Parameter(np.zeros(features), dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return grn(x, self.gamma, self.beta, self.eps)

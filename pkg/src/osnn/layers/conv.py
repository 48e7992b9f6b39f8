"""Convolution through im2col and a blocked kernel matrix; adaptive average pooling."""

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..kernels import col2im as _col2im
from ..kernels import conv_out_size
from ..kernels import im2col as _im2col
from ..numerics import autograd as ag
from .blocked import forward_blocked


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: tuple = (3, 3)
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        kh, kw = self.kernel
        if min(self.in_channels, self.out_channels, kh, kw, self.stride) < 1 or self.padding < 0:
            raise ShapeError(f"invalid convolution spec {self}")

    @property
    def fan_in(self):
        return self.in_channels * self.kernel[0] * self.kernel[1]

    def output_hw(self, h, w):
        kh, kw = self.kernel
        if h + 2 * self.padding < kh or w + 2 * self.padding < kw:
            raise ShapeError(f"kernel {self.kernel} larger than padded input {h}x{w} (pad {self.padding})")
        return conv_out_size(h, kh, self.stride, self.padding), conv_out_size(w, kw, self.stride, self.padding)


def _batched(x, spec):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 3
    X = x[None] if single else x
    if X.ndim != 4 or X.shape[1] != spec.in_channels:
        raise ShapeError(f"expected input [N, {spec.in_channels}, H, W], got {x.shape}")
    spec.output_hw(X.shape[2], X.shape[3])
    return X, single


def im2col(x, spec):
    """[C, H, W] -> [C*kh*kw, Ho*Wo] (or batched [N, C, H, W] -> [C*kh*kw, N*Ho*Wo])."""
    X, _ = _batched(x, spec)
    return _im2col(X, spec.kernel[0], spec.kernel[1], spec.stride, spec.padding)


def conv_forward(layer, x, spec):
    """Convolution with the blocked layer as (out_channels x C*kh*kw) kernel matrix."""
    if layer.n != spec.fan_in or layer.m != spec.out_channels:
        raise ShapeError(f"layer is {layer.m}x{layer.n} but the convolution needs "
                         f"{spec.out_channels}x{spec.fan_in}")
    X, single = _batched(x, spec)
    N = X.shape[0]
    ho, wo = spec.output_hw(X.shape[2], X.shape[3])
    y = forward_blocked(layer, im2col(X, spec))
    y = y.reshape(spec.out_channels, N, ho, wo).transpose(1, 0, 2, 3)
    return y[0] if single else y


def im2col_op(x, spec):
    """Tape op for im2col on [N, C, H, W]; backward is col2im."""
    x = ag.as_tensor(x)
    X, _ = _batched(x.value, spec)
    kh, kw = spec.kernel
    cols = _im2col(X, kh, kw, spec.stride, spec.padding)
    return ag.make_node(cols, (x,), "im2col",
                        lambda g: (_col2im(g, X.shape, kh, kw, spec.stride, spec.padding),))


def cols_to_maps(y, n, ho, wo):
    """[C_out, N*Ho*Wo] -> [N, C_out, Ho, Wo] on the tape."""
    c = y.shape[0]
    return ag.transpose(ag.reshape(y, (c, n, ho, wo)), (1, 0, 2, 3))


def pool_matrix(size_in, size_out):
    """Row i averages input indices floor(i*in/out) .. ceil((i+1)*in/out) - 1."""
    A = np.zeros((size_out, size_in))
    for i in range(size_out):
        lo = (i * size_in) // size_out
        hi = -((-(i + 1) * size_in) // size_out)
        A[i, lo:hi] = 1.0 / (hi - lo)
    return A


def adaptive_avg_pool(x, out_hw):
    x = ag.as_tensor(x)
    N, C, H, W = x.shape
    Ah = pool_matrix(H, out_hw[0])
    Aw = pool_matrix(W, out_hw[1])
    y = np.einsum("ph,nchw,qw->ncpq", Ah, x.value, Aw, optimize=True)
    return ag.make_node(y, (x,), "adaptive_avg_pool",
                        lambda g: (np.einsum("ph,ncpq,qw->nchw", Ah, g, Aw, optimize=True),))

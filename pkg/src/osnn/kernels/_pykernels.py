"""Pure numpy versions of the hot kernels (fallback when the extension is absent)."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _split(a, S):
    # [blocks, k, C] -> [S, k, blocks, C/S]
    nb, k, C = a.shape
    return a.reshape(nb, k, S, C // S).transpose(2, 1, 0, 3)


def _merge(a):
    # inverse of _split
    S, k, nb, cols = a.shape
    return a.transpose(2, 1, 0, 3).reshape(nb, k, S * cols)


def _kappa(x, Pr, Pi, ns, k):
    X = x.reshape(ns, k, -1)
    kr = Pr @ X
    ki = Pi @ X if Pi is not None else None
    return kr, ki


def bsp_forward(x, Br, Bi, Pr, Pi, sr, si):
    """y = Re(B . sum_j sigma_ij * (P x_j)) for every column of ``x``.

    x: [n*.k, C]; B, P: k x k (real/imag parts, imag may be None);
    sigma: [S, m*, n*, k] with S == 1 (shared) or S dividing C (one
    sigma set per contiguous group of C/S columns).
    """
    S, ms, ns, k = sr.shape
    kr, ki = _kappa(x, Pr, Pi, ns, k)
    srT = sr.transpose(0, 3, 1, 2)
    Kr = _split(kr, S)
    zr = srT @ Kr
    zi = None
    if ki is not None or si is not None:
        siT = si.transpose(0, 3, 1, 2) if si is not None else None
        Ki = _split(ki, S) if ki is not None else None
        zi = np.zeros_like(zr)
        if Ki is not None:
            zr -= siT @ Ki if siT is not None else 0.0
            zi += srT @ Ki
        if siT is not None:
            zi += siT @ Kr
    y = Br @ _merge(zr)
    if Bi is not None and zi is not None:
        y -= Bi @ _merge(zi)
    return y.reshape(ms * k, -1)


def bsp_backward(g, x, Br, Bi, Pr, Pi, sr, si):
    """Gradients of sum(g * bsp_forward(...)) wrt x, sigma real and imag."""
    S, ms, ns, k = sr.shape
    kr, ki = _kappa(x, Pr, Pi, ns, k)
    G = g.reshape(ms, k, -1)
    gzr = _split(Br.T @ G, S)
    gzi = _split(-(Bi.T @ G), S) if Bi is not None else None
    Kr = _split(kr, S)
    Ki = _split(ki, S) if ki is not None else None
    KrT = Kr.transpose(0, 1, 3, 2)

    dsr = gzr @ KrT
    if gzi is not None and Ki is not None:
        dsr += gzi @ Ki.transpose(0, 1, 3, 2)
    dsi = np.zeros_like(dsr)
    if Ki is not None:
        dsi -= gzr @ Ki.transpose(0, 1, 3, 2)
    if gzi is not None:
        dsi += gzi @ KrT

    srT = sr.transpose(0, 3, 2, 1)  # [S, k, n*, m*]
    gkr = srT @ gzr
    gki = None
    if si is not None:
        siT = si.transpose(0, 3, 2, 1)
        if gzi is not None:
            gkr += siT @ gzi
        gki = -(siT @ gzr)
    if gzi is not None:
        gki = srT @ gzi if gki is None else gki + srT @ gzi
    dx = Pr.T @ _merge(gkr)
    if Pi is not None and gki is not None:
        dx += Pi.T @ _merge(gki)
    return dx.reshape(ns * k, -1), dsr.transpose(0, 2, 3, 1), dsi.transpose(0, 2, 3, 1)


def conv_out_size(size, kernel, stride, pad):
    return (size + 2 * pad - kernel) // stride + 1


def im2col(x, kh, kw, stride, pad):
    """[N, C, H, W] -> [C*kh*kw, N*Ho*Wo], rows (c, i, j), columns (n, oh, ow)."""
    N, C, H, W = x.shape
    Ho = conv_out_size(H, kh, stride, pad)
    Wo = conv_out_size(W, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :Ho, :Wo]
    return np.ascontiguousarray(win.transpose(1, 4, 5, 0, 2, 3)).reshape(C * kh * kw, N * Ho * Wo)


def col2im(cols, x_shape, kh, kw, stride, pad):
    """Adjoint of im2col: scatter-add columns back onto the input grid."""
    N, C, H, W = x_shape
    Ho = conv_out_size(H, kh, stride, pad)
    Wo = conv_out_size(W, kw, stride, pad)
    c6 = cols.reshape(C, kh, kw, N, Ho, Wo)
    xp = np.zeros((N, C, H + 2 * pad, W + 2 * pad))
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += c6[:, i, j].transpose(1, 0, 2, 3)
    if pad:
        return xp[:, :, pad:pad + H, pad:pad + W].copy()
    return xp

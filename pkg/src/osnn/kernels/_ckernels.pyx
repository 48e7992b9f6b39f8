# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels; same contracts as ``_pykernels``.

The block product is processed in column tiles so every inner loop runs
over contiguous columns (auto-vectorizable), with the k x k transforms and
the sigma contraction fused per tile.
"""

import numpy as np

DEF TILE = 128


cdef inline void _apply(const double[:, ::1] M, bint transpose, const double[:, ::1] src,
                        Py_ssize_t src_off, Py_ssize_t src_col, double[:, ::1] dst,
                        Py_ssize_t dst_off, Py_ssize_t dst_col, Py_ssize_t nblocks, Py_ssize_t k,
                        Py_ssize_t nt, double scale, bint accumulate) noexcept nogil:
    # dst[blk*k+d, dst_col+t] (+)= scale * sum_b M[d,b] src[blk*k+b, src_col+t]
    cdef Py_ssize_t blk, d, b, t, rd, rb
    cdef double m
    for blk in range(nblocks):
        for d in range(k):
            rd = dst_off + blk * k + d
            if not accumulate:
                for t in range(nt):
                    dst[rd, dst_col + t] = 0.0
            for b in range(k):
                m = scale * (M[b, d] if transpose else M[d, b])
                if m == 0.0:
                    continue
                rb = src_off + blk * k + b
                for t in range(nt):
                    dst[rd, dst_col + t] += m * src[rb, src_col + t]


cdef void _fwd(const double[:, ::1] x, const double[:, ::1] Br, const double[:, ::1] Bi,
               const double[:, ::1] Pr, const double[:, ::1] Pi,
               const double[:, :, :, ::1] sr, const double[:, :, :, ::1] si, bint cplx,
               double[:, ::1] y, double[:, ::1] kr, double[:, ::1] ki,
               double[:, ::1] zr, double[:, ::1] zi, Py_ssize_t cols) noexcept nogil:
    cdef Py_ssize_t C = x.shape[1]
    cdef Py_ssize_t S = sr.shape[0], ms = sr.shape[1], ns = sr.shape[2], k = sr.shape[3]
    cdef Py_ssize_t s, c0, c1, nt, i, j, d, t, jd
    cdef double a, b
    for s in range(S):
        c0 = s * cols
        while c0 < (s + 1) * cols:
            c1 = min(c0 + TILE, (s + 1) * cols)
            nt = c1 - c0
            _apply(Pr, False, x, 0, c0, kr, 0, 0, ns, k, nt, 1.0, False)
            if cplx:
                _apply(Pi, False, x, 0, c0, ki, 0, 0, ns, k, nt, 1.0, False)
            for i in range(ms):
                for d in range(k):
                    for t in range(nt):
                        zr[d, t] = 0.0
                        if cplx:
                            zi[d, t] = 0.0
                for j in range(ns):
                    for d in range(k):
                        jd = j * k + d
                        a = sr[s, i, j, d]
                        if cplx:
                            b = si[s, i, j, d]
                            for t in range(nt):
                                zr[d, t] += a * kr[jd, t] - b * ki[jd, t]
                                zi[d, t] += a * ki[jd, t] + b * kr[jd, t]
                        else:
                            for t in range(nt):
                                zr[d, t] += a * kr[jd, t]
                _apply(Br, False, zr, 0, 0, y, i * k, c0, 1, k, nt, 1.0, False)
                if cplx:
                    _apply(Bi, False, zi, 0, 0, y, i * k, c0, 1, k, nt, -1.0, True)
            c0 = c1


cdef void _bwd(const double[:, ::1] g, const double[:, ::1] x,
               const double[:, ::1] Br, const double[:, ::1] Bi,
               const double[:, ::1] Pr, const double[:, ::1] Pi,
               const double[:, :, :, ::1] sr, const double[:, :, :, ::1] si, bint cplx,
               double[:, ::1] dx, double[:, :, :, ::1] dsr, double[:, :, :, ::1] dsi,
               double[:, ::1] kr, double[:, ::1] ki, double[:, ::1] gzr, double[:, ::1] gzi,
               double[:, ::1] gkr, double[:, ::1] gki, Py_ssize_t cols) noexcept nogil:
    cdef Py_ssize_t C = x.shape[1]
    cdef Py_ssize_t S = sr.shape[0], ms = sr.shape[1], ns = sr.shape[2], k = sr.shape[3]
    cdef Py_ssize_t s, c0, c1, nt, i, j, d, t, jd, id_
    cdef double a, b, accr, acci
    for s in range(S):
        c0 = s * cols
        while c0 < (s + 1) * cols:
            c1 = min(c0 + TILE, (s + 1) * cols)
            nt = c1 - c0
            _apply(Pr, False, x, 0, c0, kr, 0, 0, ns, k, nt, 1.0, False)
            _apply(Br, True, g, 0, c0, gzr, 0, 0, ms, k, nt, 1.0, False)
            if cplx:
                _apply(Pi, False, x, 0, c0, ki, 0, 0, ns, k, nt, 1.0, False)
                _apply(Bi, True, g, 0, c0, gzi, 0, 0, ms, k, nt, -1.0, False)
            for jd in range(ns * k):
                for t in range(nt):
                    gkr[jd, t] = 0.0
                    if cplx:
                        gki[jd, t] = 0.0
            for i in range(ms):
                for j in range(ns):
                    for d in range(k):
                        jd = j * k + d
                        id_ = i * k + d
                        a = sr[s, i, j, d]
                        if cplx:
                            b = si[s, i, j, d]
                            accr = 0.0
                            acci = 0.0
                            for t in range(nt):
                                accr += gzr[id_, t] * kr[jd, t] + gzi[id_, t] * ki[jd, t]
                                acci += gzi[id_, t] * kr[jd, t] - gzr[id_, t] * ki[jd, t]
                                gkr[jd, t] += a * gzr[id_, t] + b * gzi[id_, t]
                                gki[jd, t] += a * gzi[id_, t] - b * gzr[id_, t]
                            dsr[s, i, j, d] += accr
                            dsi[s, i, j, d] += acci
                        else:
                            accr = 0.0
                            for t in range(nt):
                                accr += gzr[id_, t] * kr[jd, t]
                                gkr[jd, t] += a * gzr[id_, t]
                            dsr[s, i, j, d] += accr
            _apply(Pr, True, gkr, 0, 0, dx, 0, c0, ns, k, nt, 1.0, False)
            if cplx:
                _apply(Pi, True, gki, 0, 0, dx, 0, c0, ns, k, nt, 1.0, True)
            c0 = c1


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _operands(Br, Bi, Pr, Pi, sr, si):
    k = sr.shape[3]
    cplx = not (Bi is None and Pi is None and si is None)
    zero = np.zeros((k, k))
    return (_c(Br), _c(Bi) if Bi is not None else zero, _c(Pr), _c(Pi) if Pi is not None else zero,
            _c(sr), _c(si) if si is not None else np.zeros((1, 1, 1, 1)) if not cplx else np.zeros(sr.shape),
            cplx)


def bsp_forward(x, Br, Bi, Pr, Pi, sr, si):
    S, ms, ns, k = sr.shape
    C = x.shape[1]
    Br, Bi, Pr, Pi, sr, si, cplx = _operands(Br, Bi, Pr, Pi, sr, si)
    y = np.empty((ms * k, C))
    _fwd(_c(x), Br, Bi, Pr, Pi, sr, si, cplx, y,
         np.empty((ns * k, TILE)), np.empty((ns * k, TILE)),
         np.empty((k, TILE)), np.empty((k, TILE)), C // S)
    return y


def bsp_backward(g, x, Br, Bi, Pr, Pi, sr, si):
    S, ms, ns, k = sr.shape
    C = x.shape[1]
    Br, Bi, Pr, Pi, sr, si, cplx = _operands(Br, Bi, Pr, Pi, sr, si)
    dx = np.empty((ns * k, C))
    dsr = np.zeros((S, ms, ns, k))
    dsi = np.zeros((S, ms, ns, k))
    _bwd(_c(g), _c(x), Br, Bi, Pr, Pi, sr, si, cplx, dx, dsr, dsi,
         np.empty((ns * k, TILE)), np.empty((ns * k, TILE)),
         np.empty((ms * k, TILE)), np.empty((ms * k, TILE)),
         np.empty((ns * k, TILE)), np.empty((ns * k, TILE)), C // S)
    return dx, dsr, dsi


def im2col(x, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride, Py_ssize_t pad):
    cdef const double[:, :, :, ::1] xv = _c(x)
    cdef Py_ssize_t N = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3]
    cdef Py_ssize_t Ho = (H + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - kw) // stride + 1
    out = np.zeros((C * kh * kw, N * Ho * Wo))
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t c, i, j, n, oh, ow, r, hh, ww, col
    with nogil:
        for c in range(C):
            for i in range(kh):
                for j in range(kw):
                    r = (c * kh + i) * kw + j
                    for n in range(N):
                        for oh in range(Ho):
                            hh = oh * stride + i - pad
                            if hh < 0 or hh >= H:
                                continue
                            col = (n * Ho + oh) * Wo
                            for ow in range(Wo):
                                ww = ow * stride + j - pad
                                if ww >= 0 and ww < W:
                                    ov[r, col + ow] = xv[n, c, hh, ww]
    return out


def col2im(cols, x_shape, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t N = x_shape[0], C = x_shape[1], H = x_shape[2], W = x_shape[3]
    cdef Py_ssize_t Ho = (H + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - kw) // stride + 1
    cdef const double[:, ::1] cv = _c(cols)
    out = np.zeros((N, C, H, W))
    cdef double[:, :, :, ::1] xv = out
    cdef Py_ssize_t c, i, j, n, oh, ow, r, hh, ww, col
    with nogil:
        for c in range(C):
            for i in range(kh):
                for j in range(kw):
                    r = (c * kh + i) * kw + j
                    for n in range(N):
                        for oh in range(Ho):
                            hh = oh * stride + i - pad
                            if hh < 0 or hh >= H:
                                continue
                            col = (n * Ho + oh) * Wo
                            for ow in range(Wo):
                                ww = ow * stride + j - pad
                                if ww >= 0 and ww < W:
                                    xv[n, c, hh, ww] += cv[r, col + ow]
    return out

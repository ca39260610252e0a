# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution kernels over CHW float64 arrays.

Loops are ordered so the innermost loop walks the output (or input) row
contiguously with a fixed kernel tap, which lets the C compiler vectorize
the multiply-accumulate.
"""

import numpy as np

cimport numpy as cnp

NAME = "cython"


def conv_out_size(int size, int kernel, int stride, int padding):
    return (size + 2 * padding - kernel) // stride + 1


def conv2d_forward(cnp.float64_t[:, :, ::1] x, cnp.float64_t[:, :, :, ::1] weight,
                   bias, int stride, int padding):
    cdef int c_in = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef int c_out = weight.shape[0], kh = weight.shape[2], kw = weight.shape[3]
    cdef int hp = (h + 2 * padding - kh) // stride + 1
    cdef int wp = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((c_out, hp, wp), dtype=np.float64)
    cdef cnp.float64_t[:, :, ::1] y = out
    cdef cnp.float64_t[::1] b
    cdef int co, ci, oy, ox, ky, kx, iy, ix, ox_lo, ox_hi
    cdef double wv
    with nogil:
        for co in range(c_out):
            for ci in range(c_in):
                for ky in range(kh):
                    for kx in range(kw):
                        wv = weight[co, ci, ky, kx]
                        if wv == 0.0:
                            continue
                        # ox range with ix = ox*stride + kx - padding inside [0, w)
                        ox_lo = 0
                        while ox_lo * stride + kx - padding < 0:
                            ox_lo += 1
                        ox_hi = wp
                        while ox_hi > ox_lo and (ox_hi - 1) * stride + kx - padding >= w:
                            ox_hi -= 1
                        for oy in range(hp):
                            iy = oy * stride + ky - padding
                            if iy < 0 or iy >= h:
                                continue
                            if stride == 1:
                                # contiguous saxpy over the row
                                for ox in range(ox_lo, ox_hi):
                                    y[co, oy, ox] += wv * x[ci, iy, ox + kx - padding]
                            else:
                                for ox in range(ox_lo, ox_hi):
                                    ix = ox * stride + kx - padding
                                    y[co, oy, ox] += wv * x[ci, iy, ix]
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64).reshape(c_out, 1, 1)
    return out


def conv2d_backward_input(cnp.float64_t[:, :, ::1] grad_y,
                          cnp.float64_t[:, :, :, ::1] weight,
                          x_shape, int stride, int padding):
    cdef int c_in = x_shape[0], h = x_shape[1], w = x_shape[2]
    cdef int c_out = weight.shape[0], kh = weight.shape[2], kw = weight.shape[3]
    cdef int hp = grad_y.shape[1], wp = grad_y.shape[2]
    out = np.zeros((c_in, h, w), dtype=np.float64)
    cdef cnp.float64_t[:, :, ::1] gx = out
    cdef int co, ci, oy, ox, ky, kx, iy, ix, ox_lo, ox_hi
    cdef double wv
    with nogil:
        for ci in range(c_in):
            for co in range(c_out):
                for ky in range(kh):
                    for kx in range(kw):
                        wv = weight[co, ci, ky, kx]
                        if wv == 0.0:
                            continue
                        ox_lo = 0
                        while ox_lo * stride + kx - padding < 0:
                            ox_lo += 1
                        ox_hi = wp
                        while ox_hi > ox_lo and (ox_hi - 1) * stride + kx - padding >= w:
                            ox_hi -= 1
                        for oy in range(hp):
                            iy = oy * stride + ky - padding
                            if iy < 0 or iy >= h:
                                continue
                            if stride == 1:
                                for ox in range(ox_lo, ox_hi):
                                    gx[ci, iy, ox + kx - padding] += wv * grad_y[co, oy, ox]
                            else:
                                for ox in range(ox_lo, ox_hi):
                                    ix = ox * stride + kx - padding
                                    gx[ci, iy, ix] += wv * grad_y[co, oy, ox]
    return out


def conv2d_backward_weight(cnp.float64_t[:, :, ::1] grad_y,
                           cnp.float64_t[:, :, ::1] x,
                           weight_shape, int stride, int padding):
    cdef int c_out = weight_shape[0], c_in = weight_shape[1]
    cdef int kh = weight_shape[2], kw = weight_shape[3]
    cdef int h = x.shape[1], w = x.shape[2]
    cdef int hp = grad_y.shape[1], wp = grad_y.shape[2]
    out = np.zeros((c_out, c_in, kh, kw), dtype=np.float64)
    cdef cnp.float64_t[:, :, :, ::1] gw = out
    cdef int co, ci, oy, ox, ky, kx, iy, ix, ox_lo, ox_hi
    cdef double acc
    with nogil:
        for co in range(c_out):
            for ci in range(c_in):
                for ky in range(kh):
                    for kx in range(kw):
                        ox_lo = 0
                        while ox_lo * stride + kx - padding < 0:
                            ox_lo += 1
                        ox_hi = wp
                        while ox_hi > ox_lo and (ox_hi - 1) * stride + kx - padding >= w:
                            ox_hi -= 1
                        acc = 0.0
                        for oy in range(hp):
                            iy = oy * stride + ky - padding
                            if iy < 0 or iy >= h:
                                continue
                            if stride == 1:
                                for ox in range(ox_lo, ox_hi):
                                    acc += grad_y[co, oy, ox] * x[ci, iy, ox + kx - padding]
                            else:
                                for ox in range(ox_lo, ox_hi):
                                    ix = ox * stride + kx - padding
                                    acc += grad_y[co, oy, ox] * x[ci, iy, ix]
                        gw[co, ci, ky, kx] = acc
    return out

"""Pure-numpy convolution kernels (im2col), the fallback backend."""

import numpy as np

NAME = "numpy"


def conv_out_size(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


def _im2col(x, kh, kw, stride, padding):
    c, h, w = x.shape
    hp = conv_out_size(h, kh, stride, padding)
    wp = conv_out_size(w, kw, stride, padding)
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    cols = np.empty((c, kh, kw, hp, wp), dtype=x.dtype)
    for ky in range(kh):
        for kx in range(kw):
            cols[:, ky, kx] = xp[:, ky : ky + stride * hp : stride, kx : kx + stride * wp : stride]
    return cols.reshape(c * kh * kw, hp * wp), hp, wp


def _col2im(cols, x_shape, kh, kw, stride, padding, hp, wp):
    c, h, w = x_shape
    xp = np.zeros((c, h + 2 * padding, w + 2 * padding), dtype=cols.dtype)
    cols = cols.reshape(c, kh, kw, hp, wp)
    for ky in range(kh):
        for kx in range(kw):
            xp[:, ky : ky + stride * hp : stride, kx : kx + stride * wp : stride] += cols[:, ky, kx]
    return xp[:, padding : padding + h, padding : padding + w]


def conv2d_forward(x, weight, bias, stride, padding):
    c_out, c_in, kh, kw = weight.shape
    cols, hp, wp = _im2col(x, kh, kw, stride, padding)
    y = weight.reshape(c_out, -1) @ cols
    if bias is not None:
        y += bias[:, None]
    return y.reshape(c_out, hp, wp)


def conv2d_backward_input(grad_y, weight, x_shape, stride, padding):
    c_out, c_in, kh, kw = weight.shape
    hp, wp = grad_y.shape[1], grad_y.shape[2]
    col_grad = weight.reshape(c_out, -1).T @ grad_y.reshape(c_out, -1)
    return _col2im(col_grad, x_shape, kh, kw, stride, padding, hp, wp)


def conv2d_backward_weight(grad_y, x, weight_shape, stride, padding):
    c_out, c_in, kh, kw = weight_shape
    cols, hp, wp = _im2col(x, kh, kw, stride, padding)
    g = grad_y.reshape(c_out, -1) @ cols.T
    return g.reshape(weight_shape)

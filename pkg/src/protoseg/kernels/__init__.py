"""Convolution kernel backend selection.

Two interchangeable backends: a compiled extension with direct loops and
a numpy im2col path that lowers the convolution to a BLAS matmul.  At
desk-scale channel counts the BLAS path wins by a wide margin (see
benchmarks/bench_conv.py), so it is the default; set
PROTOSEG_KERNELS=cython to force the compiled kernels (raises if the
extension is missing) or PROTOSEG_KERNELS=numpy to pin the default
explicitly.
"""

import os

from . import numpy_backend

_requested = os.environ.get("PROTOSEG_KERNELS", "").lower()

if _requested == "cython":
    from . import _convext as backend
else:
    backend = numpy_backend

BACKEND_NAME = backend.NAME

conv_out_size = backend.conv_out_size


def _c(a):
    import numpy as np

    return np.ascontiguousarray(a, dtype=np.float64)


def conv2d_forward(x, weight, bias, stride, padding):
    return backend.conv2d_forward(_c(x), _c(weight), bias, stride, padding)


def conv2d_backward_input(grad_y, weight, x_shape, stride, padding):
    return backend.conv2d_backward_input(_c(grad_y), _c(weight), tuple(x_shape), stride, padding)


def conv2d_backward_weight(grad_y, x, weight_shape, stride, padding):
    return backend.conv2d_backward_weight(_c(grad_y), _c(x), tuple(weight_shape), stride, padding)

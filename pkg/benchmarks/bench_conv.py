"""Compare the convolution backends on the shapes the model actually runs.

Usage: python3 benchmarks/bench_conv.py [--repeats N]

Each row times one forward pass plus both backward passes (input and
weight gradients).  The numpy backend lowers the convolution to a BLAS
matmul via im2col; the compiled backend runs direct nested loops.  At
these channel counts BLAS wins comfortably, which is why the numpy
backend is the package default (see protoseg.kernels).
"""

import argparse
import time

import numpy as np

from protoseg.kernels import numpy_backend

try:
    from protoseg.kernels import _convext
except ImportError:
    _convext = None

# (c_in, h, w, c_out, kernel, stride, padding) drawn from the default
# backbone plan and the refinement heads on a 64x64 input.
SHAPES = [
    (3, 64, 64, 16, 3, 2, 1),    # backbone stage 1
    (16, 32, 32, 32, 3, 2, 1),   # backbone stage 2
    (32, 16, 16, 64, 3, 2, 1),   # backbone stage 3
    (64, 8, 8, 64, 3, 1, 1),     # backbone stage 4
    (69, 16, 16, 64, 3, 1, 1),   # head entry conv on fused features
    (64, 16, 16, 64, 3, 1, 1),   # head residual conv
    (64, 16, 16, 2, 1, 1, 0),    # head output projection
]


def _time_backend(backend, x, weight, bias, grad_y, stride, padding, repeats):
    c_out, c_in, kh, kw = weight.shape
    start = time.perf_counter()
    for _ in range(repeats):
        backend.conv2d_forward(x, weight, bias, stride, padding)
        backend.conv2d_backward_input(grad_y, weight, x.shape, stride, padding)
        backend.conv2d_backward_weight(grad_y, x, weight.shape, stride, padding)
    return (time.perf_counter() - start) / repeats


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(0)
    backends = [("numpy", numpy_backend)]
    if _convext is not None:
        backends.append(("cython", _convext))
    else:
        print("compiled extension not built; benchmarking numpy only")

    header = f"{'shape':<28}" + "".join(f"{name:>12}" for name, _ in backends)
    print(header)
    print("-" * len(header))
    for c_in, h, w, c_out, k, stride, padding in SHAPES:
        x = rng.standard_normal((c_in, h, w))
        weight = rng.standard_normal((c_out, c_in, k, k))
        bias = rng.standard_normal(c_out)
        oh = numpy_backend.conv_out_size(h, k, stride, padding)
        ow = numpy_backend.conv_out_size(w, k, stride, padding)
        grad_y = rng.standard_normal((c_out, oh, ow))
        label = f"{c_in}x{h}x{w}->{c_out} k{k} s{stride}"
        row = f"{label:<28}"
        for _, backend in backends:
            ms = _time_backend(backend, x, weight, bias, grad_y, stride, padding,
                               args.repeats) * 1000.0
            row += f"{ms:>10.2f}ms"
        print(row)


if __name__ == "__main__":
    main()

"""Benchmark the numba and numpy convolution kernels against each other.

Runs the same accumulation on both backends and reports elements/s and the
speedup.  Useful for checking that the `CONV_COMMSYNTH_BACKEND` fallback is
healthy on a new machine.

    python3 benchmarks/bench_kernels.py --size 28 --channels 32 --repeat 5
"""

import argparse
import time

import numpy as np

from conv_commsynth import ConvProblem, generate_tensors
from conv_commsynth.kernels import NUMBA_AVAILABLE, conv_accumulate


def time_backend(backend, prob, in_t, ker_t, repeat):
    out = np.zeros((prob.n_b, prob.n_k, prob.n_w, prob.n_h), dtype=np.int64)
    conv_accumulate(out, in_t, ker_t, prob.sigma_w, prob.sigma_h,
                    backend=backend)  # warmup / JIT
    best = float("inf")
    for _ in range(repeat):
        out.fill(0)
        start = time.perf_counter()
        conv_accumulate(out, in_t, ker_t, prob.sigma_w, prob.sigma_h,
                        backend=backend)
        best = min(best, time.perf_counter() - start)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=4)
    parser.add_argument("--channels", type=int, default=32)
    parser.add_argument("--features", type=int, default=32)
    parser.add_argument("--size", type=int, default=28, help="pixels per side")
    parser.add_argument("--stencil", type=int, default=3)
    parser.add_argument("--stride", type=int, default=1)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    prob = ConvProblem(n_b=args.batch, n_k=args.features, n_c=args.channels,
                       n_h=args.size, n_w=args.size, n_r=args.stencil,
                       n_s=args.stencil, sigma_w=args.stride,
                       sigma_h=args.stride)
    in_t, ker_t = generate_tensors(prob, seed=0)
    macs = (prob.n_b * prob.n_k * prob.n_c * prob.n_h * prob.n_w
            * prob.n_r * prob.n_s)

    print(f"layer {prob}")
    print(f"multiply-accumulates per pass: {macs:,}")

    numpy_time, numpy_out = time_backend("numpy", prob, in_t, ker_t,
                                         args.repeat)
    print(f"numpy : {numpy_time * 1e3:9.2f} ms  "
          f"{macs / numpy_time / 1e6:8.1f} MMAC/s")

    if not NUMBA_AVAILABLE:
        print("numba : not importable, fallback only")
        return

    numba_time, numba_out = time_backend("numba", prob, in_t, ker_t,
                                         args.repeat)
    print(f"numba : {numba_time * 1e3:9.2f} ms  "
          f"{macs / numba_time / 1e6:8.1f} MMAC/s")
    assert np.array_equal(numpy_out, numba_out), "backends disagree"
    ratio = numpy_time / numba_time
    faster = "numba" if ratio > 1 else "numpy"
    print(f"speedup: {max(ratio, 1 / ratio):.2f}x in favor of {faster}")


if __name__ == "__main__":
    main()

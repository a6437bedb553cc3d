"""Numeric kernels for the convolution simulator.

Two interchangeable implementations of the inner convolution loop nest:

- a numba ``@njit`` version of the direct seven-deep loop nest, and
- a pure-numpy version that slides strided windows and contracts with einsum.

The active default is chosen once at import time from the environment
variable ``CONV_COMMSYNTH_BACKEND`` (``numba`` or ``numpy``).  When the
variable is unset, numba is used if importable.  Every entry point also
accepts an explicit ``backend=`` override so the two paths can be compared
directly (see ``benchmarks/bench_kernels.py``).

All arithmetic is int64 and exact; both paths produce identical results.
"""

import os
import warnings

import numpy as np

_ENV_FLAG = "CONV_COMMSYNTH_BACKEND"

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def decorator(func):
            return func

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return decorator


def _resolve_backend() -> str:
    choice = os.environ.get(_ENV_FLAG, "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise ValueError(
            f"{_ENV_FLAG} must be 'numba' or 'numpy', got {choice!r}")
    if choice == "numpy":
        return "numpy"
    if not NUMBA_AVAILABLE:
        if choice == "numba":
            warnings.warn("numba requested but not importable; using numpy",
                          stacklevel=2)
        return "numpy"
    return "numba"


BACKEND = _resolve_backend()


@njit(cache=True)
def _conv_accumulate_loops(out, inp, ker, sigma_w, sigma_h):
    """Direct loop-nest convolution, accumulating into out.

    Parameters
    ----------
    out : int64[B, K, W, H]
        Accumulated in place.
    inp : int64[B, C, X, Y]
        X >= sigma_w*(W-1) + R and Y >= sigma_h*(H-1) + S.
    ker : int64[K, C, R, S]
    sigma_w, sigma_h : int
        Strides applied to the w and h output indices.
    """
    B, K, W, H = out.shape
    C = inp.shape[1]
    R = ker.shape[2]
    S = ker.shape[3]
    for b in range(B):
        for k in range(K):
            for w in range(W):
                for h in range(H):
                    acc = out[b, k, w, h]
                    for c in range(C):
                        for r in range(R):
                            for s in range(S):
                                acc += (inp[b, c, sigma_w * w + r, sigma_h * h + s]
                                        * ker[k, c, r, s])
                    out[b, k, w, h] = acc


def _conv_accumulate_numpy(out, inp, ker, sigma_w, sigma_h):
    """Strided-window einsum convolution, accumulating into out.

    Same contract as `_conv_accumulate_loops`; loops only over the small
    stencil offsets and contracts the rest with einsum.
    """
    B, K, W, H = out.shape
    R = ker.shape[2]
    S = ker.shape[3]
    for r in range(R):
        for s in range(S):
            window = inp[:, :,
                         r:r + sigma_w * (W - 1) + 1:sigma_w,
                         s:s + sigma_h * (H - 1) + 1:sigma_h]
            out += np.einsum("bcwh,kc->bkwh", window, ker[:, :, r, s])


def conv_accumulate(out, inp, ker, sigma_w=1, sigma_h=1, backend=None):
    """Accumulate one convolution contribution into `out`.

    Dispatches to the numba loop nest or the numpy einsum path.  `backend`
    overrides the import-time default ("numba" or "numpy").
    """
    chosen = backend or BACKEND
    if chosen == "numba" and NUMBA_AVAILABLE:
        _conv_accumulate_loops(out, inp, ker, sigma_w, sigma_h)
    else:
        _conv_accumulate_numpy(out, inp, ker, sigma_w, sigma_h)
    return out

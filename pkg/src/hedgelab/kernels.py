"""Backend selection for the hot kernels.

The compiled Cython module is used when it imports cleanly; otherwise the
numpy fallback takes over. Set ``HEDGELAB_PURE_PYTHON=1`` to force the
fallback (useful for benchmarking and for cross-checking the two).
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("HEDGELAB_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

# RNG identification carried into output metadata
RNG_NAME = "splitmix64-counter/box-muller"
_U64 = (1 << 64) - 1


def random_words(seed, path, n):
    return _impl.random_words(int(seed) & _U64, int(path), int(n))


def standard_normals(seed, n_paths, n_steps):
    return _impl.standard_normals(int(seed) & _U64, int(n_paths), int(n_steps))


def gbm_paths(seed, n_paths, n_steps, s0, drift, diffusion):
    return _impl.gbm_paths(int(seed) & _U64, int(n_paths), int(n_steps), float(s0), float(drift), float(diffusion))


def dilated_conv1d_forward(x, h, dilation):
    return _impl.dilated_conv1d_forward(x, h, dilation)


def dilated_conv1d_backward(x, h, dilation, gy):
    return _impl.dilated_conv1d_backward(x, h, dilation, gy)


def use_backend(name):
    """Switch backend at runtime; returns the previous backend name."""
    global _impl, BACKEND
    previous = BACKEND
    if name == "python":
        _impl = _pykernels
    elif name == "cython":
        from . import _ckernels
        _impl = _ckernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name
    return previous

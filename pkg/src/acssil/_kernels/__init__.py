"""Kernel backend selection.

The compiled extension (`_fastcore`) is preferred; the pure-NumPy fallback
is used when the extension is missing or when ACSSIL_KERNELS=numpy is set.
Both backends expose the same functions with identical semantics.
"""

import os

from . import numpy_backend

SQUASH_IDENTITY = numpy_backend.SQUASH_IDENTITY
SQUASH_TANH = numpy_backend.SQUASH_TANH

_impl = None


def _load(requested):
    if requested == "numpy":
        return numpy_backend
    try:
        from . import _fastcore
        return _fastcore
    except ImportError:
        if requested == "cython":
            raise
        return numpy_backend


def set_backend(name):
    """Switch the active backend ('auto', 'cython', or 'numpy')."""
    global _impl
    if name not in ("auto", "cython", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    _impl = _load(name)


def active_backend():
    """Name of the backend currently in use."""
    return _impl.name


set_backend(os.environ.get("ACSSIL_KERNELS", "auto"))


def mlp_forward(weights, biases, x, squash_kind, squash_scale):
    return _impl.mlp_forward(weights, biases, x, squash_kind, squash_scale)


def mlp_backward(weights, acts, y, dy, squash_kind, squash_scale):
    return _impl.mlp_backward(weights, acts, y, dy, squash_kind, squash_scale)


def all_finite(x):
    return _impl.all_finite(x)


def adam_update(param, grad, m, v, t, lr, beta1, beta2, eps):
    return _impl.adam_update(param, grad, m, v, t, lr, beta1, beta2, eps)


def soft_update_arrays(target, source, tau):
    _impl.soft_update_arrays(target, source, tau)


def knn_topk(points, queries, k):
    return _impl.knn_topk(points, queries, k)

"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``GOLDGAN_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

IDENTITY = _pykernels.IDENTITY
RELU = _pykernels.RELU
LEAKY_RELU = _pykernels.LEAKY_RELU
SIGMOID = _pykernels.SIGMOID
SOFTMAX = _pykernels.SOFTMAX
TANH = _pykernels.TANH
LEAKY_SLOPE = _pykernels.LEAKY_SLOPE

_impl = _pykernels
BACKEND = "python"
if os.environ.get("GOLDGAN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

dense_forward = _impl.dense_forward
dense_backward = _impl.dense_backward
adam_update = _impl.adam_update
spectral_sigma = _impl.spectral_sigma
power_iteration = _impl.power_iteration


def get_backend(name):
    """Return the kernel module for ``"python"`` or ``"cython"``."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")

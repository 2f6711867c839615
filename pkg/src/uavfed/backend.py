"""Kernel backend selection.

The hot kernels (dense-net forward/backward, local SGD loop) exist twice:
compiled (`uavfed._fastcore`, Cython) and pure numpy (`uavfed._purecore`).
The compiled one is used when importable; set the environment variable
``UAVFED_PURE=1`` to force the fallback. ``benchmarks/bench_kernels.py``
compares the two.
"""

import os

from . import _purecore

param_count = _purecore.param_count
act_count = _purecore.act_count

if os.environ.get("UAVFED_PURE", "") not in ("", "0"):
    _impl = _purecore
else:
    try:
        from . import _fastcore as _impl
    except ImportError:
        _impl = _purecore

dense_forward = _impl.dense_forward
dense_backward = _impl.dense_backward
sgd_dense_softmax = _impl.sgd_dense_softmax


def backend_name() -> str:
    """Which kernel implementation is active: 'fast' or 'pure'."""
    return _impl.NAME


def implementations():
    """Both kernel modules (compiled one may be None), for benchmarks/tests."""
    try:
        from . import _fastcore
    except ImportError:
        _fastcore = None
    return _purecore, _fastcore

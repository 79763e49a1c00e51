"""Kernel backend selection.

The compiled ``_ckernels`` module is used when it imports; otherwise (or when
``DYADLAB_PURE=1``) the numpy implementations in ``_pykernels`` are used. Both
expose the same four functions over the flat pyramid layout.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("DYADLAB_PURE") != "1":
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

pyramid_sums = _impl.pyramid_sums
broadcast_sum = _impl.broadcast_sum
suffix_max_integrals = _impl.suffix_max_integrals
chain_max = _impl.chain_max

__all__ = ["BACKEND", "pyramid_sums", "broadcast_sum", "suffix_max_integrals", "chain_max"]

"""Backend selection for the Gibbs scaling kernels.

The compiled module is used when it imports; setting the environment
variable ``MISMATCHED_RD_PURE=1`` forces the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("MISMATCHED_RD_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _pykernels

gibbs_solve = _impl.gibbs_solve
info_bits = _impl.info_bits


def backends():
    """Mapping of available backend names to kernel modules."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:  # pragma: no cover
        pass
    return found

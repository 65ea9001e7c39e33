"""Hot-loop kernels, compiled when available.

The Cython build of ``_kernels`` is picked at import; set
``UEGROUP_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"

if os.environ.get("UEGROUP_PURE_PYTHON", "") not in ("", "0"):
    from ._pykernels import adam_update, dbscan_labels, ward_linkage
else:
    try:
        from ._kernels import adam_update, dbscan_labels, ward_linkage

        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._pykernels import adam_update, dbscan_labels, ward_linkage


def available_backends():
    """Map backend name -> kernel module for every importable backend."""
    found = {"python": _pykernels}
    try:
        from . import _kernels

        found["cython"] = _kernels
    except ImportError:
        pass
    return found


__all__ = ["BACKEND", "adam_update", "dbscan_labels", "ward_linkage", "available_backends"]

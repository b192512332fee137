"""Kernel backend selection: compiled extension if available, else numpy.

Set SPATOCC_PURE_KERNELS=1 to force the pure backend (useful for
benchmarking and for debugging suspected extension issues). Both
backends implement the same contracts and produce identical fits.
"""

import os

if os.environ.get("SPATOCC_PURE_KERNELS", "").strip() not in ("", "0"):
    from . import _pykern as kernels
else:
    try:
        from . import _ckern as kernels  # type: ignore[no-redef]
    except ImportError:
        from . import _pykern as kernels  # type: ignore[no-redef]


def backend_name():
    """Name of the active kernel backend: "compiled" or "python"."""
    return kernels.IMPL

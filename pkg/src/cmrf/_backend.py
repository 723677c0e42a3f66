"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the pure-Python
twin. Set ``CMRF_PURE_PYTHON=1`` to force the fallback.
"""

import logging
import os

from cmrf import _pykernels

log = logging.getLogger(__name__)

python_kernels = _pykernels
compiled_kernels = None

if os.environ.get("CMRF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from cmrf import _ckernels as compiled_kernels
    except ImportError:  # extension not built
        log.debug("compiled kernels unavailable, using pure-Python fallback")

kernels = compiled_kernels if compiled_kernels is not None else python_kernels
BACKEND = "compiled" if compiled_kernels is not None else "python"


def use(name: str) -> None:
    """Switch backend at runtime: ``"compiled"`` or ``"python"``."""
    global kernels, BACKEND
    if name == "compiled":
        if compiled_kernels is None:
            raise RuntimeError("compiled kernels are not built")
        kernels = compiled_kernels
    elif name == "python":
        kernels = python_kernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name

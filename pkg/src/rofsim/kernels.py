"""Backend selection for the hot loops.

The compiled extension is used when importable; otherwise the pure-Python
module is loaded. Set ``ROFSIM_PURE_PYTHON=1`` to force the fallback.
"""
import logging
import os

from . import _kernels_py

logger = logging.getLogger(__name__)

if os.environ.get("ROFSIM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        logger.warning("rofsim._kernels not built; using the pure-Python loops (slow)")
        _impl = _kernels_py
        BACKEND = "python"

sdm_loop = _impl.sdm_loop

__all__ = ["BACKEND", "sdm_loop"]

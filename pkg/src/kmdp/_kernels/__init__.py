"""Sampling-kernel backend selection.

The compiled extension is preferred when it imported cleanly; the pure
Python twin is always available. Both implement the same contract and
produce bit-identical results, so the choice only affects speed.
"""

from __future__ import annotations

from kmdp._kernels import _pykernels

try:
    from kmdp._kernels import _ckernels
except ImportError:  # extension not built for this environment
    _ckernels = None

COMPILED_AVAILABLE = _ckernels is not None
DEFAULT_BACKEND = "compiled" if COMPILED_AVAILABLE else "python"

_ALIASES = {
    "auto": None,
    "compiled": "compiled",
    "c": "compiled",
    "python": "python",
    "pure": "python",
}


def get_kernel(backend: str = "auto"):
    """The kernel module for ``backend``: auto | compiled | python."""
    try:
        resolved = _ALIASES[backend]
    except KeyError:
        raise ValueError(f"unknown kernel backend {backend!r}") from None
    if resolved is None:
        resolved = DEFAULT_BACKEND
    if resolved == "compiled":
        if _ckernels is None:
            raise RuntimeError("compiled kernel requested but the extension is not built")
        return _ckernels
    return _pykernels

"""Backend selection for the forward-pass kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback. Set ``FIXSHARE_KERNEL=python`` to force the fallback.
"""

import os

from . import _pykernel

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

BACKENDS = {"python": _pykernel}
if _ckernel is not None:
    BACKENDS["compiled"] = _ckernel

impl = _ckernel if _ckernel is not None else _pykernel
if os.environ.get("FIXSHARE_KERNEL", "").lower() == "python":
    impl = _pykernel


def available() -> list[str]:
    return sorted(BACKENDS)


def use(name: str):
    """Switch the active backend; returns the previously active name."""
    global impl
    if name not in BACKENDS:
        raise ValueError(f"kernel backend {name!r} unavailable; have {available()}")
    previous = impl.NAME
    impl = BACKENDS[name]
    return previous


def current() -> str:
    return impl.NAME

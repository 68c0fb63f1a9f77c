"""Hot-loop kernel backends.

The compiled Cython extension is preferred when it was built; otherwise the
numpy implementation is used.  Both expose the same two functions with the
same semantics (see ``_cstep_py``), so callers never need to know which one
is active; ``BACKEND`` records the choice for diagnostics and benchmarks.
Set ``IVMCD_KERNEL=python`` to force the fallback (useful for testing it).
"""

import os

from . import _cstep_py

if os.environ.get("IVMCD_KERNEL", "").lower() == "python":
    _impl = _cstep_py
    BACKEND = "python"
else:
    try:
        from . import _cstep_cy as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _cstep_py
        BACKEND = "python"

cstep_pass = _impl.cstep_pass
cstep_iterate = _impl.cstep_iterate


def available_backends() -> tuple[str, ...]:
    names = ["python"]
    try:
        from . import _cstep_cy  # noqa: F401
        names.insert(0, "cython")
    except ImportError:
        pass
    return tuple(names)


def get_backend(name: str):
    """Return a specific backend module ("cython" or "python")."""
    if name == "python":
        return _cstep_py
    if name == "cython":
        from . import _cstep_cy
        return _cstep_cy
    raise ValueError(f"unknown kernel backend {name!r}")


def use_backend(name: str) -> str:
    """Switch the active backend; callers look the functions up per call, so
    this takes effect immediately (tests and benchmarks only)."""
    global cstep_pass, cstep_iterate, BACKEND
    mod = get_backend(name)
    cstep_pass = mod.cstep_pass
    cstep_iterate = mod.cstep_iterate
    BACKEND = name
    return name

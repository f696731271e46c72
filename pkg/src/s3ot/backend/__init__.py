"""Kernel backend selection: compiled extension when built, numpy otherwise.

Both backends expose the same two functions (``sinkhorn_loop`` and
``symmetric_loop``) with identical semantics; they differ only in speed on
small problems where per-call overhead dominates. ``set_backend`` exists for
the benchmark and for pinning the fallback in tests.
"""

from __future__ import annotations

from . import pykernels

_BACKENDS = {"numpy": pykernels}
try:
    from . import _ckernels  # type: ignore[attr-defined]

    _BACKENDS["compiled"] = _ckernels
    _active = "compiled"
except ImportError:
    _active = "numpy"


def active():
    """The module implementing the kernels for the current backend."""
    return _BACKENDS[_active]


def active_name() -> str:
    return _active


def available() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available()}")
    _active = name

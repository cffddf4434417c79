"""Kernel backend selection.

Two interchangeable implementations of the hot per-step kernels exist:
``_core`` (Cython, built at install time) and ``_pure`` (numpy). The
compiled one is picked when present; ``ADAFRAME_BACKEND=pure|cython``
overrides, and :func:`set_backend` switches at runtime (used by the
parity tests and the benchmark).
"""

from __future__ import annotations

import os

from . import _pure

_BACKENDS = {"pure": _pure}

try:
    from . import _core
    _BACKENDS["cython"] = _core
except ImportError:
    _core = None


def available() -> list[str]:
    return sorted(_BACKENDS)


def _initial() -> str:
    requested = os.environ.get("ADAFRAME_BACKEND")
    if requested is None:
        return "cython" if "cython" in _BACKENDS else "pure"
    if requested not in _BACKENDS:
        raise ImportError(
            f"ADAFRAME_BACKEND={requested!r} but available backends are {available()}"
        )
    return requested


_active = _initial()


def active_name() -> str:
    return _active


def get():
    """The currently selected backend module."""
    return _BACKENDS[_active]


def set_backend(name: str):
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available()}")
    _active = name

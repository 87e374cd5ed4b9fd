"""Backend selection for the hot loops.

The compiled extension is used when it imports; set ``ANISOVORO_PURE_PYTHON=1``
to force the numpy fallback.  ``use_backend`` switches at runtime (tests and
the benchmark compare both).
"""
import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # pragma: no cover - depends on the build
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["compiled"] = _ckernels

_active = "python" if (_ckernels is None or os.environ.get("ANISOVORO_PURE_PYTHON")) else "compiled"


def available_backends() -> tuple:
    return tuple(sorted(BACKENDS))


def backend_name() -> str:
    return _active


def use_backend(name: str) -> str:
    """Activate ``"compiled"`` or ``"python"``; returns the previous name."""
    global _active
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} is not available")
    prev, _active = _active, name
    return prev


def default_threads() -> int:
    env = os.environ.get("ANISOVORO_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


_threads = None


def set_threads(n):
    global _threads
    _threads = None if n is None else max(1, int(n))


def threads() -> int:
    return _threads if _threads is not None else default_threads()


def _c(a, dtype=np.float64):
    return np.ascontiguousarray(a, dtype=dtype)


def update_nearest(points, qcells, site, qsite, site_index, best, labels, ls):
    n = points.shape[1]
    if qcells is None:
        qcells = np.zeros((1, n, n))
    BACKENDS[_active].update_nearest(
        _c(points), _c(qcells), _c(site), _c(np.asarray(qsite).reshape(1, n, n)),
        int(site_index), best, labels, bool(ls), threads(),
    )


def label_sites(points, qcells, sites, qsites, ls):
    n = points.shape[1]
    if qcells is None:
        qcells = np.zeros((1, n, n))
    if qsites is None:
        qsites = np.zeros((len(sites), n, n))
    return BACKENDS[_active].label_sites(
        _c(points), _c(qcells), _c(sites), _c(qsites), bool(ls), threads()
    )


def label_components(labels, shape):
    """Return ``(component id per cell, number of components)``."""
    return BACKENDS[_active].label_components(_c(np.ravel(labels), np.int64), tuple(shape))

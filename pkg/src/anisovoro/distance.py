"""The two asymmetric distances.

Both take the SITE as first argument.  Labelle/Shewchuk measures with the
metric at the site, Du/Wang with the metric at the query point, so
``d_dw(a, b) == d_ls(b, a)``.
"""
from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import DomainError, InvalidArgument
from .metric import MetricField


class DistanceKind(str, Enum):
    DW = "DW"
    LS = "LS"

    @classmethod
    def parse(cls, value) -> "DistanceKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise InvalidArgument(f"distance kind must be DW or LS, got {value!r}") from None


def _check_domain(points, domain):
    if domain is None:
        return
    lo = np.asarray(domain[0], dtype=float) - 1e-12
    hi = np.asarray(domain[1], dtype=float) + 1e-12
    p = np.atleast_2d(points)
    if np.any(p < lo) or np.any(p > hi):
        raise DomainError("point outside the domain box")


def _metric_length(field: MetricField, at, vec) -> np.ndarray:
    m = field.root(at)
    return np.linalg.norm(np.einsum("...ij,...j->...i", m, vec), axis=-1)


def d_ls(site, p, field: MetricField, domain=None):
    """``|M_site (site - p)|``; accepts single points or matching stacks."""
    site = np.asarray(site, dtype=float)
    p = np.asarray(p, dtype=float)
    _check_domain(site, domain)
    _check_domain(p, domain)
    out = _metric_length(field, site, site - p)
    return float(out) if out.ndim == 0 else out


def d_dw(site, p, field: MetricField, domain=None):
    """``|M_p (site - p)|``."""
    return d_ls(p, site, field, domain)


def distance(kind, site, p, field: MetricField, domain=None):
    kind = DistanceKind.parse(kind)
    return d_ls(site, p, field, domain) if kind is DistanceKind.LS else d_dw(site, p, field, domain)


def asymmetry_ratio(a, b, field: MetricField) -> float:
    """``|M_b (a - b)| / |M_a (a - b)|``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.array_equal(a, b):
        raise InvalidArgument("asymmetry ratio is undefined for a == b")
    diff = a - b
    return float(np.linalg.norm(field.root(b) @ diff) / np.linalg.norm(field.root(a) @ diff))

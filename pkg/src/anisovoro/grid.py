"""Uniform raster over an axis-aligned box.

Cells are indexed in C order with axis 0 outermost, so ``labels[i0, i1]``
is the cell whose center is ``box_min + (i + 0.5) * spacing``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidArgument


@dataclass(frozen=True)
class Grid:
    box_min: tuple[float, ...]
    box_max: tuple[float, ...]
    res: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(float(x) for x in self.box_min)
        hi = tuple(float(x) for x in self.box_max)
        res = tuple(int(r) for r in self.res)
        if not (len(lo) == len(hi) == len(res)) or len(res) == 0:
            raise InvalidArgument("box_min, box_max and res must have the same length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise InvalidArgument("box min must be < max on every axis")
        if any(r < 1 for r in res):
            raise InvalidArgument("resolution must be positive")
        object.__setattr__(self, "box_min", lo)
        object.__setattr__(self, "box_max", hi)
        object.__setattr__(self, "res", res)

    @classmethod
    def unit(cls, res, dim=None) -> "Grid":
        if np.isscalar(res):
            res = (int(res),) * (dim or 2)
        return cls((0.0,) * len(res), (1.0,) * len(res), tuple(res))

    @property
    def dim(self) -> int:
        return len(self.res)

    @property
    def ncells(self) -> int:
        return int(np.prod(self.res))

    @property
    def spacing(self) -> np.ndarray:
        return (np.asarray(self.box_max) - np.asarray(self.box_min)) / np.asarray(self.res)

    @property
    def cell_diagonal(self) -> float:
        return float(np.linalg.norm(self.spacing))

    def axis_centers(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return self.box_min[axis] + (np.arange(self.res[axis]) + 0.5) * h

    def centers(self) -> np.ndarray:
        """All cell centers as an ``(ncells, dim)`` array in linear-index order."""
        axes = [self.axis_centers(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def center_of(self, index) -> np.ndarray:
        idx = np.unravel_index(int(index), self.res)
        return np.asarray(self.box_min) + (np.asarray(idx) + 0.5) * self.spacing

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.box_min) - tol
        hi = np.asarray(self.box_max) + tol
        return np.all((p >= lo) & (p <= hi), axis=1)

    def require_inside(self, points, what="point"):
        if not np.all(self.contains(points)):
            raise DomainError(f"{what} outside the domain box")

    def cell_index(self, points) -> np.ndarray:
        """Linear index of the cell containing each point (clamped to the box)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        ijk = np.floor((p - np.asarray(self.box_min)) / self.spacing).astype(np.int64)
        ijk = np.clip(ijk, 0, np.asarray(self.res) - 1)
        return np.ravel_multi_index(tuple(ijk.T), self.res)

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.box_min, self.box_max, tuple(r * factor for r in self.res))

    def to_dict(self) -> dict:
        return {"min": list(self.box_min), "max": list(self.box_max), "res": list(self.res)}

    @classmethod
    def from_dict(cls, d) -> "Grid":
        return cls(tuple(d["min"]), tuple(d["max"]), tuple(d["res"]))

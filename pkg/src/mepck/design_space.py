"""Bounded input domains, block partitions and standardized coordinates.

Every local surrogate operates in standardized coordinates u in [-1, 1]^M so
that the Legendre basis stays orthonormal on each cell; the affine maps live
here next to the box geometry they belong to.

Cells follow a half-open convention: lower faces are inclusive, upper faces
are exclusive, except where a face coincides with the parent domain boundary,
which stays closed so the cells cover the parent exactly and every point has
exactly one owner.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _as_bounds(lower, upper):
    lo = np.atleast_1d(np.asarray(lower, dtype=float))
    hi = np.atleast_1d(np.asarray(upper, dtype=float))
    if lo.ndim != 1 or lo.shape != hi.shape:
        raise ValueError("lower/upper must be 1-D arrays of equal length")
    if lo.size < 1:
        raise ValueError("domain must have at least one dimension")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("bounds must be finite")
    if np.any(hi <= lo):
        raise ValueError(
            f"degenerate box: upper must exceed lower in every dimension "
            f"(lower={lo}, upper={hi})"
        )
    lo.flags.writeable = False
    hi.flags.writeable = False
    return lo, hi


def _standardize(lower, upper, x):
    x = np.asarray(x, dtype=float)
    return 2.0 * (x - lower) / (upper - lower) - 1.0


def _destandardize(lower, upper, u):
    u = np.asarray(u, dtype=float)
    return lower + 0.5 * (u + 1.0) * (upper - lower)


@dataclass(frozen=True)
class Domain:
    """Closed hyper-rectangle holding the forward model's input space."""

    lower: np.ndarray
    upper: np.ndarray

    def __init__(self, lower, upper):
        lo, hi = _as_bounds(lower, upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def ndim(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != self.lower.shape:
            raise ValueError(f"point has dimension {x.size}, domain has {self.ndim}")
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def contains_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)

    def standardize(self, x):
        return _standardize(self.lower, self.upper, x)

    def destandardize(self, u):
        return _destandardize(self.lower, self.upper, u)


@dataclass(frozen=True)
class Cell:
    """Partition cell: lower-inclusive, upper-exclusive except closed faces.

    ``upper_closed[i]`` is set where the cell's upper face lies on the parent
    domain boundary.
    """

    lower: np.ndarray
    upper: np.ndarray
    upper_closed: np.ndarray

    def __init__(self, lower, upper, upper_closed):
        lo, hi = _as_bounds(lower, upper)
        uc = np.atleast_1d(np.asarray(upper_closed, dtype=bool))
        if uc.shape != lo.shape:
            raise ValueError("upper_closed must match the box dimension")
        uc.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "upper_closed", uc)

    @property
    def ndim(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != self.lower.shape:
            raise ValueError(f"point has dimension {x.size}, cell has {self.ndim}")
        below = np.where(self.upper_closed, x <= self.upper, x < self.upper)
        return bool(np.all(x >= self.lower) and np.all(below))

    def contains_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        below = np.where(self.upper_closed, X <= self.upper, X < self.upper)
        return np.all((X >= self.lower) & below, axis=1)

    def standardize(self, x):
        return _standardize(self.lower, self.upper, x)

    def destandardize(self, u):
        return _destandardize(self.lower, self.upper, u)

    def bisect(self, dim: int) -> tuple["Cell", "Cell"]:
        """Split at the midpoint along ``dim``; the new interior face is open."""
        mid = 0.5 * (self.lower[dim] + self.upper[dim])
        lo_hi = self.upper.copy()
        lo_hi[dim] = mid
        lo_uc = self.upper_closed.copy()
        lo_uc[dim] = False
        hi_lo = self.lower.copy()
        hi_lo[dim] = mid
        return (
            Cell(self.lower, lo_hi, lo_uc),
            Cell(hi_lo, self.upper, self.upper_closed),
        )


@dataclass(frozen=True)
class Partition:
    """Disjoint cells covering a parent domain."""

    parent: Domain
    cells: tuple = field(default_factory=tuple)

    def __init__(self, parent: Domain, cells):
        cells = tuple(cells)
        if len(cells) < 1:
            raise ValueError("partition needs at least one cell")
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "cells", cells)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def locate(self, x) -> int:
        """Index of the unique cell owning ``x``; fails outside the parent."""
        x = np.asarray(x, dtype=float)
        if not self.parent.contains(x):
            raise ValueError(f"point {x} lies outside the parent domain")
        for j, cell in enumerate(self.cells):
            if cell.contains(x):
                return j
        raise RuntimeError(f"no cell claims {x}; partition does not cover its parent")

    def locate_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        inside = self.parent.contains_many(X)
        if not np.all(inside):
            bad = X[~inside][0]
            raise ValueError(f"point {bad} lies outside the parent domain")
        idx = np.full(X.shape[0], -1, dtype=np.intp)
        for j, cell in enumerate(self.cells):
            mask = (idx < 0) & cell.contains_many(X)
            idx[mask] = j
        if np.any(idx < 0):
            bad = X[idx < 0][0]
            raise RuntimeError(f"no cell claims {bad}; partition does not cover its parent")
        return idx


def split_regular(domain: Domain, counts) -> Partition:
    """Regular block partition with equal-width cells per dimension."""
    counts = np.atleast_1d(np.asarray(counts, dtype=int))
    if counts.shape != domain.lower.shape:
        raise ValueError("counts must give one positive integer per dimension")
    if np.any(counts < 1):
        raise ValueError("counts must be >= 1")
    edges = [
        np.linspace(domain.lower[i], domain.upper[i], counts[i] + 1)
        for i in range(domain.ndim)
    ]
    cells = []
    for multi in np.ndindex(*counts):
        lo = np.array([edges[i][k] for i, k in enumerate(multi)])
        hi = np.array([edges[i][k + 1] for i, k in enumerate(multi)])
        uc = np.array([k + 1 == counts[i] for i, k in enumerate(multi)])
        cells.append(Cell(lo, hi, uc))
    return Partition(domain, cells)

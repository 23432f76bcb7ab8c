"""
Uniform cubical grids over a centred box and cube-set arithmetic.

A grid splits the box prod [-b_i, b_i] into shape[i] equal cells per axis.
Cubes are identified by their C-order flat index; cube sets are sorted,
duplicate-free int64 arrays.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .config import DEFAULT_MARGIN, DEFAULT_MAX_CELLS, DEFAULT_SUBDIVISIONS, MIN_SUBDIVISIONS, is_power_of_two
from .errors import RefineError, StructureError
from .spectral_model import Neighborhood

logger = logging.getLogger(__name__)

EMPTY = np.zeros(0, dtype=np.int64)


def as_cubes(values) -> np.ndarray:
    """Normalize anything iterable into a cube set."""
    return np.unique(np.asarray(values, dtype=np.int64).reshape(-1))


def union(*sets: np.ndarray) -> np.ndarray:
    return as_cubes(np.concatenate([np.asarray(s, dtype=np.int64) for s in sets])) if sets else EMPTY


def difference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.setdiff1d(a, b, assume_unique=True)


def intersection(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.intersect1d(a, b, assume_unique=True)


def is_subset(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.all(np.isin(a, b)))


def choose_subdivisions(dim: int, requested: int = DEFAULT_SUBDIVISIONS,
                        max_cells: int = DEFAULT_MAX_CELLS) -> int:
    """Largest power of two <= requested with n^dim <= max_cells, at least MIN_SUBDIVISIONS."""
    n = requested
    while n > MIN_SUBDIVISIONS and n ** max(dim, 1) > max_cells:
        n //= 2
    return max(n, MIN_SUBDIVISIONS)


@dataclass(frozen=True, eq=False)
class CubicalGrid:
    """Grid of shape[0] x ... x shape[d-1] cubes over the box with the given half-widths."""

    shape: Tuple[int, ...]
    half_widths: np.ndarray
    margin: int = DEFAULT_MARGIN

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        widths = np.asarray(self.half_widths, dtype=float).reshape(len(shape))
        if any(n < 1 for n in shape) or np.any(widths <= 0):
            raise StructureError(f"Invalid grid shape {shape} / half-widths {widths}")
        object.__setattr__(self, 'shape', shape)
        object.__setattr__(self, 'half_widths', widths)

    @classmethod
    def for_neighborhood(cls, X: Neighborhood, dim: int, subdivisions: int = DEFAULT_SUBDIVISIONS,
                         margin: int = DEFAULT_MARGIN, max_cells: int = DEFAULT_MAX_CELLS) -> 'CubicalGrid':
        """
        Grid whose inner cubes tile [-R, R]^dim exactly, with ``margin`` extra cubes per side.

        Raises:
            StructureError: If subdivisions is not a power of two >= MIN_SUBDIVISIONS
                or leaves no inner cubes
        """
        if not is_power_of_two(subdivisions) or subdivisions < MIN_SUBDIVISIONS:
            raise StructureError(f"Subdivisions must be a power of two >= {MIN_SUBDIVISIONS}, got {subdivisions}")
        n = choose_subdivisions(dim, subdivisions, max_cells)
        if n - 2 * margin < 2:
            raise StructureError(f"Margin {margin} leaves no room inside {n} subdivisions")
        if n != subdivisions:
            logger.info(f"Reduced subdivisions {subdivisions} -> {n} to stay within {max_cells} cells")
        b = X.radius * n / (n - 2 * margin)
        return cls(tuple([n] * dim), np.full(dim, b), margin)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) if self.shape else 1

    @property
    def cube_widths(self) -> np.ndarray:
        return 2.0 * self.half_widths / np.asarray(self.shape, dtype=float)

    @property
    def half_diagonal(self) -> float:
        return 0.5 * float(np.linalg.norm(self.cube_widths))

    def all_cubes(self) -> np.ndarray:
        return np.arange(self.size, dtype=np.int64)

    def unravel(self, cubes: np.ndarray) -> np.ndarray:
        """Multi-indices of shape (k, d)."""
        cubes = np.asarray(cubes, dtype=np.int64).reshape(-1)
        if self.dim == 0:
            return np.zeros((cubes.size, 0), dtype=np.int64)
        return np.stack(np.unravel_index(cubes, self.shape), axis=1).astype(np.int64)

    def ravel(self, multi: np.ndarray) -> np.ndarray:
        multi = np.asarray(multi, dtype=np.int64).reshape(-1, self.dim)
        if self.dim == 0:
            return np.zeros(multi.shape[0], dtype=np.int64)
        return np.ravel_multi_index(tuple(multi.T), self.shape).astype(np.int64)

    def bounds(self, cubes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        multi = self.unravel(cubes)
        lo = -self.half_widths + multi * self.cube_widths
        return lo, lo + self.cube_widths

    def centers(self, cubes: np.ndarray) -> np.ndarray:
        lo, hi = self.bounds(cubes)
        return 0.5 * (lo + hi)

    def region(self, X: Neighborhood) -> np.ndarray:
        """Cubes whose closed cell meets X in more than a boundary point."""
        cubes = self.all_cubes()
        lo, hi = self.bounds(cubes)
        if X.shape == 'box':
            inside = np.all((hi > -X.radius * (1 - 1e-12)) & (lo < X.radius * (1 - 1e-12)), axis=1)
        else:
            gap = np.where((lo <= 0.0) & (hi >= 0.0), 0.0, np.minimum(np.abs(lo), np.abs(hi)))
            inside = np.linalg.norm(gap, axis=1) < X.radius * (1 - 1e-12)
        return cubes[inside]

    def _offsets(self) -> np.ndarray:
        return np.array(list(itertools.product((-1, 0, 1), repeat=self.dim)), dtype=np.int64).reshape(-1, self.dim)

    def neighbors(self, cubes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Face/corner neighbours of every cube.

        Returns:
            (ids, valid) of shape (k, 3^d); ids are -1 where the neighbour is off the grid
        """
        multi = self.unravel(cubes)
        shifted = multi[:, None, :] + self._offsets()[None, :, :]
        valid = np.all((shifted >= 0) & (shifted < np.asarray(self.shape)), axis=2)
        clipped = np.clip(shifted, 0, np.asarray(self.shape) - 1) if self.dim else shifted
        ids = self.ravel(clipped.reshape(-1, self.dim)).reshape(valid.shape)
        return np.where(valid, ids, -1), valid

    def grow(self, cubes: np.ndarray, layers: int = 1) -> np.ndarray:
        """The set grown by ``layers`` layers of face/corner neighbours (within the grid)."""
        result = as_cubes(cubes)
        for _ in range(layers):
            ids, valid = self.neighbors(result)
            result = as_cubes(ids[valid])
        return result

    def boundary_layer(self, cubes: np.ndarray) -> np.ndarray:
        """Cubes of the set with a neighbour outside the set or off the grid."""
        cubes = as_cubes(cubes)
        if cubes.size == 0:
            return EMPTY
        ids, valid = self.neighbors(cubes)
        member = valid & np.isin(ids, cubes)
        return cubes[~np.all(member, axis=1)]

    def locate(self, lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Index ranges of the cubes meeting each closed box [lo, hi].

        Returns:
            (first, last, outside): per-axis inclusive index ranges clipped to
            the grid (last < first for boxes missing the grid), and a flag for
            boxes reaching beyond the grid box
        """
        lo = np.atleast_2d(np.asarray(lo, dtype=float))
        hi = np.atleast_2d(np.asarray(hi, dtype=float))
        widths = self.cube_widths
        first = np.ceil((lo + self.half_widths) / widths).astype(np.int64) - 1
        last = np.floor((hi + self.half_widths) / widths).astype(np.int64)
        outside = np.any((lo < -self.half_widths) | (hi > self.half_widths), axis=1)
        upper = np.asarray(self.shape, dtype=np.int64) - 1
        empty = np.any((last < 0) | (first > upper), axis=1)
        first = np.clip(first, 0, upper)
        last = np.where(empty[:, None], first - 1, np.clip(last, 0, upper))
        return first, last, outside

    def refine(self, max_cells: int = DEFAULT_MAX_CELLS) -> 'CubicalGrid':
        """
        Same box, twice the subdivisions per axis (margin doubles with it).

        Raises:
            RefineError: If the refined grid would exceed max_cells cubes
        """
        cells = self.size * 2 ** self.dim
        if cells > max_cells:
            raise RefineError(f"Refining {self!r} needs {cells} cubes, more than max_cells={max_cells}")
        return CubicalGrid(tuple(2 * n for n in self.shape), self.half_widths, 2 * self.margin)

    def product(self, other: 'CubicalGrid') -> 'CubicalGrid':
        return CubicalGrid(self.shape + other.shape,
                           np.concatenate([self.half_widths, other.half_widths]),
                           min(self.margin, other.margin))

    def product_cubes(self, other: 'CubicalGrid', a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Flat ids of a x b in the product grid."""
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        return as_cubes((a[:, None] * other.size + b[None, :]).reshape(-1))

    def to_dict(self):
        return {'shape': list(self.shape), 'half_widths': self.half_widths.tolist(), 'margin': self.margin}

    def __repr__(self):
        widths = ', '.join(f'{w:.4g}' for w in self.half_widths)
        return f"CubicalGrid(shape={self.shape}, half_widths=[{widths}])"


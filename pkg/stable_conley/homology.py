"""
Integer homology of relative cubical chain complexes.

Elementary cubes of a grid with shape (n_0, ..., n_{d-1}) are written in
doubled coordinates c in {0, ..., 2 n_i}: an odd coordinate is a
nondegenerate interval, an even one a vertex.  Top cube m has coordinates
2m + 1 and its closure consists of the 3^d cells 2m + {0, 1, 2}^d.

Boundary matrices are first reduced with unit pivots on sparse rows; the
small remainder goes through sympy's Smith normal form.
"""

import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import numpy as np
import sympy
from sympy import ZZ
from sympy.polys.matrices import DomainMatrix
from sympy.polys.matrices.normalforms import invariant_factors

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HomologyGroup:
    """Z^rank plus the cyclic torsion summands Z/t."""

    rank: int = 0
    torsion: Tuple[int, ...] = ()

    @property
    def is_trivial(self) -> bool:
        return self.rank == 0 and not self.torsion

    def to_dict(self):
        return {'rank': self.rank, 'torsion': list(self.torsion)}


@dataclass(frozen=True)
class HomologicalIndex:
    """
    Graded homology of an index pair.

    ``groups`` maps degree -> HomologyGroup and only holds nontrivial degrees.
    ``cell_counts`` (relative cells per dimension) is bookkeeping and does not
    take part in equality.
    """

    dim: int
    groups: Mapping[int, HomologyGroup] = field(default_factory=dict)
    cell_counts: Tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        clean = {int(k): g for k, g in sorted(self.groups.items()) if not g.is_trivial}
        for k in clean:
            if not 0 <= k <= self.dim:
                raise ValueError(f"Homology degree {k} outside [0, {self.dim}]")
        object.__setattr__(self, 'groups', clean)
        object.__setattr__(self, 'cell_counts', tuple(int(c) for c in self.cell_counts))

    def group(self, k: int) -> HomologyGroup:
        return self.groups.get(k, HomologyGroup())

    def ranks(self) -> Dict[int, int]:
        return {k: g.rank for k, g in self.groups.items() if g.rank}

    def torsion(self) -> Dict[int, Tuple[int, ...]]:
        return {k: g.torsion for k, g in self.groups.items() if g.torsion}

    @property
    def is_trivial(self) -> bool:
        return not self.groups

    def euler_characteristic(self) -> int:
        return sum((-1) ** k * g.rank for k, g in self.groups.items())

    def cell_euler_characteristic(self) -> int:
        return sum((-1) ** k * c for k, c in enumerate(self.cell_counts))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'dim': self.dim,
            'degrees': [{'degree': k, 'rank': g.rank, 'torsion': list(g.torsion)}
                        for k, g in self.groups.items()],
            'cell_counts': list(self.cell_counts),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'HomologicalIndex':
        groups = {int(e['degree']): HomologyGroup(int(e['rank']), tuple(int(t) for t in e['torsion']))
                  for e in data.get('degrees', [])}
        return cls(int(data['dim']), groups, tuple(data.get('cell_counts', ())))


def sphere_index(degree: int, dim: int) -> HomologicalIndex:
    """Homology of the pointed sphere S^degree: Z in that degree only."""
    return HomologicalIndex(dim, {degree: HomologyGroup(1)})


def canonical_torsion(values: Sequence[int]) -> Tuple[int, ...]:
    """
    Invariant-factor form of the finite part of a diagonal Z-module.

    Returns the factors t_1 | t_2 | ... (all > 1) of the group sum Z/v.
    """
    powers: Dict[int, List[int]] = defaultdict(list)
    for v in values:
        v = abs(int(v))
        if v <= 1:
            continue
        for p, e in sympy.factorint(v).items():
            powers[p].append(p ** e)
    if not powers:
        return ()
    length = max(len(v) for v in powers.values())
    factors = [1] * length
    for p, items in powers.items():
        items.sort(reverse=True)
        for i, q in enumerate(items):
            factors[length - 1 - i] *= q
    return tuple(f for f in factors if f > 1)


# ── Matrix reduction ──────────────────────────────────────────────────────────

class _SparseMatrix:
    """Row/column dictionaries of an integer matrix for pivoting in place."""

    def __init__(self, entries: Mapping[Tuple[int, int], int]):
        self.rows: Dict[int, Dict[int, int]] = defaultdict(dict)
        self.cols: Dict[int, set] = defaultdict(set)
        for (r, c), v in entries.items():
            if v:
                self.rows[r][c] = int(v)
                self.cols[c].add(r)

    def _drop(self, r: int, c: int):
        del self.rows[r][c]
        self.cols[c].discard(r)

    def pivot(self, r: int, c: int):
        """Clear column c with the unit entry at (r, c), then remove row r and column c."""
        unit = self.rows[r][c]
        pivot_row = self.rows[r]
        for other in list(self.cols[c]):
            if other == r:
                continue
            target = self.rows[other]
            factor = target[c] * unit
            for j, v in pivot_row.items():
                value = target.get(j, 0) - factor * v
                if value:
                    if j not in target:
                        self.cols[j].add(other)
                    target[j] = value
                elif j in target:
                    self._drop(other, j)
        for j in list(pivot_row):
            self.cols[j].discard(r)
        del self.rows[r]
        del self.cols[c]

    def eliminate_units(self) -> int:
        """Pivot on unit entries until none is left; returns the number of pivots."""
        count = 0
        progress = True
        while progress:
            progress = False
            for c in sorted(self.cols, key=lambda k: (len(self.cols[k]), k)):
                candidates = self.cols.get(c)
                if not candidates:
                    continue
                best = None
                for r in candidates:
                    if abs(self.rows[r][c]) == 1 and (best is None or
                                                      (len(self.rows[r]), r) < (len(self.rows[best]), best)):
                        best = r
                if best is None:
                    continue
                self.pivot(best, c)
                count += 1
                progress = True
        return count

    def remainder(self) -> List[List[int]]:
        rows = sorted(r for r, entries in self.rows.items() if entries)
        cols = sorted(c for c, members in self.cols.items() if members)
        index = {c: i for i, c in enumerate(cols)}
        dense = [[0] * len(cols) for _ in rows]
        for i, r in enumerate(rows):
            for c, v in self.rows[r].items():
                dense[i][index[c]] = v
        return dense


def smith_diagonal(entries: Mapping[Tuple[int, int], int]) -> Tuple[int, Tuple[int, ...]]:
    """
    Rank and torsion factors of a sparse integer matrix.

    Args:
        entries: {(row, col): value}

    Returns:
        (rank, invariant factors > 1)
    """
    matrix = _SparseMatrix(entries)
    units = matrix.eliminate_units()
    rest = matrix.remainder()
    if not rest or not rest[0]:
        return units, ()
    logger.debug(f"Smith normal form on a {len(rest)}x{len(rest[0])} remainder after {units} unit pivots")
    dm = DomainMatrix([[ZZ(v) for v in row] for row in rest], (len(rest), len(rest[0])), ZZ)
    factors = [int(f) for f in invariant_factors(dm) if f != 0]
    return units + len(factors), canonical_torsion(factors)


def homology_from_boundaries(cell_counts: Sequence[int],
                             boundaries: Mapping[int, Any]) -> HomologicalIndex:
    """
    Homology of a finite chain complex over Z.

    Args:
        cell_counts: Number of cells n_k in each degree k = 0 .. d
        boundaries: boundaries[k] is the matrix of d_k: C_k -> C_{k-1}, given as a
            {(row, col): value} dict or anything numpy can read as n_{k-1} x n_k

    Returns:
        HomologicalIndex with beta_k = n_k - rank d_k - rank d_{k+1} and the
        torsion of d_{k+1}
    """
    counts = [int(c) for c in cell_counts]
    dim = max(len(counts) - 1, 0)
    reduced = {}
    for k in range(len(counts) + 1):
        raw = boundaries.get(k)
        if raw is None:
            reduced[k] = (0, ())
            continue
        if not isinstance(raw, Mapping):
            dense = np.asarray(raw, dtype=np.int64)
            raw = {(int(r), int(c)): int(dense[r, c]) for r, c in zip(*np.nonzero(dense))}
        reduced[k] = smith_diagonal(raw)
    groups = {}
    for k, n in enumerate(counts):
        rank = n - reduced[k][0] - reduced[k + 1][0]
        groups[k] = HomologyGroup(rank, reduced[k + 1][1])
    return HomologicalIndex(dim, groups, tuple(counts))


# ── Cubical chain complexes ───────────────────────────────────────────────────

def closure_cells(multi: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """Encoded ids of every face of the top cubes with the given multi-indices."""
    d = len(shape)
    multi = np.asarray(multi, dtype=np.int64).reshape(-1, d)
    if multi.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    offsets = np.array(list(itertools.product((0, 1, 2), repeat=d)), dtype=np.int64).reshape(-1, d)
    coords = (2 * multi[:, None, :] + offsets[None, :, :]).reshape(-1, d)
    return np.unique(_encode(coords, shape))


def _doubled_shape(shape: Sequence[int]) -> Tuple[int, ...]:
    return tuple(2 * int(n) + 1 for n in shape)


def _encode(coords: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    if len(shape) == 0:
        return np.zeros(coords.shape[0], dtype=np.int64)
    return np.ravel_multi_index(tuple(coords.T), _doubled_shape(shape)).astype(np.int64)


def _decode(ids: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    if len(shape) == 0:
        return np.zeros((ids.size, 0), dtype=np.int64)
    return np.stack(np.unravel_index(ids, _doubled_shape(shape)), axis=1).astype(np.int64)


def relative_chain_complex(shape: Sequence[int], p1_multi: np.ndarray, p0_multi: np.ndarray):
    """
    Relative cubical chain complex C(|P1|, |P0|).

    Args:
        shape: Grid shape
        p1_multi: Multi-indices of the top cubes of P1, shape (k, d)
        p0_multi: Multi-indices of the top cubes of P0

    Returns:
        (cell_counts, boundaries) in the format of homology_from_boundaries
    """
    d = len(shape)
    cells = np.setdiff1d(closure_cells(p1_multi, shape), closure_cells(p0_multi, shape), assume_unique=True)
    coords = _decode(cells, shape)
    degree = (coords % 2).sum(axis=1) if d else np.zeros(cells.size, dtype=np.int64)
    by_degree = [cells[degree == k] for k in range(d + 1)]
    counts = [c.size for c in by_degree]

    boundaries: Dict[int, Dict[Tuple[int, int], int]] = {}
    for k in range(1, d + 1):
        source = by_degree[k]
        target = by_degree[k - 1]
        entries: Dict[Tuple[int, int], int] = {}
        if source.size and target.size:
            src = _decode(source, shape)
            odd = src % 2 == 1
            before = np.cumsum(odd, axis=1) - odd
            for j in range(d):
                rows = np.flatnonzero(odd[:, j])
                if rows.size == 0:
                    continue
                sign = np.where(before[rows, j] % 2 == 0, 1, -1)
                for step, orientation in ((1, 1), (-1, -1)):
                    face = src[rows].copy()
                    face[:, j] += step
                    ids = _encode(face, shape)
                    pos = np.searchsorted(target, ids)
                    hit = (pos < target.size) & (target[np.minimum(pos, target.size - 1)] == ids)
                    for r, c, v in zip(pos[hit], rows[hit], orientation * sign[hit]):
                        entries[(int(r), int(c))] = entries.get((int(r), int(c)), 0) + int(v)
        boundaries[k] = entries
    return counts, boundaries


def relative_cubical_homology(shape: Sequence[int], p1_multi: np.ndarray,
                              p0_multi: np.ndarray) -> HomologicalIndex:
    """H_*(|P1|, |P0|; Z) for cube sets given by multi-indices."""
    counts, boundaries = relative_chain_complex(shape, p1_multi, p0_multi)
    logger.debug(f"Relative chain complex with cell counts {counts}")
    return homology_from_boundaries(counts, boundaries)


def kunneth_ranks(a: HomologicalIndex, b: HomologicalIndex) -> Dict[int, int]:
    """Rational Betti numbers of the product pair: sum over i + j = k of a_i b_j."""
    ranks: Dict[int, int] = defaultdict(int)
    for i, x in a.ranks().items():
        for j, y in b.ranks().items():
            ranks[i + j] += x * y
    return {k: v for k, v in sorted(ranks.items()) if v}

"""
Ambient Hilbert-space model.

The ambient space is l^2 with its coordinate basis e_0, e_1, ...  Every
operator is a finite symmetric core plus a diagonal tail, so any truncation to
n >= core size is exact.  Vectors are dense numpy prefixes; coordinates beyond
the end of an array are zero.

Types:
    DiagonalRule          — decaying diagonal sequence kappa_i = sum s * r^(i+1)
    SpectralOperator      — bounded self-adjoint Fredholm operator L
    CompactOperator       — symmetric finite block plus decaying diagonal
    StructuredCompactMap  — compact nonlinearity Q (cut-off polynomial + linear part)
    PermissibleField      — F = L + Q with a growth witness
    Frame                 — orthonormal frame spanning a finite subspace
    Neighborhood          — ball or box X used as isolating neighbourhood candidate
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from .config import (
    GROWTH_SAMPLES,
    KERNEL_TOLERANCE,
    NEIGHBORHOOD_SHAPES,
    ORTHONORMAL_TOLERANCE,
    SAMPLING_SEED,
    SYMMETRY_TOLERANCE,
)
from .errors import InvalidWitnessError, StructureError
from .polynomial import PolynomialMap
from .utils import content_hash

logger = logging.getLogger(__name__)

_NEGLIGIBLE = 1e-18
_MAX_SETTLE = 100_000


def cutoff(r: np.ndarray, radius: float) -> np.ndarray:
    """
    C^1 smoothstep cutoff: 1 for r <= radius, 0 for r >= 2 * radius.

    Args:
        r: Norms (any shape)
        radius: Cutoff radius R_cut

    Returns:
        chi(r) with the same shape as r
    """
    s = np.clip((np.asarray(r, dtype=float) - radius) / radius, 0.0, 1.0)
    return 1.0 - (3.0 * s ** 2 - 2.0 * s ** 3)


def cutoff_slope_bound(radius: float) -> float:
    """sup |chi'| for the smoothstep cutoff."""
    return 1.5 / radius


def _as_matrix(value: Any, size: Optional[int] = None) -> np.ndarray:
    if value is None:
        n = size or 0
        return np.zeros((n, n))
    arr = np.asarray(value, dtype=float)
    if arr.size == 0:
        n = size or 0
        return np.zeros((n, n))
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise StructureError(f"Expected a square matrix, got shape {arr.shape}")
    return arr


def _pad(matrix: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, n))
    k = matrix.shape[0]
    out[:k, :k] = matrix
    return out


def pad_vector(x: Any, n: int) -> np.ndarray:
    """Zero-extend a vector (or a batch of row vectors) to length n."""
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1] > n:
        raise StructureError(f"Vector of length {arr.shape[-1]} does not fit in {n} coordinates")
    pad = [(0, 0)] * (arr.ndim - 1) + [(0, n - arr.shape[-1])]
    return np.pad(arr, pad)


# ── Diagonal sequences ────────────────────────────────────────────────────────

@dataclass(frozen=True)
class DiagonalRule:
    """
    Decaying diagonal sequence kappa_i = sum_j scale_j * ratio_j^(i+1).

    Every ratio lies in [0, 1), so kappa_i -> 0 and the diagonal operator is
    compact.
    """

    terms: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        normalized = []
        for term in self.terms:
            scale, ratio = (float(v) for v in term)
            if not (math.isfinite(scale) and math.isfinite(ratio)):
                raise StructureError("Diagonal rule terms must be finite")
            if not 0.0 <= ratio < 1.0:
                raise StructureError(f"Diagonal rule ratio {ratio} must lie in [0, 1)")
            normalized.append((scale, ratio))
        object.__setattr__(self, 'terms', tuple(normalized))

    def is_zero(self) -> bool:
        return all(scale == 0.0 or ratio == 0.0 for scale, ratio in self.terms)

    def values(self, start: int, stop: int) -> np.ndarray:
        idx = np.arange(start, stop, dtype=float)
        out = np.zeros(idx.shape)
        for scale, ratio in self.terms:
            out += scale * ratio ** (idx + 1.0)
        return out

    def tail_bound(self, start: int) -> float:
        """Upper bound of sup_{i >= start} |kappa_i|."""
        return float(sum(abs(s) * r ** (start + 1) for s, r in self.terms))

    def settle_index(self, start: int = 0) -> int:
        """First index from which the whole tail is below 1e-18."""
        index = start
        for scale, ratio in self.terms:
            if scale == 0.0 or ratio == 0.0:
                continue
            needed = math.log(_NEGLIGIBLE / (abs(scale) * len(self.terms))) / math.log(ratio)
            index = max(index, int(math.ceil(needed)))
        return min(index, start + _MAX_SETTLE)

    def sup_abs(self, start: int) -> float:
        """sup_{i >= start} |kappa_i|, exact up to the 1e-18 tail."""
        stop = self.settle_index(start)
        explicit = float(np.abs(self.values(start, stop)).max()) if stop > start else 0.0
        return max(explicit, self.tail_bound(stop))

    def negated(self) -> 'DiagonalRule':
        return DiagonalRule(tuple((-s, r) for s, r in self.terms))

    def __add__(self, other: 'DiagonalRule') -> 'DiagonalRule':
        return DiagonalRule(self.terms + other.terms)

    def to_list(self):
        return [list(t) for t in self.terms]


# ── Linear operators ──────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """
    Bounded self-adjoint Fredholm operator L.

    Entries: core block diag(core_diagonal) + core_perturbation on coordinates
    0..m-1, tail value tail_values[i % 2] on coordinates i >= m (a single value
    for a single-signed tail), plus the diagonal rule kappa_i on every
    coordinate.
    """

    core_diagonal: np.ndarray
    core_perturbation: Optional[np.ndarray] = None
    tail_values: Tuple[float, ...] = (1.0, -1.0)
    spectral_gap: float = 1.0
    diagonal_compact: DiagonalRule = field(default_factory=DiagonalRule)
    tolerance: float = SYMMETRY_TOLERANCE

    def __post_init__(self):
        diag = np.asarray(self.core_diagonal, dtype=float).reshape(-1)
        if diag.size == 0:
            raise StructureError("Operator core must have at least one coordinate")
        pert = _as_matrix(self.core_perturbation, diag.size)
        if pert.shape != (diag.size, diag.size):
            raise StructureError(
                f"core_perturbation has shape {pert.shape}, expected {(diag.size, diag.size)}"
            )
        if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(pert))):
            raise StructureError("Operator entries must be finite")
        if np.max(np.abs(pert - pert.T), initial=0.0) > self.tolerance:
            raise StructureError("core_perturbation is not symmetric (operator is not self-adjoint)")
        tails = tuple(float(v) for v in self.tail_values)
        if len(tails) == 2:
            if not tails[0] > 0:
                raise StructureError("positive tail value must be > 0")
            if not tails[1] < 0:
                raise StructureError("negative tail value must be < 0")
        elif len(tails) == 1:
            if tails[0] == 0:
                raise StructureError("single-signed tail value must be nonzero")
        else:
            raise StructureError("tail must hold one or two values")
        if not (self.spectral_gap > 0 and math.isfinite(self.spectral_gap)):
            raise StructureError("spectral gap must be a positive number")
        rule = self.diagonal_compact
        if not isinstance(rule, DiagonalRule):
            rule = DiagonalRule(tuple(rule))
        object.__setattr__(self, 'core_diagonal', diag)
        object.__setattr__(self, 'core_perturbation', (pert + pert.T) / 2.0)
        object.__setattr__(self, 'tail_values', tails)
        object.__setattr__(self, 'diagonal_compact', rule)

        measured = self.measured_gap()
        if measured < self.spectral_gap * (1.0 - 1e-12):
            raise StructureError(
                f"spectral gap {self.spectral_gap} violated: nonzero spectrum reaches {measured:.6g}"
            )

    @property
    def core_dim(self) -> int:
        return int(self.core_diagonal.size)

    def tail_value(self, i: int) -> float:
        if len(self.tail_values) == 1:
            return self.tail_values[0]
        return self.tail_values[0] if i % 2 == 0 else self.tail_values[1]

    def tail_diagonal(self, start: int, stop: int) -> np.ndarray:
        """Diagonal entries L_ii for start <= i < stop, all beyond the core."""
        idx = np.arange(start, stop)
        base = np.array([self.tail_value(int(i)) for i in idx], dtype=float)
        return base + self.diagonal_compact.values(start, stop)

    def dense(self, n: Optional[int] = None) -> np.ndarray:
        """
        Exact n x n truncation of L.

        Raises:
            StructureError: If n is smaller than the core size
        """
        m = self.core_dim
        n = m if n is None else int(n)
        if n < m:
            raise StructureError(f"Truncation size {n} is smaller than the core size {m}")
        mat = np.zeros((n, n))
        mat[:m, :m] = np.diag(self.core_diagonal) + self.core_perturbation
        diag = np.zeros(n)
        diag[:m] = self.diagonal_compact.values(0, m)
        diag[m:] = self.tail_diagonal(m, n)
        mat[np.diag_indices(n)] += diag
        return mat

    def apply(self, x: Any) -> np.ndarray:
        """Apply L to a vector or to a batch of row vectors."""
        arr = np.asarray(x, dtype=float)
        n = max(arr.shape[-1], self.core_dim)
        return pad_vector(arr, n) @ self.dense(n).T

    def core_eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.dense())

    def tail_extremes(self, start: Optional[int] = None) -> np.ndarray:
        """Diagonal values on coordinates >= start that matter for sup/inf (explicit range + limits)."""
        start = self.core_dim if start is None else start
        stop = self.diagonal_compact.settle_index(start) + 2
        explicit = self.tail_diagonal(start, stop)
        return np.concatenate([explicit, np.array(self.tail_values)])

    def measured_gap(self) -> float:
        """Smallest |lambda| over nonzero spectrum (core eigenvalues and tail)."""
        values = np.concatenate([self.core_eigenvalues(), self.tail_extremes()])
        nonzero = np.abs(values)[np.abs(values) > KERNEL_TOLERANCE]
        return float(nonzero.min()) if nonzero.size else math.inf

    def norm(self) -> float:
        """Operator norm ||L||."""
        core = float(np.abs(self.core_eigenvalues()).max())
        return max(core, float(np.abs(self.tail_extremes()).max()))

    def plus(self, other: 'CompactOperator') -> 'SpectralOperator':
        """Return L + K for a compact operator K, keeping the gap honest."""
        m = max(self.core_dim, other.dim)
        diag = np.concatenate([
            self.core_diagonal,
            np.array([self.tail_value(i) for i in range(self.core_dim, m)], dtype=float),
        ])
        pert = _pad(self.core_perturbation, m) + _pad(other.block, m)
        rule = self.diagonal_compact + other.diagonal
        perturbed = _perturbed_gap(diag, pert, self.tail_values, rule)
        gap = min(self.spectral_gap, perturbed) if math.isfinite(perturbed) else self.spectral_gap
        return SpectralOperator(diag, pert, self.tail_values, gap, rule, self.tolerance)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'core_diagonal': self.core_diagonal.tolist(),
            'core_perturbation': self.core_perturbation.tolist(),
            'tail_values': list(self.tail_values),
            'spectral_gap': self.spectral_gap,
            'diagonal_compact': self.diagonal_compact.to_list(),
        }


def _perturbed_gap(diag: np.ndarray, pert: np.ndarray, tails: Tuple[float, ...], rule: DiagonalRule) -> float:
    m = diag.size
    core = np.diag(diag) + pert
    core[np.diag_indices(m)] += rule.values(0, m)
    values = list(np.linalg.eigvalsh((core + core.T) / 2.0))
    stop = rule.settle_index(m) + 2
    for i in range(m, stop):
        base = tails[0] if len(tails) == 1 or i % 2 == 0 else tails[1]
        values.append(base + float(rule.values(i, i + 1)[0]))
    values.extend(tails)
    arr = np.abs(np.array(values))
    arr = arr[arr > KERNEL_TOLERANCE]
    return float(arr.min()) if arr.size else math.inf


@dataclass(frozen=True, eq=False)
class CompactOperator:
    """Symmetric compact operator: finite block on coordinates 0..k-1 plus a decaying diagonal."""

    block: Optional[np.ndarray] = None
    diagonal: DiagonalRule = field(default_factory=DiagonalRule)
    tolerance: float = SYMMETRY_TOLERANCE

    def __post_init__(self):
        block = _as_matrix(self.block)
        if not np.all(np.isfinite(block)):
            raise StructureError("Compact operator entries must be finite")
        if np.max(np.abs(block - block.T), initial=0.0) > self.tolerance:
            raise StructureError("Compact operator K is not symmetric")
        rule = self.diagonal
        if not isinstance(rule, DiagonalRule):
            rule = DiagonalRule(tuple(rule))
        object.__setattr__(self, 'block', (block + block.T) / 2.0)
        object.__setattr__(self, 'diagonal', rule)

    @classmethod
    def rank_one(cls, vector: Sequence[float], scale: float) -> 'CompactOperator':
        """scale * v v^T for a finitely supported v."""
        v = np.asarray(vector, dtype=float)
        return cls(scale * np.outer(v, v))

    @property
    def dim(self) -> int:
        return int(self.block.shape[0])

    def is_zero(self) -> bool:
        return not np.any(self.block) and self.diagonal.is_zero()

    def dense(self, n: Optional[int] = None) -> np.ndarray:
        n = self.dim if n is None else int(n)
        if n < self.dim:
            raise StructureError(f"Truncation size {n} is smaller than the block size {self.dim}")
        mat = _pad(self.block, n)
        mat[np.diag_indices(n)] += self.diagonal.values(0, n)
        return mat

    def apply(self, x: Any) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        n = max(arr.shape[-1], self.dim)
        return pad_vector(arr, n) @ self.dense(n).T

    def tail_sup(self, start: int) -> float:
        """sup over coordinates i >= start (start >= block size) of |K_ii|."""
        return self.diagonal.sup_abs(max(start, self.dim))

    def norm(self) -> float:
        """Operator norm ||K||."""
        core = float(np.linalg.norm(self.dense(), 2)) if self.dim else 0.0
        return max(core, self.tail_sup(self.dim))

    def negated(self) -> 'CompactOperator':
        return CompactOperator(-self.block, self.diagonal.negated(), self.tolerance)

    def __add__(self, other: 'CompactOperator') -> 'CompactOperator':
        n = max(self.dim, other.dim)
        return CompactOperator(_pad(self.block, n) + _pad(other.block, n),
                               self.diagonal + other.diagonal, self.tolerance)

    def __sub__(self, other: 'CompactOperator') -> 'CompactOperator':
        return self + other.negated()

    def to_dict(self) -> Dict[str, Any]:
        return {'block': self.block.tolist(), 'diagonal': self.diagonal.to_list()}


# ── Nonlinearity ──────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class StructuredCompactMap:
    """
    Compact map Q(x) = chi(||x||) * P(x_S) + K x.

    P is a polynomial in the input coordinates S whose values land in the
    output coordinates; chi is the smoothstep cutoff at cutoff_radius.  The
    linear compact part K is not cut off, so Q - K' stays exact for any
    compact K'.
    """

    input_support: Tuple[int, ...] = ()
    components: Tuple[Tuple[int, str], ...] = ()
    cutoff_radius: float = 1.0
    linear: CompactOperator = field(default_factory=CompactOperator)

    def __post_init__(self):
        support = tuple(int(i) for i in self.input_support)
        if len(set(support)) != len(support) or any(i < 0 for i in support):
            raise StructureError("input_support must hold distinct non-negative indices")
        radius = float(self.cutoff_radius)
        if not math.isfinite(radius) or radius <= 0:
            raise StructureError("cutoff radius must be a finite positive number (uncut polynomials are not compact)")
        components = tuple((int(o), str(e)) for o, e in self.components)
        if any(o < 0 for o, _ in components):
            raise StructureError("output indices must be non-negative")
        outputs = tuple(sorted({o for o, _ in components}))
        slot = {o: k for k, o in enumerate(outputs)}
        poly = PolynomialMap.from_expressions(
            [(slot[o], expr) for o, expr in components], len(support), len(outputs)
        )
        object.__setattr__(self, 'input_support', support)
        object.__setattr__(self, 'components', components)
        object.__setattr__(self, 'cutoff_radius', radius)
        object.__setattr__(self, 'output_indices', outputs)
        object.__setattr__(self, 'polynomial', poly)

    @property
    def extent(self) -> int:
        indices = list(self.input_support) + list(self.output_indices)
        return max([i + 1 for i in indices] + [self.linear.dim])

    def has_nonlinear_part(self) -> bool:
        return not self.polynomial.is_zero()

    def nonlinear(self, x: Any) -> np.ndarray:
        """chi(||x||) P(x_S) scattered into the output coordinates."""
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 1
        arr = np.atleast_2d(arr)
        n = max(arr.shape[1], self.extent)
        arr = pad_vector(arr, n)
        out = np.zeros_like(arr)
        if self.has_nonlinear_part():
            weights = cutoff(np.linalg.norm(arr, axis=1), self.cutoff_radius)
            values = self.polynomial(arr[:, list(self.input_support)]) * weights[:, None]
            out[:, list(self.output_indices)] = values
        return out[0] if single else out

    def __call__(self, x: Any) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        n = max(arr.shape[-1], self.extent)
        return self.nonlinear(pad_vector(arr, n)) + self.linear.apply(pad_vector(arr, n))

    def nonlinear_bound(self, radius: float = math.inf) -> float:
        """Upper bound of sup ||chi P|| over the ball of the given radius."""
        effective = min(float(radius), 2.0 * self.cutoff_radius)
        return self.polynomial.coefficient_bound(effective)

    def with_linear(self, linear: CompactOperator) -> 'StructuredCompactMap':
        return StructuredCompactMap(self.input_support, self.components, self.cutoff_radius, linear)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'input_support': list(self.input_support),
            'components': [[o, e] for o, e in self.components],
            'cutoff_radius': self.cutoff_radius,
            'linear': self.linear.to_dict(),
        }


def default_witness(Q: StructuredCompactMap) -> Tuple[float, float]:
    """
    Growth witness derived from the structure of Q.

    With B the bound of the cut-off part and k = ||K||, the pair (B + k, 2B)
    satisfies ||Q(x)|| <= c1 ||x|| + c2 / (1 + ||x||); when B = 0 any positive
    c2 works and 1.0 is used.
    """
    bound = Q.nonlinear_bound()
    lin = Q.linear.norm()
    return (bound + lin, 2.0 * bound if bound > 0 else 1.0)


@dataclass(frozen=True, eq=False)
class PermissibleField:
    """Vector field F = L + Q on the ambient space; the flow solves dx/dt = -F(x)."""

    L: SpectralOperator
    Q: StructuredCompactMap = field(default_factory=StructuredCompactMap)
    growth_witness: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        witness = self.growth_witness
        if witness is None:
            witness = default_witness(self.Q)
        c1, c2 = (float(v) for v in witness)
        if c1 < 0 or c2 <= 0:
            raise StructureError(f"Growth witness must satisfy c1 >= 0 and c2 > 0, got {(c1, c2)}")
        object.__setattr__(self, 'growth_witness', (c1, c2))

    @property
    def extent(self) -> int:
        return max(self.L.core_dim, self.Q.extent)

    def __call__(self, x: Any) -> np.ndarray:
        return apply_field(self, x)

    def to_dict(self) -> Dict[str, Any]:
        return {'L': self.L.to_dict(), 'Q': self.Q.to_dict(), 'growth_witness': list(self.growth_witness)}

    @property
    def key(self) -> str:
        return content_hash(self.to_dict())


# ── Frames and neighbourhoods ─────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class Frame:
    """Orthonormal columns (|support| x d) spanning a subspace of the ambient space."""

    support: Tuple[int, ...]
    columns: np.ndarray
    tolerance: float = ORTHONORMAL_TOLERANCE

    def __post_init__(self):
        support = tuple(int(i) for i in self.support)
        if len(set(support)) != len(support) or any(i < 0 for i in support):
            raise StructureError("Frame support indices must be distinct and non-negative")
        cols = np.asarray(self.columns, dtype=float)
        if cols.size == 0:
            cols = np.zeros((len(support), 0 if cols.ndim < 2 else cols.shape[1]))
        if cols.ndim != 2 or cols.shape[0] != len(support):
            raise StructureError(f"Frame columns must have {len(support)} rows, got shape {cols.shape}")
        gram = cols.T @ cols
        if cols.shape[1] and np.max(np.abs(gram - np.eye(cols.shape[1]))) > self.tolerance:
            raise StructureError("Frame columns are not orthonormal")
        object.__setattr__(self, 'support', support)
        object.__setattr__(self, 'columns', cols)

    @classmethod
    def coordinate(cls, indices: Iterable[int]) -> 'Frame':
        idx = tuple(int(i) for i in indices)
        return cls(idx, np.eye(len(idx)))

    @classmethod
    def empty(cls) -> 'Frame':
        return cls((), np.zeros((0, 0)))

    @classmethod
    def from_ambient(cls, matrix: np.ndarray, tolerance: float = ORTHONORMAL_TOLERANCE) -> 'Frame':
        """Frame from ambient columns (n x d); the support is the set of nonzero rows."""
        mat = np.asarray(matrix, dtype=float)
        if mat.ndim != 2:
            raise StructureError("Ambient frame matrix must be two-dimensional")
        rows = tuple(int(i) for i in np.flatnonzero(np.any(mat != 0.0, axis=1)))
        return cls(rows, mat[list(rows), :], tolerance)

    @property
    def dim(self) -> int:
        return int(self.columns.shape[1])

    @property
    def extent(self) -> int:
        return max(self.support) + 1 if self.support else 0

    def embed(self, n: Optional[int] = None) -> np.ndarray:
        """Ambient matrix (n x d) of the frame columns."""
        n = self.extent if n is None else int(n)
        if n < self.extent:
            raise StructureError(f"Frame needs at least {self.extent} coordinates")
        out = np.zeros((n, self.dim))
        if self.support:
            out[list(self.support), :] = self.columns
        return out

    def projector(self, n: Optional[int] = None) -> np.ndarray:
        basis = self.embed(n)
        return basis @ basis.T

    def with_columns(self, columns: np.ndarray) -> 'Frame':
        """Same support, new orthonormal columns expressed on it."""
        return Frame(self.support, columns, self.tolerance)

    def direct_sum(self, other: 'Frame') -> 'Frame':
        """
        Block-diagonal frame spanning both subspaces.

        Raises:
            ValueError: If the supports overlap
        """
        if set(self.support) & set(other.support):
            raise ValueError("Direct sums need frames with disjoint supports")
        columns = np.zeros((len(self.support) + len(other.support), self.dim + other.dim))
        columns[:len(self.support), :self.dim] = self.columns
        columns[len(self.support):, self.dim:] = other.columns
        return Frame(self.support + other.support, columns, max(self.tolerance, other.tolerance))

    def to_dict(self) -> Dict[str, Any]:
        return {'support': list(self.support), 'columns': self.columns.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Frame':
        return cls(tuple(data['support']), np.asarray(data['columns'], dtype=float))

    @property
    def key(self) -> str:
        return content_hash(self.to_dict())[:16]


@dataclass(frozen=True)
class Neighborhood:
    """Candidate isolating neighbourhood: a ball of the given radius, or the cube [-R, R]^d in aligned coordinates."""

    radius: float
    shape: str = 'ball'

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise StructureError("Neighbourhood radius must be a positive number")
        if self.shape not in NEIGHBORHOOD_SHAPES:
            raise StructureError(f"Unknown neighbourhood shape '{self.shape}'")

    def enclosing_radius(self, dim: int) -> float:
        """Radius of a ball containing X intersected with a dim-dimensional subspace."""
        return self.radius if self.shape == 'ball' else self.radius * math.sqrt(max(dim, 1))

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.shape == 'ball':
            return np.linalg.norm(pts, axis=1) <= self.radius
        return np.max(np.abs(pts), axis=1, initial=0.0) <= self.radius

    def to_dict(self) -> Dict[str, Any]:
        return {'radius': self.radius, 'shape': self.shape}


def working_dim(*objects: Any) -> int:
    """Smallest truncation size on which every given operator/map/frame is exact."""
    size = 1
    for obj in objects:
        if isinstance(obj, SpectralOperator):
            size = max(size, obj.core_dim)
        elif isinstance(obj, CompactOperator):
            size = max(size, obj.dim)
        elif isinstance(obj, (StructuredCompactMap, PermissibleField, Frame)):
            size = max(size, obj.extent)
        elif isinstance(obj, (int, np.integer)):
            size = max(size, int(obj))
    return size


# ── Operations ────────────────────────────────────────────────────────────────

def apply_field(F: PermissibleField, x: Any) -> np.ndarray:
    """
    Evaluate F(x) = Lx + Q(x) on a finitely supported vector.

    Args:
        F: Permissible field
        x: Vector (or batch of row vectors) of ambient coordinates

    Returns:
        Array long enough to hold every nonzero coordinate of the result
    """
    arr = np.asarray(x, dtype=float)
    n = max(arr.shape[-1], F.extent)
    padded = pad_vector(arr, n)
    return F.L.apply(padded) + F.Q(padded)


def kernel_frame(L: SpectralOperator) -> Frame:
    """Orthonormal basis of ker L (possibly empty); the kernel lives in the core."""
    values, vectors = np.linalg.eigh(L.dense())
    mask = np.abs(values) <= KERNEL_TOLERANCE
    basis = vectors[:, mask]
    for j in range(basis.shape[1]):
        pivot = np.argmax(np.abs(basis[:, j]))
        if basis[pivot, j] < 0:
            basis[:, j] = -basis[:, j]
    return Frame(tuple(range(L.core_dim)), basis)


def alternative_decomposition(F: PermissibleField, K: Any) -> PermissibleField:
    """
    Rewrite F = L + Q as (L + K) + (Q - K).

    Args:
        F: Permissible field
        K: CompactOperator, or a square symmetric matrix used as its block

    Returns:
        PermissibleField describing the same vector field

    Raises:
        StructureError: If K is not symmetric or the new operator loses the gap
    """
    if not isinstance(K, CompactOperator):
        K = CompactOperator(np.asarray(K, dtype=float))
    L_new = F.L.plus(K)
    Q_new = F.Q.with_linear(F.Q.linear - K)
    logger.debug(f"Alternative decomposition: core {F.L.core_dim} -> {L_new.core_dim}, gap {L_new.spectral_gap:.6g}")
    return PermissibleField(L_new, Q_new)


@dataclass(frozen=True)
class GrowthReport:
    witness: Tuple[float, float]
    violation: float
    worst_radius: float
    samples: int


def verify_growth_bound(F: PermissibleField, witness: Optional[Tuple[float, float]] = None,
                        samples: int = GROWTH_SAMPLES) -> GrowthReport:
    """
    Check ||Q(x)|| <= c1 ||x|| + c2 / (1 + ||x||) on sampled points.

    Radii are drawn uniformly from [0, 4 R_cut] (0 included), each paired
    with a random direction in the span of the coordinates Q touches.

    Raises:
        InvalidWitnessError: If the maximal violation is positive
    """
    c1, c2 = witness if witness is not None else F.growth_witness
    rng = np.random.default_rng(SAMPLING_SEED)
    n = F.Q.extent
    radii = rng.uniform(0.0, 4.0 * F.Q.cutoff_radius, samples)
    radii[0] = 0.0
    directions = rng.standard_normal((samples, n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    points = directions * radii[:, None]
    norms = np.linalg.norm(F.Q(points), axis=1)
    excess = norms - (c1 * radii + c2 / (1.0 + radii))
    worst = int(np.argmax(excess))
    report = GrowthReport((float(c1), float(c2)), float(excess[worst]), float(radii[worst]), samples)
    if report.violation > 0:
        raise InvalidWitnessError(report.witness, report.violation, report.worst_radius)
    return report

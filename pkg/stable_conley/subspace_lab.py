"""
Projection and subspace machinery.

Every quantity here is computed exactly on a finite truncation: outside the
operator core and the frame support, L is diagonal and pi_V vanishes, so the
truncated matrices carry all of the relevant structure.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg as sla

from .config import (
    CONTAINMENT_TOLERANCE,
    KERNEL_TOLERANCE,
    RESIDUAL_SAMPLES,
    SAMPLING_SEED,
)
from .errors import NondegeneracyError, StableConleyError, StructureError
from .spectral_model import (
    CompactOperator,
    Frame,
    Neighborhood,
    PermissibleField,
    SpectralOperator,
    StructuredCompactMap,
    kernel_frame,
    working_dim,
)

logger = logging.getLogger(__name__)


# ── Norms ─────────────────────────────────────────────────────────────────────

def off_block_norm(L: SpectralOperator, V: Frame) -> float:
    """||(1 - pi_V) L pi_V|| in operator norm."""
    if V.dim == 0:
        return 0.0
    n = working_dim(L, V)
    basis = V.embed(n)
    image = L.dense(n) @ basis
    leak = image - basis @ (basis.T @ image)
    return float(np.linalg.norm(leak, 2))


def commutator_norm(L: SpectralOperator, V: Frame) -> float:
    """
    ||L pi_V - pi_V L|| in operator norm.

    The commutator is the anti-symmetric off-diagonal block operator built
    from X = (1 - pi_V) L pi_V, so its norm equals ||X||; X has rank at most
    dim V and lives on the span of V and L(V).

    Args:
        L: Self-adjoint operator
        V: Orthonormal frame

    Returns:
        Non-negative float
    """
    return off_block_norm(L, V)


def _output_frame(Q: StructuredCompactMap, n: int) -> np.ndarray:
    basis = np.zeros((n, len(Q.output_indices)))
    for k, idx in enumerate(Q.output_indices):
        basis[idx, k] = 1.0
    return basis


def linear_residual_norm(K: CompactOperator, V: Frame) -> float:
    """||(1 - pi_V) K|| for a compact operator K (block part exact, tail by its sup)."""
    n = max(working_dim(K, V), 1)
    proj = V.projector(n)
    leak = (np.eye(n) - proj) @ K.dense(n)
    head = float(np.linalg.norm(leak, 2))
    return max(head, K.diagonal.sup_abs(n))


@dataclass(frozen=True)
class ResidualBound:
    """Certified upper bound and sampled lower bound of sup_X ||(1 - pi_V) Q x||."""

    upper: float
    lower: float

    def to_dict(self) -> Dict[str, float]:
        return {'upper': self.upper, 'lower': self.lower}


def residual_compact_norm(Q: StructuredCompactMap, V: Frame, radius: float,
                          samples: int = RESIDUAL_SAMPLES) -> ResidualBound:
    """
    Bound sup over the ball of the given radius of ||(1 - pi_V) Q(x)||.

    The upper bound adds ||(1 - pi_V) E_out|| * sup ||chi P|| for the cut-off
    polynomial (E_out spans its output coordinates) and radius * ||(1 - pi_V) K||
    for the uncut linear part.  The lower bound is the maximum over the
    points +-radius * e_i of every relevant coordinate and a seeded random
    sample of the ball.

    Args:
        Q: Compact map
        V: Frame
        radius: Ball radius R_X (> 0)
        samples: Number of random sample points

    Returns:
        ResidualBound with lower <= upper
    """
    if not radius > 0:
        raise ValueError(f"Residual radius must be positive, got {radius}")
    n = max(working_dim(Q, V), 1)
    proj = V.projector(n)
    complement = np.eye(n) - proj

    upper = 0.0
    if Q.has_nonlinear_part():
        leak = float(np.linalg.norm(complement @ _output_frame(Q, n), 2))
        upper += leak * Q.nonlinear_bound(radius)
    if not Q.linear.is_zero():
        upper += radius * linear_residual_norm(Q.linear, V)

    if upper == 0.0:
        return ResidualBound(0.0, 0.0)

    rng = np.random.default_rng(SAMPLING_SEED)
    axes = np.eye(n) * radius
    directions = rng.standard_normal((samples, n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.uniform(0.0, 1.0, samples) ** (1.0 / n)
    points = np.vstack([axes, -axes, directions * radii[:, None]])
    values = Q(points)[:, :n] @ complement.T
    lower = float(np.max(np.linalg.norm(values, axis=1)))
    return ResidualBound(upper, min(lower, upper))


def compression_distance(F: PermissibleField, V: Frame, radius: float) -> float:
    """
    Pseudometric distance between F and its compression F_V on the ball.

    ||pi_V L (1 - pi_V) + (1 - pi_V) L pi_V|| + sup ||(1 - pi_V) Q||; the
    first term is the commutator norm.
    """
    return commutator_norm(F.L, V) + residual_compact_norm(F.Q, V, radius).upper


def compact_pseudometric(Q1: StructuredCompactMap, Q2: StructuredCompactMap, radius: float) -> float:
    """
    Certified bound of sup over the ball of ||Q1(x) - Q2(x)||.

    Cut-off polynomial parts are bounded separately (they coincide exactly
    when their structure matches); linear parts contribute radius * ||K1 - K2||.
    """
    same_nonlinear = (Q1.input_support == Q2.input_support
                      and Q1.components == Q2.components
                      and Q1.cutoff_radius == Q2.cutoff_radius)
    total = 0.0
    if not same_nonlinear:
        total += Q1.nonlinear_bound(radius) + Q2.nonlinear_bound(radius)
    diff = Q1.linear - Q2.linear
    if not diff.is_zero():
        total += radius * diff.norm()
    return total


# ── Signatures ────────────────────────────────────────────────────────────────

def _normalize_signs(vectors: np.ndarray) -> np.ndarray:
    out = vectors.copy()
    for j in range(out.shape[1]):
        pivot = int(np.argmax(np.abs(out[:, j])))
        if out[pivot, j] < 0:
            out[:, j] = -out[:, j]
    return out


@dataclass(frozen=True, eq=False)
class SignatureDecomposition:
    """Split of V into eigenframes of the compressed form pi_V L|_V by sign."""

    frame: Frame
    positive: Frame
    negative: Frame
    null: Frame
    positive_values: np.ndarray
    negative_values: np.ndarray
    null_values: np.ndarray
    tolerance: float

    @property
    def dims(self) -> Tuple[int, int, int]:
        """(dim V+, dim V-, dim V0)."""
        return self.positive.dim, self.negative.dim, self.null.dim

    @property
    def margin(self) -> float:
        """Smallest |eigenvalue| outside V0 (inf for an empty set)."""
        values = np.concatenate([np.abs(self.positive_values), np.abs(self.negative_values)])
        return float(values.min()) if values.size else math.inf

    @property
    def is_degenerate(self) -> bool:
        return self.null.dim > 0

    def require_nondegenerate(self) -> 'SignatureDecomposition':
        if self.is_degenerate:
            raise NondegeneracyError(
                f"Compressed form has {self.null.dim} eigenvalue(s) within {self.tolerance:.3g} of 0",
                self.null_values.tolist(),
            )
        return self

    def aligned_frame(self) -> Frame:
        """The frame V re-expressed in eigen-coordinates, ascending eigenvalue order."""
        columns = np.hstack([self.negative.columns, self.null.columns, self.positive.columns])
        return self.frame.with_columns(columns)

    def to_dict(self):
        return {
            'dims': list(self.dims),
            'positive': self.positive_values.tolist(),
            'negative': self.negative_values.tolist(),
            'null': self.null_values.tolist(),
            'tolerance': self.tolerance,
        }


def signature_of_matrix(frame: Frame, matrix: np.ndarray, tolerance: float) -> SignatureDecomposition:
    """Signature of a symmetric d x d form written in the coordinates of frame."""
    d = frame.dim
    mat = np.asarray(matrix, dtype=float).reshape(d, d)
    if d == 0:
        values, vectors = np.zeros(0), np.zeros((0, 0))
    else:
        values, vectors = np.linalg.eigh((mat + mat.T) / 2.0)
        vectors = _normalize_signs(vectors)

    def part(mask: np.ndarray) -> Frame:
        return frame.with_columns(frame.columns @ vectors[:, mask]) if d else frame

    neg = values < -tolerance
    pos = values > tolerance
    null = ~(neg | pos)
    return SignatureDecomposition(
        frame=frame,
        positive=part(pos),
        negative=part(neg),
        null=part(null),
        positive_values=values[pos],
        negative_values=values[neg],
        null_values=values[null],
        tolerance=float(tolerance),
    )


def compressed_matrix(L: SpectralOperator, V: Frame) -> np.ndarray:
    """Matrix of pi_V L|_V in the frame basis."""
    n = working_dim(L, V)
    basis = V.embed(n)
    return basis.T @ L.dense(n) @ basis


def signature(L: SpectralOperator, V: Frame, tolerance: Optional[float] = None) -> SignatureDecomposition:
    """
    Eigen-split of the compressed form pi_V L|_V.

    Args:
        L: Self-adjoint operator
        V: Frame
        tolerance: Degeneracy band half-width; defaults to spectral_gap / 2

    Returns:
        SignatureDecomposition (callers needing nondegeneracy call
        require_nondegenerate)
    """
    tol = L.spectral_gap / 2.0 if tolerance is None else float(tolerance)
    return signature_of_matrix(V, compressed_matrix(L, V), tol)


# ── Admissibility ─────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class AdmissibilityBudget:
    c1: float
    c2: float
    degeneracy_tolerance: Optional[float] = None

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0):
            raise StructureError(f"Budgets must be positive, got c1={self.c1}, c2={self.c2}")
        if self.degeneracy_tolerance is not None and not self.degeneracy_tolerance > 0:
            raise StructureError("Degeneracy tolerance must be positive")

    def tolerance_for(self, L: SpectralOperator) -> float:
        if self.degeneracy_tolerance is None:
            return L.spectral_gap / 2.0
        return self.degeneracy_tolerance

    def to_dict(self):
        return {'c1': self.c1, 'c2': self.c2, 'degeneracy_tolerance': self.degeneracy_tolerance}


@dataclass
class AdmissibilityRecord:
    kernel_defect: float = 0.0
    commutator: float = 0.0
    residual_upper: float = 0.0
    residual_lower: float = 0.0
    compression_distance: float = 0.0
    admissible: bool = False
    reasons: List[str] = field(default_factory=list)

    def to_dict(self):
        return {
            'kernel_defect': self.kernel_defect,
            'commutator': self.commutator,
            'residual_upper': self.residual_upper,
            'residual_lower': self.residual_lower,
            'compression_distance': self.compression_distance,
            'admissible': self.admissible,
            'reasons': list(self.reasons),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


def kernel_defect(L: SpectralOperator, V: Frame) -> float:
    """max over kernel basis vectors k of ||(1 - pi_V) k||."""
    kernel = kernel_frame(L)
    if kernel.dim == 0:
        return 0.0
    n = working_dim(L, V, kernel)
    vectors = kernel.embed(n)
    basis = V.embed(n)
    leak = vectors - basis @ (basis.T @ vectors)
    return float(np.max(np.linalg.norm(leak, axis=0)))


def admissible(F: PermissibleField, V: Frame, X: Neighborhood, budget: AdmissibilityBudget) -> AdmissibilityRecord:
    """
    Decide whether V belongs to the admissible family for (F, X, budget).

    Checks (1) ker L inside V, (2) commutator within c1, (3) residual upper
    bound within c2.  Never raises; failures are listed in ``reasons``.
    """
    record = AdmissibilityRecord()
    try:
        record.kernel_defect = kernel_defect(F.L, V)
        record.commutator = commutator_norm(F.L, V)
        bound = residual_compact_norm(F.Q, V, X.enclosing_radius(V.dim))
        record.residual_upper = bound.upper
        record.residual_lower = bound.lower
        record.compression_distance = record.commutator + bound.upper
    except (StableConleyError, ValueError, np.linalg.LinAlgError) as e:
        record.reasons.append(f"evaluation failed: {e}")
        return record

    if record.kernel_defect > CONTAINMENT_TOLERANCE:
        record.reasons.append(f"(1) kernel not contained: defect {record.kernel_defect:.3e}")
    if record.commutator > budget.c1:
        record.reasons.append(f"(2) commutator {record.commutator:.6g} exceeds c1={budget.c1:.6g}")
    if record.residual_upper > budget.c2:
        record.reasons.append(f"(3) residual {record.residual_upper:.6g} exceeds c2={budget.c2:.6g}")
    record.admissible = not record.reasons
    return record


# ── Exhausting sequences ──────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class CoordinateLadder:
    """Nested coordinate frames V_k = span{e_0, ..., e_{k-1}} with convergence diagnostics."""

    sizes: Tuple[int, ...]
    frames: Tuple[Frame, ...]
    commutators: Tuple[float, ...]
    test_vectors: np.ndarray
    test_residuals: np.ndarray
    core_dim: int

    @property
    def commutators_settled(self) -> bool:
        """Commutator is zero on every rung at or beyond the operator core."""
        return all(c <= KERNEL_TOLERANCE for k, c in zip(self.sizes, self.commutators) if k >= self.core_dim)

    @property
    def commutators_monotone(self) -> bool:
        tail = [c for k, c in zip(self.sizes, self.commutators) if k >= self.core_dim]
        return all(b <= a + KERNEL_TOLERANCE for a, b in zip(tail, tail[1:]))

    @property
    def projections_converge(self) -> bool:
        """||(1 - pi_{V_k}) t|| is non-increasing along the ladder and 0 on the last rung."""
        res = self.test_residuals
        if res.size == 0:
            return True
        monotone = bool(np.all(np.diff(res, axis=0) <= KERNEL_TOLERANCE))
        return monotone and bool(np.all(res[-1] <= KERNEL_TOLERANCE))

    @property
    def is_exhausting(self) -> bool:
        return self.commutators_settled and self.commutators_monotone and self.projections_converge

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)


def _ladder_test_vectors(F: PermissibleField, n: int) -> np.ndarray:
    idx = np.arange(n, dtype=float)
    vectors = [0.5 ** idx, (-0.5) ** idx, 1.0 / (1.0 + idx) ** 2]
    kernel = kernel_frame(F.L)
    if kernel.dim:
        size = max(n, kernel.extent)
        vectors.extend(kernel.embed(size)[:n].T)
    for out in F.Q.output_indices:
        if out < n:
            e = np.zeros(n)
            e[out] = 1.0
            vectors.append(e)
    mat = np.array(vectors, dtype=float)
    norms = np.linalg.norm(mat, axis=1)
    mat = mat[norms > 0]
    return mat / norms[norms > 0, None]


def build_coordinate_ladder(F: PermissibleField, n_max: int,
                            sizes: Optional[Sequence[int]] = None) -> CoordinateLadder:
    """
    Build nested coordinate frames and check the exhausting-sequence conditions.

    Args:
        F: Permissible field (its L fixes the commutators)
        n_max: Largest rung size
        sizes: Optional strictly increasing rung sizes (default 1..n_max)

    Returns:
        CoordinateLadder

    Raises:
        ValueError: If n_max is smaller than dim ker L or sizes are malformed
    """
    kernel_dim = kernel_frame(F.L).dim
    if n_max < kernel_dim:
        raise ValueError(f"Ladder length {n_max} is smaller than dim ker L = {kernel_dim}")
    sizes = tuple(range(1, n_max + 1)) if sizes is None else tuple(int(k) for k in sizes)
    if not sizes or any(k < 1 for k in sizes) or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError(f"Ladder sizes must be strictly increasing positive integers, got {list(sizes)}")
    if sizes[-1] > n_max:
        raise ValueError(f"Ladder size {sizes[-1]} exceeds n_max={n_max}")

    frames = tuple(Frame.coordinate(range(k)) for k in sizes)
    commutators = tuple(commutator_norm(F.L, V) for V in frames)
    tests = _ladder_test_vectors(F, sizes[-1])
    residuals = np.array([np.linalg.norm(tests[:, k:], axis=1) for k in sizes])
    ladder = CoordinateLadder(sizes, frames, commutators, tests, residuals, F.L.core_dim)
    logger.debug(f"Ladder {list(sizes)}: commutators {[f'{c:.3g}' for c in commutators]}")
    if sizes[-1] < F.L.core_dim:
        logger.warning(f"Ladder stops at {sizes[-1]} inside the operator core of size {F.L.core_dim}")
    elif not ladder.is_exhausting:
        logger.warning("Coordinate ladder fails the exhausting-sequence checks")
    return ladder


def _span(columns: np.ndarray) -> np.ndarray:
    if columns.shape[1] == 0:
        return columns
    return sla.orth(columns, rcond=1e-10)


def extend_subspace(L: SpectralOperator, W: Frame, eps: float,
                    ladder: Optional[Sequence[Frame]] = None) -> Frame:
    """
    Enlarge W to a frame E containing W with commutator below eps.

    Walks the ladder E_n; for each rung, U is the part of E_n orthogonal to
    pi_{E_n}(W) and E = span(W + U).  The coordinate frame covering both the
    operator core and the support of W always succeeds and closes the search.

    Args:
        L: Self-adjoint operator
        W: Frame to extend
        eps: Target commutator bound (> 0)
        ladder: Asymptotically invariant exhausting frames (optional)

    Returns:
        Frame E with W inside span(E) and commutator_norm(L, E) < eps

    Raises:
        ValueError: If eps <= 0
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if commutator_norm(L, W) < eps:
        return W

    closing = Frame.coordinate(range(working_dim(L, W)))
    candidates = list(ladder or []) + [closing]
    for rung in candidates:
        n = working_dim(L, W, rung)
        w_basis = W.embed(n)
        e_basis = rung.embed(n)
        coords = e_basis.T @ w_basis
        extra = e_basis @ sla.null_space(coords.T) if coords.size else e_basis
        basis = _span(np.hstack([w_basis, extra]))
        candidate = Frame.from_ambient(basis)
        value = commutator_norm(L, candidate)
        if value < eps and is_subframe(W, candidate):
            logger.info(f"Extended frame of dim {W.dim} to dim {candidate.dim} (commutator {value:.3g})")
            return candidate
    # unreachable: the closing frame is L-invariant and contains W
    raise ValueError("Could not extend frame below the requested commutator bound")


def orthogonal_complement(V: Frame, W: Frame) -> Frame:
    """
    U = W minus V (the orthogonal complement of V inside W).

    Raises:
        ValueError: If V is not contained in W
    """
    n = max(V.extent, W.extent, 1)
    v_basis = V.embed(n)
    w_basis = W.embed(n)
    leak = v_basis - w_basis @ (w_basis.T @ v_basis)
    if leak.size and np.max(np.linalg.norm(leak, axis=0)) > CONTAINMENT_TOLERANCE:
        raise ValueError("Frame V is not contained in W")
    coords = w_basis.T @ v_basis
    if W.dim == 0:
        return W
    null = sla.null_space(coords.T) if coords.shape[1] else np.eye(W.dim)
    return W.with_columns(W.columns @ null)


def is_subframe(V: Frame, W: Frame) -> bool:
    """Whether span(V) lies inside span(W)."""
    try:
        orthogonal_complement(V, W)
        return True
    except ValueError:
        return False


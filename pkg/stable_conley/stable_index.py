"""
Stable Conley indices: the Conley index of a compression, desuspended by the
negative spectral subspace of the compressed operator, plus the checks that
relate indices across frames, decompositions and continuations.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np

from .compressed_flow import (
    align_field,
    compress_field,
    decomposition_pseudometric,
    default_tau,
    homotopy_family,
    intermediate_field,
)
from .config import DEFAULT_CONTINUATION_THRESHOLD
from .conley_engine import ConleyResult, EngineSettings, compute_conley_index, isolate_field
from .cubical import CubicalGrid
from .errors import AdmissibilityError, ContinuationBreakError, RefineError, StructureError
from .homology import HomologicalIndex, HomologyGroup
from .spectral_model import Frame, Neighborhood, PermissibleField
from .subspace_lab import AdmissibilityBudget, AdmissibilityRecord, admissible, orthogonal_complement, signature

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StableIndex:
    """
    Graded homology at virtual degrees k - shift.

    Equality compares the graded groups only.
    """

    shift: int = field(compare=False)
    groups: Mapping[int, HomologyGroup] = field(default_factory=dict)
    provenance: Mapping[str, Any] = field(default_factory=dict, compare=False)
    homology: Optional[HomologicalIndex] = field(default=None, compare=False, repr=False)
    result: Optional[ConleyResult] = field(default=None, compare=False, repr=False)
    admissibility: Optional[AdmissibilityRecord] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        clean = {int(k): g for k, g in sorted(self.groups.items()) if not g.is_trivial}
        object.__setattr__(self, 'groups', clean)

    @classmethod
    def from_homology(cls, homology: HomologicalIndex, shift: int, **extra) -> 'StableIndex':
        groups = {k - shift: g for k, g in homology.groups.items()}
        return cls(shift, groups, homology=homology, **extra)

    def entries(self) -> List[Tuple[int, int, Tuple[int, ...]]]:
        """(virtual degree, rank, torsion) for every nontrivial degree."""
        return [(k, g.rank, g.torsion) for k, g in self.groups.items()]

    def ranks(self) -> Dict[int, int]:
        return {k: g.rank for k, g in self.groups.items() if g.rank}

    def suspend(self, times: int = 1) -> 'StableIndex':
        """Sigma^times: the group at virtual degree k moves to k + times (negative desuspends)."""
        return StableIndex(self.shift, {k + times: g for k, g in self.groups.items()},
                           dict(self.provenance, suspended=int(self.provenance.get('suspended', 0)) + times))

    def is_sphere(self, degree: int) -> bool:
        return self.groups == {degree: HomologyGroup(1)}

    def to_dict(self) -> Dict[str, Any]:
        return {
            'shift': self.shift,
            'entries': [{'virtual_degree': k, 'rank': r, 'torsion': list(t)} for k, r, t in self.entries()],
            'provenance': dict(self.provenance),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'StableIndex':
        groups = {int(e['virtual_degree']): HomologyGroup(int(e['rank']), tuple(int(t) for t in e['torsion']))
                  for e in data.get('entries', [])}
        return cls(int(data['shift']), groups, dict(data.get('provenance', {})))


def stable_equal(a: StableIndex, b: StableIndex) -> bool:
    """True iff the graded (rank, torsion) data agree at every virtual degree."""
    return a.groups == b.groups


def assemble_stable_index(F: PermissibleField, X: Neighborhood, V: Frame, budget: AdmissibilityBudget,
                          settings: Optional[EngineSettings] = None) -> StableIndex:
    """
    E(X, F, L, V): Conley index of the compression on V shifted down by dim V-.

    Raises:
        AdmissibilityError: If V fails the admissibility test
        NondegeneracyError: If the compressed form of L on V is degenerate
        IsolationError: If isolation still fails after the last refinement
        RefineError: If no index pair verifies after the last refinement
    """
    settings = settings or EngineSettings()
    record = admissible(F, V, X, budget)
    if not record.admissible:
        raise AdmissibilityError(record)
    tolerance = budget.tolerance_for(F.L)
    sig = signature(F.L, V, tolerance).require_nondegenerate()
    result = compute_conley_index(F, V, X, settings, tolerance)
    shift = sig.negative.dim
    provenance = {
        'frame': V.key,
        'decomposition': F.key[:16],
        'budget': budget.to_dict(),
        'grid': settings.to_dict(),
        'method': result.method,
        'refinements': result.refinements,
        'signature': list(sig.dims),
    }
    index = StableIndex.from_homology(result.homology, shift, provenance=provenance,
                                      result=result, admissibility=record)
    logger.info(f"Stable index on frame {V.key}: shift {shift}, virtual ranks {index.ranks()}")
    return index


# ── Decompositions ────────────────────────────────────────────────────────────

@dataclass
class DecompositionShiftReport:
    shift: int
    homology_identical: bool
    reconciled: bool
    first: StableIndex
    second: StableIndex

    def to_dict(self):
        return {
            'shift': self.shift,
            'homology_identical': self.homology_identical,
            'reconciled': self.reconciled,
            'first': self.first.to_dict(),
            'second': self.second.to_dict(),
        }


def decomposition_shift(F: PermissibleField, F_alt: PermissibleField, X: Neighborhood, V: Frame,
                        budget: AdmissibilityBudget,
                        settings: Optional[EngineSettings] = None) -> DecompositionShiftReport:
    """
    Compare the stable indices of two decompositions of the same field on V.

    The shift s = dim V-(L) - dim V-(L') is the number of suspensions taking
    E(X, F, L, V) to E(X, F, L', V); the unshifted homology must not depend
    on the decomposition.
    """
    first = assemble_stable_index(F, X, V, budget, settings)
    second = assemble_stable_index(F_alt, X, V, budget, settings)
    shift = first.shift - second.shift
    identical = first.homology == second.homology
    reconciled = stable_equal(first.suspend(shift), second)
    if not (identical and reconciled):
        logger.warning(f"Decompositions disagree on frame {V.key}: identical={identical}, reconciled={reconciled}")
    return DecompositionShiftReport(shift, identical, reconciled, first, second)


# ── Suspension ────────────────────────────────────────────────────────────────

@dataclass
class DegreeComparison:
    degree: int
    larger: HomologyGroup
    smaller: HomologyGroup

    @property
    def equal(self) -> bool:
        return self.larger == self.smaller


@dataclass
class SuspensionReport:
    suspension: int
    degrees: List[DegreeComparison]
    bookkeeping: bool
    stable_equal: bool
    small: StableIndex
    large: StableIndex
    homotopy: Dict[float, bool] = field(default_factory=dict)

    @property
    def consistent(self) -> bool:
        return (all(d.equal for d in self.degrees) and self.bookkeeping and self.stable_equal
                and all(self.homotopy.values()))

    def to_dict(self):
        return {
            'suspension': self.suspension,
            'degrees': [{'degree': d.degree, 'larger': d.larger.to_dict(), 'smaller': d.smaller.to_dict(),
                         'equal': d.equal} for d in self.degrees],
            'bookkeeping': self.bookkeeping,
            'stable_equal': self.stable_equal,
            'homotopy': {str(s): ok for s, ok in self.homotopy.items()},
        }


def suspension_consistency(F: PermissibleField, X: Neighborhood, V: Frame, W: Frame,
                           budget: AdmissibilityBudget, settings: Optional[EngineSettings] = None,
                           follow_homotopy: bool = False) -> SuspensionReport:
    """
    Check H_k(index on W) = H_{k - dim U-}(index on V) for U = W minus V.

    Also checks the signature identity dim V+ + dim U = dim W+ + dim U- and,
    with ``follow_homotopy``, isolation of X n W along the homotopy from the
    intermediate field pi_V L pi_V + pi_U L pi_U + pi_V Q to the compression
    on W at s = 0, 1/2, 1.

    Raises:
        ValueError: If V is not contained in W
        NondegeneracyError: If the form of L on U is degenerate
    """
    settings = settings or EngineSettings()
    U = orthogonal_complement(V, W)
    tolerance = budget.tolerance_for(F.L)
    sig_u = signature(F.L, U, tolerance).require_nondegenerate()
    lift = sig_u.negative.dim

    small = assemble_stable_index(F, X, V, budget, settings)
    large = assemble_stable_index(F, X, W, budget, settings)
    degrees = [DegreeComparison(k, large.homology.group(k), small.homology.group(k - lift))
               for k in range(W.dim + 1)]
    p_v = signature(F.L, V, tolerance).positive.dim
    p_w = signature(F.L, W, tolerance).positive.dim
    bookkeeping = p_v + U.dim == p_w + lift

    checks: Dict[float, bool] = {}
    if follow_homotopy:
        start = intermediate_field(F, V, W)
        end = compress_field(F, W)
        for s in (0.0, 0.5, 1.0):
            _, report = isolate_field(homotopy_family(start, end, s), X, settings)
            checks[s] = report.isolated
    result = SuspensionReport(lift, degrees, bookkeeping, stable_equal(small, large), small, large, checks)
    logger.info(f"Suspension by {lift}: consistent={result.consistent}")
    return result


# ── Continuation ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ContinuationStep:
    step: int
    s: float
    isolated: bool
    invariant_cubes: int
    refinements: int = 0

    def to_dict(self):
        return {'step': self.step, 's': self.s, 'isolated': self.isolated,
                'invariant_cubes': self.invariant_cubes, 'refinements': self.refinements}


@dataclass
class ContinuationReport:
    pseudometric: float
    steps: List[ContinuationStep]
    start: Optional[StableIndex] = None
    end: Optional[StableIndex] = None

    @property
    def ends_equal(self) -> bool:
        return self.start is not None and self.end is not None and stable_equal(self.start, self.end)

    @property
    def passed(self) -> bool:
        return all(step.isolated for step in self.steps) and self.ends_equal

    def to_dict(self):
        return {
            'pseudometric': self.pseudometric,
            'steps': [s.to_dict() for s in self.steps],
            'start': self.start.to_dict() if self.start else None,
            'end': self.end.to_dict() if self.end else None,
            'ends_equal': self.ends_equal,
        }


def continuation_check(F_a: PermissibleField, F_b: PermissibleField, X: Neighborhood, V: Frame,
                       budget: AdmissibilityBudget, settings: Optional[EngineSettings] = None,
                       steps: int = 11,
                       threshold: float = DEFAULT_CONTINUATION_THRESHOLD) -> ContinuationReport:
    """
    Follow isolation of X n V along (1 - s) F_a,V + s F_b,V for s on a uniform grid.

    Both compressions are written in the eigenframe aligned with F_a and use
    one cubical grid and one flow time.  A failed step is retried on refined
    grids up to settings.max_refinements times before it counts as a break.

    Raises:
        ValueError: If steps < 2
        StructureError: If the pseudometric between F_a and F_b exceeds threshold
        ContinuationBreakError: At the first step where isolation is lost
    """
    if steps < 2:
        raise ValueError("A continuation sweep needs at least 2 steps")
    settings = settings or EngineSettings()
    rho = decomposition_pseudometric(F_a, F_b, X)
    if rho > threshold:
        raise StructureError(f"Pseudometric {rho:.4g} between the fields exceeds the continuation "
                             f"threshold {threshold:.4g}")

    tolerance = budget.tolerance_for(F_a.L)
    f_a, sig = align_field(F_a, V, tolerance)
    f_b = compress_field(F_b, sig.aligned_frame())
    tau = settings.tau or min(default_tau(f_a, settings.tau_factor, settings.tau_max),
                              default_tau(f_b, settings.tau_factor, settings.tau_max))
    fixed = settings.with_overrides(tau=tau)
    base = CubicalGrid.for_neighborhood(X, f_a.dim, settings.subdivisions, settings.margin, settings.max_cells)

    done: List[ContinuationStep] = []
    previous = 0.0
    for i, s in enumerate(np.linspace(0.0, 1.0, steps)):
        s = float(s)
        f_s = homotopy_family(f_a, f_b, s)
        grid = base
        for level in range(settings.max_refinements + 1):
            _, report = isolate_field(f_s, X, fixed, grid)
            if report.isolated or level == settings.max_refinements:
                break
            try:
                grid = grid.refine(settings.max_cells)
            except RefineError as e:
                logger.debug(f"Continuation step {i}: {e}")
                break
        done.append(ContinuationStep(i, s, report.isolated, int(report.invariant.size), level))
        logger.debug(f"Continuation step {i} (s={s:.4g}): isolated={report.isolated}")
        if not report.isolated:
            raise ContinuationBreakError(s, i, (previous, s), done)
        previous = s

    start = assemble_stable_index(F_a, X, V, budget, settings)
    end = assemble_stable_index(F_b, X, V, budget, settings)
    return ContinuationReport(rho, done, start, end)

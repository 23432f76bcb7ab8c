"""
Pipeline orchestration: stable indices over every frame of a problem, and
continuation sweeps between two problems.

Frames run concurrently; the report is merged in frame order, so it does not
depend on the worker count or on which results came from the cache.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from .cache import ResultCache
from .compressed_flow import decomposition_pseudometric
from .config import PORTRAIT_SAMPLES
from .conley_engine import ConleyResult, EngineSettings
from .errors import AdmissibilityError, ContinuationBreakError, StableConleyError
from .homology import HomologicalIndex
from .problem import ProblemSpec
from .spectral_model import Frame, Neighborhood, PermissibleField
from .stable_index import (
    ContinuationStep,
    StableIndex,
    assemble_stable_index,
    continuation_check,
    stable_equal,
)
from .subspace_lab import AdmissibilityBudget, AdmissibilityRecord, admissible
from .utils import content_hash

logger = logging.getLogger(__name__)

ASSEMBLED = 'assembled'
INADMISSIBLE = 'inadmissible'
FAILED = 'failed'

# Sections that determine a per-frame result
CACHED_SECTIONS = ('operator', 'nonlinearity', 'neighborhood', 'budgets')


@dataclass
class FrameResult:
    """Outcome of the pipeline on one frame."""

    position: int
    name: str
    kind: str
    dim: int
    frame: Dict[str, Any]
    status: str
    admissibility: AdmissibilityRecord
    index: Optional[StableIndex] = None
    homology: Optional[HomologicalIndex] = None
    method: Optional[str] = None
    refinements: int = 0
    p1_cubes: Optional[int] = None
    p0_cubes: Optional[int] = None
    portrait: Optional[Dict[str, Any]] = None
    error: Optional[str] = None
    cached: bool = field(default=False, compare=False)
    elapsed: float = field(default=0.0, compare=False)

    @property
    def assembled(self) -> bool:
        return self.status == ASSEMBLED

    @property
    def reasons(self) -> List[str]:
        if self.error:
            return list(self.admissibility.reasons) + [self.error]
        return list(self.admissibility.reasons)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'position': self.position,
            'name': self.name,
            'kind': self.kind,
            'dim': self.dim,
            'frame': self.frame,
            'status': self.status,
            'admissibility': self.admissibility.to_dict(),
            'index': self.index.to_dict() if self.index is not None else None,
            'homology': self.homology.to_dict() if self.homology is not None else None,
            'method': self.method,
            'refinements': self.refinements,
            'p1_cubes': self.p1_cubes,
            'p0_cubes': self.p0_cubes,
            'portrait': self.portrait,
            'error': self.error,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], **extra) -> 'FrameResult':
        return cls(
            position=int(data['position']),
            name=data['name'],
            kind=data['kind'],
            dim=int(data['dim']),
            frame=data['frame'],
            status=data['status'],
            admissibility=AdmissibilityRecord.from_dict(data['admissibility']),
            index=StableIndex.from_dict(data['index']) if data.get('index') else None,
            homology=HomologicalIndex.from_dict(data['homology']) if data.get('homology') else None,
            method=data.get('method'),
            refinements=int(data.get('refinements', 0)),
            p1_cubes=data.get('p1_cubes'),
            p0_cubes=data.get('p0_cubes'),
            portrait=data.get('portrait'),
            error=data.get('error'),
            **extra,
        )


@dataclass
class SweepResult:
    """Per-step isolation decisions of a continuation sweep on one frame."""

    frame: str
    pseudometric: float
    steps: List[ContinuationStep]
    start: Optional[StableIndex] = None
    end: Optional[StableIndex] = None
    break_step: Optional[int] = None
    break_s: Optional[float] = None
    bracket: Optional[Tuple[float, float]] = None

    @property
    def broken(self) -> bool:
        return self.break_step is not None

    @property
    def ends_equal(self) -> bool:
        return self.start is not None and self.end is not None and stable_equal(self.start, self.end)

    @property
    def passed(self) -> bool:
        return not self.broken and all(s.isolated for s in self.steps) and self.ends_equal

    def to_dict(self) -> Dict[str, Any]:
        return {
            'frame': self.frame,
            'pseudometric': self.pseudometric,
            'steps': [s.to_dict() for s in self.steps],
            'start': self.start.to_dict() if self.start else None,
            'end': self.end.to_dict() if self.end else None,
            'ends_equal': self.ends_equal,
            'break': None if not self.broken else {
                'step': self.break_step, 's': self.break_s, 'bracket': list(self.bracket)},
            'passed': self.passed,
        }


@dataclass
class RunReport:
    """
    Everything a run produced.

    ``elapsed`` and ``cache_hits`` are for the console only; they are left
    out of to_dict so emitted reports are identical across reruns.
    """

    problem: str
    problem_hash: str
    settings: Dict[str, Any]
    frames: List[FrameResult] = field(default_factory=list)
    sweep: Optional[SweepResult] = None
    elapsed: float = 0.0
    cache_hits: int = 0

    @property
    def assembled(self) -> List[FrameResult]:
        return [r for r in self.frames if r.assembled]

    def equality_matrix(self) -> Tuple[List[str], np.ndarray]:
        """Pairwise stable_equal over assembled frames (failed frames are excluded)."""
        rows = self.assembled
        matrix = np.array([[stable_equal(a.index, b.index) for b in rows] for a in rows], dtype=bool)
        return [r.name for r in rows], matrix.reshape(len(rows), len(rows))

    @property
    def all_equal(self) -> bool:
        _, matrix = self.equality_matrix()
        return bool(matrix.all())

    def to_dict(self) -> Dict[str, Any]:
        names, matrix = self.equality_matrix()
        return {
            'problem': self.problem,
            'problem_hash': self.problem_hash,
            'settings': self.settings,
            'frames': [r.to_dict() for r in self.frames],
            'equality': {'frames': names, 'matrix': matrix.tolist()},
            'sweep': self.sweep.to_dict() if self.sweep is not None else None,
        }


# ── Single frames ─────────────────────────────────────────────────────────────

def _portrait(result: ConleyResult) -> Optional[Dict[str, Any]]:
    """Index-pair cubes and sampled flow arrows for a planar engine result."""
    if result.pair is None or result.field.dim != 2:
        return None
    grid = result.pair.grid
    axes = [np.linspace(-b, b, PORTRAIT_SAMPLES) for b in grid.half_widths]
    points = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, 2)
    arrows = -result.field.evaluate(points)
    return {
        'grid': grid.to_dict(),
        'p1': grid.unravel(result.pair.p1).tolist(),
        'p0': grid.unravel(result.pair.p0).tolist(),
        'invariant': grid.unravel(result.pair.invariant).tolist(),
        'arrows': np.hstack([points, arrows]).tolist(),
    }


def assemble_frame(F: PermissibleField, X: Neighborhood, budget: AdmissibilityBudget,
                   settings: EngineSettings, position: int, name: str, kind: str,
                   V: Frame) -> FrameResult:
    """
    Run admissibility and, when it passes, stable-index assembly on one frame.

    Never raises for pipeline failures; they are recorded on the result.
    """
    started = time.perf_counter()
    record = admissible(F, V, X, budget)
    result = FrameResult(position, name, kind, V.dim, V.to_dict(), INADMISSIBLE, record)
    if not record.admissible:
        logger.info(f"Frame {name} is not admissible: {'; '.join(record.reasons)}")
    else:
        try:
            index = assemble_stable_index(F, X, V, budget, settings)
        except (StableConleyError, ValueError, np.linalg.LinAlgError) as e:
            result.status = FAILED
            result.error = f"{type(e).__name__}: {e}"
            logger.warning(f"Frame {name} failed: {result.error}")
        else:
            conley = index.result
            result.status = ASSEMBLED
            result.index = index
            result.homology = index.homology
            result.method = conley.method
            result.refinements = conley.refinements
            if conley.pair is not None:
                result.p1_cubes, result.p0_cubes = conley.pair.counts
            result.portrait = _portrait(conley)
    result.elapsed = time.perf_counter() - started
    return result


def frame_cache_key(spec: ProblemSpec, settings: EngineSettings, V: Frame, name: str, kind: str,
                    position: int) -> str:
    return ResultCache.key_for(spec.section_dict(*CACHED_SECTIONS), settings.to_dict(), V.to_dict(),
                               [position, name, kind])


def run_ladder(spec: ProblemSpec, workers: int = 1, cache: Optional[ResultCache] = None,
               progress: bool = False, settings: Optional[EngineSettings] = None) -> RunReport:
    """
    Stable indices on every ladder rung and every declared rotated frame.

    Args:
        spec: Validated problem
        workers: Frames processed concurrently
        cache: Result cache (None: no caching)
        progress: Show a progress bar
        settings: Engine settings (from the problem file when None)

    Returns:
        RunReport with one FrameResult per frame, in file order
    """
    started = time.perf_counter()
    settings = settings or spec.engine_settings()
    F = spec.build_field()
    X = spec.build_neighborhood()
    budget = spec.build_budget()
    frames = spec.frames(F)
    logger.info(f"Running {len(frames)} frame(s) of problem '{spec.name}' with {workers} worker(s)")

    def run(item):
        position, (name, kind, V) = item
        key = frame_cache_key(spec, settings, V, name, kind, position)
        if cache is not None:
            hit = cache.get(key)
            if hit is not None:
                return FrameResult.from_dict(hit, cached=True)
        result = assemble_frame(F, X, budget, settings, position, name, kind, V)
        if cache is not None:
            cache.put(key, result.to_dict())
        return result

    items = list(enumerate(frames))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        results = list(tqdm(executor.map(run, items), total=len(items), desc='Frames',
                            unit='frame', disable=not progress))

    report = RunReport(spec.name, content_hash(spec.to_dict()), settings.to_dict(), results)
    report.cache_hits = sum(1 for r in results if r.cached)
    report.elapsed = time.perf_counter() - started
    names, matrix = report.equality_matrix()
    logger.info(f"Assembled {len(names)}/{len(results)} frame(s); all equal: {bool(matrix.all())}")
    return report


# ── Continuation ──────────────────────────────────────────────────────────────

def shared_frame(spec_a: ProblemSpec, F_a: PermissibleField, F_b: PermissibleField,
                 X: Neighborhood, budget: AdmissibilityBudget) -> Tuple[str, Frame]:
    """
    First frame of spec_a admissible for both fields.

    Raises:
        AdmissibilityError: If no frame is admissible for both
    """
    last = None
    for name, _, V in spec_a.frames(F_a):
        record_a = admissible(F_a, V, X, budget)
        record_b = admissible(F_b, V, X, budget)
        if record_a.admissible and record_b.admissible:
            return name, V
        last = record_a if not record_a.admissible else record_b
    raise AdmissibilityError(last or AdmissibilityRecord(reasons=['no frames declared']))


def continuation_sweep(spec_a: ProblemSpec, spec_b: ProblemSpec, steps: int = 11,
                       settings: Optional[EngineSettings] = None) -> RunReport:
    """
    Continuation check from spec_a's field to spec_b's on their shared admissible frame.

    The neighbourhood, budgets and engine settings come from spec_a.  A loss
    of isolation is recorded on the sweep (step index and bracketing
    parameters) rather than raised.

    Raises:
        ValueError: If the two operators have different core sizes, or steps < 2
        AdmissibilityError: If no frame is admissible for both fields
    """
    started = time.perf_counter()
    F_a, F_b = spec_a.build_field(), spec_b.build_field()
    if F_a.L.core_dim != F_b.L.core_dim:
        raise ValueError(f"Operators differ in core size: {F_a.L.core_dim} vs {F_b.L.core_dim}")
    settings = settings or spec_a.engine_settings()
    X = spec_a.build_neighborhood()
    budget = spec_a.build_budget()
    name, V = shared_frame(spec_a, F_a, F_b, X, budget)
    threshold = spec_a.continuation.threshold
    logger.info(f"Sweeping {steps} step(s) on frame {name}")

    try:
        outcome = continuation_check(F_a, F_b, X, V, budget, settings, steps, threshold)
    except ContinuationBreakError as e:
        logger.warning(f"Continuation broke at step {e.step} (s={e.s:.4g})")
        sweep = SweepResult(name, decomposition_pseudometric(F_a, F_b, X), e.steps,
                            break_step=e.step, break_s=e.s, bracket=tuple(e.bracket))
    else:
        sweep = SweepResult(name, outcome.pseudometric, outcome.steps, outcome.start, outcome.end)

    pair_hash = content_hash([spec_a.to_dict(), spec_b.to_dict()])
    report = RunReport(f"{spec_a.name} -> {spec_b.name}", pair_hash, settings.to_dict(), [], sweep)
    report.elapsed = time.perf_counter() - started
    return report

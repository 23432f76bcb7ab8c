"""
Combinatorial Conley indices of compressed flows.

Pipeline for one frame:

    compressed field -> cubical grid -> outer map (time-tau, enclosed)
        -> invariant part (SCCs) -> isolation check -> index pair
        -> relative cubical homology

Cube graphs carry one extra node, OUTSIDE (id = grid.size), standing for
everything beyond the grid box.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .compressed_flow import FiniteField, align_field, default_tau, field_signature, integrate_batch
from .config import (
    DEFAULT_COLLAR_LAYERS,
    DEFAULT_FLOW_TOLERANCE,
    DEFAULT_MARGIN,
    DEFAULT_MAX_CELLS,
    DEFAULT_MAX_ENGINE_DIM,
    DEFAULT_MAX_REFINEMENTS,
    DEFAULT_SUBDIVISIONS,
    DEFAULT_TAU_FACTOR,
    DEFAULT_TAU_MAX,
    FIELD_BOX_SCALE,
    IMAGE_CHUNK_SIZE,
    METHODS,
    MIN_SUBDIVISIONS,
    MU_PASSES,
    is_power_of_two,
)
from .cubical import EMPTY, CubicalGrid, as_cubes, difference, intersection, is_subset, union
from .errors import IsolationError, RefineError, StructureError
from .homology import HomologicalIndex, relative_cubical_homology, sphere_index
from .spectral_model import Frame, Neighborhood, PermissibleField
from .subspace_lab import SignatureDecomposition

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EngineSettings:
    """Grid and flow parameters of one index computation."""

    subdivisions: int = DEFAULT_SUBDIVISIONS
    margin: int = DEFAULT_MARGIN
    max_refinements: int = DEFAULT_MAX_REFINEMENTS
    max_cells: int = DEFAULT_MAX_CELLS
    max_engine_dim: int = DEFAULT_MAX_ENGINE_DIM
    method: str = 'auto'
    collar_layers: int = DEFAULT_COLLAR_LAYERS
    tau: Optional[float] = None
    tol: float = DEFAULT_FLOW_TOLERANCE
    tau_factor: float = DEFAULT_TAU_FACTOR
    tau_max: float = DEFAULT_TAU_MAX
    workers: int = 1

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise StructureError('; '.join(problems))

    def violations(self) -> List[str]:
        problems = []
        if not is_power_of_two(self.subdivisions) or self.subdivisions < MIN_SUBDIVISIONS:
            problems.append(f"subdivisions must be a power of two >= {MIN_SUBDIVISIONS}")
        if self.margin < 2:
            problems.append("margin must be at least 2 cubes")
        if self.max_refinements < 0:
            problems.append("max_refinements must be >= 0")
        if self.method not in METHODS:
            problems.append(f"method must be one of {', '.join(METHODS)}")
        if self.collar_layers < 1:
            problems.append("collar_layers must be >= 1")
        if self.tau is not None and not self.tau > 0:
            problems.append("tau must be positive")
        if not (self.tol > 0 and self.tau_factor > 0 and self.tau_max > 0):
            problems.append("tol, tau_factor and tau_max must be positive")
        if self.workers < 1:
            problems.append("workers must be >= 1")
        return problems

    def with_overrides(self, **changes) -> 'EngineSettings':
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_dict(self) -> Dict[str, Any]:
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.pop('workers')
        return data


# ── Outer maps ────────────────────────────────────────────────────────────────

@dataclass(eq=False)
class OuterMap:
    """
    Multivalued map on the cubes of a grid.

    ``graph`` is a 0/1 CSR matrix of shape (N + 1, N + 1); row c lists the
    image of cube c, column N is OUTSIDE.
    """

    grid: CubicalGrid
    graph: sparse.csr_matrix
    tau: float
    exited: np.ndarray
    inflation: np.ndarray

    @property
    def outside(self) -> int:
        return self.grid.size

    def image(self, cubes: np.ndarray) -> np.ndarray:
        cubes = as_cubes(cubes)
        if cubes.size == 0:
            return EMPTY
        return as_cubes(self.graph[cubes].indices)

    def out_degrees(self) -> np.ndarray:
        return np.diff(self.graph.indptr)[:self.outside]

    def restricted(self, region: np.ndarray) -> sparse.csr_matrix:
        """Subgraph induced on the region (rows/columns in region order)."""
        return self.graph[region][:, region].tocsr()

    @property
    def edge_count(self) -> int:
        return int(self.graph.nnz)


def _enumerate_boxes(grid: CubicalGrid, first: np.ndarray, last: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(owner, cube) pairs for every cube inside each index box."""
    counts = np.maximum(last - first + 1, 0)
    totals = np.prod(counts, axis=1) if grid.dim else np.ones(first.shape[0], dtype=np.int64)
    owner = np.repeat(np.arange(first.shape[0]), totals)
    if owner.size == 0:
        return owner, owner
    local = np.arange(owner.size) - np.repeat(np.cumsum(totals) - totals, totals)
    multi = np.empty((owner.size, grid.dim), dtype=np.int64)
    for axis in range(grid.dim - 1, -1, -1):
        c = counts[owner, axis]
        multi[:, axis] = first[owner, axis] + local % c
        local //= c
    return owner, grid.ravel(multi)


def _chunk_images(f: FiniteField, grid: CubicalGrid, cubes: np.ndarray, tau: float, tol: float,
                  mu_guess: float, exit_gap: float):
    centers = grid.centers(cubes)
    flow = integrate_batch(f, centers, tau, tol)
    r_c = grid.half_diagonal

    # mu must bound the log-norm over the tube padded with the spread it implies
    mu = np.full(cubes.size, mu_guess)
    settled = np.zeros(cubes.size, dtype=bool)
    for _ in range(MU_PASSES):
        pad = r_c * np.exp(np.maximum(mu, 0.0) * tau) + flow.chord
        local = f.log_norm_bound(flow.tube_lo - pad[:, None], flow.tube_hi + pad[:, None])
        settled = local <= mu + 1e-12
        mu = np.where(settled, local, np.maximum(local, mu))
        if settled.all():
            break
    growth = np.exp(np.maximum(mu, 0.0) * tau)
    radius = r_c * np.exp(mu * tau) + flow.error * growth
    # an exited centre speaks for its cube only while the whole cube is past the grid box
    spread = (r_c + flow.error) * growth
    blanket = ~settled | (flow.exited & (spread >= exit_gap))
    if blanket.any():
        logger.debug(f"{int(blanket.sum())} cube(s) mapped onto the whole grid "
                     f"({int((~settled).sum())} unsettled log-norm bound(s))")

    lo = flow.end - radius[:, None]
    hi = flow.end + radius[:, None]
    lo[blanket] = -2.0 * grid.half_widths
    hi[blanket] = 2.0 * grid.half_widths
    first, last, outside = grid.locate(lo, hi)
    owner, targets = _enumerate_boxes(grid, first, last)
    keep = ~(flow.exited & ~blanket)[owner]
    rows = [cubes[owner[keep]]]
    cols = [targets[keep]]
    leaving = flow.exited | outside
    rows.append(cubes[leaving])
    cols.append(np.full(int(leaving.sum()), grid.size, dtype=np.int64))
    return np.concatenate(rows), np.concatenate(cols), flow.exited, radius


def build_outer_map(f: FiniteField, grid: CubicalGrid, tau: float,
                    tol: float = DEFAULT_FLOW_TOLERANCE, workers: int = 1) -> OuterMap:
    """
    Outer approximation of the time-tau map of dv/dt = -f(v) on the grid.

    Each cube centre is integrated; the image of the cube is every cube
    meeting the box around the end point with half-width

        r_img = r_c e^{mu tau} + err e^{max(mu, 0) tau}

    where r_c is the cube half-diagonal, err the accumulated local error and
    mu a log-norm bound of D(-f) over the centre's flow tube inflated by the
    spread of the cube.  Centres leaving the field box, and image boxes
    reaching past the grid, get an edge to OUTSIDE.  A cube is mapped onto
    the whole grid when its mu does not settle within MU_PASSES passes, or
    when its centre exits closer to the grid box than the cube spread.

    Args:
        f: Field; given a box of FIELD_BOX_SCALE x the grid box if it has none
        grid: Cubical grid
        tau: Flow time
        tol: Integrator tolerance
        workers: Threads over chunks of cubes (the result does not depend on it)

    Returns:
        OuterMap

    Raises:
        ValueError: If the grid box is not inside the field box
    """
    if f.box is None:
        f = f.with_box(grid.half_widths * FIELD_BOX_SCALE)
    elif np.any(grid.half_widths > f.box * (1.0 + 1e-12)):
        raise ValueError("Grid box must lie inside the field box")
    mu_guess = f.global_log_norm()
    exit_gap = float(np.min(f.box - grid.half_widths)) if grid.dim else 0.0
    cubes = grid.all_cubes()
    chunks = [cubes[i:i + IMAGE_CHUNK_SIZE] for i in range(0, cubes.size, IMAGE_CHUNK_SIZE)]

    def run(chunk):
        return _chunk_images(f, grid, chunk, tau, tol, mu_guess, exit_gap)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(run, chunks))
    else:
        parts = [run(chunk) for chunk in chunks]

    size = grid.size + 1
    rows = np.concatenate([p[0] for p in parts] + [np.array([grid.size])])
    cols = np.concatenate([p[1] for p in parts] + [np.array([grid.size])])
    graph = sparse.csr_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(size, size))
    graph.sum_duplicates()
    graph.data[:] = 1
    exited = np.concatenate([p[2] for p in parts])
    inflation = np.concatenate([p[3] for p in parts])
    logger.debug(f"Outer map on {grid!r}: {graph.nnz} edges, {int(exited.sum())} exits, tau={tau:.4g}")
    return OuterMap(grid, graph, float(tau), exited, inflation)


# ── Invariant sets and isolation ──────────────────────────────────────────────

def _reach(graph: sparse.csr_matrix, seeds: np.ndarray) -> np.ndarray:
    """Mask of nodes reachable from the seeds (seeds included)."""
    k = graph.shape[0]
    mask = np.zeros(k, dtype=bool)
    if seeds.size == 0:
        return mask
    source = sparse.csr_matrix((np.ones(seeds.size), (np.full(seeds.size, k), seeds)), shape=(k + 1, k + 1))
    extended = sparse.block_diag((graph, sparse.csr_matrix((1, 1))), format='csr') + source
    order = breadth_first_order(extended, k, directed=True, return_predecessors=False)
    mask[order[order < k]] = True
    return mask


def invariant_part(m: OuterMap, region: np.ndarray) -> np.ndarray:
    """
    Cubes of the region with a bi-infinite path inside the region.

    Equals (cubes reaching a cycle) intersected with (cubes reached from a
    cycle), cycles being nontrivial strongly connected components or
    self-loops of the induced subgraph.
    """
    region = as_cubes(region)
    if region.size == 0:
        return EMPTY
    sub = m.restricted(region)
    count, labels = connected_components(sub, directed=True, connection='strong')
    sizes = np.bincount(labels, minlength=count)
    cyclic = (sizes[labels] > 1) | (sub.diagonal() > 0)
    seeds = np.flatnonzero(cyclic)
    if seeds.size == 0:
        return EMPTY
    forward = _reach(sub, seeds)
    backward = _reach(sub.T.tocsr(), seeds)
    return region[forward & backward]


@dataclass
class IsolationReport:
    isolated: bool
    invariant: np.ndarray
    neighborhood: np.ndarray
    offending: np.ndarray

    def to_dict(self):
        return {
            'isolated': self.isolated,
            'invariant_cubes': int(self.invariant.size),
            'offending': self.offending.tolist(),
        }


def check_isolation(m: OuterMap, region: np.ndarray) -> IsolationReport:
    """
    Decide whether the region isolates its invariant part.

    Isolated iff o(S), S grown by one layer of face/corner neighbours, stays
    inside the region minus its boundary layer.  An empty S is isolated.
    """
    region = as_cubes(region)
    S = invariant_part(m, region)
    grown = m.grid.grow(S, 1)
    interior = difference(region, m.grid.boundary_layer(region))
    offending = difference(grown, interior)
    isolated = offending.size == 0
    if not isolated:
        logger.info(f"Isolation fails: {offending.size} cube(s) of o(S) touch the boundary layer")
    return IsolationReport(isolated, S, grown, offending)


# ── Index pairs ───────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class CombinatorialIndexPair:
    """Cube sets P0 inside P1 on a grid; ``invariant`` is S = P1 minus P0."""

    grid: CubicalGrid
    p1: np.ndarray
    p0: np.ndarray
    invariant: np.ndarray
    frame: Optional[Frame] = None
    construction: str = 'collar'

    @property
    def counts(self) -> Tuple[int, int]:
        return int(self.p1.size), int(self.p0.size)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'grid': self.grid.to_dict(),
            'construction': self.construction,
            'p1': self.grid.unravel(self.p1).tolist(),
            'p0': self.grid.unravel(self.p0).tolist(),
        }


@dataclass(frozen=True)
class IndexPairCheck:
    """The index-pair conditions, each evaluated on the outer map."""

    nested: bool
    disjoint: bool
    positively_invariant: bool
    exit_set: bool

    @property
    def holds(self) -> bool:
        return self.nested and self.disjoint and self.positively_invariant and self.exit_set

    def failures(self) -> List[str]:
        names = ['nested', 'disjoint', 'positively_invariant', 'exit_set']
        return [n for n in names if not getattr(self, n)]


def verify_index_pair(m: OuterMap, p1: np.ndarray, p0: np.ndarray, invariant: np.ndarray) -> IndexPairCheck:
    """
    Check P0 in P1, S disjoint from P0, m(P0) n P1 in P0 and m(P1 \\ P0) in P1.

    OUTSIDE is never a member of P1, so an exit edge from P1 \\ P0 fails the
    last condition.
    """
    return IndexPairCheck(
        nested=is_subset(p0, p1),
        disjoint=intersection(as_cubes(invariant), p0).size == 0,
        positively_invariant=is_subset(intersection(m.image(p0), p1), p0),
        exit_set=is_subset(m.image(difference(p1, p0)), p1),
    )


def forward_closure(m: OuterMap, seeds: np.ndarray, within: np.ndarray) -> np.ndarray:
    """Cubes reachable from the seeds along paths that stay in ``within``."""
    within = as_cubes(within)
    positions = np.flatnonzero(np.isin(within, seeds))
    return within[_reach(m.restricted(within), positions)]


def build_index_pair(m: OuterMap, region: np.ndarray, collar_layers: int = DEFAULT_COLLAR_LAYERS,
                     report: Optional[IsolationReport] = None) -> CombinatorialIndexPair:
    """
    Index pair for the invariant part of an isolating region.

    Tries the one-step collar P1 = S u (m(S) n o(S)), then the forward
    closure of S inside o^k(S) n region for k = 1 .. collar_layers, with
    P0 = P1 \\ S each time.  The first candidate passing verify_index_pair wins.

    Raises:
        IsolationError: If the region does not isolate its invariant part
        RefineError: If no candidate verifies
    """
    region = as_cubes(region)
    report = report or check_isolation(m, region)
    if not report.isolated:
        raise IsolationError("Region does not isolate its invariant part", report.offending.tolist())
    S = report.invariant
    grid = m.grid

    p1 = union(S, intersection(m.image(S), report.neighborhood))
    candidates = [('collar', p1)]
    for k in range(1, collar_layers + 1):
        candidates.append((f'closure-{k}', forward_closure(m, S, intersection(grid.grow(S, k), region))))

    for name, p1 in candidates:
        p0 = difference(p1, S)
        check = verify_index_pair(m, p1, p0, S)
        if check.holds:
            logger.debug(f"Index pair via {name}: |P1|={p1.size}, |P0|={p0.size}")
            return CombinatorialIndexPair(grid, p1, p0, S, construction=name)
        logger.debug(f"Index pair candidate {name} fails: {', '.join(check.failures())}")
    raise RefineError(f"No verified index pair among {len(candidates)} candidates on {grid!r}")


def relative_homology(pair: CombinatorialIndexPair) -> HomologicalIndex:
    """H_*(|P1|, |P0|; Z) of an index pair."""
    grid = pair.grid
    return relative_cubical_homology(grid.shape, grid.unravel(pair.p1), grid.unravel(pair.p0))


def product_index_pair(p: CombinatorialIndexPair, q: CombinatorialIndexPair) -> CombinatorialIndexPair:
    """
    (P1 x Q1, P1 x Q0 u P0 x Q1) on the product grid.

    Raises:
        ValueError: If both pairs carry frames with overlapping supports
    """
    frame = None
    if p.frame is not None and q.frame is not None:
        frame = p.frame.direct_sum(q.frame)
    grid = p.grid.product(q.grid)
    p1 = p.grid.product_cubes(q.grid, p.p1, q.p1)
    p0 = union(p.grid.product_cubes(q.grid, p.p1, q.p0), p.grid.product_cubes(q.grid, p.p0, q.p1))
    invariant = p.grid.product_cubes(q.grid, p.invariant, q.invariant)
    return CombinatorialIndexPair(grid, p1, p0, invariant, frame, 'product')


def linear_index_shortcut(sig: SignatureDecomposition) -> HomologicalIndex:
    """
    Index of a hyperbolic linear flow: the sphere of dimension dim V-.

    Raises:
        NondegeneracyError: If the signature has a null part
    """
    sig.require_nondegenerate()
    return sphere_index(sig.negative.dim, sig.frame.dim)


# ── Pipeline ──────────────────────────────────────────────────────────────────

@dataclass(eq=False)
class ConleyResult:
    """Outcome of computing the Conley index of F compressed onto one frame."""

    field: FiniteField
    signature: SignatureDecomposition
    method: str
    homology: HomologicalIndex
    pair: Optional[CombinatorialIndexPair] = None
    outer_map: Optional[OuterMap] = None
    tau: Optional[float] = None
    refinements: int = 0
    isolation: Optional[IsolationReport] = None
    history: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'method': self.method,
            'tau': self.tau,
            'refinements': self.refinements,
            'pair': self.pair.to_dict() if self.pair is not None else None,
            'p1_cubes': self.pair.counts[0] if self.pair is not None else None,
            'p0_cubes': self.pair.counts[1] if self.pair is not None else None,
            'homology': self.homology.to_dict(),
        }


def resolve_method(f: FiniteField, settings: EngineSettings) -> str:
    """
    'engine' or 'shortcut' for a field.

    Raises:
        StructureError: If the shortcut is required for a nonlinear field
    """
    method = settings.method
    if method == 'auto':
        method = 'engine' if f.dim <= settings.max_engine_dim else 'shortcut'
    if method == 'shortcut' and not f.is_linear:
        raise StructureError(
            f"Linear shortcut needs a linear compressed field (dim {f.dim} exceeds the engine limit "
            f"{settings.max_engine_dim})"
        )
    return method


def isolate_field(f: FiniteField, X: Neighborhood, settings: EngineSettings,
                  grid: Optional[CubicalGrid] = None) -> Tuple[OuterMap, IsolationReport]:
    """Outer map and isolation decision for f on the grid over X (built from settings if not given)."""
    if grid is None:
        grid = CubicalGrid.for_neighborhood(X, f.dim, settings.subdivisions, settings.margin, settings.max_cells)
    tau = settings.tau or default_tau(f, settings.tau_factor, settings.tau_max)
    m = build_outer_map(f, grid, tau, settings.tol, settings.workers)
    return m, check_isolation(m, grid.region(X))


def conley_index_of_field(f: FiniteField, sig: SignatureDecomposition, X: Neighborhood,
                          settings: EngineSettings) -> ConleyResult:
    """
    Conley index of a compressed field already written in its aligned frame.

    Refines the grid after an isolation or index-pair failure, up to
    settings.max_refinements times.

    Raises:
        IsolationError: If isolation still fails at the finest grid
        RefineError: If no index pair verifies at the finest grid
    """
    method = resolve_method(f, settings)
    if method == 'shortcut':
        return ConleyResult(f, sig, method, linear_index_shortcut(field_signature(f, sig.tolerance)))

    grid = CubicalGrid.for_neighborhood(X, f.dim, settings.subdivisions, settings.margin, settings.max_cells)
    tau = settings.tau or default_tau(f, settings.tau_factor, settings.tau_max)
    history: List[str] = []
    refinements = 0
    while True:
        region = grid.region(X)
        m = build_outer_map(f, grid, tau, settings.tol, settings.workers)
        isolation = check_isolation(m, region)
        try:
            pair = build_index_pair(m, region, settings.collar_layers, isolation)
        except (IsolationError, RefineError) as e:
            history.append(f"{grid.shape}: {e}")
            if refinements >= settings.max_refinements:
                raise
            try:
                grid = grid.refine(settings.max_cells)
            except RefineError as cap:
                logger.debug(f"Stopping refinement: {cap}")
                raise e
            refinements += 1
            logger.info(f"Refining to {grid!r} after: {e}")
            continue
        pair = replace(pair, frame=f.frame)
        homology = relative_homology(pair)
        logger.info(f"Conley index on {f.frame.dim}-dim frame: ranks {homology.ranks()} "
                    f"(|P1|={pair.counts[0]}, |P0|={pair.counts[1]}, refinements={refinements})")
        return ConleyResult(f, sig, method, homology, pair, m, tau, refinements, isolation, history)


def compute_conley_index(F: PermissibleField, V: Frame, X: Neighborhood,
                         settings: Optional[EngineSettings] = None,
                         tolerance: Optional[float] = None) -> ConleyResult:
    """
    Compress F onto V, align the grid with the compressed linear part and
    compute the Conley index of X n V.

    Args:
        F: Permissible field
        V: Frame
        X: Candidate isolating neighbourhood
        settings: Engine settings (defaults when None)
        tolerance: Degeneracy tolerance for the alignment signature
            (spectral_gap / 2 when None)

    Returns:
        ConleyResult
    """
    settings = settings or EngineSettings()
    tol = F.L.spectral_gap / 2.0 if tolerance is None else tolerance
    f, sig = align_field(F, V, tol)
    return conley_index_of_field(f, sig, X, settings)


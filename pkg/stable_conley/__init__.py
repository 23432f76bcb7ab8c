"""
stable_conley — stable Conley indices of flows F = L + Q on Hilbert space,
computed through finite-dimensional compressions.

Modules:
    spectral_model   — self-adjoint Fredholm operators, compact maps, frames
    subspace_lab     — commutators, residuals, signatures, admissibility, ladders
    compressed_flow  — compressed fields, homotopies, time-tau maps
    cubical          — cubical grids and cube-set arithmetic
    homology         — relative cubical homology and Smith normal form
    conley_engine    — outer maps, isolation, index pairs, Conley indices
    stable_index     — stable indices, decomposition shifts, suspension, continuation
    problem          — problem files: parse, validate, serialize
    runner           — ladder runs and continuation sweeps
    report_exporter  — JSON / CSV / SVG reports
    summary          — run statistics and console summaries
    cache            — on-disk result cache
    config_manager   — user-level INI config file management
    utils            — console output, canonical JSON, hashing
"""

from .conley_engine import EngineSettings, compute_conley_index
from .errors import (
    AdmissibilityError,
    ContinuationBreakError,
    IsolationError,
    NondegeneracyError,
    ProblemParseError,
    ProblemValidationError,
    RefineError,
    StableConleyError,
    StructureError,
)
from .homology import HomologicalIndex, HomologyGroup
from .problem import ProblemSpec, load_problem, parse_problem, serialize_problem
from .runner import RunReport, continuation_sweep, run_ladder
from .spectral_model import Frame, Neighborhood, PermissibleField, SpectralOperator, StructuredCompactMap
from .stable_index import StableIndex, assemble_stable_index, stable_equal

__version__ = '1.0.0'
__author__ = 'Stable Conley Index Contributors'

__all__ = [
    'AdmissibilityError',
    'ContinuationBreakError',
    'EngineSettings',
    'Frame',
    'HomologicalIndex',
    'HomologyGroup',
    'IsolationError',
    'Neighborhood',
    'NondegeneracyError',
    'PermissibleField',
    'ProblemParseError',
    'ProblemSpec',
    'ProblemValidationError',
    'RefineError',
    'RunReport',
    'SpectralOperator',
    'StableConleyError',
    'StableIndex',
    'StructureError',
    'StructuredCompactMap',
    'assemble_stable_index',
    'compute_conley_index',
    'continuation_sweep',
    'load_problem',
    'parse_problem',
    'run_ladder',
    'serialize_problem',
    'stable_equal',
]

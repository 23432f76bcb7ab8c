"""
Problem files: INI sections with JSON values.

Example:

    [problem]
    name = repeller

    [operator]
    core_diagonal = [-1.0, 2.0, 2.1]
    tail = [1.0, -1.0]
    spectral_gap = auto

    [nonlinearity]
    input_support = [0]
    components = [[0, "x0**3"]]
    cutoff_radius = 3.0

    [neighborhood]
    radius = 0.5

Every key has a fixed kind (number, integer, word, list, matrix, ...);
``auto`` stands for "derive" wherever a key allows it.  Serialization writes
every key with json.dumps, so parse(serialize(spec)) == spec.
"""

import configparser
import json
import logging
import math
import re
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .config import (
    DEFAULT_COLLAR_LAYERS,
    DEFAULT_COMMUTATOR_BUDGET,
    DEFAULT_CONTINUATION_THRESHOLD,
    DEFAULT_FLOW_TOLERANCE,
    DEFAULT_MARGIN,
    DEFAULT_MAX_CELLS,
    DEFAULT_MAX_ENGINE_DIM,
    DEFAULT_MAX_REFINEMENTS,
    DEFAULT_RESIDUAL_BUDGET,
    DEFAULT_SUBDIVISIONS,
    DEFAULT_TAU_FACTOR,
    DEFAULT_TAU_MAX,
    SYMMETRY_TOLERANCE,
)
from .conley_engine import EngineSettings
from .errors import ProblemParseError, ProblemValidationError, StableConleyError
from .spectral_model import (
    CompactOperator,
    DiagonalRule,
    Frame,
    Neighborhood,
    PermissibleField,
    SpectralOperator,
    StructuredCompactMap,
)
from .subspace_lab import AdmissibilityBudget, build_coordinate_ladder

logger = logging.getLogger(__name__)

AUTO = 'auto'


def _kind(kind: str, default: Any = None, required: bool = False, factory=None):
    meta = {'kind': kind, 'required': required}
    if factory is not None:
        return field(default_factory=factory, metadata=meta)
    return field(default=default, metadata=meta)


@dataclass
class ProblemSection:
    name: str = _kind('word', 'unnamed')


@dataclass
class OperatorSection:
    core_diagonal: List[float] = _kind('numbers', required=True, factory=list)
    core_perturbation: Optional[List[List[float]]] = _kind('matrix?')
    tail: List[float] = _kind('numbers', factory=lambda: [1.0, -1.0])
    spectral_gap: Optional[float] = _kind('number?')
    diagonal_compact: List[List[float]] = _kind('pairs', factory=list)
    tolerance: float = _kind('number', SYMMETRY_TOLERANCE)


@dataclass
class NonlinearitySection:
    input_support: List[int] = _kind('integers', factory=list)
    components: List[List[Any]] = _kind('components', factory=list)
    cutoff_radius: float = _kind('number', 1.0)
    linear_block: Optional[List[List[float]]] = _kind('matrix?')
    diagonal_compact: List[List[float]] = _kind('pairs', factory=list)


@dataclass
class NeighborhoodSection:
    shape: str = _kind('word', 'ball')
    radius: float = _kind('number', required=True)


@dataclass
class SubspacesSection:
    ladder: Optional[List[int]] = _kind('integers?')
    rotated: List[Dict[str, Any]] = _kind('frames', factory=list)


@dataclass
class BudgetsSection:
    c1: float = _kind('number', DEFAULT_COMMUTATOR_BUDGET)
    c2: float = _kind('number', DEFAULT_RESIDUAL_BUDGET)
    degeneracy_tolerance: Optional[float] = _kind('number?')


@dataclass
class GridSection:
    subdivisions: int = _kind('integer', DEFAULT_SUBDIVISIONS)
    margin: int = _kind('integer', DEFAULT_MARGIN)
    max_refinements: int = _kind('integer', DEFAULT_MAX_REFINEMENTS)
    max_cells: int = _kind('integer', DEFAULT_MAX_CELLS)
    max_engine_dim: int = _kind('integer', DEFAULT_MAX_ENGINE_DIM)
    method: str = _kind('word', 'auto')
    collar_layers: int = _kind('integer', DEFAULT_COLLAR_LAYERS)


@dataclass
class FlowSection:
    tau: Optional[float] = _kind('number?')
    tol: float = _kind('number', DEFAULT_FLOW_TOLERANCE)
    tau_factor: float = _kind('number', DEFAULT_TAU_FACTOR)
    tau_max: float = _kind('number', DEFAULT_TAU_MAX)


@dataclass
class ContinuationSection:
    threshold: float = _kind('number', DEFAULT_CONTINUATION_THRESHOLD)


SECTIONS = {
    'problem': ProblemSection,
    'operator': OperatorSection,
    'nonlinearity': NonlinearitySection,
    'neighborhood': NeighborhoodSection,
    'subspaces': SubspacesSection,
    'budgets': BudgetsSection,
    'grid': GridSection,
    'flow': FlowSection,
    'continuation': ContinuationSection,
}


@dataclass
class ProblemSpec:
    """A parsed problem file; every section is always present (defaults filled in)."""

    problem: ProblemSection = field(default_factory=ProblemSection)
    operator: OperatorSection = field(default_factory=OperatorSection)
    nonlinearity: NonlinearitySection = field(default_factory=NonlinearitySection)
    neighborhood: NeighborhoodSection = field(default_factory=lambda: NeighborhoodSection(radius=1.0))
    subspaces: SubspacesSection = field(default_factory=SubspacesSection)
    budgets: BudgetsSection = field(default_factory=BudgetsSection)
    grid: GridSection = field(default_factory=GridSection)
    flow: FlowSection = field(default_factory=FlowSection)
    continuation: ContinuationSection = field(default_factory=ContinuationSection)

    @property
    def name(self) -> str:
        return self.problem.name

    # ── Builders ──────────────────────────────────────────────────────────────

    def build_operator(self) -> SpectralOperator:
        op = self.operator
        rule = DiagonalRule(tuple(tuple(t) for t in op.diagonal_compact))
        gap = op.spectral_gap
        if gap is None:
            trial = SpectralOperator(op.core_diagonal, op.core_perturbation, tuple(op.tail),
                                     math.ulp(0.0), rule, op.tolerance)
            gap = trial.measured_gap()
        return SpectralOperator(op.core_diagonal, op.core_perturbation, tuple(op.tail), gap, rule, op.tolerance)

    def build_compact_map(self) -> StructuredCompactMap:
        nl = self.nonlinearity
        linear = CompactOperator(nl.linear_block, DiagonalRule(tuple(tuple(t) for t in nl.diagonal_compact)))
        return StructuredCompactMap(tuple(nl.input_support), tuple((int(o), str(e)) for o, e in nl.components),
                                    nl.cutoff_radius, linear)

    def build_field(self) -> PermissibleField:
        return PermissibleField(self.build_operator(), self.build_compact_map())

    def build_neighborhood(self) -> Neighborhood:
        return Neighborhood(self.neighborhood.radius, self.neighborhood.shape)

    def build_budget(self) -> AdmissibilityBudget:
        b = self.budgets
        return AdmissibilityBudget(b.c1, b.c2, b.degeneracy_tolerance)

    def engine_settings(self, **overrides) -> EngineSettings:
        g, fl = self.grid, self.flow
        settings = EngineSettings(
            subdivisions=g.subdivisions, margin=g.margin, max_refinements=g.max_refinements,
            max_cells=g.max_cells, max_engine_dim=g.max_engine_dim, method=g.method,
            collar_layers=g.collar_layers, tau=fl.tau, tol=fl.tol, tau_factor=fl.tau_factor,
            tau_max=fl.tau_max,
        )
        return settings.with_overrides(**overrides)

    def ladder_sizes(self, F: Optional[PermissibleField] = None) -> List[int]:
        """Declared ladder sizes; ``auto`` gives three rungs ending at the extent of the field."""
        if self.subspaces.ladder is not None:
            return list(self.subspaces.ladder)
        F = F or self.build_field()
        top = max(F.extent, 1)
        return sorted({max(1, top - 2), max(1, top - 1), top})

    def frames(self, F: Optional[PermissibleField] = None) -> List[Tuple[str, str, Frame]]:
        """(name, kind, frame) for every ladder rung and every declared rotated frame, in file order."""
        F = F or self.build_field()
        sizes = self.ladder_sizes(F)
        out: List[Tuple[str, str, Frame]] = []
        if sizes:
            ladder = build_coordinate_ladder(F, sizes[-1], sizes)
            out.extend((f'V{k}', 'ladder', V) for k, V in zip(ladder.sizes, ladder.frames))
        for item in self.subspaces.rotated:
            out.append((str(item['name']), 'rotated', Frame(tuple(item['support']), np.asarray(item['columns'], float))))
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {name: {f.name: getattr(getattr(self, name), f.name) for f in fields(cls)}
                for name, cls in SECTIONS.items()}

    def section_dict(self, *names: str) -> Dict[str, Any]:
        data = self.to_dict()
        return {n: data[n] for n in names}


# ── Parsing ───────────────────────────────────────────────────────────────────

_SECTION_RE = re.compile(r'^\s*\[([^\]]+)\]')
_KEY_RE = re.compile(r'^\s*([^=:#;\s\[][^=:]*?)\s*[=:]')


def _line_index(text: str) -> Dict[Tuple[str, str], int]:
    """(section, key) -> 1-based line of its first occurrence; (section, '') for headers."""
    index: Dict[Tuple[str, str], int] = {}
    section = ''
    for number, line in enumerate(text.splitlines(), start=1):
        header = _SECTION_RE.match(line)
        if header:
            section = header.group(1).strip()
            index.setdefault((section, ''), number)
            continue
        key = _KEY_RE.match(line)
        if key and section:
            index.setdefault((section, key.group(1).strip()), number)
    return index


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _is_integer(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _convert(kind: str, raw: str) -> Any:
    """Turn a raw INI value into the Python value of its kind; raises ValueError with a reason."""
    optional = kind.endswith('?')
    base = kind.rstrip('?')
    text = raw.strip()
    if optional and text == AUTO:
        return None
    if base == 'word':
        if not re.fullmatch(r'[A-Za-z0-9_.\-]+', text):
            raise ValueError(f"expected a bare word, got {text!r}")
        return text
    try:
        value = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"malformed value {text!r}: {e.msg}") from e

    if base == 'number':
        if not _is_number(value):
            raise ValueError(f"expected a finite number{' or auto' if optional else ''}, got {text}")
        return float(value)
    if base == 'integer':
        if not _is_integer(value):
            raise ValueError(f"expected an integer, got {text}")
        return value
    if not isinstance(value, list):
        raise ValueError(f"expected a JSON list, got {text}")
    if base == 'numbers':
        if not all(_is_number(v) for v in value):
            raise ValueError("expected a list of finite numbers")
        return [float(v) for v in value]
    if base == 'integers':
        if not all(_is_integer(v) for v in value):
            raise ValueError("expected a list of integers")
        return value
    if base in ('matrix', 'pairs'):
        if not all(isinstance(row, list) and all(_is_number(v) for v in row) for row in value):
            raise ValueError("expected a list of numeric rows")
        if base == 'pairs' and any(len(row) != 2 for row in value):
            raise ValueError("expected [scale, ratio] pairs")
        return [[float(v) for v in row] for row in value]
    if base == 'components':
        if not all(isinstance(c, list) and len(c) == 2 and _is_integer(c[0]) and isinstance(c[1], str)
                   for c in value):
            raise ValueError('expected [output_index, "expression"] pairs')
        return value
    if base == 'frames':
        for item in value:
            if not (isinstance(item, dict) and {'name', 'support', 'columns'} <= set(item)):
                raise ValueError("rotated frames need name, support and columns")
            item['columns'] = [[float(v) for v in row] for row in item['columns']]
        return value
    raise ValueError(f"unknown value kind {kind}")


def _validate(spec: ProblemSpec) -> List[str]:
    """Every semantic violation of a structurally well-formed spec."""
    problems: List[str] = []
    op = spec.operator
    if len(op.tail) == 2:
        if not op.tail[0] > 0:
            problems.append("[operator] tail: positive tail value lambda+ must be > 0")
        if not op.tail[1] < 0:
            problems.append("[operator] tail: negative tail value lambda- must be < 0")

    builders = [
        ('operator', spec.build_operator),
        ('nonlinearity', spec.build_compact_map),
        ('neighborhood', spec.build_neighborhood),
        ('budgets', spec.build_budget),
    ]
    built = {}
    for section, build in builders:
        if section == 'operator' and problems:
            continue
        try:
            built[section] = build()
        except (StableConleyError, ValueError, np.linalg.LinAlgError) as e:
            problems.append(f"[{section}] {e}")

    try:
        spec.engine_settings()
    except StableConleyError as e:
        problems.extend(f"[grid/flow] {p}" for p in str(e).split('; '))

    if not spec.continuation.threshold > 0:
        problems.append("[continuation] threshold must be positive")

    if 'operator' in built and 'nonlinearity' in built:
        try:
            spec.frames(PermissibleField(built['operator'], built['nonlinearity']))
        except (StableConleyError, ValueError, KeyError) as e:
            problems.append(f"[subspaces] {e}")
    names = [str(item.get('name')) for item in spec.subspaces.rotated]
    if len(set(names)) != len(names):
        problems.append("[subspaces] rotated frame names must be unique")
    return problems


def parse_problem(text: str) -> ProblemSpec:
    """
    Parse and validate a problem file.

    Raises:
        ProblemParseError: Syntax errors, unknown sections/keys, malformed values
            (with section and line)
        ProblemValidationError: Every semantic violation, collected
    """
    parser = configparser.RawConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.ParsingError as e:
        line = e.errors[0][0] if getattr(e, 'errors', None) else None
        raise ProblemParseError("unreadable line", line=line) from e
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as e:
        raise ProblemParseError(e.message, section=e.section, line=e.lineno) from e
    except configparser.MissingSectionHeaderError as e:
        raise ProblemParseError("key outside any section", line=e.lineno) from e

    lines = _line_index(text)
    values: Dict[str, Dict[str, Any]] = {}
    for section in parser.sections():
        cls = SECTIONS.get(section)
        if cls is None:
            raise ProblemParseError("unknown section", section=section, line=lines.get((section, '')))
        kinds = {f.name: f.metadata['kind'] for f in fields(cls)}
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in kinds:
                raise ProblemParseError(f"unknown key '{key}'", section=section, line=lines.get((section, key)))
            try:
                values[section][key] = _convert(kinds[key], raw)
            except ValueError as e:
                raise ProblemParseError(f"{key}: {e}", section=section, line=lines.get((section, key))) from e

    missing = []
    sections = {}
    for name, cls in SECTIONS.items():
        given = values.get(name, {})
        for f in fields(cls):
            if f.metadata['required'] and f.name not in given:
                missing.append(f"[{name}] {f.name} is required")
        sections[name] = given
    if missing:
        raise ProblemValidationError(missing)

    spec = ProblemSpec(**{name: cls(**sections[name]) for name, cls in SECTIONS.items()})
    problems = _validate(spec)
    if problems:
        raise ProblemValidationError(problems)
    logger.debug(f"Parsed problem '{spec.name}'")
    return spec


def load_problem(path) -> ProblemSpec:
    with open(path, 'r', encoding='utf-8') as f:
        return parse_problem(f.read())


def _format(kind: str, value: Any) -> str:
    if value is None:
        return AUTO
    if kind.rstrip('?') == 'word':
        return str(value)
    return json.dumps(value)


def serialize_problem(spec: ProblemSpec) -> str:
    """Write every section and key in schema order."""
    blocks = []
    for name, cls in SECTIONS.items():
        section = getattr(spec, name)
        lines = [f'[{name}]']
        for f in fields(cls):
            lines.append(f'{f.name} = {_format(f.metadata["kind"], getattr(section, f.name))}')
        blocks.append('\n'.join(lines))
    return '\n\n'.join(blocks) + '\n'

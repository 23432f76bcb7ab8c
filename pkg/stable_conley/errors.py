"""
Exception hierarchy for stable_conley.

Structural problems with the inputs subclass ValueError; failures of the
numerical pipeline subclass RuntimeError so callers can tell the two apart.
"""

from typing import Any, List, Optional, Sequence, Tuple


class StableConleyError(Exception):
    """Root of every error raised by the package."""


class StructureError(StableConleyError, ValueError):
    """An operator, map or frame violates a structural invariant."""


class InvalidWitnessError(StructureError):
    """A growth witness (c1, c2) fails on the sampled radii."""

    def __init__(self, witness: Tuple[float, float], violation: float, radius: float):
        self.witness = witness
        self.violation = violation
        self.radius = radius
        super().__init__(
            f"Growth witness {witness} violated by {violation:.3e} at radius {radius:.6g}"
        )


class NondegeneracyError(StableConleyError, ValueError):
    """A compressed quadratic form has eigenvalues inside the degeneracy band."""

    def __init__(self, message: str, eigenvalues: Optional[Sequence[float]] = None):
        self.eigenvalues = list(eigenvalues) if eigenvalues is not None else []
        super().__init__(message)


class BoxExitError(StableConleyError, RuntimeError):
    """A trajectory left the box on which the field bounds hold."""

    def __init__(self, t_low: float, t_high: float, point: Any = None):
        self.bracket = (t_low, t_high)
        self.point = point
        super().__init__(f"Trajectory left the field box between t={t_low:.6g} and t={t_high:.6g}")


class IsolationError(StableConleyError, RuntimeError):
    """The discretized neighbourhood does not isolate its invariant part."""

    def __init__(self, message: str, offending: Optional[Sequence[int]] = None):
        self.offending = list(offending) if offending is not None else []
        super().__init__(message)


class RefineError(StableConleyError, RuntimeError):
    """No verified index pair could be built at the current resolution."""


class AdmissibilityError(StableConleyError, RuntimeError):
    """A frame failed the admissibility test required by the pipeline."""

    def __init__(self, record: Any):
        self.record = record
        reasons = '; '.join(getattr(record, 'reasons', ())) or 'unknown reason'
        super().__init__(f"Frame is not admissible: {reasons}")


class ContinuationBreakError(StableConleyError, RuntimeError):
    """Isolation was lost somewhere along a continuation sweep."""

    def __init__(self, s: float, step: int, bracket: Tuple[float, float],
                 steps: Optional[List[Any]] = None):
        self.s = s
        self.step = step
        self.bracket = bracket
        self.steps = list(steps) if steps is not None else []
        super().__init__(
            f"Isolation lost at step {step} (s={s:.6g}); last isolated parameter {bracket[0]:.6g}"
        )


class ProblemParseError(StableConleyError, ValueError):
    """Problem file text that cannot be read at all."""

    def __init__(self, message: str, section: Optional[str] = None, line: Optional[int] = None):
        self.section = section
        self.line = line
        where = []
        if section:
            where.append(f"section [{section}]")
        if line:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ''
        super().__init__(f"{prefix}{message}")


class ProblemValidationError(StableConleyError, ValueError):
    """A parsed problem violates one or more semantic invariants."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        listing = '\n  - '.join(self.violations)
        super().__init__(f"{len(self.violations)} invalid setting(s):\n  - {listing}")

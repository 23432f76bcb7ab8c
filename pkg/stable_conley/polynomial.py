"""
Sparse polynomial maps R^n -> R^m.

Maps are parsed from sympy expressions in the variables x0, x1, ... and stored
as an exponent table (T x n) plus a coefficient table (T x m), so evaluation,
differentiation and bounding reduce to numpy array operations.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Sequence, Tuple, Union

import numpy as np
import sympy
from sympy.parsing.sympy_parser import parse_expr, standard_transformations

from .errors import StructureError

logger = logging.getLogger(__name__)

Expression = Union[str, sympy.Expr]


def variables(count: int, prefix: str = 'x') -> Tuple[sympy.Symbol, ...]:
    """Return the symbols prefix0 .. prefix{count-1}."""
    return tuple(sympy.Symbol(f'{prefix}{i}') for i in range(count))


def _power_interval(lo: np.ndarray, hi: np.ndarray, exponent: int) -> Tuple[np.ndarray, np.ndarray]:
    a = lo ** exponent
    b = hi ** exponent
    if exponent % 2 == 1:
        return a, b
    straddles = (lo <= 0.0) & (hi >= 0.0)
    low = np.where(straddles, 0.0, np.minimum(a, b))
    return low, np.maximum(a, b)


def _product_interval(a_lo, a_hi, b_lo, b_hi) -> Tuple[np.ndarray, np.ndarray]:
    candidates = np.stack([a_lo * b_lo, a_lo * b_hi, a_hi * b_lo, a_hi * b_hi])
    return candidates.min(axis=0), candidates.max(axis=0)


@dataclass(frozen=True, eq=False)
class PolynomialMap:
    """
    A polynomial map with n_in inputs and n_out outputs.

    Row t of ``exponents`` is the multi-index of monomial t, row t of
    ``coefficients`` its coefficient in every output.
    """

    n_in: int
    n_out: int
    exponents: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        exps = np.asarray(self.exponents, dtype=np.int64)
        coefs = np.asarray(self.coefficients, dtype=float)
        terms = exps.shape[0] if exps.ndim else 0
        exps = exps.reshape(terms, self.n_in)
        coefs = coefs.reshape(terms, self.n_out)
        if (exps < 0).any():
            raise StructureError("Polynomial exponents must be non-negative")
        if not np.all(np.isfinite(coefs)):
            raise StructureError("Polynomial coefficients must be finite")
        object.__setattr__(self, 'exponents', exps)
        object.__setattr__(self, 'coefficients', coefs)

    # ── Construction ──────────────────────────────────────────────────────────

    @classmethod
    def from_table(cls, n_in: int, n_out: int, table: Dict[Tuple[int, ...], np.ndarray]) -> 'PolynomialMap':
        """Build a map from {exponent tuple: coefficient vector}, dropping zero rows."""
        keys = sorted(k for k, v in table.items() if np.any(np.asarray(v) != 0.0))
        exps = np.array(keys, dtype=np.int64).reshape(len(keys), n_in)
        coefs = np.array([np.asarray(table[k], dtype=float) for k in keys]).reshape(len(keys), n_out)
        return cls(n_in, n_out, exps, coefs)

    @classmethod
    def zero(cls, n_in: int, n_out: int) -> 'PolynomialMap':
        return cls(n_in, n_out, np.zeros((0, n_in), dtype=np.int64), np.zeros((0, n_out)))

    @classmethod
    def from_expressions(cls, components: Sequence[Tuple[int, Expression]],
                         n_in: int, n_out: int) -> 'PolynomialMap':
        """
        Parse (output slot, expression) pairs into a polynomial map.

        Expressions may only use the variables x0 .. x{n_in-1}; several
        expressions for the same slot are added.

        Args:
            components: Sequence of (slot, sympy expression or string)
            n_in: Number of input variables
            n_out: Number of output slots

        Returns:
            PolynomialMap

        Raises:
            StructureError: If an expression is not a real polynomial in the
                allowed variables or a slot is out of range
        """
        syms = variables(n_in)
        local = {str(s): s for s in syms}
        table: Dict[Tuple[int, ...], np.ndarray] = {}
        for slot, raw in components:
            if not 0 <= int(slot) < n_out:
                raise StructureError(f"Output slot {slot} out of range for {n_out} outputs")
            try:
                expr = parse_expr(raw, local_dict=local, transformations=standard_transformations) \
                    if isinstance(raw, str) else sympy.sympify(raw)
            except Exception as e:
                raise StructureError(f"Cannot parse polynomial '{raw}': {e}") from e
            unknown = expr.free_symbols - set(syms)
            if unknown:
                names = ', '.join(sorted(str(s) for s in unknown))
                raise StructureError(f"Polynomial '{raw}' uses variables outside x0..x{n_in - 1}: {names}")
            try:
                if n_in == 0:
                    terms = [((), expr)]
                else:
                    terms = sympy.Poly(sympy.expand(expr), *syms).terms()
                for monom, coeff in terms:
                    key = tuple(int(e) for e in monom)
                    row = table.setdefault(key, np.zeros(n_out))
                    row[int(slot)] += float(coeff)
            except (sympy.PolynomialError, TypeError) as e:
                raise StructureError(f"'{raw}' is not a real polynomial: {e}") from e
        return cls.from_table(n_in, n_out, table)

    # ── Basic properties ──────────────────────────────────────────────────────

    @property
    def n_terms(self) -> int:
        return self.exponents.shape[0]

    @property
    def degree(self) -> int:
        if self.n_terms == 0:
            return 0
        return int(self.exponents.sum(axis=1).max())

    def is_zero(self) -> bool:
        return self.n_terms == 0 or not np.any(self.coefficients)

    def table(self) -> Dict[Tuple[int, ...], np.ndarray]:
        return {tuple(int(e) for e in row): self.coefficients[t].copy()
                for t, row in enumerate(self.exponents)}

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n_in': self.n_in,
            'n_out': self.n_out,
            'exponents': self.exponents.tolist(),
            'coefficients': self.coefficients.tolist(),
        }

    # ── Evaluation ────────────────────────────────────────────────────────────

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if self.n_terms == 0:
            values = np.zeros((pts.shape[0], self.n_out))
        else:
            monomials = np.prod(pts[:, None, :] ** self.exponents[None, :, :], axis=2)
            values = monomials @ self.coefficients
        return values[0] if single else values

    def derivative(self, j: int) -> 'PolynomialMap':
        """Partial derivative with respect to input j."""
        mask = self.exponents[:, j] > 0
        exps = self.exponents[mask].copy()
        factor = exps[:, j].astype(float)
        exps[:, j] -= 1
        coefs = self.coefficients[mask] * factor[:, None]
        return PolynomialMap(self.n_in, self.n_out, exps, coefs)

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        """Jacobian matrices, shape (N, n_out, n_in)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.n_in == 0:
            return np.zeros((pts.shape[0], self.n_out, 0))
        return np.stack([self.derivative(j)(pts) for j in range(self.n_in)], axis=2)

    # ── Bounds ────────────────────────────────────────────────────────────────

    def coefficient_bound(self, radius: float) -> float:
        """
        Upper bound of ||P(x)|| over the ball ||x|| <= radius.

        Uses |x^a| <= ||x||^|a| term by term, then the Euclidean norm over outputs.
        """
        if self.n_terms == 0:
            return 0.0
        powers = float(radius) ** self.exponents.sum(axis=1)
        per_output = np.abs(self.coefficients).T @ powers
        return float(np.linalg.norm(per_output))

    def derivative_bound(self, radius: float) -> float:
        """Upper bound of the Frobenius norm of DP over the ball ||x|| <= radius."""
        total = 0.0
        for j in range(self.n_in):
            total += self.derivative(j).coefficient_bound(radius) ** 2
        return float(np.sqrt(total))

    def interval(self, lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Interval enclosure of P over a batch of boxes.

        Args:
            lo: Lower corners, shape (N, n_in)
            hi: Upper corners, shape (N, n_in)

        Returns:
            (low, high) arrays of shape (N, n_out)
        """
        lo = np.atleast_2d(np.asarray(lo, dtype=float))
        hi = np.atleast_2d(np.asarray(hi, dtype=float))
        count = lo.shape[0]
        out_lo = np.zeros((count, self.n_out))
        out_hi = np.zeros((count, self.n_out))
        for t in range(self.n_terms):
            m_lo = np.ones(count)
            m_hi = np.ones(count)
            for i, e in enumerate(self.exponents[t]):
                if e == 0:
                    continue
                p_lo, p_hi = _power_interval(lo[:, i], hi[:, i], int(e))
                m_lo, m_hi = _product_interval(m_lo, m_hi, p_lo, p_hi)
            coef = self.coefficients[t]
            positive = coef >= 0.0
            out_lo += np.where(positive, m_lo[:, None] * coef, m_hi[:, None] * coef)
            out_hi += np.where(positive, m_hi[:, None] * coef, m_lo[:, None] * coef)
        return out_lo, out_hi

    # ── Algebra ───────────────────────────────────────────────────────────────

    def __add__(self, other: 'PolynomialMap') -> 'PolynomialMap':
        if (self.n_in, self.n_out) != (other.n_in, other.n_out):
            raise StructureError("Cannot add polynomial maps of different shapes")
        table = self.table()
        for key, row in other.table().items():
            table[key] = table.get(key, np.zeros(self.n_out)) + row
        return PolynomialMap.from_table(self.n_in, self.n_out, table)

    def __sub__(self, other: 'PolynomialMap') -> 'PolynomialMap':
        return self + other.scaled(-1.0)

    def scaled(self, factor: float) -> 'PolynomialMap':
        return PolynomialMap(self.n_in, self.n_out, self.exponents, self.coefficients * float(factor))

    def left_multiply(self, matrix: np.ndarray) -> 'PolynomialMap':
        """Return v -> matrix @ P(v)."""
        matrix = np.asarray(matrix, dtype=float).reshape(-1, self.n_out)
        return PolynomialMap(self.n_in, matrix.shape[0], self.exponents, self.coefficients @ matrix.T)

    def embed(self, input_map: Sequence[int], n_in: int,
              output_map: Sequence[int], n_out: int) -> 'PolynomialMap':
        """Relabel inputs and outputs into larger index ranges."""
        exps = np.zeros((self.n_terms, n_in), dtype=np.int64)
        coefs = np.zeros((self.n_terms, n_out))
        if self.n_terms:
            exps[:, list(input_map)] = self.exponents
            coefs[:, list(output_map)] = self.coefficients
        return PolynomialMap(n_in, n_out, exps, coefs)

    def compose_linear(self, matrix: np.ndarray) -> 'PolynomialMap':
        """
        Return v -> P(matrix @ v).

        Args:
            matrix: Array of shape (n_in, k)

        Returns:
            PolynomialMap with k inputs
        """
        matrix = np.asarray(matrix, dtype=float).reshape(self.n_in, -1)
        k = matrix.shape[1]
        if k == 0:
            return PolynomialMap.from_table(0, self.n_out, {(): self(np.zeros(self.n_in))})
        syms = variables(k, prefix='v')
        linear = [sympy.Poly(sum(float(matrix[i, j]) * syms[j] for j in range(k)), *syms)
                  for i in range(self.n_in)]
        one = sympy.Poly(1, *syms)
        table: Dict[Tuple[int, ...], np.ndarray] = {}
        for t in range(self.n_terms):
            product = one
            for i, e in enumerate(self.exponents[t]):
                if e:
                    product = product * linear[i] ** int(e)
            for monom, coeff in product.terms():
                key = tuple(int(e) for e in monom)
                row = table.setdefault(key, np.zeros(self.n_out))
                row += float(coeff) * self.coefficients[t]
        return PolynomialMap.from_table(k, self.n_out, table)

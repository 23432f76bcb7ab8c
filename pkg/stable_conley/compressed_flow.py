"""
Compressed vector fields on finite-dimensional frames and their time-tau maps.

A FiniteField lives in the coordinates of a frame V and has the form

    f(v) = A v + sum_k chi_k(||v_{axes_k}||) P_k(v)

where every P_k is a polynomial map and chi_k the smoothstep cutoff.  Flows
always solve dv/dt = -f(v).
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .config import DEFAULT_FLOW_TOLERANCE, MIN_STEP_FRACTION
from .errors import BoxExitError
from .polynomial import PolynomialMap
from .spectral_model import (
    Frame,
    Neighborhood,
    PermissibleField,
    SpectralOperator,
    cutoff,
    cutoff_slope_bound,
    working_dim,
)
from .subspace_lab import (
    SignatureDecomposition,
    compact_pseudometric,
    orthogonal_complement,
    signature_of_matrix,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CutoffTerm:
    """chi(||v_axes||) * P(v) with the smoothstep cutoff at ``radius``."""

    radius: float
    axes: Tuple[int, ...]
    polynomial: PolynomialMap

    def __post_init__(self):
        object.__setattr__(self, 'axes', tuple(int(a) for a in self.axes))
        derivatives = tuple(self.polynomial.derivative(j) for j in range(self.polynomial.n_in))
        object.__setattr__(self, 'derivatives', derivatives)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        weights = cutoff(np.linalg.norm(points[:, list(self.axes)], axis=1), self.radius)
        return self.polynomial(points) * weights[:, None]

    @property
    def confined(self) -> bool:
        """True when P only reads the cutoff axes, so chi bounds its arguments."""
        others = [j for j in range(self.polynomial.n_in) if j not in self.axes]
        return not np.any(self.polynomial.exponents[:, others]) if others else True

    def effective_radius(self, box: np.ndarray) -> float:
        full = float(np.linalg.norm(box))
        if self.confined:
            return min(float(np.linalg.norm(box[list(self.axes)])), 2.0 * self.radius)
        return full

    def lipschitz(self, box: np.ndarray) -> float:
        r = self.effective_radius(box)
        return (self.polynomial.derivative_bound(r)
                + cutoff_slope_bound(self.radius) * self.polynomial.coefficient_bound(r))

    def scaled(self, factor: float) -> 'CutoffTerm':
        return CutoffTerm(self.radius, self.axes, self.polynomial.scaled(factor))

    def embedded(self, offset: int, d_total: int) -> 'CutoffTerm':
        k = self.polynomial.n_in
        index = list(range(offset, offset + k))
        poly = self.polynomial.embed(index, d_total, index, d_total)
        return CutoffTerm(self.radius, tuple(a + offset for a in self.axes), poly)


@dataclass(frozen=True, eq=False)
class FiniteField:
    """
    Vector field in the coordinates of a frame.

    ``box`` holds per-axis half-widths of the box [-b, b] on which the
    Lipschitz, norm and log-norm bounds are stated (None: no stated box).
    """

    frame: Frame
    linear: np.ndarray
    terms: Tuple[CutoffTerm, ...] = ()
    box: Optional[np.ndarray] = None

    def __post_init__(self):
        d = self.frame.dim
        lin = np.asarray(self.linear, dtype=float).reshape(d, d)
        object.__setattr__(self, 'linear', lin)
        object.__setattr__(self, 'terms', tuple(self.terms))
        if self.box is not None:
            box = np.broadcast_to(np.asarray(self.box, dtype=float), (d,)).copy()
            if np.any(box <= 0):
                raise ValueError("Field box half-widths must be positive")
            object.__setattr__(self, 'box', box)

    @property
    def dim(self) -> int:
        return self.frame.dim

    @property
    def is_linear(self) -> bool:
        return all(t.polynomial.is_zero() for t in self.terms)

    def with_box(self, half_widths) -> 'FiniteField':
        return FiniteField(self.frame, self.linear, self.terms, half_widths)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        values = pts @ self.linear.T
        for term in self.terms:
            values = values + term(pts)
        return values[0] if single else values

    __call__ = evaluate

    def _box_or_raise(self) -> np.ndarray:
        if self.box is None:
            raise ValueError("Field has no stated box")
        return self.box

    def lipschitz(self) -> float:
        """Lipschitz constant of f on its box."""
        box = self._box_or_raise()
        total = float(np.linalg.norm(self.linear, 2)) if self.dim else 0.0
        return total + sum(t.lipschitz(box) for t in self.terms)

    def norm_bound(self) -> float:
        """Upper bound of sup ||f|| on the box."""
        box = self._box_or_raise()
        total = float(np.linalg.norm(self.linear, 2)) * float(np.linalg.norm(box)) if self.dim else 0.0
        return total + sum(t.polynomial.coefficient_bound(t.effective_radius(box)) for t in self.terms)

    def log_norm_bound(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """
        Upper bounds of the logarithmic 2-norm of D(-f) over a batch of boxes.

        Polynomial Jacobians are enclosed with interval arithmetic where the
        cutoff is identically 1; where the cutoff varies, the term's Lipschitz
        bound on the field box is added instead.

        Args:
            lo: Lower corners, shape (N, d)
            hi: Upper corners, shape (N, d)

        Returns:
            Array of shape (N,)
        """
        lo = np.atleast_2d(np.asarray(lo, dtype=float))
        hi = np.atleast_2d(np.asarray(hi, dtype=float))
        count, d = lo.shape
        if d == 0:
            return np.zeros(count)
        j_lo = np.broadcast_to(-self.linear, (count, d, d)).copy()
        j_hi = j_lo.copy()
        extra = np.zeros(count)
        mag = np.maximum(np.abs(lo), np.abs(hi))
        gap = np.where((lo <= 0.0) & (hi >= 0.0), 0.0, np.minimum(np.abs(lo), np.abs(hi)))
        for term in self.terms:
            axes = list(term.axes)
            far = np.linalg.norm(mag[:, axes], axis=1)
            near = np.linalg.norm(gap[:, axes], axis=1)
            inside = far <= term.radius
            mixed = ~inside & (near < 2.0 * term.radius)
            if inside.any():
                for j, deriv in enumerate(term.derivatives):
                    d_lo, d_hi = deriv.interval(lo[inside], hi[inside])
                    j_lo[inside, :, j] -= d_hi
                    j_hi[inside, :, j] -= d_lo
            if mixed.any():
                box = np.maximum(mag.max(axis=0), 1e-300)
                if self.box is not None:
                    box = np.maximum(box, self.box)
                extra[mixed] += term.lipschitz(box)
        mid = (j_lo + j_hi) / 2.0
        rad = (j_hi - j_lo) / 2.0
        sym = (mid + np.transpose(mid, (0, 2, 1))) / 2.0
        top = np.linalg.eigvalsh(sym)[:, -1]
        return top + np.sqrt(np.sum(rad ** 2, axis=(1, 2))) + extra

    def global_log_norm(self) -> float:
        """Log-norm bound of D(-f) over the whole box."""
        box = self._box_or_raise()
        return float(self.log_norm_bound(-box[None, :], box[None, :])[0])

    def to_dict(self):
        return {
            'frame': self.frame.to_dict(),
            'linear': self.linear.tolist(),
            'terms': [{'radius': t.radius, 'axes': list(t.axes), 'polynomial': t.polynomial.to_dict()}
                      for t in self.terms],
            'box': None if self.box is None else self.box.tolist(),
        }


# ── Construction ──────────────────────────────────────────────────────────────

def _projected_term(F: PermissibleField, basis: np.ndarray, out_map: np.ndarray) -> Tuple[CutoffTerm, ...]:
    """Cut-off part of Q read through ``basis`` and written through ``out_map`` (d x n)."""
    Q = F.Q
    if not Q.has_nonlinear_part():
        return ()
    d = basis.shape[1]
    inner = basis[list(Q.input_support), :]
    poly = Q.polynomial.compose_linear(inner)
    poly = poly.left_multiply(out_map[:, list(Q.output_indices)])
    if poly.is_zero():
        return ()
    return (CutoffTerm(Q.cutoff_radius, tuple(range(d)), poly),)


def compress_field(F: PermissibleField, V: Frame, box=None) -> FiniteField:
    """
    Compression of F on V, written in the coordinates of V.

    On V the compression F_V equals pi_V F, which does not depend on the
    decomposition F = L + Q.

    Args:
        F: Permissible field
        V: Frame
        box: Optional per-axis half-widths of the stated box

    Returns:
        FiniteField with linear part V^T (L + K) V
    """
    n = working_dim(F, V)
    basis = V.embed(n)
    linear = basis.T @ (F.L.dense(n) + F.Q.linear.dense(n)) @ basis
    terms = _projected_term(F, basis, basis.T)
    return FiniteField(V, (linear + linear.T) / 2.0, terms, box)


def intermediate_field(F: PermissibleField, V: Frame, W: Frame, box=None) -> FiniteField:
    """
    The field pi_V L pi_V + pi_U L pi_U + pi_V Q on W, U = W minus V.

    Raises:
        ValueError: If V is not contained in W
    """
    U = orthogonal_complement(V, W)
    n = working_dim(F, V, W)
    basis = W.embed(n)
    p_v = V.projector(n)
    p_u = U.projector(n)
    L = F.L.dense(n)
    block = p_v @ L @ p_v + p_u @ L @ p_u + p_v @ F.Q.linear.dense(n)
    linear = basis.T @ block @ basis
    terms = _projected_term(F, basis, basis.T @ p_v)
    return FiniteField(W, linear, terms, box)


def block_defect_norm(L: SpectralOperator, V: Frame, W: Frame) -> float:
    """||L - pi_V L pi_V - pi_U L pi_U - (1 - pi_W) L (1 - pi_W)|| for V inside W."""
    U = orthogonal_complement(V, W)
    n = working_dim(L, V, W)
    p_v, p_u, p_w = V.projector(n), U.projector(n), W.projector(n)
    eye = np.eye(n)
    dense = L.dense(n)
    defect = dense - p_v @ dense @ p_v - p_u @ dense @ p_u - (eye - p_w) @ dense @ (eye - p_w)
    return float(np.linalg.norm(defect, 2))


def operator_distance(L1: SpectralOperator, L2: SpectralOperator) -> float:
    """||L1 - L2|| including the diagonal tails."""
    n = max(L1.core_dim, L2.core_dim)
    head = float(np.linalg.norm(L1.dense(n) - L2.dense(n), 2))
    stop = max(L1.diagonal_compact.settle_index(n), L2.diagonal_compact.settle_index(n)) + 2
    tail = np.abs(L1.tail_diagonal(n, stop) - L2.tail_diagonal(n, stop))
    limits = [abs(L1.tail_value(i) - L2.tail_value(i)) for i in (stop, stop + 1)]
    return max([head] + limits + ([float(tail.max())] if tail.size else []))


def decomposition_pseudometric(F1: PermissibleField, F2: PermissibleField, X: Neighborhood) -> float:
    """||L1 - L2|| + sup over X of ||Q1 - Q2||, the sup bounded structurally."""
    return operator_distance(F1.L, F2.L) + compact_pseudometric(F1.Q, F2.Q, X.radius)


def _same_frame(a: Frame, b: Frame) -> bool:
    return (a.support == b.support and a.columns.shape == b.columns.shape
            and np.allclose(a.columns, b.columns, rtol=0.0, atol=1e-12))


def homotopy_family(fA: FiniteField, fB: FiniteField, s: float) -> FiniteField:
    """
    The convex combination (1 - s) fA + s fB.

    Raises:
        ValueError: If the frames differ or s lies outside [0, 1]
    """
    if not _same_frame(fA.frame, fB.frame):
        raise ValueError("Homotopy requires both fields on the same frame")
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"Homotopy parameter {s} outside [0, 1]")
    terms = []
    if s < 1.0:
        terms.extend(t.scaled(1.0 - s) if s else t for t in fA.terms)
    if s > 0.0:
        terms.extend(t.scaled(s) if s < 1.0 else t for t in fB.terms)
    box = fA.box if fA.box is not None else fB.box
    if fA.box is not None and fB.box is not None:
        box = np.maximum(fA.box, fB.box)
    return FiniteField(fA.frame, (1.0 - s) * fA.linear + s * fB.linear, tuple(terms), box)


def product_field(f1: FiniteField, f2: FiniteField) -> FiniteField:
    """
    Field on V1 + V2 acting componentwise.

    Raises:
        ValueError: If the frame supports overlap
    """
    d1, d2 = f1.dim, f2.dim
    frame = f1.frame.direct_sum(f2.frame)
    linear = np.zeros((d1 + d2, d1 + d2))
    linear[:d1, :d1] = f1.linear
    linear[d1:, d1:] = f2.linear
    terms = tuple(t.embedded(0, d1 + d2) for t in f1.terms) + tuple(t.embedded(d1, d1 + d2) for t in f2.terms)
    box = None
    if f1.box is not None and f2.box is not None:
        box = np.concatenate([f1.box, f2.box])
    return FiniteField(frame, linear, terms, box)


def field_signature(f: FiniteField, tolerance: float) -> SignatureDecomposition:
    """Signature of the symmetric part of the field's linear part."""
    return signature_of_matrix(f.frame, (f.linear + f.linear.T) / 2.0, tolerance)


def align_field(F: PermissibleField, V: Frame, tolerance: float) -> Tuple[FiniteField, SignatureDecomposition]:
    """Compress F onto the eigenframe of its compressed linear part."""
    sig = field_signature(compress_field(F, V), tolerance)
    aligned = sig.aligned_frame()
    return compress_field(F, aligned), sig


def default_tau(f: FiniteField, factor: float, cap: float) -> float:
    """factor / (largest |eigenvalue| of the linear part), capped at ``cap``."""
    if f.dim == 0:
        return cap
    top = float(np.max(np.abs(np.linalg.eigvals(f.linear)))) if f.dim else 0.0
    return cap if top == 0.0 else min(cap, factor / top)


# ── Integration ───────────────────────────────────────────────────────────────

@dataclass
class BatchFlow:
    """Integration result for a batch of start points."""

    end: np.ndarray
    error: np.ndarray
    exited: np.ndarray
    exit_bracket: np.ndarray
    tube_lo: np.ndarray
    tube_hi: np.ndarray
    chord: np.ndarray
    steps: int
    tau: float


@dataclass(frozen=True)
class FlowStep:
    start: np.ndarray
    tau: float
    end: np.ndarray
    r_enc: float
    error_sum: float
    log_norm: float
    enclosure: str = 'error_sum * exp(max(log_norm, 0) * tau)'


def _rk4(f: FiniteField, y: np.ndarray, h: float) -> np.ndarray:
    k1 = -f.evaluate(y)
    k2 = -f.evaluate(y + 0.5 * h * k1)
    k3 = -f.evaluate(y + 0.5 * h * k2)
    k4 = -f.evaluate(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_batch(f: FiniteField, points: np.ndarray, tau: float,
                    tol: float = DEFAULT_FLOW_TOLERANCE) -> BatchFlow:
    """
    Integrate dv/dt = -f(v) for time tau from every row of ``points``.

    Classic RK4 with step doubling: each step compares one full step with two
    half steps, accepts when the largest estimated local error over the batch
    is within tol and keeps the Richardson-extrapolated value.  All points
    share the step sequence, so the result depends only on the batch.
    Points leaving the field box are frozen at their first outside position.

    Args:
        f: Field
        points: Start points, shape (N, d)
        tau: Time horizon (> 0)
        tol: Local error tolerance per step

    Returns:
        BatchFlow
    """
    if not tau > 0:
        raise ValueError(f"Flow time must be positive, got {tau}")
    y = np.atleast_2d(np.array(points, dtype=float))
    count = y.shape[0]
    error = np.zeros(count)
    exited = np.zeros(count, dtype=bool)
    bracket = np.full((count, 2), np.nan)
    tube_lo = y.copy()
    tube_hi = y.copy()
    chord = np.zeros(count)
    active = np.ones(count, dtype=bool)

    t = 0.0
    h = tau / 8.0
    h_min = tau * MIN_STEP_FRACTION
    steps = 0
    warned = False
    while t < tau * (1.0 - 1e-14) and active.any() and f.dim:
        h = min(h, tau - t)
        idx = np.flatnonzero(active)
        ya = y[idx]
        full = _rk4(f, ya, h)
        half = _rk4(f, _rk4(f, ya, 0.5 * h), 0.5 * h)
        local = np.linalg.norm(half - full, axis=1) / 15.0
        worst = float(local.max())
        if worst <= tol or h <= h_min:
            if worst > tol and not warned:
                logger.warning(f"Integrator reached the minimum step {h:.3e} with error {worst:.3e}")
                warned = True
            new = half + (half - full) / 15.0
            chord[idx] = np.maximum(chord[idx], np.linalg.norm(new - ya, axis=1))
            error[idx] += local
            y[idx] = new
            tube_lo[idx] = np.minimum(tube_lo[idx], new)
            tube_hi[idx] = np.maximum(tube_hi[idx], new)
            t_prev, t = t, t + h
            steps += 1
            if f.box is not None:
                out = np.any(np.abs(new) > f.box, axis=1)
                if out.any():
                    gone = idx[out]
                    exited[gone] = True
                    bracket[gone] = (t_prev, t)
                    active[gone] = False
            grow = 4.0 if worst == 0.0 else 0.9 * (tol / worst) ** 0.2
            h *= min(4.0, max(1.0, grow))
        else:
            h *= max(0.2, 0.9 * (tol / worst) ** 0.25)
    logger.debug(f"Integrated {count} point(s) over tau={tau:.4g} in {steps} steps")
    return BatchFlow(y, error, exited, bracket, tube_lo, tube_hi, chord, steps, tau)


def time_tau_map(f: FiniteField, x: Sequence[float], tau: float,
                 tol: float = DEFAULT_FLOW_TOLERANCE) -> FlowStep:
    """
    Certified time-tau map of dv/dt = -f(v) from a single point.

    The enclosure radius inflates the accumulated local error estimate by
    exp(mu * tau), mu a bound of the logarithmic norm of D(-f) over the box
    (at most the Lipschitz constant).

    Raises:
        ValueError: If x lies outside the field box
        BoxExitError: If the trajectory leaves the field box
    """
    start = np.asarray(x, dtype=float).reshape(f.dim)
    if f.box is not None and np.any(np.abs(start) > f.box):
        raise ValueError("Start point lies outside the field box")
    flow = integrate_batch(f, start[None, :], tau, tol)
    if flow.exited[0]:
        low, high = flow.exit_bracket[0]
        raise BoxExitError(float(low), float(high), flow.end[0])
    bounded = f if f.box is not None or f.dim == 0 else f.with_box(
        np.maximum(np.abs(flow.tube_lo[0]), np.abs(flow.tube_hi[0])) * (1.0 + 1e-9) + 1e-12)
    mu = bounded.global_log_norm() if f.dim else 0.0
    r_enc = float(flow.error[0]) * math.exp(max(mu, 0.0) * tau)
    return FlowStep(start, float(tau), flow.end[0], r_enc, float(flow.error[0]), mu)

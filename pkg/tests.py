"""
Unit tests for stable_conley.

Tests cover:
- Spectral model (structure checks, tails, witnesses, decompositions, frames)
- Subspace lab (commutators, residuals, signatures, admissibility, ladders)
- Compressed flows (compression, homotopies, time-tau maps)
- Cubical grids and relative cubical homology
- Conley engine (invariant parts, isolation, index pairs, refinement)
- Stable indices (shifts, decompositions, suspension, continuation)
- Problem files (parse, validate, serialize)
- Runner, cache, report exporter and summary
- Config manager and the command line
"""

import json
import math
import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

PROBLEMS = Path(__file__).parent / 'problems'

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _problem(name: str):
    from stable_conley.problem import load_problem
    return load_problem(PROBLEMS / f'{name}.ini')


def _parse(text: str):
    from stable_conley.problem import parse_problem
    return parse_problem(text)


def _operator(core, **kwargs):
    from stable_conley.spectral_model import SpectralOperator
    return SpectralOperator(np.asarray(core, dtype=float), **kwargs)


def _random_frame(rng: np.random.Generator, n: int, d: int):
    from stable_conley.spectral_model import Frame
    q, _ = np.linalg.qr(rng.standard_normal((n, d)))
    return Frame(tuple(range(n)), q)


def _prune_invariant(graph, region):
    """Largest S in region with every cube of S having a successor and a predecessor in S."""
    dense = graph.toarray()[np.ix_(region, region)] > 0
    alive = np.ones(len(region), dtype=bool)
    while True:
        sub = dense & alive[:, None] & alive[None, :]
        keep = alive & sub.any(axis=1) & sub.any(axis=0)
        if np.array_equal(keep, alive):
            return np.asarray(region)[alive]
        alive = keep


def _outer_map(size: int, edges):
    from scipy import sparse
    from stable_conley.conley_engine import OuterMap
    from stable_conley.cubical import CubicalGrid
    rows = [a for a, _ in edges] + [size]
    cols = [b for _, b in edges] + [size]
    graph = sparse.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(size + 1, size + 1))
    grid = CubicalGrid((size,), np.ones(1))
    return OuterMap(grid, graph, 1.0, np.zeros(size, dtype=bool), np.zeros(size))


LINEAR_WITH_TILT = """
[problem]
name = tilted

[operator]
core_diagonal = [-1.0, 2.0]

[neighborhood]
radius = 1.0

[subspaces]
ladder = [2]
rotated = [{"name": "tilt", "support": [0, 1], "columns": [[0.7071067811865476], [0.7071067811865476]]}]

[grid]
subdivisions = 16
"""


# ===========================================================================
# Test: Spectral model
# ===========================================================================

class TestSpectralModel(unittest.TestCase):

    def test_tail_signs_are_checked(self):
        from stable_conley.errors import StructureError
        with self.assertRaises(StructureError) as ctx:
            _operator([1.0, -1.0], tail_values=(1.0, 1.0))
        self.assertIn('negative tail value', str(ctx.exception))

    def test_declared_gap_must_hold(self):
        from stable_conley.errors import StructureError
        with self.assertRaises(StructureError) as ctx:
            _operator([0.5, -1.0], spectral_gap=1.0)
        self.assertIn('spectral gap', str(ctx.exception))

    def test_nonsymmetric_perturbation_rejected(self):
        from stable_conley.errors import StructureError
        with self.assertRaises(StructureError):
            _operator([1.0, -1.0], core_perturbation=[[0.0, 0.3], [0.0, 0.0]])

    def test_dense_alternates_tail_by_index_parity(self):
        L = _operator([3.0])
        np.testing.assert_allclose(np.diag(L.dense(4)), [3.0, -1.0, 1.0, -1.0])

    def test_dense_refuses_to_cut_the_core(self):
        from stable_conley.errors import StructureError
        with self.assertRaises(StructureError):
            _operator([1.0, 2.0, -1.0]).dense(2)

    def test_diagonal_rule_values(self):
        from stable_conley.spectral_model import DiagonalRule
        rule = DiagonalRule(((0.5, 0.5),))
        np.testing.assert_allclose(rule.values(0, 3), [0.25, 0.125, 0.0625])
        with self.assertRaises(ValueError):
            DiagonalRule(((1.0, 1.0),))

    def test_kernel_frame(self):
        from stable_conley.spectral_model import kernel_frame
        K = kernel_frame(_operator([0.0, 2.0]))
        self.assertEqual(K.dim, 1)
        np.testing.assert_allclose(K.embed(2)[:, 0], [1.0, 0.0])

    def test_default_witness_passes_sampling(self):
        from stable_conley.spectral_model import verify_growth_bound
        F = _problem('repeller').build_field()
        report = verify_growth_bound(F)
        self.assertLessEqual(report.violation, 0.0)

    def test_bad_witness_is_rejected(self):
        from stable_conley.errors import InvalidWitnessError
        from stable_conley.spectral_model import verify_growth_bound
        F = _problem('repeller').build_field()
        with self.assertRaises(InvalidWitnessError):
            verify_growth_bound(F, (0.0, 1e-3))

    def test_alternative_decomposition_is_the_same_field(self):
        from stable_conley.spectral_model import alternative_decomposition
        F = _problem('flip').build_field()
        F_alt = alternative_decomposition(F, [[-2.0]])
        points = np.random.default_rng(3).uniform(-1.0, 1.0, (20, 6))
        np.testing.assert_allclose(F(points), F_alt(points), atol=1e-12)
        self.assertAlmostEqual(F_alt.L.dense()[0, 0], -1.0)
        self.assertTrue(F_alt.Q.linear.is_zero())

    def test_frame_must_be_orthonormal(self):
        from stable_conley.errors import StructureError
        from stable_conley.spectral_model import Frame
        with self.assertRaises(StructureError):
            Frame((0, 1), np.array([[1.0], [1.0]]))

    def test_direct_sum_rejects_overlap(self):
        from stable_conley.spectral_model import Frame
        with self.assertRaises(ValueError):
            Frame.coordinate([0, 1]).direct_sum(Frame.coordinate([1]))
        self.assertEqual(Frame.coordinate([0]).direct_sum(Frame.coordinate([2])).dim, 2)

    def test_apply_field_on_the_cubic_axis(self):
        from stable_conley.spectral_model import apply_field
        F = _problem('repeller').build_field()
        value = apply_field(F, [0.5])
        self.assertAlmostEqual(value[0], -0.375, places=12)
        np.testing.assert_allclose(value[1:], 0.0, atol=1e-15)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=1, max_value=5))
    def test_projector_is_an_orthogonal_projection(self, seed, d):
        rng = np.random.default_rng(seed)
        P = _random_frame(rng, 6, d).projector(6)
        np.testing.assert_allclose(P @ P, P, atol=1e-12)
        np.testing.assert_allclose(P, P.T, atol=1e-12)
        self.assertAlmostEqual(float(np.trace(P)), d, places=10)

    def test_box_enclosing_radius(self):
        from stable_conley.spectral_model import Neighborhood
        self.assertAlmostEqual(Neighborhood(1.5, 'box').enclosing_radius(4), 3.0)
        self.assertAlmostEqual(Neighborhood(1.5).enclosing_radius(4), 1.5)


# ===========================================================================
# Test: Subspace lab
# ===========================================================================

class TestSubspaceLab(unittest.TestCase):

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=1, max_value=4))
    def test_commutator_matches_dense_norm(self, seed, d):
        from stable_conley.subspace_lab import commutator_norm
        rng = np.random.default_rng(seed)
        n = 5
        A = rng.standard_normal((n, n))
        L = _operator(np.full(n, 3.0), core_perturbation=(A + A.T) / 4.0, spectral_gap=1e-6)
        V = _random_frame(rng, n, d)
        P = V.projector(n)
        dense = L.dense(n)
        self.assertAlmostEqual(commutator_norm(L, V), np.linalg.norm(dense @ P - P @ dense, 2), places=9)

    def test_commutator_of_rotated_line(self):
        from stable_conley.spectral_model import Frame
        from stable_conley.subspace_lab import commutator_norm
        L = _operator([1.0, -1.0])
        for theta in np.linspace(0.0, math.pi, 50):
            V = Frame((0, 1), np.array([[math.cos(theta)], [math.sin(theta)]]))
            self.assertAlmostEqual(commutator_norm(L, V), abs(math.sin(2 * theta)), places=10)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_block_defect_bounded_by_commutators(self, seed):
        from stable_conley.compressed_flow import block_defect_norm
        from stable_conley.spectral_model import Frame
        from stable_conley.subspace_lab import commutator_norm
        rng = np.random.default_rng(seed)
        n = 6
        A = rng.standard_normal((n, n))
        L = _operator(np.linspace(-3.0, 3.0, n), core_perturbation=(A + A.T) / 10.0, spectral_gap=1e-6)
        W = _random_frame(rng, n, 4)
        V = W.with_columns(W.columns[:, :2])
        slack = commutator_norm(L, V) + commutator_norm(L, W) - block_defect_norm(L, V, W)
        self.assertGreaterEqual(slack, -1e-10)

    def test_residual_bounds_are_ordered(self):
        from stable_conley.spectral_model import Frame
        from stable_conley.subspace_lab import residual_compact_norm
        Q = _problem('repeller').build_compact_map()
        bound = residual_compact_norm(Q, Frame.coordinate([1]), 0.5)
        self.assertGreater(bound.lower, 0.0)
        self.assertLessEqual(bound.lower, bound.upper)

    def test_residual_vanishes_when_outputs_are_inside(self):
        from stable_conley.spectral_model import Frame
        from stable_conley.subspace_lab import residual_compact_norm
        Q = _problem('repeller').build_compact_map()
        bound = residual_compact_norm(Q, Frame.coordinate([0, 1]), 0.5)
        self.assertEqual((bound.upper, bound.lower), (0.0, 0.0))

    def test_compression_distance(self):
        from stable_conley.spectral_model import Frame
        from stable_conley.subspace_lab import commutator_norm, compression_distance, residual_compact_norm
        spec = _problem('repeller')
        F = spec.build_field()
        self.assertEqual(compression_distance(F, Frame.coordinate([0, 1]), 0.5), 0.0)
        V = Frame.coordinate([1])
        self.assertAlmostEqual(compression_distance(F, V, 0.5), residual_compact_norm(F.Q, V, 0.5).upper)
        self.assertGreater(compression_distance(F, V, 0.5), 0.0)
        R1 = [frame for name, _, frame in spec.frames(F) if name == 'R1'][0]
        expected = commutator_norm(F.L, R1) + residual_compact_norm(F.Q, R1, 0.5).upper
        self.assertAlmostEqual(compression_distance(F, R1, 0.5), expected)
        self.assertGreater(commutator_norm(F.L, R1), 0.0)

    def test_signature_and_aligned_frame(self):
        from stable_conley.spectral_model import Frame
        from stable_conley.subspace_lab import signature
        L = _operator([-1.0, 2.0, -1.5])
        sig = signature(L, Frame.coordinate([0, 1, 2]))
        self.assertEqual(sig.dims, (1, 2, 0))
        self.assertAlmostEqual(sig.margin, 1.0)
        aligned = sig.aligned_frame().embed(3)
        np.testing.assert_allclose(np.abs(aligned[:, 0]), [0.0, 0.0, 1.0])

    def test_degenerate_signature_raises(self):
        from stable_conley.errors import NondegeneracyError
        from stable_conley.spectral_model import Frame
        from stable_conley.subspace_lab import signature
        sig = signature(_operator([0.0, 2.0]), Frame.coordinate([0, 1]), 0.5)
        self.assertTrue(sig.is_degenerate)
        with self.assertRaises(NondegeneracyError):
            sig.require_nondegenerate()

    def test_admissibility_reasons(self):
        from stable_conley.spectral_model import Frame, Neighborhood, PermissibleField
        from stable_conley.subspace_lab import AdmissibilityBudget, admissible
        budget = AdmissibilityBudget(0.1, 0.1)
        F = _problem('repeller').build_field()
        record = admissible(F, Frame.coordinate([1, 2]), Neighborhood(0.5), budget)
        self.assertFalse(record.admissible)
        self.assertTrue(any(r.startswith('(3)') for r in record.reasons))

        kernel_field = PermissibleField(_operator([0.0, 2.0]))
        record = admissible(kernel_field, Frame.coordinate([1]), Neighborhood(1.0), budget)
        self.assertTrue(any(r.startswith('(1)') for r in record.reasons))
        self.assertAlmostEqual(record.kernel_defect, 1.0)

    def test_admissibility_never_raises(self):
        from stable_conley.spectral_model import Frame, Neighborhood
        from stable_conley.subspace_lab import AdmissibilityBudget, admissible
        F = _problem('repeller').build_field()
        record = admissible(F, Frame.coordinate([0]), Neighborhood(0.5), AdmissibilityBudget(0.1, 0.1))
        self.assertTrue(record.admissible)
        self.assertEqual(record.reasons, [])

    def test_coordinate_ladder(self):
        from stable_conley.subspace_lab import build_coordinate_ladder
        F = _problem('linear_s0').build_field()
        ladder = build_coordinate_ladder(F, 6, [2, 4, 6])
        self.assertEqual(len(ladder), 3)
        self.assertTrue(ladder.is_exhausting)
        with self.assertRaises(ValueError):
            build_coordinate_ladder(F, 4, [2, 4, 6])
        with self.assertRaises(ValueError):
            build_coordinate_ladder(F, 6, [4, 2])

    def test_extend_subspace(self):
        from stable_conley.spectral_model import Frame
        from stable_conley.subspace_lab import commutator_norm, extend_subspace, is_subframe
        pert = np.zeros((3, 3))
        pert[0, 1] = pert[1, 0] = 0.4
        L = _operator([2.0, -2.0, 3.0], core_perturbation=pert, spectral_gap=1.0)
        W = Frame.coordinate([0])
        self.assertGreater(commutator_norm(L, W), 0.1)
        E = extend_subspace(L, W, 1e-9)
        self.assertLess(commutator_norm(L, E), 1e-9)
        self.assertTrue(is_subframe(W, E))

    def test_orthogonal_complement(self):
        from stable_conley.spectral_model import Frame
        from stable_conley.subspace_lab import orthogonal_complement
        U = orthogonal_complement(Frame.coordinate([0]), Frame.coordinate([0, 1, 2]))
        self.assertEqual(U.dim, 2)
        np.testing.assert_allclose(U.embed(3)[0], [0.0, 0.0], atol=1e-12)
        with self.assertRaises(ValueError):
            orthogonal_complement(Frame.coordinate([3]), Frame.coordinate([0, 1]))


# ===========================================================================
# Test: Compressed flows
# ===========================================================================

class TestCompressedFlow(unittest.TestCase):

    def test_compression_ignores_decomposition(self):
        from stable_conley.compressed_flow import compress_field
        from stable_conley.spectral_model import Frame, alternative_decomposition
        F = _problem('flip').build_field()
        F_alt = alternative_decomposition(F, [[-2.0]])
        V = Frame.coordinate([0, 1, 2])
        np.testing.assert_allclose(compress_field(F, V).linear, compress_field(F_alt, V).linear, atol=1e-12)

    def test_intermediate_field_on_same_frame_is_compression(self):
        from stable_conley.compressed_flow import compress_field, intermediate_field
        from stable_conley.spectral_model import Frame
        F = _problem('repeller').build_field()
        V = Frame.coordinate([0, 1])
        points = np.random.default_rng(5).uniform(-0.5, 0.5, (15, 2))
        np.testing.assert_allclose(intermediate_field(F, V, V).evaluate(points),
                                   compress_field(F, V).evaluate(points), atol=1e-12)

    def test_homotopy_endpoints(self):
        from stable_conley.compressed_flow import compress_field, homotopy_family
        from stable_conley.spectral_model import Frame
        V = Frame.coordinate([0])
        fA = compress_field(_problem('repeller').build_field(), V)
        fB = compress_field(_problem('repeller_crossing').build_field(), V)
        points = np.linspace(-0.5, 0.5, 11)[:, None]
        np.testing.assert_allclose(homotopy_family(fA, fB, 0.0).evaluate(points), fA.evaluate(points))
        np.testing.assert_allclose(homotopy_family(fA, fB, 1.0).evaluate(points), fB.evaluate(points))
        # coefficient of x^3 moves linearly from 1 to 6
        mid = homotopy_family(fA, fB, 0.6).evaluate(np.array([[0.5]]))[0, 0]
        self.assertAlmostEqual(mid, -0.5 + 4.0 * 0.125, places=10)
        with self.assertRaises(ValueError):
            homotopy_family(fA, fB, 1.5)
        with self.assertRaises(ValueError):
            homotopy_family(fA, compress_field(_problem('repeller').build_field(), Frame.coordinate([1])), 0.5)

    def test_product_field(self):
        from stable_conley.compressed_flow import compress_field, product_field
        from stable_conley.spectral_model import Frame
        F = _problem('repeller').build_field()
        f = product_field(compress_field(F, Frame.coordinate([0])), compress_field(F, Frame.coordinate([1])))
        self.assertEqual(f.dim, 2)
        np.testing.assert_allclose(f.evaluate(np.array([0.5, 0.25])), [-0.5 + 0.125, 0.5])

    def test_linear_time_tau_map(self):
        from stable_conley.compressed_flow import FiniteField, time_tau_map
        from stable_conley.spectral_model import Frame
        f = FiniteField(Frame.coordinate([0, 1]), np.diag([1.0, -1.0]))
        step = time_tau_map(f, [1.0, 1.0], math.log(2.0))
        np.testing.assert_allclose(step.end, [0.5, 2.0], rtol=1e-6)
        self.assertLess(step.r_enc, 1e-4)

    def test_tight_enclosure_contains_the_exact_flow(self):
        from stable_conley.compressed_flow import FiniteField, time_tau_map
        from stable_conley.spectral_model import Frame
        f = FiniteField(Frame.coordinate([0, 1]), np.diag([1.0, -1.0]))
        for tau in (0.25, 0.5, 1.0):
            step = time_tau_map(f, [1.0, 1.0], tau, tol=1e-10)
            exact = np.array([math.exp(-tau), math.exp(tau)])
            self.assertLessEqual(step.r_enc, 1e-8)
            self.assertLessEqual(float(np.linalg.norm(step.end - exact)), step.r_enc)

    def test_flow_composes_within_enclosures(self):
        from stable_conley.compressed_flow import compress_field, time_tau_map
        from stable_conley.spectral_model import Frame
        f = compress_field(_problem('repeller').build_field(), Frame.coordinate([0]), box=1.5)
        s, t = 0.4, 0.6
        whole = time_tau_map(f, [0.1], s + t)
        first = time_tau_map(f, [0.1], s)
        second = time_tau_map(f, first.end, t)
        gap = float(np.linalg.norm(whole.end - second.end))
        allowed = whole.r_enc + second.r_enc + math.exp(max(second.log_norm, 0.0) * t) * first.r_enc
        self.assertLessEqual(gap, allowed + 1e-12)

    def test_compression_matches_the_ambient_field(self):
        from stable_conley.compressed_flow import compress_field
        from stable_conley.spectral_model import apply_field
        spec = _problem('repeller')
        F = spec.build_field()
        R1 = [frame for name, _, frame in spec.frames(F) if name == 'R1'][0]
        E = R1.embed(F.extent)
        rng = np.random.default_rng(11)
        directions = rng.standard_normal((1000, R1.dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        y = directions * (0.5 * rng.uniform(0.0, 1.0, 1000) ** 0.5)[:, None]
        ambient = apply_field(F, y @ E.T)[:, :E.shape[0]] @ E
        np.testing.assert_allclose(compress_field(F, R1).evaluate(y), ambient, rtol=0.0, atol=1e-12)

    def test_decomposition_pseudometric_vanishes_on_the_diagonal(self):
        from stable_conley.compressed_flow import decomposition_pseudometric
        from stable_conley.subspace_lab import compact_pseudometric
        for name in ('linear_s0', 'repeller'):
            spec = _problem(name)
            F, X = spec.build_field(), spec.build_neighborhood()
            self.assertEqual(decomposition_pseudometric(F, F, X), 0.0)
            self.assertEqual(compact_pseudometric(F.Q, F.Q, X.radius), 0.0)

    def test_rank_one_shift_distance(self):
        from stable_conley.compressed_flow import decomposition_pseudometric
        from stable_conley.spectral_model import CompactOperator, alternative_decomposition
        spec = _problem('linear_s0')
        F, X = spec.build_field(), spec.build_neighborhood()
        F_alt = alternative_decomposition(F, CompactOperator.rank_one([1.0], 0.5))
        # 0.5 from the operators, 0.5 from the compact parts on the unit ball
        self.assertAlmostEqual(decomposition_pseudometric(F, F_alt, X), 1.0, places=12)
        self.assertAlmostEqual(decomposition_pseudometric(F_alt, F, X), 1.0, places=12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_decomposition_pseudometric_is_a_pseudometric(self, seed):
        from stable_conley.compressed_flow import decomposition_pseudometric
        from stable_conley.spectral_model import CompactOperator, alternative_decomposition
        rng = np.random.default_rng(seed)
        spec = _problem('linear_s0')
        F, X = spec.build_field(), spec.build_neighborhood()
        fields = []
        for _ in range(3):
            v = rng.standard_normal(3)
            v /= np.linalg.norm(v)
            fields.append(alternative_decomposition(F, CompactOperator.rank_one(v, rng.uniform(-0.3, 0.3))))
        a, b, c = fields
        self.assertAlmostEqual(decomposition_pseudometric(a, b, X), decomposition_pseudometric(b, a, X), places=12)
        self.assertLessEqual(decomposition_pseudometric(a, c, X),
                             decomposition_pseudometric(a, b, X) + decomposition_pseudometric(b, c, X) + 1e-12)

    def test_repeller_time_tau_map(self):
        from stable_conley.compressed_flow import compress_field, time_tau_map
        from stable_conley.spectral_model import Frame
        f = compress_field(_problem('repeller').build_field(), Frame.coordinate([0]), box=1.5)
        step = time_tau_map(f, [0.1], 5.0)
        expected = 1.0 / math.sqrt(1.0 + 99.0 * math.exp(-10.0))
        self.assertAlmostEqual(step.end[0], expected, places=4)

    def test_leaving_the_box(self):
        from stable_conley.compressed_flow import compress_field, time_tau_map
        from stable_conley.errors import BoxExitError
        from stable_conley.spectral_model import Frame
        f = compress_field(_problem('repeller').build_field(), Frame.coordinate([0]), box=0.5)
        with self.assertRaises(BoxExitError) as ctx:
            time_tau_map(f, [0.1], 5.0)
        low, high = ctx.exception.bracket
        self.assertLess(low, high)
        with self.assertRaises(ValueError):
            time_tau_map(f, [0.9], 1.0)


# ===========================================================================
# Test: Cubical grids and homology
# ===========================================================================

class TestHomology(unittest.TestCase):

    def test_torsion_from_boundary(self):
        from stable_conley.homology import homology_from_boundaries
        h = homology_from_boundaries([1, 1], {1: [[2]]})
        self.assertEqual(h.group(0).rank, 0)
        self.assertEqual(h.group(0).torsion, (2,))
        self.assertTrue(h.group(1).is_trivial)

    def test_canonical_torsion(self):
        from stable_conley.homology import canonical_torsion
        self.assertEqual(canonical_torsion([2, 3]), (6,))
        self.assertEqual(canonical_torsion([4, 2]), (2, 4))
        self.assertEqual(canonical_torsion([1, 0, -1]), ())

    def test_interval_pairs(self):
        from stable_conley.homology import relative_cubical_homology
        cubes = np.arange(4)[:, None]
        self.assertEqual(relative_cubical_homology((4,), cubes, np.zeros((0, 1))).ranks(), {0: 1})
        self.assertEqual(relative_cubical_homology((4,), cubes, np.array([[0], [3]])).ranks(), {1: 1})

    def test_square_relative_to_its_rim(self):
        from stable_conley.homology import kunneth_ranks, relative_cubical_homology
        interval = relative_cubical_homology((4,), np.arange(4)[:, None], np.array([[0], [3]]))
        every = np.array([(i, j) for i in range(4) for j in range(4)])
        rim = np.array([c for c in every if c[0] in (0, 3) or c[1] in (0, 3)])
        square = relative_cubical_homology((4, 4), every, rim)
        self.assertEqual(square.ranks(), {2: 1})
        self.assertEqual(kunneth_ranks(interval, interval), square.ranks())
        self.assertEqual(square.euler_characteristic(), square.cell_euler_characteristic())

    def test_sphere_index(self):
        from stable_conley.homology import HomologicalIndex, sphere_index
        s = sphere_index(2, 3)
        self.assertEqual(s.ranks(), {2: 1})
        self.assertEqual(HomologicalIndex.from_dict(s.to_dict()), s)
        with self.assertRaises(ValueError):
            sphere_index(4, 3)

    def test_grid_sizing(self):
        from stable_conley.cubical import CubicalGrid, choose_subdivisions
        from stable_conley.errors import StructureError
        from stable_conley.spectral_model import Neighborhood
        self.assertEqual(choose_subdivisions(3, 64, 32768), 32)
        self.assertEqual(choose_subdivisions(2, 64, 32768), 64)
        grid = CubicalGrid.for_neighborhood(Neighborhood(1.0), 2, 32, 2)
        np.testing.assert_allclose(grid.half_widths, [32 / 28, 32 / 28])
        with self.assertRaises(StructureError):
            CubicalGrid.for_neighborhood(Neighborhood(1.0), 2, 30, 2)

    def test_boundary_layer_and_grow(self):
        from stable_conley.cubical import CubicalGrid
        grid = CubicalGrid((5, 5), np.ones(2))
        block = grid.ravel(np.array([(i, j) for i in range(1, 4) for j in range(1, 4)]))
        self.assertEqual(grid.boundary_layer(block).size, 8)
        self.assertEqual(grid.grow(grid.ravel(np.array([[2, 2]])), 1).size, 9)
        self.assertEqual(grid.grow(grid.ravel(np.array([[0, 0]])), 1).size, 4)

    def test_locate(self):
        from stable_conley.cubical import CubicalGrid
        grid = CubicalGrid((4,), np.array([2.0]))
        first, last, outside = grid.locate(np.array([[-0.5], [1.5], [3.0]]), np.array([[0.5], [2.5], [4.0]]))
        self.assertEqual((first[0, 0], last[0, 0]), (1, 2))
        self.assertTrue(outside[1])
        self.assertFalse(outside[0])
        self.assertLess(last[2, 0], first[2, 0])

    def test_refine_respects_the_cell_cap(self):
        from stable_conley.cubical import CubicalGrid
        from stable_conley.errors import RefineError
        grid = CubicalGrid((8, 8), np.ones(2))
        with self.assertRaises(RefineError):
            grid.refine(max_cells=128)
        fine = grid.refine(max_cells=256)
        self.assertEqual(fine.shape, (16, 16))
        self.assertEqual(fine.margin, 2 * grid.margin)


# ===========================================================================
# Test: Conley engine
# ===========================================================================

class TestConleyEngine(unittest.TestCase):

    def test_invariant_part_of_small_graph(self):
        from stable_conley.conley_engine import invariant_part
        m = _outer_map(5, [(0, 1), (1, 2), (2, 1), (2, 3), (3, 4), (4, 5)])
        np.testing.assert_array_equal(invariant_part(m, np.arange(5)), [1, 2])
        np.testing.assert_array_equal(invariant_part(m, np.array([0, 1, 3])), [])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_invariant_part_matches_pruning(self, seed):
        from stable_conley.conley_engine import invariant_part
        rng = np.random.default_rng(seed)
        size = 12
        edges = [(a, b) for a in range(size) for b in range(size + 1) if rng.random() < 0.12]
        m = _outer_map(size, edges)
        region = np.flatnonzero(rng.random(size) < 0.8)
        expected = _prune_invariant(m.graph, region) if region.size else np.zeros(0, dtype=np.int64)
        np.testing.assert_array_equal(invariant_part(m, region), expected)

    def test_index_pair_conditions(self):
        from stable_conley.conley_engine import verify_index_pair
        m = _outer_map(5, [(0, 5), (1, 0), (2, 2), (2, 1), (2, 3), (3, 4), (4, 5)])
        check = verify_index_pair(m, np.array([1, 2, 3]), np.array([3]), np.array([2]))
        self.assertFalse(check.holds)
        self.assertEqual(check.failures(), ['exit_set'])
        self.assertTrue(verify_index_pair(m, np.array([1, 2, 3]), np.array([1, 3]), np.array([2])).holds)

    def test_saddle_index(self):
        from stable_conley.conley_engine import compute_conley_index, linear_index_shortcut, verify_index_pair
        spec = _problem('saddle')
        F, X = spec.build_field(), spec.build_neighborhood()
        V = spec.frames(F)[0][2]
        result = compute_conley_index(F, V, X, spec.engine_settings())
        self.assertEqual(result.method, 'engine')
        self.assertEqual(result.homology.ranks(), {1: 1})
        self.assertEqual(result.homology, linear_index_shortcut(result.signature))
        pair = result.pair
        self.assertTrue(verify_index_pair(result.outer_map, pair.p1, pair.p0, pair.invariant).holds)

    def test_refinement_keeps_the_index(self):
        from stable_conley.conley_engine import compute_conley_index
        spec = _problem('saddle')
        F, X = spec.build_field(), spec.build_neighborhood()
        V = spec.frames(F)[0][2]
        coarse = compute_conley_index(F, V, X, spec.engine_settings(subdivisions=16))
        fine = compute_conley_index(F, V, X, spec.engine_settings(subdivisions=64))
        self.assertEqual(coarse.homology, fine.homology)

    def test_frames_keep_their_index_under_refinement(self):
        from stable_conley.conley_engine import compute_conley_index
        for name in ('repeller', 'suspension'):
            spec = _problem(name)
            F, X = spec.build_field(), spec.build_neighborhood()
            for label, _, V in spec.frames(F):
                if V.dim > 2:
                    continue
                coarse = compute_conley_index(F, V, X, spec.engine_settings(subdivisions=32))
                fine = compute_conley_index(F, V, X, spec.engine_settings(subdivisions=64))
                self.assertEqual(coarse.homology, fine.homology, f"{name}/{label}")

    def test_outer_map_covers_sampled_trajectories(self):
        from stable_conley.compressed_flow import compress_field, default_tau, integrate_batch
        from stable_conley.config import FIELD_BOX_SCALE
        from stable_conley.conley_engine import build_outer_map
        from stable_conley.cubical import CubicalGrid
        from stable_conley.spectral_model import Frame
        cases = [('saddle', Frame.coordinate([0, 1])), ('repeller', Frame.coordinate([0]))]
        for name, V in cases:
            spec = _problem(name)
            f = compress_field(spec.build_field(), V)
            grid = CubicalGrid.for_neighborhood(spec.build_neighborhood(), V.dim, 16)
            f_boxed = f.with_box(grid.half_widths * FIELD_BOX_SCALE)
            tau = default_tau(f, 1.0, 1.0)
            m = build_outer_map(f_boxed, grid, tau, 1e-10)

            rng = np.random.default_rng(3)
            cubes = rng.integers(0, grid.size, 1000)
            lo, hi = grid.bounds(cubes)
            flow = integrate_batch(f_boxed, rng.uniform(lo, hi), tau, 1e-12)
            first, _, outside = grid.locate(flow.end, flow.end)
            landing = grid.ravel(first)
            for k, c in enumerate(cubes):
                image = m.graph[c].indices
                if flow.exited[k] or outside[k]:
                    self.assertIn(m.outside, image, f"{name}: cube {c}")
                else:
                    self.assertIn(landing[k], image, f"{name}: cube {c}")

    def test_unsettled_log_norm_maps_onto_everything(self):
        from stable_conley.compressed_flow import compress_field, default_tau
        from stable_conley.conley_engine import build_outer_map
        from stable_conley.cubical import CubicalGrid
        from stable_conley.spectral_model import Frame
        spec = _problem('repeller')
        f = compress_field(spec.build_field(), Frame.coordinate([0]))
        grid = CubicalGrid.for_neighborhood(spec.build_neighborhood(), 1, 16)
        with patch('stable_conley.conley_engine.MU_PASSES', 0):
            m = build_outer_map(f, grid, default_tau(f, 1.0, 1.0))
        np.testing.assert_array_equal(m.out_degrees(), np.full(grid.size, grid.size + 1))

    def test_exits_near_the_grid_box_cover_the_grid(self):
        from stable_conley.compressed_flow import compress_field, default_tau
        from stable_conley.conley_engine import build_outer_map
        from stable_conley.cubical import CubicalGrid
        from stable_conley.spectral_model import Frame
        spec = _problem('repeller')
        f = compress_field(spec.build_field(), Frame.coordinate([0]))
        grid = CubicalGrid.for_neighborhood(spec.build_neighborhood(), 1, 16)
        tau = default_tau(f, 1.0, 1.0)

        tight = build_outer_map(f.with_box(grid.half_widths), grid, tau)
        self.assertTrue(tight.exited.any())
        np.testing.assert_array_equal(tight.out_degrees()[tight.exited], grid.size + 1)

        roomy = build_outer_map(f, grid, tau)
        self.assertTrue(roomy.exited.any())
        np.testing.assert_array_equal(roomy.out_degrees()[roomy.exited], 1)
        self.assertTrue(all(roomy.image([c]).tolist() == [roomy.outside] for c in np.flatnonzero(roomy.exited)))

    def test_product_pair(self):
        from dataclasses import replace
        from stable_conley.conley_engine import compute_conley_index, product_index_pair, relative_homology
        from stable_conley.homology import kunneth_ranks
        from stable_conley.spectral_model import Frame
        spec = _problem('repeller')
        F, X = spec.build_field(), spec.build_neighborhood()
        unstable = compute_conley_index(F, Frame.coordinate([0]), X, spec.engine_settings())
        stable = compute_conley_index(F, Frame.coordinate([1]), X, spec.engine_settings())
        self.assertEqual(unstable.homology.ranks(), {1: 1})
        self.assertEqual(stable.homology.ranks(), {0: 1})
        product = product_index_pair(unstable.pair, stable.pair)
        self.assertEqual(product.frame.dim, 2)
        self.assertEqual(relative_homology(product).ranks(), kunneth_ranks(unstable.homology, stable.homology))
        doubled = product_index_pair(unstable.pair, replace(unstable.pair, frame=None))
        self.assertEqual(relative_homology(doubled).ranks(), {2: 1})

    def test_shortcut_needs_linear_field(self):
        from stable_conley.compressed_flow import compress_field
        from stable_conley.conley_engine import EngineSettings, resolve_method
        from stable_conley.errors import StructureError
        from stable_conley.spectral_model import Frame
        f = compress_field(_problem('repeller').build_field(), Frame.coordinate([0]))
        self.assertEqual(resolve_method(f, EngineSettings()), 'engine')
        with self.assertRaises(StructureError):
            resolve_method(f, EngineSettings(method='shortcut'))

    def test_settings_validation(self):
        from stable_conley.conley_engine import EngineSettings
        from stable_conley.errors import StructureError
        with self.assertRaises(StructureError):
            EngineSettings(subdivisions=48)
        with self.assertRaises(StructureError):
            EngineSettings(method='guess')
        self.assertNotIn('workers', EngineSettings(workers=4).to_dict())


# ===========================================================================
# Test: Stable indices
# ===========================================================================

class TestStableIndex(unittest.TestCase):

    def test_virtual_degrees(self):
        from stable_conley.homology import sphere_index
        from stable_conley.stable_index import StableIndex, stable_equal
        index = StableIndex.from_homology(sphere_index(2, 3), 2)
        self.assertTrue(index.is_sphere(0))
        self.assertTrue(index.suspend(1).is_sphere(1))
        self.assertTrue(stable_equal(index, StableIndex.from_homology(sphere_index(1, 1), 1)))
        self.assertEqual(StableIndex.from_dict(index.to_dict()), index)

    def test_linear_ladder_gives_s0(self):
        from stable_conley.stable_index import assemble_stable_index
        spec = _problem('linear_s0')
        F, X, budget = spec.build_field(), spec.build_neighborhood(), spec.build_budget()
        for name, _, V in spec.frames(F):
            index = assemble_stable_index(F, X, V, budget, spec.engine_settings())
            self.assertTrue(index.is_sphere(0), name)

    def test_inadmissible_frame_raises(self):
        from stable_conley.errors import AdmissibilityError
        from stable_conley.spectral_model import Frame
        from stable_conley.stable_index import assemble_stable_index
        spec = _problem('repeller')
        with self.assertRaises(AdmissibilityError) as ctx:
            assemble_stable_index(spec.build_field(), spec.build_neighborhood(), Frame.coordinate([1, 2]),
                                  spec.build_budget(), spec.engine_settings())
        self.assertFalse(ctx.exception.record.admissible)

    def test_decomposition_shift(self):
        from stable_conley.spectral_model import Frame, alternative_decomposition
        from stable_conley.stable_index import decomposition_shift
        spec = _problem('flip')
        F = spec.build_field()
        F_alt = alternative_decomposition(F, [[-2.0]])
        report = decomposition_shift(F, F_alt, spec.build_neighborhood(), Frame.coordinate([0, 1]),
                                     spec.build_budget(), spec.engine_settings())
        self.assertEqual(report.shift, -1)
        self.assertTrue(report.homology_identical)
        self.assertTrue(report.reconciled)
        self.assertTrue(report.first.is_sphere(1))
        self.assertTrue(report.second.is_sphere(0))

    def test_suspension_consistency(self):
        from stable_conley.stable_index import suspension_consistency
        spec = _problem('suspension')
        F = spec.build_field()
        (_, _, V1), (_, _, V2) = spec.frames(F)
        report = suspension_consistency(F, spec.build_neighborhood(), V1, V2, spec.build_budget(),
                                        spec.engine_settings(), follow_homotopy=True)
        self.assertEqual(report.suspension, 1)
        self.assertEqual(report.small.homology.ranks(), {1: 1})
        self.assertEqual(report.large.homology.ranks(), {2: 1})
        self.assertTrue(report.large.is_sphere(0))
        self.assertTrue(report.consistent)

    def test_continuation_rejects_short_sweeps(self):
        from stable_conley.spectral_model import Frame
        from stable_conley.stable_index import continuation_check
        spec = _problem('repeller')
        F = spec.build_field()
        with self.assertRaises(ValueError):
            continuation_check(F, F, spec.build_neighborhood(), Frame.coordinate([0]), spec.build_budget(),
                               spec.engine_settings(), steps=1)


# ===========================================================================
# Test: Problem files
# ===========================================================================

class TestProblemFiles(unittest.TestCase):

    def test_bundled_problems_parse(self):
        for path in sorted(PROBLEMS.glob('*.ini')):
            spec = _problem(path.stem)
            self.assertTrue(spec.frames(), path.name)

    def test_frames_in_file_order(self):
        spec = _problem('repeller')
        self.assertEqual([(n, k) for n, k, _ in spec.frames()],
                         [('V1', 'ladder'), ('V2', 'ladder'), ('V3', 'ladder'), ('R1', 'rotated')])

    def test_serialize_and_parse(self):
        from stable_conley.problem import serialize_problem
        spec = _problem('repeller')
        self.assertEqual(_parse(serialize_problem(spec)).to_dict(), spec.to_dict())

    def test_unknown_key_reports_line(self):
        from stable_conley.errors import ProblemParseError
        text = '[problem]\nname = x\n\n[operator]\ncore_diagonal = [1.0]\ncolour = red\n'
        with self.assertRaises(ProblemParseError) as ctx:
            _parse(text)
        self.assertEqual(ctx.exception.section, 'operator')
        self.assertEqual(ctx.exception.line, 6)

    def test_malformed_value(self):
        from stable_conley.errors import ProblemParseError
        text = '[operator]\ncore_diagonal = [1.0, oops]\n\n[neighborhood]\nradius = 1\n'
        with self.assertRaises(ProblemParseError) as ctx:
            _parse(text)
        self.assertEqual(ctx.exception.line, 2)

    def test_unknown_section(self):
        from stable_conley.errors import ProblemParseError
        with self.assertRaises(ProblemParseError) as ctx:
            _parse('[solver]\nspeed = 3\n')
        self.assertEqual(ctx.exception.section, 'solver')

    def test_violations_are_collected(self):
        from stable_conley.errors import ProblemValidationError
        text = ('[operator]\ncore_diagonal = [1.0, -1.0]\ntail = [1.0, 1.0]\n\n'
                '[neighborhood]\nradius = -1\n\n[grid]\nsubdivisions = 48\n')
        with self.assertRaises(ProblemValidationError) as ctx:
            _parse(text)
        violations = ctx.exception.violations
        self.assertIn('[operator] tail: negative tail value lambda- must be < 0', violations)
        self.assertTrue(any(v.startswith('[neighborhood]') for v in violations))
        self.assertTrue(any(v.startswith('[grid/flow]') for v in violations))

    def test_required_keys(self):
        from stable_conley.errors import ProblemValidationError
        with self.assertRaises(ProblemValidationError) as ctx:
            _parse('[problem]\nname = empty\n')
        self.assertIn('[operator] core_diagonal is required', ctx.exception.violations)
        self.assertIn('[neighborhood] radius is required', ctx.exception.violations)


# ===========================================================================
# Test: Runner, cache and reports
# ===========================================================================

class TestRunner(unittest.TestCase):

    def test_linear_ladder_run(self):
        from stable_conley.runner import run_ladder
        report = run_ladder(_problem('linear_s0'), workers=2)
        self.assertEqual([r.name for r in report.frames], ['V2', 'V4', 'V6'])
        self.assertTrue(all(r.assembled for r in report.frames))
        self.assertTrue(report.all_equal)
        self.assertEqual(report.frames[0].method, 'engine')
        self.assertEqual(report.frames[2].method, 'shortcut')

    def test_repeller_frames_agree(self):
        from stable_conley.runner import run_ladder
        report = run_ladder(_problem('repeller'), workers=2)
        names, matrix = report.equality_matrix()
        self.assertEqual(names, ['V1', 'V2', 'V3', 'R1'])
        self.assertTrue(matrix.all())
        self.assertTrue(all(r.index.is_sphere(0) for r in report.assembled))

    def test_inadmissible_frame_left_out_of_matrix(self):
        from stable_conley.runner import INADMISSIBLE, run_ladder
        report = run_ladder(_parse(LINEAR_WITH_TILT))
        self.assertEqual(report.frames[1].status, INADMISSIBLE)
        self.assertTrue(report.frames[1].reasons)
        names, matrix = report.equality_matrix()
        self.assertEqual(names, ['V2'])
        self.assertEqual(matrix.shape, (1, 1))

    def test_cache_is_transparent(self):
        from stable_conley.cache import ResultCache
        from stable_conley.report_exporter import report_to_json
        from stable_conley.runner import run_ladder
        spec = _problem('linear_s0')
        with tempfile.TemporaryDirectory() as tmp:
            cache = ResultCache(tmp)
            first = run_ladder(spec, cache=cache)
            second = run_ladder(spec, cache=cache)
            self.assertEqual(first.cache_hits, 0)
            self.assertEqual(second.cache_hits, len(second.frames))
            self.assertEqual(report_to_json(first), report_to_json(second))
            self.assertEqual(cache.get_stats()['entries'], len(first.frames))
            self.assertEqual(cache.clear(), len(first.frames))

    def test_unreadable_cache_entry_is_a_miss(self):
        from stable_conley.cache import ResultCache
        with tempfile.TemporaryDirectory() as tmp:
            cache = ResultCache(tmp)
            key = ResultCache.key_for('a', 1)
            cache.put(key, {'x': 1})
            self.assertEqual(cache.get(key), {'x': 1})
            with open(Path(tmp) / key[:2] / f'{key}.json', 'w', encoding='utf-8') as f:
                f.write('{broken')
            self.assertIsNone(cache.get(key))
            self.assertEqual((cache.hits, cache.misses), (1, 1))

    def test_emission_is_reproducible(self):
        from stable_conley.report_exporter import emit_report
        from stable_conley.runner import run_ladder
        report = run_ladder(_problem('linear_s0'))
        with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
            for fmt in ('json', 'csv'):
                first = emit_report(report, fmt, a)
                second = emit_report(report, fmt, b)
                for p, q in zip(first, second):
                    self.assertEqual(p.read_bytes(), q.read_bytes())
            data = json.loads((Path(a) / 'linear_s0.json').read_text(encoding='utf-8'))
            self.assertEqual(data['equality']['frames'], ['V2', 'V4', 'V6'])
            self.assertNotIn('elapsed', data)

    def test_csv_has_one_row_per_frame(self):
        import pandas as pd
        from stable_conley.config import CSV_COLUMNS
        from stable_conley.report_exporter import emit_report
        from stable_conley.runner import run_ladder
        report = run_ladder(_parse(LINEAR_WITH_TILT))
        with tempfile.TemporaryDirectory() as tmp:
            (path,) = emit_report(report, 'csv', tmp)
            df = pd.read_csv(path)
        self.assertEqual(list(df.columns), CSV_COLUMNS)
        self.assertEqual(list(df['frame']), ['V2', 'tilt'])
        self.assertEqual(list(df['status']), ['assembled', 'inadmissible'])

    def test_saddle_svg(self):
        from stable_conley.report_exporter import emit_report
        from stable_conley.runner import run_ladder
        report = run_ladder(_problem('saddle'))
        result = report.frames[0]
        p0 = np.asarray(result.portrait['p0'])
        half = result.portrait['grid']['shape'][0] // 2
        self.assertTrue((p0[:, 0] < half).any() and (p0[:, 0] >= half).any())
        with tempfile.TemporaryDirectory() as tmp:
            (path,) = emit_report(report, 'svg', tmp)
            svg = path.read_text(encoding='utf-8')
        self.assertTrue(path.name.endswith('_V2.svg'))
        self.assertIn('class="p0"', svg)
        self.assertIn('class="flow"', svg)

    def test_svg_skipped_without_portrait(self):
        from stable_conley.report_exporter import emit_report, frame_to_svg
        from stable_conley.runner import run_ladder
        report = run_ladder(_parse(LINEAR_WITH_TILT))
        with self.assertRaises(ValueError):
            frame_to_svg(report.frames[1])
        with tempfile.TemporaryDirectory() as tmp:
            self.assertEqual(len(emit_report(report, 'svg', tmp)), 1)
            with self.assertRaises(ValueError):
                emit_report(report, 'pdf', tmp)

    def test_summary(self):
        from stable_conley.runner import run_ladder
        from stable_conley.summary import analyze_report, format_summary
        report = run_ladder(_parse(LINEAR_WITH_TILT))
        stats = analyze_report(report)
        self.assertEqual((stats['total'], stats['assembled'], stats['failed']), (2, 1, 0))
        self.assertEqual(stats['status_counts'], {'assembled': 1, 'inadmissible': 1})
        self.assertEqual(stats['stable_classes'], 1)
        text = format_summary(report)
        self.assertIn('RUN SUMMARY: tilted', text)
        self.assertIn('tilt', text)


# ===========================================================================
# Test: Continuation sweeps
# ===========================================================================

class TestContinuation(unittest.TestCase):

    def test_scaled_sweep_passes(self):
        from stable_conley.runner import continuation_sweep
        report = continuation_sweep(_problem('repeller'), _problem('repeller_scaled'), steps=11)
        sweep = report.sweep
        self.assertEqual(report.problem, 'repeller -> repeller_scaled')
        self.assertEqual(sweep.frame, 'V1')
        self.assertEqual(len(sweep.steps), 11)
        self.assertFalse(sweep.broken)
        self.assertTrue(sweep.ends_equal)
        self.assertTrue(sweep.passed)

    def test_crossing_sweep_breaks(self):
        from scipy.optimize import brentq
        from stable_conley.runner import continuation_sweep
        report = continuation_sweep(_problem('repeller'), _problem('repeller_crossing'), steps=11)
        sweep = report.sweep
        self.assertTrue(sweep.broken)
        # equilibria 1 / sqrt(1 + 5s) meet the boundary of the ball of radius 0.5
        crossing = brentq(lambda s: 1.0 / math.sqrt(1.0 + 5.0 * s) - 0.5, 0.0, 1.0)
        lo, hi = sweep.bracket
        self.assertLessEqual(lo - 1e-9, crossing)
        self.assertLessEqual(crossing, hi + 1e-9)
        self.assertAlmostEqual(sweep.break_s, sweep.break_step / 10.0)
        self.assertAlmostEqual(hi - lo, 0.1)
        self.assertFalse(sweep.steps[-1].isolated)
        self.assertTrue(all(s.isolated for s in sweep.steps[:-1]))
        self.assertFalse(sweep.passed)

    def test_continuation_check_raises_at_the_crossing(self):
        from scipy.optimize import brentq
        from stable_conley.errors import ContinuationBreakError
        from stable_conley.stable_index import continuation_check
        spec = _problem('repeller')
        F = spec.build_field()
        V = spec.frames(F)[0][2]
        with self.assertRaises(ContinuationBreakError) as ctx:
            continuation_check(F, _problem('repeller_crossing').build_field(), spec.build_neighborhood(), V,
                               spec.build_budget(), spec.engine_settings(), steps=11)
        e = ctx.exception
        crossing = brentq(lambda s: 1.0 / math.sqrt(1.0 + 5.0 * s) - 0.5, 0.0, 1.0)
        self.assertLessEqual(e.bracket[0] - 1e-9, crossing)
        self.assertLessEqual(crossing, e.bracket[1] + 1e-9)
        self.assertEqual(e.s, e.bracket[1])
        self.assertEqual(len(e.steps), e.step + 1)
        self.assertFalse(e.steps[-1].isolated)

    def test_continuation_check_rejects_distant_fields(self):
        from stable_conley.errors import StructureError
        from stable_conley.stable_index import continuation_check
        spec = _problem('repeller')
        F = spec.build_field()
        # cubic terms differ: 0.125 + 0.75 on the ball of radius 0.5
        with self.assertRaises(StructureError):
            continuation_check(F, _problem('repeller_crossing').build_field(), spec.build_neighborhood(),
                               spec.frames(F)[0][2], spec.build_budget(), spec.engine_settings(), threshold=0.1)

    def test_break_is_written_to_reports(self):
        from stable_conley.report_exporter import emit_report
        from stable_conley.runner import continuation_sweep
        from stable_conley.summary import format_summary
        report = continuation_sweep(_problem('repeller'), _problem('repeller_crossing'), steps=11)
        self.assertIn('Isolation lost at step', format_summary(report))
        with tempfile.TemporaryDirectory() as tmp:
            paths = emit_report(report, 'csv', tmp)
            self.assertEqual([p.name for p in paths], ['repeller_to_repeller_crossing_sweep.csv'])
            (json_path,) = emit_report(report, 'json', tmp)
            data = json.loads(json_path.read_text(encoding='utf-8'))
        self.assertEqual(data['sweep']['break']['step'], report.sweep.break_step)

    def test_core_sizes_must_match(self):
        from stable_conley.runner import continuation_sweep
        with self.assertRaises(ValueError):
            continuation_sweep(_problem('repeller'), _problem('saddle'))


# ===========================================================================
# Test: Config manager
# ===========================================================================

class TestConfigManager(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        from stable_conley import config_manager
        self._patch = patch.object(config_manager, 'CONFIG_FILE', Path(self._tmp.name) / 'settings.ini')
        self._patch.start()

    def tearDown(self):
        self._patch.stop()
        self._tmp.cleanup()

    def test_defaults(self):
        from stable_conley import config_manager
        self.assertEqual(config_manager.get_workers(), 4)
        self.assertTrue(config_manager.get_cache_enabled())
        self.assertIn('(default)', config_manager.show_config())

    def test_set_and_reset(self):
        from stable_conley import config_manager
        config_manager.set_value('engine', 'workers', '2')
        self.assertEqual(config_manager.get_workers(), 2)
        config_manager.reset_config()
        self.assertEqual(config_manager.get_workers(), 4)

    def test_unknown_setting(self):
        from stable_conley import config_manager
        with self.assertRaises(ValueError):
            config_manager.set_value('engine', 'speed', '9')

    def test_cache_dir_precedence(self):
        from stable_conley import config_manager
        from stable_conley.config import CACHE_ENV_VAR
        config_manager.set_value('cache', 'directory', '/tmp/from-config')
        self.assertEqual(config_manager.get_cache_dir('/tmp/explicit'), Path('/tmp/explicit'))
        with patch.dict(os.environ, {CACHE_ENV_VAR: '/tmp/from-env'}):
            self.assertEqual(config_manager.get_cache_dir(), Path('/tmp/from-env'))
        with patch.dict(os.environ, {CACHE_ENV_VAR: ''}):
            self.assertEqual(config_manager.get_cache_dir(), Path('/tmp/from-config'))


# ===========================================================================
# Test: Utils
# ===========================================================================

class TestUtils(unittest.TestCase):

    def test_canonical_json_is_key_ordered(self):
        from stable_conley.utils import canonical_json, content_hash
        self.assertEqual(canonical_json({'b': 1, 'a': np.float64(0.5)}), canonical_json({'a': 0.5, 'b': 1}))
        self.assertEqual(content_hash([1, 2]), content_hash([1, 2]))
        self.assertNotEqual(content_hash([1, 2]), content_hash([2, 1]))

    def test_format_ranks(self):
        from stable_conley.utils import format_ranks
        self.assertEqual(format_ranks({}), '-')
        self.assertEqual(format_ranks({1: 1, 0: 2}), '0:2 1:1')
        self.assertEqual(format_ranks({0: {'rank': 0, 'torsion': [2]}}), '0:0[2]')

    def test_themed_print_colours_by_kind(self):
        from stable_conley.utils import themed_header, themed_print
        with patch('stable_conley.utils.config_manager.get', return_value='nope'), \
                patch('stable_conley.utils.click.secho') as secho:
            themed_print('careful', 'warning')
            self.assertEqual(secho.call_args.kwargs['fg'], 'yellow')
            self.assertTrue(secho.call_args.kwargs['err'])
            themed_print('hello')
            self.assertEqual(secho.call_args.kwargs['fg'], 'cyan')
            self.assertFalse(secho.call_args.kwargs['err'])
            secho.reset_mock()
            themed_header('T', 'd')
        self.assertEqual(secho.call_count, 3)
        self.assertEqual(secho.call_args_list[1].args[0], '  T  (d)')
        self.assertTrue(all(c.kwargs['bold'] for c in secho.call_args_list))


# ===========================================================================
# Test: Command line
# ===========================================================================

class TestCommandLine(unittest.TestCase):

    def _invoke(self, *args):
        from click.testing import CliRunner
        from main import cli
        return CliRunner().invoke(cli, list(args))

    def test_validate(self):
        result = self._invoke('validate', '-p', str(PROBLEMS / 'repeller.ini'))
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn('R1', result.output)

    def test_invalid_problem_exits_2(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'bad.ini'
            path.write_text('[operator]\ncore_diagonal = [1.0]\ntail = [1.0, 2.0]\n\n'
                            '[neighborhood]\nradius = 1\n', encoding='utf-8')
            result = self._invoke('validate', '-p', str(path))
        self.assertEqual(result.exit_code, 2)

    def test_broken_sweep_exits_3(self):
        result = self._invoke('sweep', '-p', str(PROBLEMS / 'repeller.ini'),
                              '-t', str(PROBLEMS / 'repeller_crossing.ini'))
        self.assertEqual(result.exit_code, 3)

    def test_report_writes_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            result = self._invoke('report', '-p', str(PROBLEMS / 'saddle.ini'), '--out', tmp, '--no-cache')
            self.assertEqual(result.exit_code, 0, result.output)
            names = sorted(p.name for p in Path(tmp).iterdir())
        self.assertEqual(names, ['saddle.csv', 'saddle.json', 'saddle_V2.svg'])


# ===========================================================================
# Entry point
# ===========================================================================

if __name__ == '__main__':
    unittest.main(verbosity=2)

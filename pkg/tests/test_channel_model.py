"""Channel model, dictionary grid and array response tests"""
import unittest
import sys
from pathlib import Path

import numpy as np

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from channel_model import (
    ChannelConfigurationError,
    DegenerateGeometryError,
    GridCounts,
    angles_from_positions,
    build_grids,
    omega_from_realization,
    psi_from_realization,
    sample_channels,
    snap_to_grids,
)
from utils.array_utils import (
    InvalidDimensionError,
    ula_derivative,
    ula_response,
    ura_derivatives,
    ura_matrix,
    ura_response,
)

from tests.helpers import SMALL_COUNTS, small_geometry


class TestArrayResponses(unittest.TestCase):
    """Steering vectors and their derivatives"""

    def test_unit_norm(self):
        for u in (-1.0, -0.3, 0.0, 0.7, 1.0):
            with self.subTest(u=u):
                self.assertAlmostEqual(np.linalg.norm(ula_response(u, 8)), 1.0, places=12)
                self.assertAlmostEqual(np.linalg.norm(ura_response(u, -u / 2, 4, 5)), 1.0, places=12)

    def test_invalid_dimension(self):
        with self.assertRaises(InvalidDimensionError):
            ula_response(0.1, 0)
        with self.assertRaises(InvalidDimensionError):
            ura_response(0.1, 0.2, 3, 0)

    def test_ura_matrix_column_order(self):
        w = np.array([-0.5, 0.1, 0.6])
        g = np.array([-0.2, 0.4])
        B = ura_matrix(w, g, 3, 4)
        self.assertEqual(B.shape, (12, 6))
        for gi, gv in enumerate(g):
            for wi, wv in enumerate(w):
                with self.subTest(g=gi, w=wi):
                    np.testing.assert_allclose(B[:, gi * len(w) + wi], ura_response(wv, gv, 3, 4),
                                               atol=1e-14)

    def test_derivatives_match_finite_differences(self):
        h = 1e-6
        u, v = 0.37, -0.21
        numeric = (ula_response(u + h, 6) - ula_response(u - h, 6)) / (2 * h)
        np.testing.assert_allclose(ula_derivative(u, 6), numeric, atol=1e-8)
        d_du, d_dv = ura_derivatives(u, v, 3, 4)
        np.testing.assert_allclose(
            d_du, (ura_response(u + h, v, 3, 4) - ura_response(u - h, v, 3, 4)) / (2 * h), atol=1e-8)
        np.testing.assert_allclose(
            d_dv, (ura_response(u, v + h, 3, 4) - ura_response(u, v - h, 3, 4)) / (2 * h), atol=1e-8)


class TestGeometry(unittest.TestCase):
    """Effective angles and deployment validation"""

    def test_angles_from_positions(self):
        ang = angles_from_positions([0, 0, 0], [0, 1, 0], 0.5, 1.0)
        self.assertAlmostEqual(ang.u, 1.0)
        self.assertAlmostEqual(ang.v, 0.0)
        ang = angles_from_positions([0, 0, 0], [3, 0, 4], 0.5, 1.0)
        self.assertAlmostEqual(ang.u, 0.0)
        self.assertAlmostEqual(ang.v, 0.8)

    def test_angles_stay_in_domain(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            p, q = rng.uniform(-50, 50, size=(2, 3))
            ang = angles_from_positions(p, q, 0.5, 1.0)
            self.assertLessEqual(abs(ang.u), 1.0 + 1e-12)
            self.assertLessEqual(abs(ang.v), 1.0 + 1e-12)

    def test_coincident_points(self):
        with self.assertRaises(DegenerateGeometryError):
            angles_from_positions([1, 2, 3], [1, 2, 3], 0.5, 1.0)

    def test_per_ris_counts_must_match(self):
        with self.assertRaises(ChannelConfigurationError):
            small_geometry(N_y=(3, 3, 3))

    def test_keep_ris(self):
        geom = small_geometry().keep_ris([1])
        self.assertEqual(geom.num_ris, 1)
        np.testing.assert_allclose(geom.ris_positions[0], [-20, 30, 20])


class TestChannelSampling(unittest.TestCase):
    """Channel draws and grid construction"""

    def setUp(self):
        self.geom = small_geometry()

    def test_shapes_and_determinism(self):
        a = sample_channels(self.geom, seed=11, grid_counts=SMALL_COUNTS)
        b = sample_channels(self.geom, seed=11, grid_counts=SMALL_COUNTS)
        self.assertEqual(a.num_ris, 2)
        for i in range(2):
            self.assertEqual(a.H_r[i].shape, (4, 9))
            self.assertEqual(a.h_site[i].shape, (9,))
            self.assertEqual(a.h_ue[i].shape, (3, 9))
            np.testing.assert_array_equal(a.H_r[i], b.H_r[i])

    def test_first_path_is_line_of_sight(self):
        real = sample_channels(self.geom, seed=5, grid_counts=SMALL_COUNTS)
        for i, q in enumerate(self.geom.ris_positions):
            los = angles_from_positions(q, self.geom.bs_position, 0.5, 1.0)
            phi = real.path_angle_matrix(i)
            self.assertEqual(phi.shape, (2, 3))
            self.assertAlmostEqual(phi[0, 0], los.u)

    def test_grids_anchor_line_of_sight(self):
        grids = build_grids(self.geom, SMALL_COUNTS)
        for i, q in enumerate(self.geom.ris_positions):
            arrival = angles_from_positions(q, self.geom.bs_position, 0.5, 1.0)
            self.assertAlmostEqual(grids.w_r2b_a[i][0], arrival.u)
            self.assertEqual(grids.r2b_size(i), 4 * 4 * 4)
            self.assertEqual(grids.u2r_size(i), 16)

    def test_grid_counts_too_small(self):
        with self.assertRaises(ChannelConfigurationError):
            build_grids(self.geom, GridCounts(4, 4, 4, 1, 4))

    def test_refinement_vectors_keep_line_of_sight(self):
        grids = build_grids(self.geom, SMALL_COUNTS)
        nu = grids.r2b_vector()
        moved = grids.with_r2b_vector(nu + 0.01)
        for i in range(grids.num_ris):
            self.assertEqual(moved.w_r2b_a[i][0], grids.w_r2b_a[i][0])
            np.testing.assert_allclose(moved.w_r2b_a[i][1:], grids.w_r2b_a[i][1:] + 0.01)
        eta = grids.u2r_vector()
        np.testing.assert_array_equal(grids.with_u2r_vector(eta).u2r_vector(), eta)

    def test_snapped_drop_is_sparse(self):
        grids = build_grids(self.geom, SMALL_COUNTS)
        real = snap_to_grids(sample_channels(self.geom, seed=8, grid_counts=SMALL_COUNTS),
                             self.geom, grids)
        for i, omega in enumerate(omega_from_realization(real, grids)):
            with self.subTest(ris=i):
                self.assertEqual(np.count_nonzero(omega), self.geom.L[i])
        psi = psi_from_realization(real, grids)
        self.assertEqual(psi.size, 3 * 2 * 16)
        self.assertEqual(np.count_nonzero(psi), 3 * 2)


if __name__ == '__main__':
    unittest.main()

"""UE localization from RIS-side effective angles"""
import unittest
import sys
from pathlib import Path

import numpy as np

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from channel_model import DegenerateGeometryError, angles_from_positions
from processors.localization_processor import (
    InfeasibleAnglesError,
    LocalizationError,
    localize_n_ris,
    localize_two_ris,
    localize_ues,
)

RIS = [np.array([-30.0, 28.0, 21.0]), np.array([-20.0, 30.0, 20.0])]


def random_ue(rng):
    return rng.uniform([10, 5, 0], [30, 25, 20])


def ue_angles(p, ris_positions):
    out = []
    for q in ris_positions:
        ang = angles_from_positions(p, q, 0.5, 1.0)
        out.append([ang.u, ang.v])
    return np.array(out)


class TestTwoRisLocalization(unittest.TestCase):
    """Closed-form solution"""

    def test_roundtrip(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            p = random_ue(rng)
            (u1, v1), (u2, v2) = ue_angles(p, RIS)
            est = localize_two_ris(u1, v1, u2, v2, RIS[0], RIS[1])
            self.assertLess(np.linalg.norm(est - p), 1e-9)

    def test_least_squares_matches_closed_form(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            p = random_ue(rng)
            angles = ue_angles(p, RIS)
            (u1, v1), (u2, v2) = angles
            closed = localize_two_ris(u1, v1, u2, v2, RIS[0], RIS[1])
            stacked = localize_n_ris(angles, RIS).positions[0]
            np.testing.assert_allclose(stacked, closed, atol=1e-10)

    def test_degenerate_geometry(self):
        # both RISs in one horizontal plane and a UE at the same height
        ris = [np.array([-30.0, 28.0, 20.0]), np.array([-20.0, 30.0, 20.0])]
        angles = ue_angles(np.array([15.0, 10.0, 20.0]), ris)
        (u1, v1), (u2, v2) = angles
        with self.assertRaises(DegenerateGeometryError):
            localize_two_ris(u1, v1, u2, v2, ris[0], ris[1])

    def test_negative_distance(self):
        (u1, v1), (u2, v2) = ue_angles(np.array([20.0, 15.0, 10.0]), RIS)
        with self.assertRaises(InfeasibleAnglesError):
            localize_two_ris(-u1, -v1, -u2, -v2, RIS[0], RIS[1])


class TestMultiRisLocalization(unittest.TestCase):
    """Stacked least squares for more RISs"""

    def test_three_ris_roundtrip(self):
        ris = RIS + [np.array([-25.0, 10.0, 30.0])]
        rng = np.random.default_rng(2)
        for _ in range(200):
            p = random_ue(rng)
            result = localize_n_ris(ue_angles(p, ris), ris)
            self.assertLess(result.errors(p)[0], 1e-9)
            self.assertLess(result.residuals[0], 1e-9)

    def test_needs_two_ris(self):
        with self.assertRaises(LocalizationError):
            localize_n_ris(np.array([[0.1, 0.2]]), RIS[:1])

    def test_localize_ues(self):
        rng = np.random.default_rng(3)
        truth = np.array([random_ue(rng) for _ in range(4)])
        angles = np.stack([ue_angles(p, RIS) for p in truth])
        result = localize_ues(angles, RIS)
        self.assertEqual(result.positions.shape, (4, 3))
        self.assertEqual(result.distances.shape, (2, 4))
        self.assertLess(np.max(result.errors(truth)), 1e-9)
        self.assertEqual(result.clipped, [False] * 4)


if __name__ == '__main__':
    unittest.main()

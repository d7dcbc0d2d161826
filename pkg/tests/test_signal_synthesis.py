"""Superimposed frames, received signals and sensing operators"""
import unittest
import sys
from pathlib import Path

import numpy as np

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from channel_model import build_grids, omega_from_realization, psi_from_realization, sample_channels, snap_to_grids
from processors.scma_processor import build_default_codebook
from signal_synthesis import (
    DimensionMismatchError,
    SynthesisConfigurationError,
    build_b_u2,
    build_multiue_operator,
    build_v2,
    build_z_r2b,
    effective_channel_from_omega,
    generate_ris_schedule,
    multiue_column_map,
    noise_variance_for_snr,
    orthogonal_pilot_symbols,
    qpsk_site_frame,
    scma_ue_frame,
    site_cascade,
    split_omega,
    stack_blocks,
    stack_omega,
    superimpose,
    synthesize_fixed_site,
    synthesize_multiue,
)
from tests.helpers import SMALL_COUNTS, small_geometry


def relative_error(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestFrames(unittest.TestCase):
    """Power split and frame construction"""

    def test_superimpose_power(self):
        rng = np.random.default_rng(0)
        data = np.exp(1j * rng.uniform(0, 2 * np.pi, 20000))
        pilot = np.exp(1j * rng.uniform(0, 2 * np.pi, 20000))
        for xi in (0.2, 0.5, 0.9):
            with self.subTest(xi=xi):
                x = superimpose(data, pilot, xi)
                self.assertAlmostEqual(np.mean(np.abs(x) ** 2), 1.0, delta=0.03)

    def test_superimpose_rejects_bad_split(self):
        for xi in (0.0, 1.0, -0.1, 1.5):
            with self.subTest(xi=xi):
                with self.assertRaises(SynthesisConfigurationError):
                    superimpose(np.ones(3), np.ones(3), xi)
        with self.assertRaises(DimensionMismatchError):
            superimpose(np.ones(3), np.ones(4), 0.5)

    def test_qpsk_site_frame(self):
        frame = qpsk_site_frame(32, 0.3, seed=1)
        self.assertEqual(frame.data_symbols.shape, (1, 32, 1))
        self.assertEqual(frame.data_bits.size, 64)
        np.testing.assert_allclose(frame.transmitted, frame.data_component + frame.pilot_component)

    def test_scma_frame_respects_support(self):
        cb = build_default_codebook()
        frame = scma_ue_frame(cb, 16, 0.5, seed=2)
        self.assertEqual(frame.transmitted.shape, (cb.K, 16, cb.N_s))
        outside = ~cb.support_mask
        self.assertTrue(np.all(frame.transmitted.transpose(0, 2, 1)[outside] == 0))

    def test_orthogonal_ue_pilots(self):
        cb = build_default_codebook()
        frame = scma_ue_frame(cb, 16, 0.5, seed=2)
        self.assertIsNone(frame.pilot_indices)
        for ns in range(cb.N_s):
            with self.subTest(band=ns):
                P = frame.pilot_symbols[:, :, ns]                  # K x T
                gram = P @ P.conj().T
                np.testing.assert_allclose(gram - np.diag(np.diag(gram)), 0, atol=1e-12)
                np.testing.assert_allclose(np.diag(gram).real, 16 * np.abs(cb.codewords[:, ns, 0]) ** 2)
        np.testing.assert_allclose(np.abs(frame.pilot_symbols), np.abs(frame.data_symbols))

    def test_pilot_design_options(self):
        cb = build_default_codebook()
        frame = scma_ue_frame(cb, 8, 0.5, seed=3, pilot_design="random")
        self.assertEqual(frame.pilot_indices.shape, (cb.K, 8))
        with self.assertRaises(SynthesisConfigurationError):
            scma_ue_frame(cb, cb.K - 1, 0.5, seed=3)
        with self.assertRaises(SynthesisConfigurationError):
            scma_ue_frame(cb, 8, 0.5, seed=3, pilot_design="chirp")

    def test_multiue_column_map(self):
        self.assertEqual(multiue_column_map(2, [2, 1]),
                         [(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0), (1, 0, 1), (1, 1, 0)])

    def test_orthogonal_pilot_symbols(self):
        frame = qpsk_site_frame(16, 0.5, seed=4)
        x = orthogonal_pilot_symbols(frame, 4)
        np.testing.assert_array_equal(x[:4], frame.pilot_symbols[0, :4, 0])
        np.testing.assert_array_equal(x[4:], frame.data_symbols[0, 4:, 0])
        with self.assertRaises(SynthesisConfigurationError):
            orthogonal_pilot_symbols(frame, 16)

    def test_schedule_unit_modulus(self):
        schedule = generate_ris_schedule([9, 4], 10, seed=3)
        self.assertEqual(schedule.theta[0].shape, (9, 10))
        np.testing.assert_allclose(np.abs(schedule.theta[1]), 1.0)
        const = schedule.constant()
        np.testing.assert_array_equal(const.theta[0][:, 7], schedule.theta[0][:, 0])

    def test_noise_variance_for_snr(self):
        signal = np.full(10, 2.0)
        self.assertAlmostEqual(noise_variance_for_snr(signal, 10.0), 0.4)


class TestOperatorDuality(unittest.TestCase):
    """On-grid drops: synthesized signal equals operator times sparse coefficients"""

    def setUp(self):
        self.geom = small_geometry()
        self.grids = build_grids(self.geom, SMALL_COUNTS)

    def drop(self, seed):
        real = sample_channels(self.geom, seed=seed, grid_counts=SMALL_COUNTS)
        return snap_to_grids(real, self.geom, self.grids)

    def test_fixed_site_operator(self):
        T = 12
        for seed in range(100):
            with self.subTest(seed=seed):
                real = self.drop(seed)
                frame = qpsk_site_frame(T, 0.5, seed=seed + 100)
                schedule = generate_ris_schedule([9, 9], T, seed=seed + 200)
                block = synthesize_fixed_site(real, frame, schedule, N_0=0.01, seed=seed)
                Z = build_z_r2b(frame.transmitted[0, :, 0], self.grids, real.h_site, schedule)
                omega = stack_omega(omega_from_realization(real, self.grids))
                clean = block.noiseless.reshape(-1, order="F")
                self.assertLess(relative_error(Z @ omega, clean), 1e-10)

    def test_effective_channel_matches_cascade(self):
        real = self.drop(21)
        schedule = generate_ris_schedule([9, 9], 6, seed=5)
        omegas = omega_from_realization(real, self.grids)
        H = effective_channel_from_omega(omegas, self.grids, real.h_site, schedule)
        self.assertLess(relative_error(H, site_cascade(real.H_r, real.h_site, schedule)), 1e-10)
        restored = split_omega(stack_omega(omegas), self.grids)
        for a, b in zip(restored, omegas):
            np.testing.assert_array_equal(a, b)

    def test_multiue_operator(self):
        cb = build_default_codebook()
        T = 6
        for seed in range(100):
            with self.subTest(seed=seed):
                positions = np.random.default_rng(seed + 300).uniform([10, 5, 0], [30, 25, 20], (cb.K, 3))
                geom = small_geometry(ue_positions=positions.tolist())
                grids = build_grids(geom, SMALL_COUNTS)
                real = snap_to_grids(sample_channels(geom, seed=seed, grid_counts=SMALL_COUNTS),
                                     geom, grids)
                frame = scma_ue_frame(cb, T, 0.5, seed=seed)
                schedule = generate_ris_schedule([9, 9], T, seed=seed + 7)
                blocks = synthesize_multiue(real, frame, schedule, 0.01, seed=seed,
                                            support=cb.support_mask)
                D = build_multiue_operator(frame.transmitted, grids, real.H_r, schedule)
                clean = np.concatenate([b.noiseless.reshape(-1, order="F") for b in blocks])
                psi = psi_from_realization(real, grids)
                self.assertEqual(D.column_index_map,
                                 multiue_column_map(cb.K, [grids.u2r_size(i) for i in range(2)]))
                self.assertLess(relative_error(D @ psi, clean), 1e-10)
                self.assertLess(relative_error(stack_blocks(blocks) - D @ psi,
                                               np.concatenate([b.noise.reshape(-1, order="F")
                                                               for b in blocks])), 1e-10)

    def test_v2_factorization(self):
        cb = build_default_codebook()
        geom = small_geometry(ue_positions=[[10 + 3 * k, 6 + 2 * k, 1 + 3 * k] for k in range(cb.K)])
        grids = build_grids(geom, SMALL_COUNTS)
        real = sample_channels(geom, seed=9, grid_counts=SMALL_COUNTS)
        frame = scma_ue_frame(cb, 6, 0.5, seed=9, pilot_design="random")
        schedule = generate_ris_schedule([9, 9], 6, seed=9)
        D = build_multiue_operator(frame.transmitted, grids, real.H_r, schedule)
        product = build_v2(frame.transmitted, real.H_r, schedule) @ build_b_u2(grids, cb.K)
        self.assertLess(relative_error(product, D.matrix), 1e-12)

    def test_schedule_length_mismatch(self):
        real = self.drop(1)
        frame = qpsk_site_frame(8, 0.5, seed=1)
        schedule = generate_ris_schedule([9, 9], 6, seed=1)
        with self.assertRaises(DimensionMismatchError):
            synthesize_fixed_site(real, frame, schedule, N_0=0.1)


if __name__ == '__main__':
    unittest.main()

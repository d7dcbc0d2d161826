"""Metric, modulation and trace helper tests"""
import unittest
import sys
import tempfile
from pathlib import Path

import numpy as np

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from metrics import (
    NMSE_FLOOR_DB,
    MetricsError,
    MetricsReport,
    ebn0_db,
    effective_sinr_fixed,
    effective_sinr_multiue,
    effective_throughput,
    localization_error,
    nmse_angles,
    nmse_channel,
    scma_bits_per_resource,
    spectral_efficiency,
)
from utils.modulation_utils import (
    bit_error_rate,
    bits_to_index,
    index_to_bits,
    qpsk_demodulate,
    qpsk_modulate,
    qpsk_project,
)
from utils.trace_utils import TraceWriter, load_trace


class TestChannelMetrics(unittest.TestCase):
    """NMSE of channels and angles"""

    def test_nmse_channel(self):
        H = [np.ones((2, 2)), np.ones((2, 3))]
        H_hat = [np.ones((2, 2)) * 1.1, np.ones((2, 3)) * 0.9]
        # error energy 0.01 per entry over 10 entries of unit energy
        self.assertAlmostEqual(nmse_channel(H, H_hat), -20.0)
        self.assertEqual(nmse_channel(H, H), NMSE_FLOOR_DB)

    def test_nmse_channel_errors(self):
        with self.assertRaises(MetricsError):
            nmse_channel([np.ones(3)], [np.ones(4)])
        with self.assertRaises(MetricsError):
            nmse_channel([np.zeros(3)], [np.ones(3)])
        with self.assertRaises(MetricsError):
            nmse_channel([np.ones(3)], [])

    def test_nmse_angles_matches_paths(self):
        truth = [np.array([[0.1, 0.2, 0.3], [-0.4, 0.5, -0.6]])]
        swapped = [truth[0][::-1]]
        self.assertEqual(nmse_angles(truth, swapped), NMSE_FLOOR_DB)
        shifted = [truth[0] + np.array([0.0, 0.0, 0.1])]
        expected = 10 * np.log10(2 * 0.01 / np.sum(truth[0] ** 2))
        self.assertAlmostEqual(nmse_angles(truth, shifted), expected)

    def test_nmse_angles_missing_paths(self):
        truth = [np.array([[0.1, 0.2, 0.3], [-0.4, 0.5, -0.6]])]
        self.assertAlmostEqual(nmse_angles(truth, [np.zeros((0, 3))]), 0.0)
        half = 10 * np.log10(np.sum(truth[0][1] ** 2) / np.sum(truth[0] ** 2))
        self.assertAlmostEqual(nmse_angles(truth, [truth[0][:1]]), half)


class TestLinkMetrics(unittest.TestCase):
    """SINR, spectral efficiency, throughput and localization"""

    def test_fixed_site_sinr(self):
        h = np.ones((2, 3), dtype=complex)
        sinr = effective_sinr_fixed(h, h, 0.5, 0.1)
        np.testing.assert_allclose(sinr, 0.5 * 2 / 0.1)
        h_hat = h * 0.5
        sinr = effective_sinr_fixed(h, h_hat, 0.5, 0.1)
        np.testing.assert_allclose(sinr, 0.5 * 0.5 / (0.5 * 0.5 + 0.1))
        sinr = effective_sinr_fixed(h, h_hat, 0.5, 0.1, error_weight=1.0)
        np.testing.assert_allclose(sinr, 0.25 / (0.5 + 0.1))

    def test_multiue_sinr_interference(self):
        h = np.ones((3, 2, 4), dtype=complex)
        sinr = effective_sinr_multiue(h, h, np.full(3, 0.5), 0.1)
        # two interferers, each contributing xi * ||h||^2 = 1
        np.testing.assert_allclose(sinr, 1.0 / (2.0 + 0.1))
        only_first_pair = np.array([[1, 1, 0], [1, 1, 0], [0, 0, 1]], dtype=bool)
        sinr = effective_sinr_multiue(h, h, 0.5, 0.1, interferers=only_first_pair)
        np.testing.assert_allclose(sinr[0], 1.0 / 1.1)
        np.testing.assert_allclose(sinr[2], 1.0 / 0.1)

    def test_spectral_efficiency(self):
        self.assertAlmostEqual(spectral_efficiency(np.array([1.0, 3.0])), 1.5)
        self.assertAlmostEqual(spectral_efficiency(np.array([3.0]), data_fraction=0.25), 0.5)

    def test_throughput_and_ber(self):
        bits = np.array([0, 1, 1, 0, 1, 1])
        est = np.array([0, 1, 0, 0, 1, 0])
        self.assertEqual(effective_throughput(bits, est), 4)
        self.assertAlmostEqual(bit_error_rate(bits, est), 2 / 6)
        with self.assertRaises(MetricsError):
            effective_throughput(bits, est[:3])

    def test_localization_error(self):
        truth = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
        est = truth + np.array([[3.0, 4.0, 0.0], [0.0, 0.0, 1.0]])
        self.assertAlmostEqual(localization_error(truth, est), 3.0)

    def test_ebn0(self):
        self.assertAlmostEqual(scma_bits_per_resource(6, 4, 4), 3.0)
        self.assertAlmostEqual(ebn0_db(10.0, 2.0), 10.0 - 10 * np.log10(2.0))

    def test_report(self):
        report = MetricsReport(ber=0.1, se=2.0)
        self.assertEqual(report.values(), {"ber": 0.1, "se": 2.0})
        with self.assertRaises(MetricsError):
            MetricsReport(ber=1.5)
        with self.assertRaises(MetricsError):
            MetricsReport(localization_error=-1.0)


class TestModulation(unittest.TestCase):
    """QPSK mapping and index expansion"""

    def test_gray_mapping(self):
        bits = np.array([0, 0, 0, 1, 1, 0, 1, 1])
        symbols = qpsk_modulate(bits)
        np.testing.assert_allclose(symbols * np.sqrt(2), [1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j])
        np.testing.assert_array_equal(qpsk_demodulate(symbols), bits)
        with self.assertRaises(ValueError):
            qpsk_modulate(np.array([1, 0, 1]))

    def test_projection(self):
        noisy = np.array([0.3 + 2j, -0.01 - 0.2j])
        np.testing.assert_allclose(qpsk_project(noisy) * np.sqrt(2), [1 + 1j, -1 - 1j])

    def test_index_bits(self):
        np.testing.assert_array_equal(index_to_bits([2, 1], 2), [1, 0, 0, 1])
        np.testing.assert_array_equal(bits_to_index([1, 0, 0, 1], 2), [2, 1])


class TestTraceWriter(unittest.TestCase):
    """JSON-lines iteration traces"""

    def test_bound_writers_share_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "trace.jsonl"
            root = TraceWriter(path, trial=3)
            root.bind(method="algorithm1").write({"iteration": 1, "beta": np.float64(2.5)})
            root.bind(method="omp-ongrid").write({"iteration": 1, "support": np.array([1, 2])})
            records = load_trace(path)
        self.assertEqual(len(records), 2)
        self.assertEqual(records[0], {"trial": 3, "method": "algorithm1", "iteration": 1, "beta": 2.5})
        self.assertEqual(records[1]["support"], [1, 2])
        self.assertEqual(len(root.records), 2)

    def test_missing_trace(self):
        self.assertEqual(load_trace("/nonexistent/trace.jsonl"), [])


if __name__ == '__main__':
    unittest.main()

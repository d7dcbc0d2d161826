import logging
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

QPSK_SCALE = 1.0 / np.sqrt(2.0)
QPSK_POINTS = QPSK_SCALE * np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j])


def random_bits(n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n uniform bits as uint8."""
    return rng.integers(0, 2, size=n, dtype=np.uint8)


def qpsk_modulate(bits: np.ndarray) -> np.ndarray:
    """
    Gray-mapped QPSK: bit pair (b0, b1) -> ((1-2*b0) + j(1-2*b1)) / sqrt(2).

    Args:
        bits: flat array with an even number of bits

    Returns:
        np.ndarray: unit-energy QPSK symbols
    """
    bits = np.asarray(bits, dtype=np.int64).reshape(-1)
    if bits.size % 2:
        raise ValueError(f"QPSK needs an even number of bits, got {bits.size}")
    pairs = bits.reshape(-1, 2)
    return QPSK_SCALE * ((1 - 2 * pairs[:, 0]) + 1j * (1 - 2 * pairs[:, 1]))


def qpsk_demodulate(symbols: np.ndarray) -> np.ndarray:
    """Hard-decision QPSK demapping back to bits (zero maps to bit 0)."""
    symbols = np.asarray(symbols).reshape(-1)
    bits = np.empty((symbols.size, 2), dtype=np.uint8)
    bits[:, 0] = symbols.real < 0
    bits[:, 1] = symbols.imag < 0
    return bits.reshape(-1)


def qpsk_project(symbols: np.ndarray) -> np.ndarray:
    """Mod(Demod(x)): nearest QPSK point, shape preserved."""
    symbols = np.asarray(symbols)
    re = np.where(symbols.real < 0, -1.0, 1.0)
    im = np.where(symbols.imag < 0, -1.0, 1.0)
    return QPSK_SCALE * (re + 1j * im)


def random_qpsk(n: int, rng: np.random.Generator) -> np.ndarray:
    return qpsk_modulate(random_bits(2 * n, rng))


def bit_error_rate(bits_true: np.ndarray, bits_est: np.ndarray) -> float:
    bits_true = np.asarray(bits_true).reshape(-1)
    bits_est = np.asarray(bits_est).reshape(-1)
    if bits_true.size != bits_est.size:
        raise ValueError("bit arrays differ in length")
    if bits_true.size == 0:
        return 0.0
    return float(np.count_nonzero(bits_true != bits_est)) / bits_true.size


def index_to_bits(indices: np.ndarray, bits_per_symbol: int) -> np.ndarray:
    """Binary expansion, most significant bit first."""
    indices = np.asarray(indices, dtype=np.int64).reshape(-1)
    shifts = np.arange(bits_per_symbol - 1, -1, -1)
    return ((indices[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)


def bits_to_index(bits: np.ndarray, bits_per_symbol: Optional[int] = None) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64).reshape(-1)
    width = bits_per_symbol or bits.size
    weights = 1 << np.arange(width - 1, -1, -1)
    return bits.reshape(-1, width) @ weights

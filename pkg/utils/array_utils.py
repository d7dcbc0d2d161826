"""
Array response helpers shared by the channel model, the sensing operators
and the grid refinement steps.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
from scipy.linalg import khatri_rao

logger = logging.getLogger(__name__)


class InvalidDimensionError(ValueError):
    """Array dimension is zero or negative"""
    pass


def _check_count(name: str, value: int) -> int:
    if int(value) < 1:
        raise InvalidDimensionError(f"{name} must be >= 1, got {value}")
    return int(value)


def ula_phases(u: float, count: int) -> np.ndarray:
    """Un-normalized phase progression exp(j*pi*n*u), n = 0..count-1."""
    return np.exp(1j * np.pi * np.arange(count) * u)


def ula_response(u: float, M: int) -> np.ndarray:
    """
    Uniform linear array response a_M(u).

    Args:
        u: effective angle
        M: number of elements

    Returns:
        np.ndarray: complex vector of length M with unit norm

    Raises:
        InvalidDimensionError: if M < 1
    """
    M = _check_count("M", M)
    return ula_phases(u, M) / np.sqrt(M)


def ura_response(u: float, v: float, N_y: int, N_z: int) -> np.ndarray:
    """
    Uniform rectangular array response b_N(u, v) as kron(y-phases, z-phases).

    Args:
        u: effective angle along the Y axis
        v: effective angle along the Z axis
        N_y: elements along Y
        N_z: elements along Z

    Returns:
        np.ndarray: complex vector of length N_y*N_z with unit norm
    """
    N_y = _check_count("N_y", N_y)
    N_z = _check_count("N_z", N_z)
    return np.kron(ula_phases(u, N_y), ula_phases(v, N_z)) / np.sqrt(N_y * N_z)


def ula_derivative(u: float, M: int) -> np.ndarray:
    """d a_M(u) / du."""
    return 1j * np.pi * np.arange(M) * ula_response(u, M)


def ura_derivatives(u: float, v: float, N_y: int, N_z: int) -> Tuple[np.ndarray, np.ndarray]:
    """Partial derivatives (d/du, d/dv) of b_N(u, v)."""
    scale = 1.0 / np.sqrt(N_y * N_z)
    py = ula_phases(u, N_y)
    pz = ula_phases(v, N_z)
    d_du = np.kron(1j * np.pi * np.arange(N_y) * py, pz) * scale
    d_dv = np.kron(py, 1j * np.pi * np.arange(N_z) * pz) * scale
    return d_du, d_dv


def ula_matrix(grid: np.ndarray, M: int) -> np.ndarray:
    """Stack a_M(u) for every grid point as columns (M x len(grid))."""
    M = _check_count("M", M)
    grid = np.asarray(grid, dtype=float)
    return np.exp(1j * np.pi * np.outer(np.arange(M), grid)) / np.sqrt(M)


def ula_matrix_derivative(grid: np.ndarray, M: int) -> np.ndarray:
    """Column-wise derivative of ula_matrix with respect to each grid point."""
    return 1j * np.pi * np.arange(M)[:, None] * ula_matrix(grid, M)


def ura_matrix(w_grid: np.ndarray, g_grid: np.ndarray, N_y: int, N_z: int) -> np.ndarray:
    """
    Dictionary of URA responses over the product grid.

    Column index is g_index * len(w_grid) + w_index, i.e. the w grid varies
    fastest, matching [b(w1,g1), ..., b(wG,g1), b(w1,g2), ...].
    """
    N_y = _check_count("N_y", N_y)
    N_z = _check_count("N_z", N_z)
    w_grid = np.asarray(w_grid, dtype=float)
    g_grid = np.asarray(g_grid, dtype=float)
    py = np.exp(1j * np.pi * np.outer(np.arange(N_y), w_grid))  # N_y x Gw
    pz = np.exp(1j * np.pi * np.outer(np.arange(N_z), g_grid))  # N_z x Gg
    # element (ny, nz) -> row ny*N_z + nz ; column (g, w) -> g*Gw + w
    cube = py[:, None, None, :] * pz[None, :, :, None]
    return cube.reshape(N_y * N_z, len(g_grid) * len(w_grid)) / np.sqrt(N_y * N_z)


def ura_matrix_derivatives(w_grid: np.ndarray, g_grid: np.ndarray,
                           N_y: int, N_z: int) -> Tuple[np.ndarray, np.ndarray]:
    """Column-wise derivatives of ura_matrix with respect to w and g."""
    B = ura_matrix(w_grid, g_grid, N_y, N_z)
    n_y = np.repeat(np.arange(N_y), N_z)
    n_z = np.tile(np.arange(N_z), N_y)
    return 1j * np.pi * n_y[:, None] * B, 1j * np.pi * n_z[:, None] * B


def column_khatri_rao(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product: column n = kron(left[:, n], right[:, n])."""
    return khatri_rao(np.atleast_2d(left), np.atleast_2d(right))


def effective_angle_bound(spacing: float, wavelength: float) -> float:
    """Upper end of the effective-angle domain [-2d/lambda, 2d/lambda]."""
    return 2.0 * spacing / wavelength


@dataclass
class OperationCounter:
    """Counts complex multiplies by category for complexity audits."""

    counts: Dict[str, int] = field(default_factory=dict)
    iterations: Dict[str, int] = field(default_factory=dict)

    def add(self, category: str, multiplies: int) -> None:
        self.counts[category] = self.counts.get(category, 0) + int(multiplies)

    def tick(self, category: str, n: int = 1) -> None:
        self.iterations[category] = self.iterations.get(category, 0) + int(n)

    def matmul(self, category: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """a @ b, recording rows(a) * cols(a) * cols(b) multiplies."""
        a = np.asarray(a)
        b = np.asarray(b)
        inner = a.shape[-1]
        outer = a.size // inner
        cols = 1 if b.ndim == 1 else b.shape[-1]
        self.add(category, outer * inner * cols)
        return a @ b

    def per_iteration(self, category: str) -> float:
        n = self.iterations.get(category, 0)
        if n == 0:
            return float(self.counts.get(category, 0))
        return self.counts.get(category, 0) / n

    def reset(self) -> None:
        self.counts.clear()
        self.iterations.clear()

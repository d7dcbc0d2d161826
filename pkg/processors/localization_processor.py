"""
Mapping of UE-side effective angles at the RISs to UE coordinates.

All RISs share the Y-o-Z orientation and UEs sit on the BS side of the RIS
plane, so the x coordinate is taken from the positive square-root branch.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy import linalg

from channel_model import DegenerateGeometryError
from utils.array_utils import effective_angle_bound

logger = logging.getLogger(__name__)

RADICAND_TOLERANCE = 1e-9


class LocalizationError(Exception):
    """Base exception for localization"""
    pass


class InfeasibleAnglesError(LocalizationError):
    """Angle estimates are inconsistent with any position"""
    pass


@dataclass
class LocalizationResult:
    positions: np.ndarray                 # (K, 3)
    distances: np.ndarray                 # (N_R, K)
    residuals: np.ndarray                 # (K,), zero for two RISs
    clipped: List[bool] = field(default_factory=list)

    def errors(self, truth: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.positions - np.asarray(truth, dtype=float).reshape(-1, 3), axis=1)


def _x_branch(q: np.ndarray, u_hat: float, v_hat: float, distance: float) -> Tuple[float, bool]:
    radicand = 1.0 - u_hat ** 2 - v_hat ** 2
    clipped = False
    if radicand < 0.0:
        if radicand < -RADICAND_TOLERANCE:
            raise InfeasibleAnglesError(f"Direction cosines ({u_hat:.6g}, {v_hat:.6g}) exceed unit norm")
        radicand = 0.0
        clipped = True
    return float(q[0] + distance * np.sqrt(radicand)), clipped


def localize_two_ris(u1: float, v1: float, u2: float, v2: float, q_r1, q_r2,
                     spacing: float = 0.5, wavelength: float = 1.0) -> np.ndarray:
    """
    Closed-form UE position from the effective angles at two RISs.

    Raises:
        DegenerateGeometryError: zero denominator
        InfeasibleAnglesError: negative distance or radicand
    """
    return _localize_two(u1, v1, u2, v2, q_r1, q_r2, spacing, wavelength)[0]


def _localize_two(u1, v1, u2, v2, q_r1, q_r2, spacing, wavelength):
    k = effective_angle_bound(spacing, wavelength)
    u1, v1, u2, v2 = u1 / k, v1 / k, u2 / k, v2 / k
    q1 = np.asarray(q_r1, dtype=float)
    q2 = np.asarray(q_r2, dtype=float)
    den = u2 * v1 - u1 * v2
    if abs(den) < 1e-15:
        raise DegenerateGeometryError("UE direction is collinear with both RISs")
    dy = q1[1] - q2[1]
    dz = q1[2] - q2[2]
    d1 = (u2 * dz - v2 * dy) / den
    d2 = (u1 * dz - v1 * dy) / den
    if d1 <= 0 or d2 <= 0:
        raise InfeasibleAnglesError(f"Non-positive UE-RIS distances ({d1:.6g}, {d2:.6g})")
    x1, c1 = _x_branch(q1, u1, v1, d1)
    x2, c2 = _x_branch(q2, u2, v2, d2)
    position = np.array([(x1 + x2) / 2.0, q1[1] - u1 * d1, q1[2] - v1 * d1])
    return position, np.array([d1, d2]), c1 or c2


def localize_n_ris(angles: np.ndarray, ris_positions: Sequence, spacing: float = 0.5,
                   wavelength: float = 1.0) -> LocalizationResult:
    """
    Least-squares position of one UE from N_R >= 2 RISs.

    Args:
        angles: (N_R x 2) effective angles [u_i, v_i]
        ris_positions: N_R RIS centres

    Returns:
        LocalizationResult: a single-UE result

    Raises:
        DegenerateGeometryError: the stacked system is rank deficient
        InfeasibleAnglesError: negative distance or radicand
    """
    angles = np.asarray(angles, dtype=float).reshape(-1, 2) / effective_angle_bound(spacing, wavelength)
    q = np.array([np.asarray(p, dtype=float) for p in ris_positions])
    n_r = q.shape[0]
    if n_r < 2 or angles.shape[0] != n_r:
        raise LocalizationError(f"Need matching angles for >= 2 RISs, got {angles.shape[0]} / {n_r}")
    A = np.zeros((2 * n_r, n_r + 2))
    b = np.zeros(2 * n_r)
    for i in range(n_r):
        A[2 * i, 0] = 1.0
        A[2 * i, 2 + i] = angles[i, 0]
        b[2 * i] = q[i, 1]
        A[2 * i + 1, 1] = 1.0
        A[2 * i + 1, 2 + i] = angles[i, 1]
        b[2 * i + 1] = q[i, 2]
    rank = np.linalg.matrix_rank(A)
    if rank < n_r + 2:
        raise DegenerateGeometryError(f"Localization system has rank {rank} < {n_r + 2}")
    t, _, _, _ = linalg.lstsq(A, b)
    distances = t[2:]
    if np.any(distances <= 0):
        raise InfeasibleAnglesError(f"Non-positive UE-RIS distances {distances}")
    xs, clipped = [], False
    for i in range(n_r):
        x_i, c_i = _x_branch(q[i], angles[i, 0], angles[i, 1], distances[i])
        xs.append(x_i)
        clipped |= c_i
    if clipped:
        logger.warning("⚠️ Radicand clipped at zero while localizing")
    residual = float(np.linalg.norm(A @ t - b))
    return LocalizationResult(positions=np.array([[np.mean(xs), t[0], t[1]]]),
                              distances=distances.reshape(n_r, 1),
                              residuals=np.array([residual]), clipped=[clipped])


def localize_ues(angles: np.ndarray, ris_positions: Sequence, spacing: float = 0.5,
                 wavelength: float = 1.0) -> LocalizationResult:
    """
    Localize every UE from a (K x N_R x 2) angle array.

    Two RISs use the closed form, more use the stacked least squares.
    """
    angles = np.asarray(angles, dtype=float)
    K, n_r = angles.shape[:2]
    positions = np.zeros((K, 3))
    distances = np.zeros((n_r, K))
    residuals = np.zeros(K)
    clipped = []
    for k in range(K):
        if n_r == 2:
            (u1, v1), (u2, v2) = angles[k]
            pos, dist, flag = _localize_two(u1, v1, u2, v2, ris_positions[0], ris_positions[1],
                                            spacing, wavelength)
            if flag:
                logger.warning(f"⚠️ Radicand clipped at zero for UE {k}")
        else:
            single = localize_n_ris(angles[k], ris_positions, spacing, wavelength)
            pos, dist, flag = single.positions[0], single.distances[:, 0], single.clipped[0]
            residuals[k] = single.residuals[0]
        positions[k] = pos
        distances[:, k] = dist
        clipped.append(flag)
    return LocalizationResult(positions=positions, distances=distances, residuals=residuals,
                              clipped=clipped)

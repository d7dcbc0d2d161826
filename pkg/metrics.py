"""
Link-level metrics: channel and angle NMSE, effective SINR, spectral
efficiency, throughput and localization error.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from utils.modulation_utils import bit_error_rate

logger = logging.getLogger(__name__)

NMSE_FLOOR_DB = -300.0


class MetricsError(Exception):
    """Invalid metric inputs"""
    pass


def _to_db(ratio: float) -> float:
    if ratio <= 0.0:
        return NMSE_FLOOR_DB
    return max(10.0 * np.log10(ratio), NMSE_FLOOR_DB)


def nmse_channel(H_true: Sequence[np.ndarray], H_est: Sequence[np.ndarray]) -> float:
    """
    10 log10(sum ||H - H_hat||^2 / sum ||H||^2) over all RISs.

    Raises:
        MetricsError: shape mismatch or all-zero truth
    """
    if len(H_true) != len(H_est):
        raise MetricsError(f"{len(H_true)} true channels but {len(H_est)} estimates")
    err, ref = 0.0, 0.0
    for H, Hh in zip(H_true, H_est):
        H = np.asarray(H)
        Hh = np.asarray(Hh)
        if H.shape != Hh.shape:
            raise MetricsError(f"Shape mismatch {H.shape} vs {Hh.shape}")
        err += float(np.sum(np.abs(H - Hh) ** 2))
        ref += float(np.sum(np.abs(H) ** 2))
    if ref == 0.0:
        raise MetricsError("NMSE undefined for an all-zero reference")
    return _to_db(err / ref)


def nmse_angles(phi_true: Sequence[np.ndarray], phi_est: Sequence[np.ndarray]) -> float:
    """
    NMSE of stacked path angles [u_A, u_D, v_D], estimated paths matched to true
    paths by minimum total squared distance per RIS.
    """
    if len(phi_true) != len(phi_est):
        raise MetricsError(f"{len(phi_true)} true angle sets but {len(phi_est)} estimates")
    err, ref = 0.0, 0.0
    for true, est in zip(phi_true, phi_est):
        true = np.asarray(true, dtype=float).reshape(-1, 3)
        est = np.asarray(est, dtype=float).reshape(-1, 3)
        ref += float(np.sum(true ** 2))
        if est.shape[0] == 0:
            err += float(np.sum(true ** 2))
            continue
        cost = np.sum((true[:, None, :] - est[None, :, :]) ** 2, axis=2)
        rows, cols = linear_sum_assignment(cost)
        err += float(cost[rows, cols].sum())
        unmatched = np.setdiff1d(np.arange(true.shape[0]), rows)
        err += float(np.sum(true[unmatched] ** 2))
    if ref == 0.0:
        raise MetricsError("Angle NMSE undefined for all-zero angles")
    return _to_db(err / ref)


def effective_sinr_fixed(h_true: np.ndarray, h_est: np.ndarray, xi: float, N_0: float,
                         error_weight: Optional[float] = None) -> np.ndarray:
    """
    Per-slot xi ||h_hat_t||^2 / ((1 - xi) ||h_t - h_hat_t||^2 + N_0).

    Args:
        h_true, h_est: cascaded channels (M x T), one column per slot
        xi: data power share
        N_0: noise variance
        error_weight: replaces (1 - xi) for references without superimposed pilots
    """
    h_true = np.asarray(h_true).reshape(np.shape(h_true)[0], -1)
    h_est = np.asarray(h_est).reshape(h_true.shape)
    weight = (1.0 - xi) if error_weight is None else error_weight
    signal = xi * np.sum(np.abs(h_est) ** 2, axis=0)
    error = weight * np.sum(np.abs(h_true - h_est) ** 2, axis=0)
    return signal / (error + N_0)


def effective_sinr_multiue(h_true: np.ndarray, h_est: np.ndarray, xi: np.ndarray, N_0: float,
                           symbol_power: Optional[np.ndarray] = None,
                           interferers: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Per-UE, per-slot effective SINR with inter-UE interference.

    SINR_k = xi_k ||h_hat_k||^2 / (||h_k - h_hat_k||^2 |x_k|^2
             + sum_{q != k} [xi_q ||h_hat_q||^2 + ||h_q - h_hat_q||^2 |x_q|^2] + N_0)

    Args:
        h_true, h_est: cascaded channels (K x M x T)
        xi: data power share of each UE, standing in for its data-symbol variance
        N_0: noise variance
        symbol_power: |x_k|^2 per UE and slot (K x T), defaults to 1
        interferers: (K x K) boolean, True where UE q collides with UE k; all others by default
    """
    h_true = np.asarray(h_true)
    h_est = np.asarray(h_est)
    K = h_true.shape[0]
    xi = np.broadcast_to(np.asarray(xi, dtype=float), (K,))
    power = np.ones(h_true.shape[::2]) if symbol_power is None else np.asarray(symbol_power, dtype=float)
    mask = ~np.eye(K, dtype=bool) if interferers is None else np.asarray(interferers, dtype=bool).copy()
    np.fill_diagonal(mask, False)
    est = np.sum(np.abs(h_est) ** 2, axis=1)                 # K x T
    err = np.sum(np.abs(h_true - h_est) ** 2, axis=1) * power
    other = mask.astype(float) @ (xi[:, None] * est + err)
    return xi[:, None] * est / (err + other + N_0)


def spectral_efficiency(sinr: np.ndarray, data_fraction: float = 1.0) -> float:
    """data_fraction * mean log2(1 + SINR)."""
    return float(data_fraction * np.mean(np.log2(1.0 + np.asarray(sinr))))


def effective_throughput(bits_true: np.ndarray, bits_est: np.ndarray) -> int:
    """Correctly decoded information bits in one block."""
    bits_true = np.asarray(bits_true).reshape(-1)
    bits_est = np.asarray(bits_est).reshape(-1)
    if bits_true.size != bits_est.size:
        raise MetricsError("bit arrays differ in length")
    return int(np.count_nonzero(bits_true == bits_est))


def localization_error(positions_true: np.ndarray, positions_est: np.ndarray) -> float:
    """Mean Euclidean distance over UEs."""
    diff = np.asarray(positions_true, dtype=float).reshape(-1, 3) - np.asarray(positions_est, dtype=float).reshape(-1, 3)
    return float(np.mean(np.linalg.norm(diff, axis=1)))


def ebn0_db(snr_db: float, bits_per_symbol_per_resource: float) -> float:
    """E_b/N_0 = SNR - 10 log10(information bits per resource element)."""
    return float(snr_db - 10.0 * np.log10(bits_per_symbol_per_resource))


def scma_bits_per_resource(K: int, N_s: int, N_c: int) -> float:
    return K * np.log2(N_c) / N_s


@dataclass
class MetricsReport:
    """Per-trial metrics; fields left as None do not apply to the method."""

    nmse_hr: Optional[float] = None
    nmse_phi: Optional[float] = None
    ber: Optional[float] = None
    se: Optional[float] = None
    effective_throughput: Optional[float] = None
    localization_error: Optional[float] = None
    ebn0_db: Optional[float] = None
    traces: List[Dict[str, Any]] = field(default_factory=list)

    def __post_init__(self):
        if self.ber is not None and not 0.0 <= self.ber <= 1.0:
            raise MetricsError(f"BER {self.ber} outside [0, 1]")
        if self.localization_error is not None and self.localization_error < 0:
            raise MetricsError(f"Negative localization error {self.localization_error}")

    def values(self) -> Dict[str, float]:
        """Scalar metrics that are set, keyed by CSV metric name."""
        data = asdict(self)
        data.pop("traces")
        return {k: float(v) for k, v in data.items() if v is not None}


__all__ = [
    "MetricsError", "MetricsReport", "NMSE_FLOOR_DB", "bit_error_rate", "ebn0_db",
    "effective_sinr_fixed", "effective_sinr_multiue", "effective_throughput",
    "localization_error", "nmse_angles", "nmse_channel", "scma_bits_per_resource",
    "spectral_efficiency",
]

"""
Reference receivers for the fixed site: genie channel knowledge and the
time-multiplexed orthogonal-pilot scheme without sensing.
"""

import logging
from dataclasses import dataclass

import numpy as np

from models.base_estimator import BaseEstimator, EstimatorError
from models.sbl_estimator import lmmse_detect
from signal_synthesis import ReceivedBlock

logger = logging.getLogger(__name__)


@dataclass
class ReferenceEstimate:
    h_eff: np.ndarray          # (M x T) estimated cascaded channel
    x_d: np.ndarray            # detected symbols of the data slots
    data_slots: np.ndarray     # slot indices carrying data

    @property
    def data_fraction(self) -> float:
        return self.data_slots.size / self.h_eff.shape[1]


class PerfectCsiEstimator(BaseEstimator):
    """LMMSE detection with the true cascaded channel."""

    def __init__(self, name: str = "perfect-csi"):
        self.name = name
        self.logger = logging.getLogger(__name__)

    def estimate(self, received: ReceivedBlock, true_cascade: np.ndarray, pilot: np.ndarray,
                 xi: float, N_0: float, P_0: float = 1.0) -> ReferenceEstimate:
        H = np.asarray(true_cascade)
        x_d = lmmse_detect(received.Y, H, pilot, xi, N_0, P_0)
        return ReferenceEstimate(h_eff=H.copy(), x_d=x_d, data_slots=np.arange(H.shape[1]))

    def get_method_name(self) -> str:
        return self.name

    def get_method_version(self) -> str:
        return "1.0"


def ls_cascade_estimate(Y: np.ndarray, pilots: np.ndarray) -> np.ndarray:
    """LS estimate of a slot-invariant cascaded channel from full-power pilot slots."""
    pilots = np.asarray(pilots)
    energy = float(np.sum(np.abs(pilots) ** 2))
    if energy == 0.0:
        raise EstimatorError("Pilot slots carry no energy")
    return Y[:, :pilots.size] @ pilots.conj() / energy


class OrthogonalPilotEstimator(BaseEstimator):
    """
    LS channel estimate from T_p dedicated pilot slots, then detection of the
    remaining full-power data slots.
    """

    def __init__(self, pilot_slots: int = 8, name: str = "orthogonal-pilot"):
        if pilot_slots < 1:
            raise ValueError(f"pilot_slots must be >= 1, got {pilot_slots}")
        self.pilot_slots = pilot_slots
        self.name = name
        self.logger = logging.getLogger(__name__)

    def estimate(self, received: ReceivedBlock, pilot: np.ndarray, N_0: float,
                 P_0: float = 1.0) -> ReferenceEstimate:
        Y = received.Y
        T = Y.shape[1]
        if self.pilot_slots >= T:
            raise EstimatorError(f"{self.pilot_slots} pilot slots leave no data in {T} slots")
        h = ls_cascade_estimate(Y, np.asarray(pilot)[:self.pilot_slots])
        H = np.repeat(h[:, None], T, axis=1)
        data = np.arange(self.pilot_slots, T)
        x_d = lmmse_detect(Y[:, data], H[:, data], np.zeros(data.size), 1.0, N_0, P_0)
        return ReferenceEstimate(h_eff=H, x_d=x_d, data_slots=data)

    def get_method_name(self) -> str:
        return self.name

    def get_method_version(self) -> str:
        return "1.0"

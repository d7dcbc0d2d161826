"""
Orthogonal matching pursuit baselines for the fixed site (on-grid and off-grid).
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from models.base_estimator import BaseEstimator, StepSchedule
from models.sbl_estimator import (
    FixedSiteEstimate,
    FixedSiteProblem,
    lmmse_data_init,
    refine_grids_fixed,
    sensing_matrix,
    transmitted,
    update_data,
)

logger = logging.getLogger(__name__)


def omp(y: np.ndarray, A: np.ndarray, sparsity: int,
        tol: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Greedy support selection with an LS refit after every pick.

    Args:
        y: measurements
        A: dictionary (columns need not be normalized)
        sparsity: maximum support size
        tol: stop once the residual energy falls below tol * ||y||^2

    Returns:
        Tuple[np.ndarray, np.ndarray]: coefficient vector, selected column indices
    """
    y = np.asarray(y, dtype=complex)
    norms = np.linalg.norm(A, axis=0)
    norms[norms == 0] = 1.0
    residual = y.copy()
    support = []
    coef_s = np.zeros(0, dtype=complex)
    target = tol * float(np.vdot(y, y).real)
    for _ in range(min(sparsity, A.shape[1])):
        scores = np.abs(A.conj().T @ residual) / norms
        scores[support] = -1.0
        support.append(int(np.argmax(scores)))
        coef_s = linalg.lstsq(A[:, support], y)[0]
        residual = y - A[:, support] @ coef_s
        if float(np.vdot(residual, residual).real) <= target:
            break
    coef = np.zeros(A.shape[1], dtype=complex)
    coef[support] = coef_s
    return coef, np.array(support, dtype=int)


@dataclass
class OmpConfig:
    sparsity: Optional[int] = None
    outer_iterations: int = 3
    refine_steps: int = 0
    c: float = 50.0
    d: float = 0.5
    normalize_gradient: bool = True


class OmpEstimator(BaseEstimator):
    """
    Alternates OMP on the current sensing matrix with per-slot data detection.

    refine_steps > 0 turns it into the off-grid variant: after each OMP pass the
    BS-RIS grids are moved along the residual gradient and the support is refit.
    """

    def __init__(self, config: Optional[OmpConfig] = None, name: str = "omp-ongrid"):
        self.config = config or OmpConfig()
        self.name = name
        self.logger = logging.getLogger(__name__)

    def estimate(self, problem: FixedSiteProblem) -> FixedSiteEstimate:
        cfg = self.config
        grids = problem.grids
        y = problem.y
        x_p = np.asarray(problem.pilot)
        sparsity = cfg.sparsity or int(sum(grids.L or (1,) * grids.num_ris))
        size = sum(grids.r2b_size(i) for i in range(grids.num_ris))
        zero_cov = np.zeros((size, size), dtype=complex)

        Z_p = sensing_matrix(np.sqrt(1.0 - problem.xi) * x_p, grids, problem.h_b0, problem.schedule)
        coef, _ = omp(y, Z_p, sparsity)
        x_d = lmmse_data_init(problem.Y, coef, grids, problem.h_b0, problem.schedule,
                              x_p, problem.xi, problem.N_0, problem.P_0)
        step_schedule = StepSchedule(c=cfg.c, d=cfg.d)
        j = 0
        for outer in range(1, cfg.outer_iterations + 1):
            x = transmitted(x_d, x_p, problem.xi)
            Z = sensing_matrix(x, grids, problem.h_b0, problem.schedule)
            coef, support = omp(y, Z, sparsity)
            for _ in range(cfg.refine_steps):
                j += 1
                grids = refine_grids_fixed(y, x, coef, zero_cov, 1.0, grids, problem.h_b0,
                                           problem.schedule, step_schedule, j,
                                           cfg.normalize_gradient)
            if cfg.refine_steps:
                Z = sensing_matrix(x, grids, problem.h_b0, problem.schedule)
                coef = np.zeros(size, dtype=complex)
                coef[support] = linalg.lstsq(Z[:, support], y)[0]
            x_d = update_data(problem.Y, coef, zero_cov, grids, problem.h_b0, problem.schedule,
                              x_p, problem.xi)
            self.logger.debug(f"{self.name} pass {outer}: support {support.tolist()}")
        residual = y - sensing_matrix(transmitted(x_d, x_p, problem.xi), grids,
                                      problem.h_b0, problem.schedule) @ coef
        noise = max(float(np.mean(np.abs(residual) ** 2)), np.finfo(float).tiny)
        return FixedSiteEstimate(omega=coef, grids=grids, x_d=x_d, gamma=np.ones(size),
                                 beta=1.0 / noise, iterations=cfg.outer_iterations, converged=True)

    def get_method_name(self) -> str:
        return self.name

    def get_method_version(self) -> str:
        return "1.0"

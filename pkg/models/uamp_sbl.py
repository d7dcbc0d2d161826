"""
UAMP-SBL sparse recovery for y = A psi + n.

The model is first rotated by the left singular vectors of A so that the
message passing recursion only touches the diagonal-times-unitary operator
Lambda; every iteration is then matrix-vector products and elementwise work.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import linalg

from models.base_estimator import EstimatorError, NumericalError, signal_scale
from utils.array_utils import OperationCounter

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class UampProblem:
    """Linear model y = A psi + n with Q measurements and P coefficients."""

    A: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=complex))
        y = np.asarray(self.y, dtype=complex).reshape(-1)
        if A.shape[0] != y.size or min(A.shape) < 1:
            raise EstimatorError(f"A {A.shape} does not match y of length {y.size}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(y))):
            raise NumericalError("UAMP problem carries non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "y", y)

    @property
    def Q(self) -> int:
        return self.A.shape[0]

    @property
    def P(self) -> int:
        return self.A.shape[1]


@dataclass
class UampTransform:
    """r = U_L^H y, Lambda = Sigma_D U_R^H and the row energies lambda_e."""

    r: np.ndarray
    Lambda: np.ndarray
    lambda_e: np.ndarray
    residual_energy: float = 0.0
    num_measurements: int = 0


@dataclass
class UampConfig:
    delta_psi: float = 1e-3
    u_max: int = 300
    a_eps: float = 1e-3
    b_psi: float = 1e-10
    floor: float = 1e-15
    beta_max: float = 1e12
    gamma0: float = 1.0
    beta0: float = 1.0
    tau_psi0: float = 1.0


@dataclass
class UampState:
    psi: np.ndarray
    gamma: np.ndarray
    beta: float
    tau_psi: float
    s: np.ndarray
    a_eps: float
    iteration: int = 0


@dataclass
class UampResult:
    psi: np.ndarray
    gamma: np.ndarray
    beta: float
    tau_psi: float
    iterations: int
    converged: bool
    history: List[float] = field(default_factory=list)


def unitary_transform(problem: UampProblem) -> UampTransform:
    """
    Economy SVD A = U_L Sigma_D U_R^H.

    Rows of the full transform beyond min(Q, P) carry no signal; their energy
    is returned as residual_energy so the noise-precision update sees it.

    Raises:
        NumericalError: the SVD did not converge
    """
    try:
        U, sv, Vh = linalg.svd(problem.A, full_matrices=False)
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"SVD of the sensing operator failed: {e}")
    r = U.conj().T @ problem.y
    Lambda = sv[:, None] * Vh
    residual = max(float(np.vdot(problem.y, problem.y).real - np.vdot(r, r).real), 0.0)
    return UampTransform(r=r, Lambda=Lambda, lambda_e=sv ** 2,
                         residual_energy=residual, num_measurements=problem.Q)


def uamp_sbl_solve(transform: UampTransform, config: Optional[UampConfig] = None,
                   counter: Optional[OperationCounter] = None) -> UampResult:
    """
    Run the UAMP-SBL recursion on an already transformed model.

    Args:
        transform: output of unitary_transform
        config: tolerances and initial values
        counter: optional multiply counter (category "solver")

    Returns:
        UampResult: estimate, hyperparameters and convergence flag
    """
    cfg = config or UampConfig()
    r, Lam, lam_e = transform.r, transform.Lambda, transform.lambda_e
    P = Lam.shape[1]
    Q = transform.num_measurements or r.size
    floor = cfg.floor

    def mv(a, b):
        return counter.matmul("solver", a, b) if counter is not None else a @ b

    state = UampState(psi=np.zeros(P, dtype=complex), gamma=np.full(P, cfg.gamma0),
                      beta=cfg.beta0, tau_psi=cfg.tau_psi0, s=np.zeros(r.size, dtype=complex),
                      a_eps=cfg.a_eps)
    history: List[float] = []
    converged = False
    for u in range(1, cfg.u_max + 1):
        psi, gamma, beta, s = state.psi, state.gamma, state.beta, state.s
        tau_p = state.tau_psi * lam_e
        p = mv(Lam, psi) - tau_p * s
        v_kappa = tau_p / (1.0 + beta * tau_p)
        kappa = (beta * tau_p * r + p) / (1.0 + beta * tau_p)
        denom = (np.sum(np.abs(r - kappa) ** 2) + np.sum(v_kappa) + transform.residual_energy)
        beta = min(Q / max(denom, floor), cfg.beta_max)
        tau_s = 1.0 / np.maximum(tau_p + 1.0 / beta, floor)
        s = tau_s * (r - p)
        tau_q = 1.0 / max(float(lam_e @ tau_s) / P, floor)
        q = psi + tau_q * mv(Lam.conj().T, s)
        shrink = 1.0 / (1.0 + tau_q * gamma)
        tau_psi = tau_q * float(np.mean(shrink))
        psi_new = q * shrink
        gamma = (2.0 * state.a_eps + 1.0) / np.maximum(cfg.b_psi + np.abs(psi_new) ** 2 + tau_psi, floor)
        radicand = np.log(np.mean(gamma)) - np.mean(np.log(gamma))
        a_eps = 0.5 * np.sqrt(max(float(radicand), 0.0))
        if counter is not None:
            counter.tick("solver")

        if not (np.all(np.isfinite(psi_new)) and np.isfinite(beta) and np.isfinite(tau_psi)):
            logger.warning(f"⚠️ UAMP-SBL produced non-finite values at iteration {u}, returning last finite iterate")
            return UampResult(state.psi, state.gamma, state.beta, state.tau_psi, u - 1, False, history)

        norm_new = float(np.vdot(psi_new, psi_new).real)
        change = float(np.vdot(psi_new - psi, psi_new - psi).real)
        rel = change / norm_new if norm_new > 0 else (0.0 if change == 0 else np.inf)
        history.append(rel)
        state = UampState(psi=psi_new, gamma=gamma, beta=beta, tau_psi=tau_psi, s=s,
                          a_eps=a_eps, iteration=u)
        if rel < cfg.delta_psi:
            converged = True
            break
    logger.debug(f"UAMP-SBL stopped after {state.iteration} iterations (converged={converged})")
    return UampResult(state.psi, state.gamma, state.beta, state.tau_psi, state.iteration,
                      converged, history)


def uamp_sbl(A: np.ndarray, y: np.ndarray, config: Optional[UampConfig] = None,
             counter: Optional[OperationCounter] = None) -> UampResult:
    """Transform then solve on the RMS-normalized measurements; the usual entry point."""
    problem = UampProblem(A, y)
    scale = signal_scale(problem.y)
    result = uamp_sbl_solve(unitary_transform(UampProblem(problem.A, problem.y / scale)), config,
                            counter)
    return dataclasses.replace(result, psi=result.psi * scale, gamma=result.gamma / scale ** 2,
                               beta=result.beta / scale ** 2, tau_psi=result.tau_psi * scale ** 2)

"""
Structure-aware sparse Bayesian learning for the fixed site.

The fixed site sends superimposed pilots and QPSK data through both RISs. The
estimator alternates EM updates of the sparse BS-RIS coefficients with
off-grid refinement of the BS-RIS angle grids and a per-slot data update.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from channel_model import DictionaryGrids
from models.base_estimator import (
    BaseEstimator,
    NumericalConditioningError,
    NumericalError,
    StepSchedule,
    backtracking_step,
    ensure_finite,
    normalize_direction,
    signal_scale,
)
from signal_synthesis import (
    ReceivedBlock,
    RisSchedule,
    build_z_r2b,
    effective_channel_from_omega,
    split_omega,
)
from utils.modulation_utils import qpsk_demodulate, qpsk_project

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FixedSiteProblem:
    """Everything the fixed-site estimator is allowed to know."""

    received: ReceivedBlock
    pilot: np.ndarray
    xi: float
    grids: DictionaryGrids
    h_b0: Tuple[np.ndarray, ...]
    schedule: RisSchedule
    N_0: float
    P_0: float = 1.0

    @property
    def y(self) -> np.ndarray:
        return self.received.vec

    @property
    def Y(self) -> np.ndarray:
        return self.received.Y

    @property
    def M(self) -> int:
        return self.received.Y.shape[0]

    @property
    def T(self) -> int:
        return self.received.Y.shape[1]


@dataclass
class Algorithm1Config:
    rho: float = 1.0
    a_gamma: float = 1e-4
    b_gamma: float = 1e-4
    gamma0: float = 1.0
    beta0: float = 1.0
    delta_chi: float = 1e-3
    delta_omega: float = 0.1
    j_max: int = 30
    c: float = 50.0
    d: float = 0.5
    beta_max: float = 1e12
    gamma_max: float = 1e12
    normalize_gradient: bool = True
    max_backtracks: int = 10
    max_condition: float = 1e14
    tr_ridge: float = 1e-6
    refine_grids: bool = True
    update_symbols: bool = True
    prune: bool = True


@dataclass
class SblState:
    mu: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    beta: float
    grids: DictionaryGrids
    x_d: np.ndarray
    objective: float = -np.inf
    iteration: int = 0


@dataclass
class FixedSiteEstimate:
    """Result of one fixed-site estimation run."""

    omega: np.ndarray
    grids: DictionaryGrids
    x_d: np.ndarray
    gamma: np.ndarray
    beta: float
    iterations: int
    converged: bool
    trace: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def omegas(self) -> List[np.ndarray]:
        return split_omega(self.omega, self.grids)

    def bits(self) -> np.ndarray:
        return qpsk_demodulate(self.x_d)

    def reconstruct_bs_ris(self) -> List[np.ndarray]:
        return reconstruct_bs_ris(self.omegas, self.grids)

    def estimated_paths(self, L: Optional[Sequence[int]] = None) -> List[np.ndarray]:
        return estimated_paths(self.omegas, self.grids, L or self.grids.L)

    def effective_channel(self, h_b0: Sequence[np.ndarray], schedule: RisSchedule) -> np.ndarray:
        return effective_channel_from_omega(self.omegas, self.grids, h_b0, schedule)


@dataclass
class SblResult:
    mu: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    beta: float
    iterations: int
    converged: bool


def transmitted(x_d: np.ndarray, x_p: np.ndarray, xi: float) -> np.ndarray:
    return np.sqrt(xi) * np.asarray(x_d) + np.sqrt(1.0 - xi) * np.asarray(x_p)


def sensing_matrix(x: np.ndarray, grids: DictionaryGrids, h_b0: Sequence[np.ndarray],
                   schedule: RisSchedule) -> np.ndarray:
    return build_z_r2b(x, grids, h_b0, schedule).matrix


def upsilon_matrix(xi: float, grids: DictionaryGrids, h_b0: Sequence[np.ndarray],
                   schedule: RisSchedule) -> np.ndarray:
    """
    Data-uncertainty weight of the Tikhonov term.

    Block (i, j) = xi c_i c_j kron(conj(Q_i) Q_j^T, A_i^H A_j), the expected
    Gram matrix of the data part of Z for unit-modulus data.
    """
    Qs, As, cs = [], [], []
    for i in range(grids.num_ris):
        Qs.append(grids.b_r2b(i).conj().T @ (np.asarray(h_b0[i])[:, None] * schedule.theta[i]))
        As.append(grids.a_r2b(i))
        cs.append(grids.scale(i))
    rows = []
    for i in range(grids.num_ris):
        rows.append([xi * cs[i] * cs[j] * np.kron(Qs[i].conj() @ Qs[j].T, As[i].conj().T @ As[j])
                     for j in range(grids.num_ris)])
    return np.block(rows)


def tr_ls_init(y: np.ndarray, x_p: np.ndarray, xi: float, rho: float, grids: DictionaryGrids,
               h_b0: Sequence[np.ndarray], schedule: RisSchedule,
               max_condition: float = 1e14, ridge: float = 1e-6) -> np.ndarray:
    """
    Tikhonov-regularized LS from the pilot part: [Z_p^H Z_p + rho^2 (Upsilon + eps I)]^-1 Z_p^H y.

    Overcomplete grids leave both Z_p^H Z_p and Upsilon singular; eps is `ridge`
    times their mean diagonal. A matrix that is still near singular is solved in
    the least-squares sense with a warning.

    Raises:
        ValueError: rho is not positive
        NumericalConditioningError: the normal matrix holds NaN or inf
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    Z_p = sensing_matrix(np.sqrt(1.0 - xi) * np.asarray(x_p), grids, h_b0, schedule)
    normal = Z_p.conj().T @ Z_p + rho ** 2 * upsilon_matrix(xi, grids, h_b0, schedule)
    if not np.all(np.isfinite(normal)):
        raise NumericalConditioningError("TR-LS normal matrix is not finite")
    level = float(np.real(np.trace(normal))) / normal.shape[0]
    normal = normal + rho ** 2 * ridge * level * np.eye(normal.shape[0])
    rhs = Z_p.conj().T @ y
    cond = np.linalg.cond(normal)
    if not np.isfinite(cond) or cond > max_condition:
        logger.warning(f"⚠️ TR-LS normal matrix condition number {cond:.3e}, "
                       f"falling back to least squares")
        return linalg.lstsq(normal, rhs)[0]
    return linalg.solve(normal, rhs, assume_a="her")


def lmmse_data_init(Y: np.ndarray, omega0: np.ndarray, grids: DictionaryGrids,
                    h_b0: Sequence[np.ndarray], schedule: RisSchedule, x_p: np.ndarray,
                    xi: float, N_0: float, P_0: float = 1.0, project: bool = True) -> np.ndarray:
    """
    Per-slot LMMSE data estimate from an initial effective channel.

    x_d,t = sqrt(xi) h_t^H (y_t - sqrt(1-xi) h_t x_p,t) / (xi ||h_t||^2 + N_0 / P_0)
    """
    H = effective_channel_from_omega(split_omega(omega0, grids), grids, h_b0, schedule)
    return lmmse_detect(Y, H, x_p, xi, N_0, P_0, project)


def lmmse_detect(Y: np.ndarray, H: np.ndarray, x_p: np.ndarray, xi: float, N_0: float,
                 P_0: float = 1.0, project: bool = True) -> np.ndarray:
    """Per-slot LMMSE data detection given an effective channel H (M x T)."""
    residual = Y - np.sqrt(1.0 - xi) * H * np.asarray(x_p)[None, :]
    num = np.sqrt(xi) * np.sum(H.conj() * residual, axis=0)
    den = xi * np.sum(np.abs(H) ** 2, axis=0) + N_0 / P_0
    x_d = num / np.maximum(den, np.finfo(float).tiny)
    return qpsk_project(x_d) if project else x_d


def e_step(y: np.ndarray, Z: np.ndarray, gamma: np.ndarray, beta: float,
           iteration: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gaussian posterior of the coefficients.

    Sigma = (beta Z^H Z + diag(gamma))^-1, mu = beta Sigma Z^H y. Coefficients with
    infinite precision are pinned to zero.

    Raises:
        NumericalError: non-finite posterior
    """
    gamma = np.asarray(gamma, dtype=float)
    active = np.isfinite(gamma)
    P = gamma.size
    mu = np.zeros(P, dtype=complex)
    sigma = np.zeros((P, P), dtype=complex)
    if np.any(active):
        Za = Z[:, active]
        precision = beta * (Za.conj().T @ Za) + np.diag(gamma[active])
        eye = np.eye(precision.shape[0])
        try:
            sig_a = linalg.cho_solve(linalg.cho_factor(precision, lower=True), eye)
        except linalg.LinAlgError:
            sig_a = linalg.solve(precision, eye)
        sig_a = 0.5 * (sig_a + sig_a.conj().T)
        ensure_finite("posterior covariance", sig_a, iteration)
        mu[active] = beta * (sig_a @ (Za.conj().T @ y))
        sigma[np.ix_(active, active)] = sig_a
    ensure_finite("posterior mean", mu, iteration)
    return mu, sigma


def update_gamma(mu: np.ndarray, sigma: np.ndarray, a_gamma: float, b_gamma: float,
                 gamma_max: Optional[float] = None) -> np.ndarray:
    """gamma_g = (a + 1) / (b + Sigma(g, g) + |mu_g|^2); zero denominators give inf."""
    diag = np.real(np.diag(sigma)) if np.ndim(sigma) == 2 else np.real(sigma)
    with np.errstate(divide="ignore"):
        gamma = (a_gamma + 1.0) / (b_gamma + diag + np.abs(mu) ** 2)
    if gamma_max is not None:
        gamma = np.minimum(gamma, gamma_max)
    return gamma


def _trace_quadratic(Z: np.ndarray, sigma: np.ndarray) -> float:
    """Tr(Z Sigma Z^H)."""
    return float(np.real(np.sum((Z @ sigma) * Z.conj())))


def update_beta(y: np.ndarray, Z: np.ndarray, mu: np.ndarray, sigma: np.ndarray,
                beta_max: float = 1e12) -> float:
    """beta = n / (||y - Z mu||^2 + Tr(Z Sigma Z^H)), clamped at beta_max."""
    denom = float(np.sum(np.abs(y - Z @ mu) ** 2)) + _trace_quadratic(Z, sigma)
    if denom <= 0.0:
        return float(beta_max)
    return float(min(y.size / denom, beta_max))


def log_evidence(y: np.ndarray, Z: np.ndarray, gamma: np.ndarray, beta: float,
                 mu: np.ndarray) -> float:
    """
    log p(y | gamma, beta) with mu the posterior mean at the same hyperparameters.
    """
    n = y.size
    active = np.isfinite(gamma)
    Zs = Z[:, active] / np.sqrt(gamma[active])[None, :]
    _, logdet = np.linalg.slogdet(np.eye(Zs.shape[1]) + beta * (Zs.conj().T @ Zs))
    log_det_c = -n * np.log(beta) + logdet
    quad = beta * float(np.real(np.vdot(y, y - Z @ mu)))
    return float(-n * np.log(np.pi) - log_det_c - quad)


def gamma_prior(gamma: np.ndarray, a_gamma: float, b_gamma: float) -> float:
    finite = gamma[np.isfinite(gamma)]
    return float(np.sum(a_gamma * np.log(finite) - b_gamma * finite))


def surrogate_objective(y: np.ndarray, Z: np.ndarray, mu: np.ndarray, sigma: np.ndarray,
                        beta: float) -> float:
    """-beta (||y - Z mu||^2 + Tr(Z Sigma Z^H)), the grid-dependent part of the EM objective."""
    return -beta * (float(np.sum(np.abs(y - Z @ mu) ** 2)) + _trace_quadratic(Z, sigma))


def complete_data_objective(y: np.ndarray, Z: np.ndarray, mu: np.ndarray, sigma: np.ndarray,
                            beta: float, gamma: np.ndarray) -> float:
    finite = np.isfinite(gamma)
    diag = np.real(np.diag(sigma))
    prior = np.sum(np.log(gamma[finite]) - gamma[finite] * (np.abs(mu[finite]) ** 2 + diag[finite]))
    return float(y.size * np.log(beta) + surrogate_objective(y, Z, mu, sigma, beta) + prior)


def _refinable_bounds(grids: DictionaryGrids) -> Tuple[np.ndarray, np.ndarray]:
    upper = []
    for i in range(grids.num_ris):
        upper += [np.full(len(grids.w_r2b_a[i]) - 1, grids.bs_bound),
                  np.full(len(grids.w_r2b_d[i]) - 1, grids.ris_bound),
                  np.full(len(grids.g_r2b_d[i]) - 1, grids.ris_bound)]
    upper = np.concatenate(upper) if upper else np.zeros(0)
    return -upper, upper


def r2b_gradient(y: np.ndarray, x: np.ndarray, mu: np.ndarray, sigma: np.ndarray, beta: float,
                 grids: DictionaryGrids, h_b0: Sequence[np.ndarray],
                 schedule: RisSchedule) -> np.ndarray:
    """
    d/d nu_2 of surrogate_objective, aligned with grids.r2b_vector().

    With r = y - Z mu and G = r mu^H - Z Sigma, the derivative along any grid
    entry is 2 beta Re sum(dZ * conj(G)); the Kronecker structure of each
    block reduces that sum to small einsums.
    """
    Z = sensing_matrix(x, grids, h_b0, schedule)
    G = np.outer(y - Z @ mu, mu.conj()) - Z @ sigma
    T = schedule.T
    M = grids.M
    parts = []
    offset = 0
    for i in range(grids.num_ris):
        G1, G2, G3 = len(grids.w_r2b_a[i]), len(grids.w_r2b_d[i]), len(grids.g_r2b_d[i])
        size = grids.r2b_size(i)
        Gc = G[:, offset:offset + size].reshape(T, M, G2 * G3, G1).conj()
        offset += size
        c = grids.scale(i)
        hx = np.asarray(h_b0[i])[:, None] * schedule.theta[i] * x[None, :]
        P = grids.b_r2b(i).conj().T @ hx
        A = grids.a_r2b(i)

        S = np.einsum("dt,tmda->ma", P, Gc, optimize=True)
        grad_a = 2.0 * beta * c * np.real(np.sum(grids.a_r2b_derivative(i) * S, axis=0))

        R = np.einsum("ma,tmda->dt", A, Gc, optimize=True)
        dB_w, dB_g = grids.b_r2b_derivatives(i)
        v_w = np.sum((dB_w.conj().T @ hx) * R, axis=1).reshape(G3, G2)
        v_g = np.sum((dB_g.conj().T @ hx) * R, axis=1).reshape(G3, G2)
        grad_w = 2.0 * beta * c * np.real(v_w.sum(axis=0))
        grad_g = 2.0 * beta * c * np.real(v_g.sum(axis=1))
        parts += [grad_a[1:], grad_w[1:], grad_g[1:]]
    return np.concatenate(parts) if parts else np.zeros(0)


def refine_grids_fixed(y: np.ndarray, x: np.ndarray, mu: np.ndarray, sigma: np.ndarray,
                       beta: float, grids: DictionaryGrids, h_b0: Sequence[np.ndarray],
                       schedule: RisSchedule, step_schedule: StepSchedule, j: int,
                       normalize: bool = True, max_backtracks: int = 10) -> DictionaryGrids:
    """
    One ascent step on the refinable BS-RIS grid entries.

    LoS entries stay fixed; the result is clamped to the effective-angle domain and
    a non-finite gradient leaves the grids untouched.
    """
    nu_2 = grids.r2b_vector()
    if nu_2.size == 0:
        return grids
    grad = r2b_gradient(y, x, mu, sigma, beta, grids, h_b0, schedule)
    if not np.all(np.isfinite(grad)):
        logger.warning(f"⚠️ Non-finite grid gradient at iteration {j}, keeping previous grids")
        return grids
    if not np.any(grad):
        return grids
    direction = normalize_direction(grad) if normalize else grad
    lower, upper = _refinable_bounds(grids)
    step = step_schedule.step(j, span=upper - lower)

    def objective(candidate: np.ndarray) -> float:
        Z = sensing_matrix(x, grids.with_r2b_vector(candidate), h_b0, schedule)
        return surrogate_objective(y, Z, mu, sigma, beta)

    accepted, _, moved = backtracking_step(objective, nu_2, direction, step, lower, upper,
                                           maximize=True, max_backtracks=max_backtracks)
    return grids.with_r2b_vector(accepted) if moved else grids


def prune_posterior_mean(mu: np.ndarray, delta_omega: float) -> np.ndarray:
    """Zero every entry with |mu_g| <= delta * max |mu|."""
    if not 0.0 < delta_omega < 1.0:
        raise ValueError(f"delta_omega must lie in (0, 1), got {delta_omega}")
    mu = np.asarray(mu)
    peak = float(np.max(np.abs(mu))) if mu.size else 0.0
    if peak == 0.0:
        return mu.copy()
    return np.where(np.abs(mu) > delta_omega * peak, mu, 0)


def effective_channel_covariance(sigma: np.ndarray, phi: np.ndarray, M: int, T: int) -> np.ndarray:
    """(T x T) matrix of Tr(Phi_t Sigma Phi_s^H), Phi_t the M rows of slot t."""
    cov = phi @ sigma @ phi.conj().T
    return np.einsum("tmsm->ts", cov.reshape(T, M, T, M))


def slot_covariance_traces(sigma: np.ndarray, phi: np.ndarray, M: int, T: int) -> np.ndarray:
    """Diagonal of effective_channel_covariance without forming the full matrix."""
    rows = np.real(np.sum((phi @ sigma) * phi.conj(), axis=1))
    return rows.reshape(T, M).sum(axis=1)


def update_data(Y: np.ndarray, mu: np.ndarray, sigma: np.ndarray, grids: DictionaryGrids,
                h_b0: Sequence[np.ndarray], schedule: RisSchedule, x_p: np.ndarray, xi: float,
                project: bool = True, eps: float = 1e-12) -> np.ndarray:
    """
    Per-slot data update under the channel posterior, then projection on QPSK.

    x_d,t = (mu_t^H y_t - E_t sqrt(1-xi) x_p,t) / (sqrt(xi) E_t), with
    E_t = ||mu_Heff,t||^2 + Tr(Sigma_Heff,t).
    """
    M, T = Y.shape
    phi = sensing_matrix(np.ones(T, dtype=complex), grids, h_b0, schedule)
    mu_h = (phi @ mu).reshape(T, M)
    energy = np.sum(np.abs(mu_h) ** 2, axis=1) + slot_covariance_traces(sigma, phi, M, T)
    small = energy <= eps
    if np.any(small):
        logger.warning(f"⚠️ {int(np.sum(small))} slots with vanishing channel energy, regularizing")
        energy = np.where(small, energy + eps, energy)
    num = np.einsum("tm,mt->t", mu_h.conj(), Y)
    x_d = (num - energy * np.sqrt(1.0 - xi) * np.asarray(x_p)) / (np.sqrt(xi) * energy)
    return qpsk_project(x_d) if project else x_d


def reconstruct_bs_ris(omegas: Sequence[np.ndarray], grids: DictionaryGrids) -> List[np.ndarray]:
    """H_r,i = sqrt(M N_i / L_i) A_i Omega_i B_i^H."""
    return [grids.scale(i) * grids.a_r2b(i) @ omegas[i] @ grids.b_r2b(i).conj().T
            for i in range(grids.num_ris)]


def estimated_paths(omegas: Sequence[np.ndarray], grids: DictionaryGrids,
                    L: Sequence[int]) -> List[np.ndarray]:
    """The L_i strongest coefficients of each Omega_i as rows [u_A, u_D, v_D]."""
    paths = []
    for i, omega in enumerate(omegas):
        G2 = len(grids.w_r2b_d[i])
        order = np.argsort(-np.abs(omega), axis=None, kind="stable")[:L[i]]
        rows = []
        for flat in order:
            a, col = np.unravel_index(flat, omega.shape)
            g, d = divmod(int(col), G2)
            rows.append([grids.w_r2b_a[i][a], grids.w_r2b_d[i][d], grids.g_r2b_d[i][g]])
        paths.append(np.array(rows, dtype=float).reshape(-1, 3))
    return paths


def _accept_data(Y: np.ndarray, y: np.ndarray, x_d: np.ndarray, mu: np.ndarray, mu_op: np.ndarray,
                 sigma: np.ndarray, beta: float, grids: DictionaryGrids, problem: FixedSiteProblem
                 ) -> Tuple[np.ndarray, str]:
    """
    Data update that never lowers the EM surrogate.

    The candidate from the pruned mean is tried first, then the one from the
    full posterior mean; the latter maximizes the surrogate slot by slot over
    the QPSK alphabet.
    """
    h_b0, schedule, x_p, xi = problem.h_b0, problem.schedule, np.asarray(problem.pilot), problem.xi

    def score(symbols: np.ndarray) -> float:
        Z = sensing_matrix(transmitted(symbols, x_p, xi), grids, h_b0, schedule)
        return surrogate_objective(y, Z, mu, sigma, beta)

    current = score(x_d)
    for source, mean in (("pruned", mu_op), ("posterior", mu)):
        candidate = update_data(Y, mean, sigma, grids, h_b0, schedule, x_p, xi)
        if score(candidate) >= current:
            return candidate, source
    return x_d, "kept"


def run_algorithm1(problem: FixedSiteProblem, config: Optional[Algorithm1Config] = None,
                   known_symbols: Optional[np.ndarray] = None,
                   trace_writer: Optional[Any] = None) -> FixedSiteEstimate:
    """
    Joint BS-RIS angle sensing and data decoding for the fixed site.

    Each iteration evaluates the posterior at the current grids and data, records
    the log-evidence, then updates gamma, beta, the grids and the data. Every
    update is an ascent step on the EM surrogate, so the recorded evidence does
    not decrease while the grids are frozen.

    Args:
        problem: received block, pilots and side information
        config: solver settings
        known_symbols: true data symbols; skips the data updates when given
        trace_writer: object with a write(record) method receiving one dict per iteration

    Returns:
        FixedSiteEstimate: pruned coefficients, refined grids, data and trace
    """
    cfg = config or Algorithm1Config()
    scale = signal_scale(problem.y)
    y = problem.y / scale
    Y = problem.Y / scale
    n = y.size
    grids = problem.grids
    x_p = np.asarray(problem.pilot)
    xi = problem.xi
    step_schedule = StepSchedule(c=cfg.c, d=cfg.d)
    update_symbols = cfg.update_symbols and known_symbols is None

    if known_symbols is not None:
        x_d = np.asarray(known_symbols, dtype=complex)
    else:
        omega0 = tr_ls_init(y, x_p, xi, cfg.rho, grids, problem.h_b0, problem.schedule,
                            cfg.max_condition, cfg.tr_ridge)
        x_d = lmmse_data_init(Y, omega0, grids, problem.h_b0, problem.schedule,
                              x_p, xi, problem.N_0 / scale ** 2, problem.P_0)

    size = sum(grids.r2b_size(i) for i in range(grids.num_ris))
    gamma = np.full(size, cfg.gamma0, dtype=float)
    beta = cfg.beta0
    trace: List[Dict[str, Any]] = []
    last: Optional[SblState] = None
    previous = None
    converged = False
    for j in range(1, cfg.j_max + 1):
        x = transmitted(x_d, x_p, xi)
        Z = sensing_matrix(x, grids, problem.h_b0, problem.schedule)
        try:
            mu, sigma = e_step(y, Z, gamma, beta, j)
        except NumericalError as e:
            logger.warning(f"⚠️ Algorithm 1 stopped: {e}")
            break
        evidence = log_evidence(y, Z, gamma, beta, mu) + gamma_prior(gamma, cfg.a_gamma, cfg.b_gamma)
        mu_op = prune_posterior_mean(mu, cfg.delta_omega) if cfg.prune else mu
        operational = complete_data_objective(y, Z, mu_op, sigma, beta, gamma) / n
        if not (np.isfinite(evidence) and np.isfinite(operational)):
            logger.warning(f"⚠️ Algorithm 1 objective became non-finite at iteration {j}")
            break
        record = {"iteration": j, "log_evidence": evidence, "objective": evidence / n,
                  "operational_objective": operational, "beta": beta,
                  "support": int(np.count_nonzero(mu_op)), "data_update": "none"}
        last = SblState(mu=mu_op, sigma=sigma, gamma=gamma, beta=beta, grids=grids,
                        x_d=x_d.copy(), objective=operational, iteration=j)
        converged = previous is not None and (operational - previous) ** 2 < cfg.delta_chi
        previous = operational

        if not converged:
            gamma = update_gamma(mu, sigma, cfg.a_gamma, cfg.b_gamma, cfg.gamma_max)
            beta = update_beta(y, Z, mu, sigma, cfg.beta_max)
            if cfg.refine_grids:
                grids = refine_grids_fixed(y, x, mu, sigma, beta, grids, problem.h_b0,
                                           problem.schedule, step_schedule, j,
                                           cfg.normalize_gradient, cfg.max_backtracks)
            if update_symbols:
                x_d, record["data_update"] = _accept_data(Y, y, x_d, mu, mu_op, sigma, beta,
                                                          grids, problem)
        trace.append(record)
        if trace_writer is not None:
            trace_writer.write(record)
        logger.debug(f"Algorithm 1 iteration {j}: evidence={evidence:.6g}, beta={beta:.3g}, "
                     f"support={record['support']}, data={record['data_update']}")
        if converged:
            break

    if last is None:
        return FixedSiteEstimate(omega=np.zeros(size, dtype=complex), grids=problem.grids,
                                 x_d=x_d, gamma=gamma, beta=beta, iterations=0,
                                 converged=False, trace=trace)
    return FixedSiteEstimate(omega=last.mu * scale, grids=last.grids, x_d=last.x_d,
                             gamma=last.gamma / scale ** 2, beta=last.beta / scale ** 2,
                             iterations=last.iteration, converged=converged, trace=trace)


def sparse_bayesian_learning(y: np.ndarray, A: np.ndarray, a: float = 1e-4, b: float = 1e-4,
                             beta0: float = 1.0, max_iterations: int = 200, tol: float = 1e-6,
                             gamma_max: float = 1e12, beta_max: float = 1e12) -> SblResult:
    """Dense EM-SBL on a fixed operator, the reference for the low-complexity solvers."""
    scale = signal_scale(y)
    y = np.asarray(y, dtype=complex) / scale
    A = np.asarray(A, dtype=complex)
    gamma = np.ones(A.shape[1])
    beta = beta0
    mu = np.zeros(A.shape[1], dtype=complex)
    sigma = np.zeros((A.shape[1], A.shape[1]), dtype=complex)
    for it in range(1, max_iterations + 1):
        mu_new, sigma = e_step(y, A, gamma, beta, it)
        gamma = update_gamma(mu_new, sigma, a, b, gamma_max)
        beta = update_beta(y, A, mu_new, sigma, beta_max)
        norm = float(np.vdot(mu_new, mu_new).real)
        change = float(np.vdot(mu_new - mu, mu_new - mu).real)
        mu = mu_new
        if norm == 0.0 or change / norm < tol:
            return SblResult(mu * scale, sigma * scale ** 2, gamma / scale ** 2,
                             beta / scale ** 2, it, True)
    return SblResult(mu * scale, sigma * scale ** 2, gamma / scale ** 2, beta / scale ** 2,
                     max_iterations, False)


class StructuredSblEstimator(BaseEstimator):
    """Algorithm-1 wrapper used by the method registry."""

    def __init__(self, config: Optional[Algorithm1Config] = None, name: str = "algorithm1",
                 genie_symbols: bool = False):
        self.config = config or Algorithm1Config()
        self.name = name
        self.genie_symbols = genie_symbols
        self.logger = logging.getLogger(__name__)

    def estimate(self, problem: FixedSiteProblem, known_symbols: Optional[np.ndarray] = None,
                 trace_writer: Optional[Any] = None) -> FixedSiteEstimate:
        if self.genie_symbols and known_symbols is None:
            raise ValueError(f"{self.name} needs the transmitted data symbols")
        result = run_algorithm1(problem, self.config,
                                known_symbols if self.genie_symbols else None, trace_writer)
        status = "✅" if result.converged else "⚠️"
        self.logger.debug(f"{status} {self.name} finished after {result.iterations} iterations")
        return result

    def get_method_name(self) -> str:
        return self.name

    def get_method_version(self) -> str:
        return "1.0"

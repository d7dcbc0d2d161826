"""
Multi-UE simultaneous communication and localization.

Pipeline: pilot LS initialization, SCMA decoding, UAMP-SBL on the full
dictionary, one off-grid step on the UE-side grids, then a loop over a
reduced model that keeps one coefficient and one angle pair per (UE, RIS),
and finally the angle-to-position mapping.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from channel_model import DegenerateGeometryError, DictionaryGrids
from models.base_estimator import (
    BaseEstimator,
    StepSchedule,
    backtracking_step,
    normalize_direction,
)
from models.uamp_sbl import UampConfig, uamp_sbl
from processors.localization_processor import LocalizationError, LocalizationResult, localize_ues
from processors.scma_processor import DecodeResult, ScmaCodebook, encode_indices, mpa_decode
from signal_synthesis import (
    DimensionMismatchError,
    ReceivedBlock,
    RisSchedule,
    SensingOperator,
    build_multiue_operator,
    multiue_column_map,
    ris_response_tensor,
    stack_blocks,
    ue_cascades,
)
from utils.array_utils import OperationCounter, ura_derivatives, ura_response
from utils.modulation_utils import index_to_bits

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MultiUeProblem:
    """Received bands plus the side information Algorithm 3 relies on."""

    blocks: Tuple[ReceivedBlock, ...]
    pilot_symbols: np.ndarray          # (K, T, N_s) SCMA-encoded pilots
    xi: np.ndarray                     # (K,)
    codebook: ScmaCodebook
    grids: DictionaryGrids
    H_r: Tuple[np.ndarray, ...]        # BS-RIS channels, true or estimated
    schedule: RisSchedule
    N_0: float
    ris_positions: Tuple[np.ndarray, ...] = ()
    spacing: float = 0.5
    wavelength: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "xi", np.broadcast_to(
            np.asarray(self.xi, dtype=float), (self.pilot_symbols.shape[0],)).copy())

    @property
    def y(self) -> np.ndarray:
        return stack_blocks(self.blocks)

    @property
    def K(self) -> int:
        return self.pilot_symbols.shape[0]

    @property
    def T(self) -> int:
        return self.pilot_symbols.shape[1]

    @property
    def N_s(self) -> int:
        return self.pilot_symbols.shape[2]

    @property
    def M(self) -> int:
        return self.blocks[0].Y.shape[0]

    @property
    def num_ris(self) -> int:
        return len(self.H_r)

    def superimposed(self, data_symbols: np.ndarray) -> np.ndarray:
        xi = self.xi[:, None, None]
        return np.sqrt(xi) * data_symbols + np.sqrt(1.0 - xi) * self.pilot_symbols


@dataclass
class Algorithm3Config:
    delta_eta: float = 1e-3
    j_max: int = 20
    c: float = 50.0
    d: float = 0.5
    normalize_gradient: bool = True
    max_backtracks: int = 10
    mpa_iterations: int = 10
    reduced_solver: str = "auto"
    lstsq_max_columns: int = 64
    pilot_rcond: float = 1e-10
    uamp: UampConfig = field(default_factory=UampConfig)


@dataclass
class ReducedModel:
    psi: np.ndarray                       # (K, N_R)
    eta: np.ndarray                       # (K, N_R, 2) effective angles [u, v]
    support_map: List[Tuple[int, int, int]]
    flagged: List[Tuple[int, int]] = field(default_factory=list)


@dataclass
class MultiUeEstimate:
    X_d: np.ndarray
    decisions: np.ndarray
    psi: np.ndarray
    eta: np.ndarray
    h_ue: Tuple[np.ndarray, ...]
    localization: Optional[LocalizationResult]
    iterations: int
    converged: bool
    grids: DictionaryGrids
    psi_full: Optional[np.ndarray] = None
    trace: List[Dict[str, Any]] = field(default_factory=list)
    counter: Optional[OperationCounter] = None

    def bits(self, codebook: ScmaCodebook) -> np.ndarray:
        return np.stack([index_to_bits(row, codebook.bits_per_symbol) for row in self.decisions])


def pilot_operator(problem: MultiUeProblem, grids: Optional[DictionaryGrids] = None) -> SensingOperator:
    """D built from sqrt(1 - xi) X_p only."""
    X = np.sqrt(1.0 - problem.xi)[:, None, None] * problem.pilot_symbols
    return build_multiue_operator(X, grids or problem.grids, problem.H_r, problem.schedule)


def pilot_ls_init(y: np.ndarray, operator: SensingOperator, rcond: float = 1e-10) -> np.ndarray:
    """psi^(0) = pinv(D_p) y; warns when D_p is rank deficient."""
    D = operator.matrix
    psi, _, rank, _ = linalg.lstsq(D, y, cond=rcond)
    if rank < D.shape[1]:
        logger.warning(f"⚠️ Pilot operator is rank deficient ({rank} < {D.shape[1]}), using the pseudo-inverse")
    return psi


def channels_from_psi(psi: np.ndarray, grids: DictionaryGrids, K: int) -> Tuple[np.ndarray, ...]:
    """h_b,ik = sqrt(N_i) B_U2R,i psi_{k,i}; one (K x N_i) array per RIS."""
    blocks = _split_psi(psi, grids, K)
    out = []
    for i in range(grids.num_ris):
        coeffs = np.array([blocks[k][i] for k in range(K)])          # K x cells
        out.append(np.sqrt(grids.N(i)) * coeffs @ grids.b_u2r(i).T)
    return tuple(out)


def channels_from_reduced(model: ReducedModel, N_y: Sequence[int], N_z: Sequence[int]) -> Tuple[np.ndarray, ...]:
    K, n_r = model.psi.shape
    out = []
    for i in range(n_r):
        N = N_y[i] * N_z[i]
        out.append(np.array([np.sqrt(N) * model.psi[k, i]
                             * ura_response(model.eta[k, i, 0], model.eta[k, i, 1], N_y[i], N_z[i])
                             for k in range(K)]).reshape(K, N))
    return tuple(out)


def _split_psi(psi: np.ndarray, grids: DictionaryGrids, K: int) -> List[List[np.ndarray]]:
    """(UE, RIS) coefficient blocks of psi, located through the operator column map."""
    psi = np.asarray(psi)
    column_map = np.array(multiue_column_map(K, [grids.u2r_size(i) for i in range(grids.num_ris)]))
    if psi.shape != (column_map.shape[0],):
        raise DimensionMismatchError(f"psi has shape {psi.shape}, the operator {column_map.shape[0]} columns")
    ue, ris = column_map[:, 0], column_map[:, 1]
    return [[psi[(ue == k) & (ris == i)] for i in range(grids.num_ris)] for k in range(K)]


def decode_symbols(problem: MultiUeProblem, cascades: np.ndarray,
                   max_iterations: int = 10) -> Tuple[DecodeResult, np.ndarray]:
    """
    SCMA-decode the data part given cascaded-channel estimates (K, M, T).

    Returns:
        Tuple[DecodeResult, np.ndarray]: decoder output and the decoded codewords (K, T, N_s)
    """
    pilot_part = np.sqrt(1.0 - problem.xi)[:, None, None, None] * cascades[:, :, :, None] \
        * problem.pilot_symbols[:, None, :, :]                            # K x M x T x N_s
    received = np.stack([b.Y for b in problem.blocks], axis=-1)         # M x T x N_s
    data_part = received - pilot_part.sum(axis=0)
    y = data_part.transpose(1, 0, 2)                                    # T x M x N_s
    h = (np.sqrt(problem.xi)[:, None, None] * cascades).transpose(0, 2, 1)  # K x T x M
    result = mpa_decode(y, h, problem.N_0, problem.codebook, max_iterations=max_iterations)
    return result, encode_indices(result.decisions, problem.codebook)


def lse_objective(y: np.ndarray, D: np.ndarray, psi: np.ndarray) -> float:
    return float(np.sum(np.abs(y - D @ psi) ** 2))


def u2r_gradient(y: np.ndarray, psi: np.ndarray, X: np.ndarray, grids: DictionaryGrids,
                 H_r: Sequence[np.ndarray], schedule: RisSchedule) -> np.ndarray:
    """
    F_2 = d ||y - D(eta) psi||^2 / d eta = 2 Re((D psi - y)^H dD psi), aligned with
    grids.u2r_vector().
    """
    K, T, N_s = X.shape
    M = H_r[0].shape[0]
    D = build_multiue_operator(X, grids, H_r, schedule).matrix
    e = (D @ psi - y).reshape(N_s, T, M)
    E = np.einsum("ntm,ktn->ktm", e.conj(), X)
    blocks = _split_psi(psi, grids, K)
    grad_w, grad_g = [], []
    for i in range(grids.num_ris):
        G4, G5 = len(grids.w_u2r[i]), len(grids.g_u2r[i])
        dB_w, dB_g = grids.b_u2r_derivatives(i)
        psi_i = np.array([blocks[k][i] for k in range(K)])               # K x cells
        for dB, out, axis in ((dB_w, grad_w, 0), (dB_g, grad_g, 1)):
            dW = ris_response_tensor(H_r[i], schedule.theta[i], dB)       # T x M x cells
            V = np.einsum("tmc,ktm->kc", dW, E, optimize=True)
            U = np.sum(psi_i * V, axis=0).reshape(G5, G4)
            out.append(2.0 * np.real(U.sum(axis=axis)))
    return np.concatenate(grad_w + grad_g)


def refine_grids_multi(y: np.ndarray, psi: np.ndarray, X: np.ndarray, grids: DictionaryGrids,
                       H_r: Sequence[np.ndarray], schedule: RisSchedule,
                       step_schedule: StepSchedule, j: int, normalize: bool = True,
                       max_backtracks: int = 10) -> DictionaryGrids:
    """One descent step of the UE-side grids on the LSE objective."""
    eta = grids.u2r_vector()
    grad = u2r_gradient(y, psi, X, grids, H_r, schedule)
    if not np.all(np.isfinite(grad)):
        logger.warning(f"⚠️ Non-finite UE grid gradient at iteration {j}, skipping the step")
        return grids
    if not np.any(grad):
        return grids
    direction = -(normalize_direction(grad) if normalize else grad)
    bound = grids.ris_bound
    step = step_schedule.step(j, span=np.full(eta.size, 2.0 * bound))

    def objective(candidate: np.ndarray) -> float:
        D = build_multiue_operator(X, grids.with_u2r_vector(candidate), H_r, schedule).matrix
        return lse_objective(y, D, psi)

    accepted, _, moved = backtracking_step(objective, eta, direction, step, -bound, bound,
                                           maximize=False, max_backtracks=max_backtracks)
    return grids.with_u2r_vector(accepted) if moved else grids


def reduce_dimension(psi: np.ndarray, grids: DictionaryGrids, K: int) -> ReducedModel:
    """
    Keep the largest coefficient of every (UE, RIS) block together with its grid angles.

    All-zero blocks keep cell 0 and are flagged.
    """
    blocks = _split_psi(psi, grids, K)
    n_r = grids.num_ris
    psi_r = np.zeros((K, n_r), dtype=complex)
    eta = np.zeros((K, n_r, 2))
    support, flagged = [], []
    for k in range(K):
        for i in range(n_r):
            block = blocks[k][i]
            if not np.any(block):
                cell = 0
                flagged.append((k, i))
            else:
                cell = int(np.argmax(np.abs(block)))
            g, w = divmod(cell, len(grids.w_u2r[i]))
            psi_r[k, i] = block[cell]
            eta[k, i] = (grids.w_u2r[i][w], grids.g_u2r[i][g])
            support.append((k, i, cell))
    if flagged:
        logger.warning(f"⚠️ All-zero coefficient blocks for (UE, RIS) pairs {flagged}")
    return ReducedModel(psi=psi_r, eta=eta, support_map=support, flagged=flagged)


def _reduced_responses(eta: np.ndarray, H_r: Sequence[np.ndarray], schedule: RisSchedule,
                       N_y: Sequence[int], N_z: Sequence[int], derivative: Optional[int],
                       counter: Optional[OperationCounter], category: str) -> np.ndarray:
    """W[k, i, t, m] for each retained angle pair, or its u / v derivative."""
    K, n_r = eta.shape[:2]
    T = schedule.T
    M = H_r[0].shape[0]
    W = np.zeros((K, n_r, T, M), dtype=complex)
    for k in range(K):
        for i in range(n_r):
            u, v = eta[k, i]
            if derivative is None:
                b = ura_response(u, v, N_y[i], N_z[i])
            else:
                b = ura_derivatives(u, v, N_y[i], N_z[i])[derivative]
            W[k, i] = ris_response_tensor(H_r[i], schedule.theta[i], b[:, None], counter, category)[:, :, 0]
    return W


def build_reduced_operator(X: np.ndarray, eta: np.ndarray, H_r: Sequence[np.ndarray],
                           schedule: RisSchedule, N_y: Sequence[int], N_z: Sequence[int],
                           counter: Optional[OperationCounter] = None,
                           category: str = "operator") -> np.ndarray:
    """D_redu with one column per (UE k, RIS i), rows (band, slot, antenna)."""
    K, T, N_s = X.shape
    W = _reduced_responses(eta, H_r, schedule, N_y, N_z, None, counter, category)
    n_r, M = W.shape[1], W.shape[3]
    if counter is not None:
        counter.add(category, N_s * T * M * K * n_r)
    D = np.einsum("ktn,kitm->ntmki", X, W, optimize=True)
    return D.reshape(N_s * T * M, K * n_r)


def reduced_gradient(y: np.ndarray, model: ReducedModel, X: np.ndarray, H_r: Sequence[np.ndarray],
                     schedule: RisSchedule, N_y: Sequence[int], N_z: Sequence[int],
                     counter: Optional[OperationCounter] = None,
                     D: Optional[np.ndarray] = None) -> np.ndarray:
    """Gradient of ||y - D_redu(eta) psi||^2 with respect to every retained (u, v), shape (K, N_R, 2)."""
    K, T, N_s = X.shape
    n_r = model.psi.shape[1]
    M = H_r[0].shape[0]
    if D is None:
        D = build_reduced_operator(X, model.eta, H_r, schedule, N_y, N_z, counter, "gradient")
    psi = model.psi.reshape(-1)
    if counter is not None:
        counter.add("gradient", D.size + N_s * T * M * K)
    e = (D @ psi - y).reshape(N_s, T, M)
    E = np.einsum("ntm,ktn->ktm", e.conj(), X)
    grad = np.zeros((K, n_r, 2))
    for axis in (0, 1):
        dW = _reduced_responses(model.eta, H_r, schedule, N_y, N_z, axis, counter, "gradient")
        if counter is not None:
            counter.add("gradient", K * n_r * T * M)
        grad[:, :, axis] = 2.0 * np.real(model.psi * np.einsum("kitm,ktm->ki", dW, E))
    return grad


def solve_reduced(D: np.ndarray, y: np.ndarray, method: str = "auto", max_columns: int = 64,
                  uamp_config: Optional[UampConfig] = None,
                  counter: Optional[OperationCounter] = None) -> np.ndarray:
    """min ||y - D psi||^2 over the reduced coefficients."""
    if method not in ("auto", "lstsq", "uamp"):
        raise ValueError(f"Unknown reduced solver {method!r}")
    use_lstsq = method == "lstsq" or (method == "auto" and D.shape[1] <= max_columns)
    if not use_lstsq:
        result = uamp_sbl(D, y, uamp_config, counter)
        if result.converged and np.all(np.isfinite(result.psi)):
            return result.psi
        logger.warning("⚠️ Reduced UAMP-SBL did not converge, falling back to least squares")
    if counter is not None:
        counter.add("solver", D.shape[0] * D.shape[1] ** 2)
        counter.tick("solver")
    return linalg.lstsq(D, y)[0]


def refine_reduced(problem: MultiUeProblem, model: ReducedModel, X_d: np.ndarray,
                   j: int, config: Algorithm3Config, known_indices: Optional[np.ndarray] = None,
                   counter: Optional[OperationCounter] = None
                   ) -> Tuple[ReducedModel, np.ndarray, np.ndarray]:
    """
    One reduced iteration: decode data, re-solve the reduced coefficients, move the angles.

    Returns:
        Tuple[ReducedModel, np.ndarray, np.ndarray]: updated model, codewords (K, T, N_s), decisions (K, T)
    """
    grids = problem.grids
    N_y, N_z = grids.N_y, grids.N_z
    y = problem.y
    if known_indices is None:
        h_ue = channels_from_reduced(model, N_y, N_z)
        decoded, X_d = decode_symbols(problem, ue_cascades(problem.H_r, h_ue, problem.schedule),
                                      config.mpa_iterations)
        decisions = decoded.decisions
    else:
        decisions = np.asarray(known_indices)
    X = problem.superimposed(X_d)

    D = build_reduced_operator(X, model.eta, problem.H_r, problem.schedule, N_y, N_z, counter)
    psi = solve_reduced(D, y, config.reduced_solver, config.lstsq_max_columns, config.uamp, counter)
    model = ReducedModel(psi=psi.reshape(model.psi.shape), eta=model.eta,
                         support_map=model.support_map, flagged=model.flagged)

    grad = reduced_gradient(y, model, X, problem.H_r, problem.schedule, N_y, N_z, counter, D)
    if counter is not None:
        counter.tick("operator")
        counter.tick("gradient")
    if not np.all(np.isfinite(grad)) or not np.any(grad):
        return model, X_d, decisions
    direction = -(normalize_direction(grad) if config.normalize_gradient else grad)
    bound = grids.ris_bound
    step = StepSchedule(c=config.c, d=config.d).step(j, span=2.0 * bound)
    psi_flat = model.psi.reshape(-1)
    shape = model.eta.shape

    def objective(candidate: np.ndarray) -> float:
        D_c = build_reduced_operator(X, candidate.reshape(shape), problem.H_r, problem.schedule,
                                     N_y, N_z, counter, "line_search")
        return lse_objective(y, D_c, psi_flat)

    eta, _, _ = backtracking_step(objective, model.eta.reshape(-1), direction.reshape(-1), step,
                                  -bound, bound, maximize=False,
                                  max_backtracks=config.max_backtracks,
                                  current=lse_objective(y, D, psi_flat))
    model = ReducedModel(psi=model.psi, eta=eta.reshape(shape), support_map=model.support_map,
                         flagged=model.flagged)
    return model, X_d, decisions


def run_algorithm3(problem: MultiUeProblem, config: Optional[Algorithm3Config] = None,
                   known_indices: Optional[np.ndarray] = None,
                   reference_indices: Optional[np.ndarray] = None,
                   counter: Optional[OperationCounter] = None,
                   trace_writer: Optional[Any] = None,
                   localize: bool = True) -> MultiUeEstimate:
    """
    Multi-UE data detection, UE-side angle estimation and localization.

    Args:
        problem: received bands and side information
        config: solver settings
        known_indices: true codeword indices (K, T); skips every decoding step
        reference_indices: true indices used only for the per-iteration BER trace
        counter: multiply counter for the reduced loop
        trace_writer: object with write(record), one record per reduced iteration
        localize: map the final angles to positions

    Returns:
        MultiUeEstimate: decoded data, reduced estimates, positions and trace
    """
    cfg = config or Algorithm3Config()
    grids = problem.grids
    K = problem.K
    y = problem.y
    cb = problem.codebook

    psi0 = pilot_ls_init(y, pilot_operator(problem), cfg.pilot_rcond)
    if known_indices is None:
        h0 = channels_from_psi(psi0, grids, K)
        decoded, X_d = decode_symbols(problem, ue_cascades(problem.H_r, h0, problem.schedule),
                                      cfg.mpa_iterations)
        decisions = decoded.decisions
    else:
        decisions = np.asarray(known_indices)
        X_d = encode_indices(decisions, cb)

    X = problem.superimposed(X_d)
    D = build_multiue_operator(X, grids, problem.H_r, problem.schedule)
    psi1 = uamp_sbl(D.matrix, y, cfg.uamp).psi
    grids = refine_grids_multi(y, psi1, X, grids, problem.H_r, problem.schedule,
                               StepSchedule(c=cfg.c, d=cfg.d), 1, cfg.normalize_gradient,
                               cfg.max_backtracks)
    model = reduce_dimension(psi1, grids, K)

    trace: List[Dict[str, Any]] = []
    converged = False
    j = 0
    reduced_problem = dataclasses.replace(problem, grids=grids)
    for j in range(1, cfg.j_max + 1):
        previous = model.eta.copy()
        previous_decisions = decisions
        model, X_d, decisions = refine_reduced(reduced_problem, model, X_d, j, cfg,
                                               known_indices, counter)
        norm = float(np.sum(model.eta ** 2))
        change = float(np.sum((model.eta - previous) ** 2)) / norm if norm > 0 else 0.0
        changed = int(np.count_nonzero(decisions != previous_decisions))
        record: Dict[str, Any] = {"iteration": j, "eta_change": change, "decisions_changed": changed,
                                  "support": [list(s) for s in model.support_map]}
        if reference_indices is not None:
            record["ser"] = float(np.mean(decisions != np.asarray(reference_indices)))
        trace.append(record)
        if trace_writer is not None:
            trace_writer.write(record)
        logger.debug(f"Algorithm 3 iteration {j}: eta change {change:.3e}, {changed} decisions changed")
        # angles and decisions must both have settled
        if change < cfg.delta_eta and changed == 0:
            converged = True
            break

    localization = None
    if localize and problem.ris_positions:
        try:
            localization = localize_ues(model.eta, problem.ris_positions, problem.spacing,
                                        problem.wavelength)
        except (LocalizationError, DegenerateGeometryError) as e:
            logger.warning(f"⚠️ Localization failed: {e}")
    return MultiUeEstimate(
        X_d=X_d, decisions=decisions, psi=model.psi, eta=model.eta,
        h_ue=channels_from_reduced(model, grids.N_y, grids.N_z), localization=localization,
        iterations=j, converged=converged, grids=grids, psi_full=psi1, trace=trace,
        counter=counter)


def localize_from_pilots(problem: MultiUeProblem,
                         rcond: float = 1e-10) -> Tuple[ReducedModel, Optional[LocalizationResult]]:
    """Localization from the pilot LS coefficients alone."""
    psi0 = pilot_ls_init(problem.y, pilot_operator(problem), rcond)
    model = reduce_dimension(psi0, problem.grids, problem.K)
    try:
        return model, localize_ues(model.eta, problem.ris_positions, problem.spacing,
                                   problem.wavelength)
    except (LocalizationError, DegenerateGeometryError) as e:
        logger.warning(f"⚠️ Pilot-only localization failed: {e}")
        return model, None


class MultiUeEstimator(BaseEstimator):
    """Algorithm-3 wrapper used by the method registry."""

    def __init__(self, config: Optional[Algorithm3Config] = None, name: str = "algorithm3",
                 genie_codewords: bool = False):
        self.config = config or Algorithm3Config()
        self.name = name
        self.genie_codewords = genie_codewords
        self.logger = logging.getLogger(__name__)

    def estimate(self, problem: MultiUeProblem, true_indices: Optional[np.ndarray] = None,
                 counter: Optional[OperationCounter] = None,
                 trace_writer: Optional[Any] = None) -> MultiUeEstimate:
        if self.genie_codewords and true_indices is None:
            raise ValueError(f"{self.name} needs the transmitted codeword indices")
        return run_algorithm3(problem, self.config,
                              known_indices=true_indices if self.genie_codewords else None,
                              reference_indices=true_indices, counter=counter,
                              trace_writer=trace_writer)

    def get_method_name(self) -> str:
        return self.name

    def get_method_version(self) -> str:
        return "1.0"

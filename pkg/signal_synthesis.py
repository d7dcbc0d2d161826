"""
Superimposed frames, RIS phase schedules, received blocks and the vectorized
sensing operators consumed by the estimators.

Vectorization is column-major: vec(Y) stacks the M antennas of slot 0, then
slot 1, and so on (row index t*M + m). Multi-UE measurements stack bands on
top of that (row index n_s*T*M + t*M + m).
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import block_diag

from channel_model import ChannelRealization, DictionaryGrids, SeedLike
from processors.scma_processor import ScmaCodebook, encode_indices
from utils.array_utils import OperationCounter, column_khatri_rao
from utils.config_utils import PILOT_DESIGNS
from utils.modulation_utils import qpsk_modulate, random_bits

logger = logging.getLogger(__name__)


class SignalSynthesisError(Exception):
    """Base exception for signal synthesis errors"""
    pass


class SynthesisConfigurationError(SignalSynthesisError):
    """Invalid power split or frame settings"""
    pass


class DimensionMismatchError(SignalSynthesisError):
    """Inputs disagree on array dimensions"""
    pass


def superimpose(data, pilot, xi) -> np.ndarray:
    """
    Superimpose data and pilots with power split xi.

    Args:
        data: data symbols
        pilot: pilot symbols, same shape as data
        xi: data power share in (0, 1), scalar or broadcastable array

    Returns:
        np.ndarray: sqrt(xi) * data + sqrt(1 - xi) * pilot

    Raises:
        SynthesisConfigurationError: xi outside (0, 1)
        DimensionMismatchError: shapes differ
    """
    data = np.asarray(data)
    pilot = np.asarray(pilot)
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0.0) or np.any(xi >= 1.0):
        raise SynthesisConfigurationError(f"xi must lie in (0, 1), got {xi}")
    if data.shape != pilot.shape:
        raise DimensionMismatchError(f"data {data.shape} and pilot {pilot.shape} differ")
    return np.sqrt(xi) * data + np.sqrt(1.0 - xi) * pilot


@dataclass(frozen=True, eq=False)
class SuperimposedFrame:
    """
    Symbols of one coherence block, indexed (transmitter, slot, band).

    The fixed site is a single transmitter on a single band.
    """

    data_symbols: np.ndarray
    pilot_symbols: np.ndarray
    xi: np.ndarray
    power_budget: float = 1.0
    data_bits: Optional[np.ndarray] = None
    data_indices: Optional[np.ndarray] = None
    pilot_indices: Optional[np.ndarray] = None

    def __post_init__(self):
        data = np.asarray(self.data_symbols, dtype=complex)
        pilot = np.asarray(self.pilot_symbols, dtype=complex)
        if data.ndim != 3 or data.shape != pilot.shape:
            raise DimensionMismatchError(
                f"Frame arrays must share a (tx, T, N_s) shape, got {data.shape} / {pilot.shape}")
        xi = np.broadcast_to(np.asarray(self.xi, dtype=float), (data.shape[0],)).copy()
        object.__setattr__(self, "data_symbols", data)
        object.__setattr__(self, "pilot_symbols", pilot)
        object.__setattr__(self, "xi", xi)

    @property
    def num_transmitters(self) -> int:
        return self.data_symbols.shape[0]

    @property
    def T(self) -> int:
        return self.data_symbols.shape[1]

    @property
    def N_s(self) -> int:
        return self.data_symbols.shape[2]

    @property
    def transmitted(self) -> np.ndarray:
        return superimpose(self.data_symbols, self.pilot_symbols, self.xi[:, None, None])

    @property
    def pilot_component(self) -> np.ndarray:
        return np.sqrt(1.0 - self.xi)[:, None, None] * self.pilot_symbols

    @property
    def data_component(self) -> np.ndarray:
        return np.sqrt(self.xi)[:, None, None] * self.data_symbols


def qpsk_site_frame(T: int, xi: float, seed: SeedLike = None) -> SuperimposedFrame:
    """Random QPSK data and QPSK pilots for the fixed site."""
    rng = np.random.default_rng(seed)
    bits = random_bits(2 * T, rng)
    pilots = qpsk_modulate(random_bits(2 * T, rng))
    return SuperimposedFrame(
        data_symbols=qpsk_modulate(bits).reshape(1, T, 1),
        pilot_symbols=pilots.reshape(1, T, 1),
        xi=xi, data_bits=bits)


def orthogonal_ue_pilots(codebook: ScmaCodebook, T: int) -> np.ndarray:
    """
    Codeword 0 of every UE rotated by a per-UE DFT tone over the block.

    On every band the (K x T) pilot matrix has orthogonal rows, so the
    per-band Gram X_p X_p^H is diagonal.

    Raises:
        SynthesisConfigurationError: fewer slots than UEs
    """
    if T < codebook.K:
        raise SynthesisConfigurationError(
            f"Orthogonal pilots need T >= K, got T={T} for {codebook.K} UEs")
    exponents = np.outer(np.arange(codebook.K), np.arange(T)) % T
    tones = np.exp(2j * np.pi * exponents / T)                  # K x T
    base = codebook.codewords[:, :, 0]                          # K x N_s
    return tones[:, :, None] * base[:, None, :]


def scma_ue_frame(codebook: ScmaCodebook, T: int, xi, seed: SeedLike = None,
                  pilot_design: str = "orthogonal") -> SuperimposedFrame:
    """
    Random SCMA data plus per-UE pilots on the same bands as the data.

    Args:
        pilot_design: "orthogonal" rotates one codeword per UE by a DFT tone,
            "random" sends pseudo-random codewords

    Raises:
        SynthesisConfigurationError: unknown design or too few slots
    """
    rng = np.random.default_rng(seed)
    data_idx = rng.integers(0, codebook.N_c, size=(codebook.K, T))
    if pilot_design == "orthogonal":
        pilot_idx = None
        pilots = orthogonal_ue_pilots(codebook, T)
    elif pilot_design == "random":
        pilot_idx = rng.integers(0, codebook.N_c, size=(codebook.K, T))
        pilots = encode_indices(pilot_idx, codebook)
    else:
        raise SynthesisConfigurationError(
            f"pilot_design must be one of {PILOT_DESIGNS}, got {pilot_design!r}")
    return SuperimposedFrame(
        data_symbols=encode_indices(data_idx, codebook),
        pilot_symbols=pilots,
        xi=xi, data_indices=data_idx, pilot_indices=pilot_idx)


@dataclass(frozen=True, eq=False)
class RisSchedule:
    """Unit-modulus phase matrices Theta_i (N_i x T), one per RIS."""

    theta: Tuple[np.ndarray, ...]

    def __post_init__(self):
        theta = tuple(np.asarray(t, dtype=complex) for t in self.theta)
        for t in theta:
            if not np.allclose(np.abs(t), 1.0, atol=1e-12):
                raise SynthesisConfigurationError("RIS phase entries must be unit modulus")
        object.__setattr__(self, "theta", theta)

    @property
    def T(self) -> int:
        return self.theta[0].shape[1]

    def keep_ris(self, indices: Sequence[int]) -> "RisSchedule":
        return RisSchedule(tuple(self.theta[i] for i in indices))

    def constant(self) -> "RisSchedule":
        """Same phases as slot 0 in every slot."""
        return RisSchedule(tuple(np.repeat(t[:, :1], t.shape[1], axis=1) for t in self.theta))


def generate_ris_schedule(N_i: Union[int, Sequence[int]], T: int, seed: SeedLike = None) -> RisSchedule:
    """
    I.i.d. uniform RIS phases for T slots.

    Args:
        N_i: element count, or one count per RIS
        T: slot count
        seed: anything accepted by numpy.random.default_rng
    """
    if T < 1:
        raise SynthesisConfigurationError(f"T must be >= 1, got {T}")
    counts = [N_i] if np.isscalar(N_i) else list(N_i)
    rng = np.random.default_rng(seed)
    return RisSchedule(tuple(np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=(int(n), T)))
                             for n in counts))


@dataclass(frozen=True, eq=False)
class ReceivedBlock:
    """Received M x T block of one band."""

    Y: np.ndarray
    noise_var: float
    noise: Optional[np.ndarray] = None

    @property
    def vec(self) -> np.ndarray:
        return self.Y.reshape(-1, order="F")

    @property
    def noiseless(self) -> np.ndarray:
        return self.Y if self.noise is None else self.Y - self.noise


@dataclass(frozen=True, eq=False)
class SensingOperator:
    """Stacked measurement matrix and the meaning of each column."""

    matrix: np.ndarray
    column_index_map: List[Tuple[int, ...]] = field(default_factory=list)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    def __matmul__(self, other):
        return self.matrix @ other


def complex_noise(shape, N_0: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric complex Gaussian noise of variance N_0."""
    if N_0 < 0:
        raise SynthesisConfigurationError(f"N_0 must be non-negative, got {N_0}")
    return np.sqrt(N_0 / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def noise_variance_for_snr(pilot_signal: np.ndarray, snr_db: float) -> float:
    """N_0 such that mean received pilot power / N_0 equals the target SNR."""
    power = float(np.mean(np.abs(pilot_signal) ** 2))
    return power / 10.0 ** (snr_db / 10.0)


def cascade(H_r: np.ndarray, h: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """H_r diag(h) Theta, the per-slot cascaded channel (M x T)."""
    return (H_r * h[None, :]) @ theta


def site_cascade(H_r: Sequence[np.ndarray], h_site: Sequence[np.ndarray],
                 schedule: RisSchedule) -> np.ndarray:
    """Sum over RISs of the fixed-site cascaded channel (M x T)."""
    if len(H_r) != len(h_site) or len(H_r) != len(schedule.theta):
        raise DimensionMismatchError("RIS counts of channels and schedule differ")
    return sum(cascade(H, h, th) for H, h, th in zip(H_r, h_site, schedule.theta))


def ue_cascades(H_r: Sequence[np.ndarray], h_ue: Sequence[np.ndarray],
                schedule: RisSchedule) -> np.ndarray:
    """Cascaded channel of every UE, shape (K, M, T)."""
    K = h_ue[0].shape[0]
    return np.stack([sum(cascade(H, h[k], th) for H, h, th in zip(H_r, h_ue, schedule.theta))
                     for k in range(K)])


def synthesize_fixed_site(channels: ChannelRealization, frame: SuperimposedFrame,
                          schedule: RisSchedule, N_0: float, seed: SeedLike = None) -> ReceivedBlock:
    """
    Y_0 = sum_i H_r,i diag(h_b,i0) Theta_i X_0 + N.

    Raises:
        DimensionMismatchError: frame or schedule inconsistent with the channels
    """
    if frame.num_transmitters != 1 or frame.N_s != 1:
        raise DimensionMismatchError("Fixed-site frames carry one transmitter on one band")
    if frame.T != schedule.T:
        raise DimensionMismatchError(f"Frame has {frame.T} slots, schedule {schedule.T}")
    rng = np.random.default_rng(seed)
    x = frame.transmitted[0, :, 0]
    clean = site_cascade(channels.H_r, channels.h_site, schedule) * x[None, :]
    noise = complex_noise(clean.shape, N_0, rng)
    return ReceivedBlock(Y=clean + noise, noise_var=N_0, noise=noise)


def orthogonal_pilot_symbols(frame: SuperimposedFrame, pilot_slots: int) -> np.ndarray:
    """Full-power pilots in the first pilot_slots slots, full-power data afterwards."""
    if not 0 < pilot_slots < frame.T:
        raise SynthesisConfigurationError(f"pilot_slots must lie in (0, {frame.T}), got {pilot_slots}")
    x = frame.data_symbols[0, :, 0].copy()
    x[:pilot_slots] = frame.pilot_symbols[0, :pilot_slots, 0]
    return x


def synthesize_orthogonal_pilots(channels: ChannelRealization, frame: SuperimposedFrame,
                                 schedule: RisSchedule, N_0: float, pilot_slots: int,
                                 seed: SeedLike = None) -> ReceivedBlock:
    """
    Fixed-site reference without superposition: time-multiplexed pilots and data
    through constant RIS phases.
    """
    rng = np.random.default_rng(seed)
    x = orthogonal_pilot_symbols(frame, pilot_slots)
    clean = site_cascade(channels.H_r, channels.h_site, schedule.constant()) * x[None, :]
    noise = complex_noise(clean.shape, N_0, rng)
    return ReceivedBlock(Y=clean + noise, noise_var=N_0, noise=noise)


def r2b_projection(grids: DictionaryGrids, h_b0: np.ndarray, theta: np.ndarray, i: int) -> np.ndarray:
    """Q_i = B_R2B,i^H diag(h_b,i0) Theta_i, shape (G2*G3 x T)."""
    return grids.b_r2b(i).conj().T @ (h_b0[:, None] * theta)


def r2b_column_map(grids: DictionaryGrids) -> List[Tuple[int, int, int, int]]:
    """(RIS, a, d, g) for every column of Z_R2B."""
    columns = []
    for i in range(grids.num_ris):
        G1, G2, G3 = len(grids.w_r2b_a[i]), len(grids.w_r2b_d[i]), len(grids.g_r2b_d[i])
        for dg in range(G2 * G3):
            g, d = divmod(dg, G2)
            for a in range(G1):
                columns.append((i, a, d, g))
    return columns


def build_z_r2b(x0: np.ndarray, grids: DictionaryGrids, h_b0: Sequence[np.ndarray],
                schedule: RisSchedule) -> SensingOperator:
    """
    Z_R2B with block i = sqrt(M N_i / L_i) (B^H diag(h_b,i0) Theta_i X_0)^T kron A_R2B,i.

    Args:
        x0: diagonal of X_0 (length T), or the T x T diagonal matrix itself
        grids: dictionary grids
        h_b0: fixed-site RIS channels, one per RIS
        schedule: RIS phases
    """
    x0 = np.asarray(x0)
    if x0.ndim == 2:
        x0 = np.diag(x0)
    if len(h_b0) != grids.num_ris or len(schedule.theta) != grids.num_ris:
        raise DimensionMismatchError("RIS counts of grids, channels and schedule differ")
    if x0.shape[0] != schedule.T:
        raise DimensionMismatchError(f"X_0 has {x0.shape[0]} slots, schedule {schedule.T}")
    blocks = []
    for i in range(grids.num_ris):
        P = r2b_projection(grids, np.asarray(h_b0[i]), schedule.theta[i], i) * x0[None, :]
        blocks.append(grids.scale(i) * np.kron(P.T, grids.a_r2b(i)))
    return SensingOperator(np.hstack(blocks), r2b_column_map(grids))


def effective_channel_from_omega(omegas: Sequence[np.ndarray], grids: DictionaryGrids,
                                 h_b0: Sequence[np.ndarray], schedule: RisSchedule) -> np.ndarray:
    """H_eff = sum_i sqrt(M N_i / L_i) A_i Omega_i B_i^H diag(h_b,i0) Theta_i, shape (M x T)."""
    return sum(grids.scale(i) * grids.a_r2b(i) @ omegas[i]
               @ r2b_projection(grids, np.asarray(h_b0[i]), schedule.theta[i], i)
               for i in range(grids.num_ris))


def split_omega(omega: np.ndarray, grids: DictionaryGrids) -> List[np.ndarray]:
    """Undo vec(): stacked coefficient vector -> list of Omega_i (G1 x G2*G3)."""
    parts, pos = [], 0
    for i in range(grids.num_ris):
        G1 = len(grids.w_r2b_a[i])
        size = grids.r2b_size(i)
        parts.append(np.asarray(omega[pos:pos + size]).reshape(G1, size // G1, order="F"))
        pos += size
    return parts


def stack_omega(omegas: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(o).reshape(-1, order="F") for o in omegas])


def synthesize_multiue(channels: ChannelRealization, frame: SuperimposedFrame,
                       schedule: RisSchedule, N_0: float, seed: SeedLike = None,
                       support: Optional[np.ndarray] = None) -> List[ReceivedBlock]:
    """
    Y_U,ns = sum_k sum_i H_r,i diag(h_b,ik) Theta_i X_k,ns + N for every band.

    Args:
        support: optional (K x N_s) boolean mask; symbols outside it must be zero
    """
    X = frame.transmitted
    K = X.shape[0]
    if any(h.shape[0] != K for h in channels.h_ue):
        raise DimensionMismatchError(f"Channels hold {channels.h_ue[0].shape[0]} UEs, frame {K}")
    if frame.T != schedule.T:
        raise DimensionMismatchError(f"Frame has {frame.T} slots, schedule {schedule.T}")
    if support is not None:
        mask = ~np.asarray(support, dtype=bool)
        if np.any(np.abs(X.transpose(0, 2, 1)[mask]) > 0):
            raise SynthesisConfigurationError("Symbols present on bands outside the UE support")
    rng = np.random.default_rng(seed)
    casc = ue_cascades(channels.H_r, channels.h_ue, schedule)   # K x M x T
    blocks = []
    for ns in range(frame.N_s):
        clean = np.einsum("kmt,kt->mt", casc, X[:, :, ns])
        noise = complex_noise(clean.shape, N_0, rng)
        blocks.append(ReceivedBlock(Y=clean + noise, noise_var=N_0, noise=noise))
    return blocks


def stack_blocks(blocks: Sequence[ReceivedBlock]) -> np.ndarray:
    """y_U: band-major stack of vec(Y_U,ns)."""
    return np.concatenate([b.vec for b in blocks])


def ris_response_tensor(H_r: np.ndarray, theta: np.ndarray, dictionary: np.ndarray,
                        counter: Optional[OperationCounter] = None,
                        category: str = "operator") -> np.ndarray:
    """
    W[t, m, g] = sqrt(N) sum_n H_r[m, n] Theta[n, t] dictionary[n, g].

    A multi-UE operator column for UE k is x_k[t] * W[t, :, g], stacked over t.
    """
    N = H_r.shape[1]
    if counter is not None:
        counter.add(category, H_r.shape[0] * N * theta.shape[1] * dictionary.shape[1])
    return np.sqrt(N) * np.einsum("mn,nt,ng->tmg", H_r, theta, dictionary, optimize=True)


def multiue_column_map(K: int, widths: Sequence[int]) -> List[Tuple[int, int, int]]:
    """(UE k, RIS i, cell) of every multi-UE operator column; widths are the per-RIS cell counts."""
    return [(k, i, g) for k in range(K) for i, width in enumerate(widths) for g in range(width)]


def build_multiue_operator(X: np.ndarray, grids: DictionaryGrids, H_r: Sequence[np.ndarray],
                           schedule: RisSchedule, dictionaries: Optional[Sequence[np.ndarray]] = None
                           ) -> SensingOperator:
    """
    D = V_2(X) B_U2 for symbols X of shape (K, T, N_s).

    Columns are ordered (UE k, RIS i, cell), rows (band, slot, antenna).

    Args:
        dictionaries: per-RIS UE-side dictionaries, defaults to grids.b_u2r(i)
    """
    X = np.asarray(X, dtype=complex)
    if X.ndim != 3:
        raise DimensionMismatchError(f"X must be (K, T, N_s), got {X.shape}")
    K, T, N_s = X.shape
    if len(H_r) != grids.num_ris or len(schedule.theta) != grids.num_ris:
        raise DimensionMismatchError("RIS counts of grids, channels and schedule differ")
    if T != schedule.T:
        raise DimensionMismatchError(f"X has {T} slots, schedule {schedule.T}")
    dicts = list(dictionaries) if dictionaries is not None else [grids.b_u2r(i) for i in range(grids.num_ris)]
    M = H_r[0].shape[0]
    W = [ris_response_tensor(H_r[i], schedule.theta[i], dicts[i]) for i in range(grids.num_ris)]
    widths = [d.shape[1] for d in dicts]
    D = np.zeros((N_s * T * M, K * sum(widths)), dtype=complex)
    col = 0
    for k in range(K):
        for i in range(grids.num_ris):
            for ns in range(N_s):
                block = X[k, :, ns][:, None, None] * W[i]
                D[ns * T * M:(ns + 1) * T * M, col:col + widths[i]] = block.reshape(T * M, widths[i])
            col += widths[i]
    return SensingOperator(D, multiue_column_map(K, widths))


def build_v2(X: np.ndarray, H_r: Sequence[np.ndarray], schedule: RisSchedule) -> np.ndarray:
    """
    V_2 with block (band n_s, UE k, RIS i) = sqrt(N_i) ((Theta_i X_k,ns)^T khatri-rao H_r,i).
    """
    X = np.asarray(X, dtype=complex)
    K, T, N_s = X.shape
    rows = []
    for ns in range(N_s):
        row = []
        for k in range(K):
            for i, (H, theta) in enumerate(zip(H_r, schedule.theta)):
                left = (theta * X[k, :, ns][None, :]).T
                row.append(np.sqrt(H.shape[1]) * column_khatri_rao(left, H))
        rows.append(np.hstack(row))
    return np.vstack(rows)


def build_b_u2(grids: DictionaryGrids, K: int) -> np.ndarray:
    """Block-diagonal B_U2 holding B_U2R,i for every (UE, RIS) pair."""
    return block_diag(*[grids.b_u2r(i) for _ in range(K) for i in range(grids.num_ris)])

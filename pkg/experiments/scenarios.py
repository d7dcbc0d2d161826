"""
Monte Carlo drops for both scenarios and the metric evaluation of each
estimate type.

A drop fixes geometry, channels, RIS phases, symbols and the noise stream of
one trial, so every method and SNR point of that trial sees the same
realization.
"""

import dataclasses
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from channel_model import (
    ChannelRealization,
    DictionaryGrids,
    GridCounts,
    PathGainModel,
    SystemGeometry,
    build_grids,
    sample_channels,
    snap_to_grids,
)
from metrics import (
    MetricsReport,
    ebn0_db,
    effective_sinr_fixed,
    effective_sinr_multiue,
    effective_throughput,
    localization_error,
    nmse_angles,
    nmse_channel,
    scma_bits_per_resource,
    spectral_efficiency,
)
from models.multiue_estimator import MultiUeEstimate, MultiUeProblem
from models.reference_estimator import ReferenceEstimate
from models.sbl_estimator import FixedSiteEstimate, FixedSiteProblem
from processors.localization_processor import LocalizationResult
from processors.scma_processor import ScmaCodebook
from signal_synthesis import (
    ReceivedBlock,
    RisSchedule,
    SuperimposedFrame,
    generate_ris_schedule,
    noise_variance_for_snr,
    qpsk_site_frame,
    scma_ue_frame,
    site_cascade,
    synthesize_fixed_site,
    synthesize_multiue,
    synthesize_orthogonal_pilots,
    ue_cascades,
)
from utils.config_utils import SimulationConfig
from utils.modulation_utils import bit_error_rate, index_to_bits, qpsk_demodulate

logger = logging.getLogger(__name__)

QPSK_BITS = 2.0


class ScenarioError(Exception):
    """Invalid scenario setup"""
    pass


@dataclass(frozen=True)
class TrialSeeds:
    """Independent streams of one trial, spawned from SeedSequence([seed0, trial])."""

    geometry: np.random.SeedSequence
    channels: np.random.SeedSequence
    schedule: np.random.SeedSequence
    symbols: np.random.SeedSequence
    noise: np.random.SeedSequence
    stage_one: np.random.SeedSequence

    @classmethod
    def for_trial(cls, seed0: int, trial: int) -> "TrialSeeds":
        return cls(*np.random.SeedSequence([int(seed0), int(trial)]).spawn(6))


def _child(seq: np.random.SeedSequence, j: int) -> np.random.SeedSequence:
    # spawn() is stateful; derive the child key directly so repeated calls agree
    return np.random.SeedSequence(seq.entropy, spawn_key=tuple(seq.spawn_key) + (j,))


def geometry_from_config(config: SimulationConfig,
                         ue_positions: Sequence[Sequence[float]] = ()) -> SystemGeometry:
    g = config.geometry
    return SystemGeometry(
        bs_position=g.bs_position, ris_positions=g.ris_positions, site_position=g.site_position,
        ue_positions=tuple(ue_positions), M=g.M, N_y=g.N_y, N_z=g.N_z, L=g.L,
        d_bs=g.d_bs, d_ris=g.d_ris, wavelength=g.wavelength)


def grid_counts(config: SimulationConfig) -> GridCounts:
    return GridCounts(**dataclasses.asdict(config.grids))


def gain_model(config: SimulationConfig) -> PathGainModel:
    return PathGainModel(**dataclasses.asdict(config.gain_model))


def draw_ue_positions(config: SimulationConfig, seed) -> np.ndarray:
    """Uniform UE positions inside the configured box, shape (K, 3)."""
    rng = np.random.default_rng(seed)
    box = np.asarray(config.geometry.ue_box, dtype=float)
    return rng.uniform(box[:, 0], box[:, 1], size=(config.geometry.num_ues, 3))


def _channels(config: SimulationConfig, geom: SystemGeometry, grids: DictionaryGrids,
              seed) -> ChannelRealization:
    counts = grid_counts(config)
    channels = sample_channels(geom, seed, gain_model(config), counts)
    if config.on_grid:
        channels = snap_to_grids(channels, geom, grids)
    return channels


@dataclass(frozen=True, eq=False)
class FixedSiteDrop:
    geometry: SystemGeometry
    channels: ChannelRealization
    grids: DictionaryGrids
    frame: SuperimposedFrame
    schedule: RisSchedule
    received: ReceivedBlock
    N_0: float
    snr_db: float
    seeds: TrialSeeds
    P_0: float = 1.0

    @property
    def T(self) -> int:
        return self.frame.T

    @property
    def xi(self) -> float:
        return float(self.frame.xi[0])

    @property
    def pilot(self) -> np.ndarray:
        return self.frame.pilot_symbols[0, :, 0]

    @property
    def data(self) -> np.ndarray:
        return self.frame.data_symbols[0, :, 0]

    @property
    def true_cascade(self) -> np.ndarray:
        return site_cascade(self.channels.H_r, self.channels.h_site, self.schedule)

    def problem(self) -> FixedSiteProblem:
        return FixedSiteProblem(received=self.received, pilot=self.pilot, xi=self.xi,
                                grids=self.grids, h_b0=self.channels.h_site,
                                schedule=self.schedule, N_0=self.N_0, P_0=self.P_0)

    def keep_ris(self, indices: Sequence[int]) -> "FixedSiteDrop":
        """Same drop with only the listed RISs switched on; N_0 and noise stream are kept."""
        channels = self.channels.keep_ris(indices)
        schedule = self.schedule.keep_ris(indices)
        received = synthesize_fixed_site(channels, self.frame, schedule, self.N_0, self.seeds.noise)
        return dataclasses.replace(self, geometry=self.geometry.keep_ris(indices), channels=channels,
                                   grids=self.grids.keep_ris(indices), schedule=schedule,
                                   received=received)

    def orthogonal_reference(self, pilot_slots: int) -> ReceivedBlock:
        return synthesize_orthogonal_pilots(self.channels, self.frame, self.schedule, self.N_0,
                                            pilot_slots, self.seeds.noise)


def draw_fixed_site(config: SimulationConfig, snr_db: float, t1: int, trial: int) -> FixedSiteDrop:
    """
    One fixed-site drop; the SNR is received pilot power over N_0.
    """
    seeds = TrialSeeds.for_trial(config.sweep.seed, trial)
    geom = geometry_from_config(config)
    grids = build_grids(geom, grid_counts(config))
    channels = _channels(config, geom, grids, seeds.channels)
    schedule = generate_ris_schedule([geom.N(i) for i in range(geom.num_ris)], t1, seeds.schedule)
    frame = qpsk_site_frame(t1, config.frame.xi0, seeds.symbols)
    pilot_rx = site_cascade(channels.H_r, channels.h_site, schedule) * frame.pilot_component[0, :, 0][None, :]
    N_0 = noise_variance_for_snr(pilot_rx, snr_db)
    received = synthesize_fixed_site(channels, frame, schedule, N_0, seeds.noise)
    return FixedSiteDrop(geometry=geom, channels=channels, grids=grids, frame=frame,
                         schedule=schedule, received=received, N_0=N_0, snr_db=snr_db,
                         seeds=seeds, P_0=config.frame.P0)


@dataclass(frozen=True, eq=False)
class MultiUeDrop:
    geometry: SystemGeometry
    channels: ChannelRealization
    grids: DictionaryGrids
    frame: SuperimposedFrame
    schedule: RisSchedule
    blocks: Tuple[ReceivedBlock, ...]
    codebook: ScmaCodebook
    N_0: float
    snr_db: float
    seeds: TrialSeeds

    @property
    def ue_positions(self) -> np.ndarray:
        return np.array(self.geometry.ue_positions)

    @property
    def data_bits(self) -> np.ndarray:
        return np.stack([index_to_bits(row, self.codebook.bits_per_symbol)
                         for row in self.frame.data_indices])

    @property
    def true_cascades(self) -> np.ndarray:
        return ue_cascades(self.channels.H_r, self.channels.h_ue, self.schedule)

    def problem(self, H_r: Optional[Sequence[np.ndarray]] = None) -> MultiUeProblem:
        """Algorithm-3 input; H_r defaults to the true BS-RIS channels."""
        return MultiUeProblem(
            blocks=self.blocks, pilot_symbols=self.frame.pilot_symbols, xi=self.frame.xi,
            codebook=self.codebook, grids=self.grids,
            H_r=tuple(H_r) if H_r is not None else self.channels.H_r, schedule=self.schedule,
            N_0=self.N_0, ris_positions=self.geometry.ris_positions,
            spacing=self.geometry.d_ris, wavelength=self.geometry.wavelength)


def draw_multiue(config: SimulationConfig, codebook: ScmaCodebook, snr_db: float,
                 trial: int) -> MultiUeDrop:
    """
    One multi-UE drop with UEs placed uniformly in the configured box.

    Raises:
        ScenarioError: UE count differs from the codebook
    """
    if config.geometry.num_ues != codebook.K:
        raise ScenarioError(
            f"geometry.num_ues={config.geometry.num_ues} but the codebook serves {codebook.K} UEs")
    seeds = TrialSeeds.for_trial(config.sweep.seed, trial)
    geom = geometry_from_config(config, draw_ue_positions(config, seeds.geometry))
    grids = build_grids(geom, grid_counts(config))
    channels = _channels(config, geom, grids, seeds.channels)
    T2 = config.frame.T2
    schedule = generate_ris_schedule([geom.N(i) for i in range(geom.num_ris)], T2, seeds.schedule)
    frame = scma_ue_frame(codebook, T2, config.frame.xi_ue, seeds.symbols, config.frame.pilot_design)
    casc = ue_cascades(channels.H_r, channels.h_ue, schedule)
    pilot_rx = np.einsum("kmt,kts->smt", casc, frame.pilot_component)
    N_0 = noise_variance_for_snr(pilot_rx, snr_db)
    blocks = synthesize_multiue(channels, frame, schedule, N_0, seeds.noise, codebook.support_mask)
    return MultiUeDrop(geometry=geom, channels=channels, grids=grids, frame=frame,
                       schedule=schedule, blocks=tuple(blocks), codebook=codebook, N_0=N_0,
                       snr_db=snr_db, seeds=seeds)


def stage_one_drop(config: SimulationConfig, drop: MultiUeDrop, t1: Optional[int] = None) -> FixedSiteDrop:
    """
    Fixed-site block over the channels of a multi-UE drop, used when Algorithm 3
    is fed the Algorithm-1 estimate of the BS-RIS channels.
    """
    t1 = t1 or config.frame.T1
    sched_seed, sym_seed, noise_seed = (_child(drop.seeds.stage_one, j) for j in range(3))
    geom = geometry_from_config(config)
    schedule = generate_ris_schedule([geom.N(i) for i in range(geom.num_ris)], t1, sched_seed)
    frame = qpsk_site_frame(t1, config.frame.xi0, sym_seed)
    pilot_rx = site_cascade(drop.channels.H_r, drop.channels.h_site, schedule) * frame.pilot_component[0, :, 0][None, :]
    N_0 = noise_variance_for_snr(pilot_rx, drop.snr_db)
    received = synthesize_fixed_site(drop.channels, frame, schedule, N_0, noise_seed)
    seeds = dataclasses.replace(drop.seeds, noise=noise_seed)
    return FixedSiteDrop(geometry=geom, channels=drop.channels, grids=drop.grids, frame=frame,
                         schedule=schedule, received=received, N_0=N_0, snr_db=drop.snr_db,
                         seeds=seeds, P_0=config.frame.P0)


def evaluate_fixed_site(drop: FixedSiteDrop, estimate: FixedSiteEstimate) -> MetricsReport:
    """NMSE(H_r), NMSE(phi), BER, SE and throughput of an Algorithm-1 style estimate."""
    H_hat = estimate.reconstruct_bs_ris()
    phi_true = [drop.channels.path_angle_matrix(i) for i in range(drop.channels.num_ris)]
    bits_true = drop.frame.data_bits
    bits_est = estimate.bits()
    h_est = estimate.effective_channel(drop.channels.h_site, drop.schedule)
    sinr = effective_sinr_fixed(drop.true_cascade, h_est, drop.xi, drop.N_0)
    return MetricsReport(
        nmse_hr=nmse_channel(drop.channels.H_r, H_hat),
        nmse_phi=nmse_angles(phi_true, estimate.estimated_paths(drop.geometry.L)),
        ber=bit_error_rate(bits_true, bits_est),
        se=spectral_efficiency(sinr),
        effective_throughput=float(effective_throughput(bits_true, bits_est)),
        ebn0_db=ebn0_db(drop.snr_db, QPSK_BITS),
        traces=list(estimate.trace))


def _slot_bits(bits: np.ndarray, slots: np.ndarray) -> np.ndarray:
    return bits.reshape(-1, 2)[slots].reshape(-1)


def evaluate_reference(drop: FixedSiteDrop, estimate: ReferenceEstimate,
                       superimposed: bool) -> MetricsReport:
    """
    Metrics of a reference receiver.

    superimposed=True scores the estimate against the superimposed frame (genie
    channel); otherwise the orthogonal-pilot frame through constant RIS phases.
    """
    slots = estimate.data_slots
    bits_true = _slot_bits(drop.frame.data_bits, slots)
    bits_est = qpsk_demodulate(estimate.x_d)
    if superimposed:
        truth = drop.true_cascade
        sinr = effective_sinr_fixed(truth, estimate.h_eff, drop.xi, drop.N_0)
    else:
        truth = site_cascade(drop.channels.H_r, drop.channels.h_site, drop.schedule.constant())
        sinr = effective_sinr_fixed(truth[:, slots], estimate.h_eff[:, slots], 1.0, drop.N_0,
                                    error_weight=1.0)
    return MetricsReport(
        ber=bit_error_rate(bits_true, bits_est),
        se=spectral_efficiency(sinr, estimate.data_fraction),
        effective_throughput=float(effective_throughput(bits_true, bits_est)),
        ebn0_db=ebn0_db(drop.snr_db, QPSK_BITS))


def collision_matrix(codebook: ScmaCodebook) -> np.ndarray:
    """(K x K) True where two UEs share at least one band."""
    support = codebook.support_mask.astype(int)
    return (support @ support.T) > 0


def evaluate_multiue(drop: MultiUeDrop, estimate: MultiUeEstimate,
                     H_r: Optional[Sequence[np.ndarray]] = None) -> MetricsReport:
    """
    BER, SE, throughput and localization error of an Algorithm-3 estimate.

    H_r is the BS-RIS input the estimator used; NMSE(H_r) is reported when it
    differs from the truth.
    """
    cb = drop.codebook
    bits_true = drop.data_bits
    bits_est = estimate.bits(cb)
    h_used = tuple(H_r) if H_r is not None else drop.channels.H_r
    h_est = ue_cascades(h_used, estimate.h_ue, drop.schedule)
    sinr = effective_sinr_multiue(drop.true_cascades, h_est, drop.frame.xi, drop.N_0,
                                  interferers=collision_matrix(cb))
    report = MetricsReport(
        ber=bit_error_rate(bits_true, bits_est),
        se=spectral_efficiency(sinr),
        effective_throughput=float(effective_throughput(bits_true, bits_est)),
        ebn0_db=ebn0_db(drop.snr_db, scma_bits_per_resource(cb.K, cb.N_s, cb.N_c)),
        traces=list(estimate.trace))
    if H_r is not None:
        report.nmse_hr = nmse_channel(drop.channels.H_r, H_r)
    if estimate.localization is not None:
        report.localization_error = localization_error(drop.ue_positions,
                                                       estimate.localization.positions)
    return report


def evaluate_localization(drop: MultiUeDrop, result: Optional[LocalizationResult]) -> MetricsReport:
    if result is None:
        raise ScenarioError("Localization produced no positions")
    cb = drop.codebook
    report = MetricsReport(ebn0_db=ebn0_db(drop.snr_db, scma_bits_per_resource(cb.K, cb.N_s, cb.N_c)))
    report.localization_error = localization_error(drop.ue_positions, result.positions)
    return report


__all__: List[str] = [
    "FixedSiteDrop", "MultiUeDrop", "ScenarioError", "TrialSeeds", "collision_matrix",
    "draw_fixed_site", "draw_multiue", "draw_ue_positions", "evaluate_fixed_site",
    "evaluate_localization", "evaluate_multiue", "evaluate_reference", "geometry_from_config",
    "grid_counts", "stage_one_drop",
]

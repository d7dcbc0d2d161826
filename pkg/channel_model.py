"""
Geometry, channel sampling and dictionary grids for the double-RIS uplink.

Coordinates follow the usual convention: the BS is a ULA along Y, every RIS is
a URA parallel to the Y-o-Z plane, and users sit on the BS side (larger x) of
the RIS plane.
"""

import dataclasses
import itertools
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from utils.array_utils import (
    InvalidDimensionError,
    effective_angle_bound,
    ula_matrix,
    ula_matrix_derivative,
    ula_response,
    ura_matrix,
    ura_matrix_derivatives,
    ura_response,
)

logger = logging.getLogger(__name__)

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]


class ChannelModelError(Exception):
    """Base exception for channel model errors"""
    pass


class DegenerateGeometryError(ChannelModelError):
    """Coincident points or collinear anchors"""
    pass


class ChannelConfigurationError(ChannelModelError):
    """Invalid geometry or grid configuration"""
    pass


__all__ = [
    "BsRisPath", "ChannelConfigurationError", "ChannelModelError", "ChannelRealization",
    "DegenerateGeometryError", "DictionaryGrids", "GridCounts", "InvalidDimensionError",
    "PathAngles", "PathGainModel", "SystemGeometry", "angles_from_positions",
    "assemble_bs_ris", "assemble_ris_ue", "build_grids", "omega_from_realization",
    "psi_from_realization", "sample_channels", "snap_to_grids", "ula_response", "ura_response",
]


def _vec3(value) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.size != 3:
        raise ChannelConfigurationError(f"Expected a 3-vector, got {value!r}")
    return arr


@dataclass(frozen=True, eq=False)
class SystemGeometry:
    """Positions and array dimensions of one deployment."""

    bs_position: np.ndarray
    ris_positions: Tuple[np.ndarray, ...]
    site_position: np.ndarray
    ue_positions: Tuple[np.ndarray, ...] = ()
    M: int = 16
    N_y: Tuple[int, ...] = (12, 12)
    N_z: Tuple[int, ...] = (12, 12)
    L: Tuple[int, ...] = (3, 3)
    d_bs: float = 0.5
    d_ris: float = 0.5
    wavelength: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "bs_position", _vec3(self.bs_position))
        object.__setattr__(self, "site_position", _vec3(self.site_position))
        object.__setattr__(self, "ris_positions", tuple(_vec3(q) for q in self.ris_positions))
        object.__setattr__(self, "ue_positions", tuple(_vec3(p) for p in self.ue_positions))
        n_ris = len(self.ris_positions)
        for name in ("N_y", "N_z", "L"):
            values = getattr(self, name)
            if isinstance(values, (int, np.integer)):
                values = (int(values),) * n_ris
            object.__setattr__(self, name, tuple(int(x) for x in values))
        self.validate()

    def validate(self) -> None:
        if len(self.ris_positions) < 1:
            raise ChannelConfigurationError("At least one RIS is required")
        if self.M < 1:
            raise InvalidDimensionError(f"M must be >= 1, got {self.M}")
        for name in ("N_y", "N_z", "L"):
            values = getattr(self, name)
            if len(values) != len(self.ris_positions):
                raise ChannelConfigurationError(
                    f"{name} has {len(values)} entries for {len(self.ris_positions)} RISs")
            if min(values) < 1:
                raise InvalidDimensionError(f"{name} entries must be >= 1, got {values}")
        if self.d_bs <= 0 or self.d_ris <= 0 or self.wavelength <= 0:
            raise ChannelConfigurationError("Element spacings and wavelength must be positive")

    @property
    def num_ris(self) -> int:
        return len(self.ris_positions)

    @property
    def num_ues(self) -> int:
        return len(self.ue_positions)

    def N(self, i: int) -> int:
        return self.N_y[i] * self.N_z[i]

    @property
    def bs_bound(self) -> float:
        return effective_angle_bound(self.d_bs, self.wavelength)

    @property
    def ris_bound(self) -> float:
        return effective_angle_bound(self.d_ris, self.wavelength)

    def scale(self, i: int) -> float:
        """sqrt(M * N_i / L_i), the BS-RIS normalization."""
        return float(np.sqrt(self.M * self.N(i) / self.L[i]))

    def keep_ris(self, indices: Sequence[int]) -> "SystemGeometry":
        idx = list(indices)
        return dataclasses.replace(
            self,
            ris_positions=tuple(self.ris_positions[i] for i in idx),
            N_y=tuple(self.N_y[i] for i in idx),
            N_z=tuple(self.N_z[i] for i in idx),
            L=tuple(self.L[i] for i in idx),
        )

    def with_ues(self, positions: Sequence[Sequence[float]]) -> "SystemGeometry":
        return dataclasses.replace(self, ue_positions=tuple(_vec3(p) for p in positions))


@dataclass(frozen=True)
class PathAngles:
    u: float
    v: float = 0.0
    elevation: Optional[float] = None
    azimuth: Optional[float] = None


def angles_from_positions(from_pos, to_pos, spacing: float, wavelength: float) -> PathAngles:
    """
    Effective angles seen at the array located at `to_pos` for a signal from `from_pos`.

    u = (2d/lambda) (to_y - from_y) / dist, v = (2d/lambda) (to_z - from_z) / dist.

    Raises:
        DegenerateGeometryError: if the two points coincide
    """
    p = _vec3(from_pos)
    q = _vec3(to_pos)
    delta = q - p
    dist = float(np.linalg.norm(delta))
    if dist == 0.0:
        raise DegenerateGeometryError(f"Coincident points {p.tolist()}")
    k = effective_angle_bound(spacing, wavelength)
    elevation = float(np.arcsin(np.clip(delta[2] / dist, -1.0, 1.0)))
    azimuth = float(np.arctan2(delta[1], delta[0]))
    return PathAngles(u=k * delta[1] / dist, v=k * delta[2] / dist,
                      elevation=elevation, azimuth=azimuth)


@dataclass(frozen=True)
class PathGainModel:
    """Free-space style magnitude law; phases are uniform."""

    reference_loss_db: float = 0.0
    path_loss_exponent: float = 2.0
    reference_distance: float = 1.0
    nlos_excess: float = 0.5
    nlos_loss_db: float = 6.0

    def amplitude(self, distance: float) -> float:
        loss_db = self.reference_loss_db + 10.0 * self.path_loss_exponent * np.log10(
            max(distance, 1e-12) / self.reference_distance)
        return float(10.0 ** (-loss_db / 20.0))


@dataclass(frozen=True)
class BsRisPath:
    arrival: PathAngles      # at the BS, only u is used
    departure: PathAngles    # at the RIS
    gain: complex


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """True channels and their generating parameters for one drop."""

    H_r: Tuple[np.ndarray, ...]
    h_site: Tuple[np.ndarray, ...]
    h_ue: Tuple[np.ndarray, ...]
    bs_ris_paths: Tuple[Tuple[BsRisPath, ...], ...]
    site_angles: Tuple[PathAngles, ...]
    site_gains: Tuple[complex, ...]
    ue_angles: Tuple[Tuple[PathAngles, ...], ...] = ()
    ue_gains: Tuple[np.ndarray, ...] = ()

    def path_angle_matrix(self, i: int) -> np.ndarray:
        """phi_i as an (L_i x 3) array of [u_A, u_D, v_D]."""
        return np.array([[p.arrival.u, p.departure.u, p.departure.v]
                         for p in self.bs_ris_paths[i]])

    def path_gains(self, i: int) -> np.ndarray:
        return np.array([p.gain for p in self.bs_ris_paths[i]], dtype=complex)

    @property
    def num_ris(self) -> int:
        return len(self.H_r)

    def keep_ris(self, indices: Sequence[int]) -> "ChannelRealization":
        idx = list(indices)
        pick = lambda seq: tuple(seq[i] for i in idx) if len(seq) else seq
        return ChannelRealization(
            H_r=pick(self.H_r), h_site=pick(self.h_site), h_ue=pick(self.h_ue),
            bs_ris_paths=pick(self.bs_ris_paths), site_angles=pick(self.site_angles),
            site_gains=pick(self.site_gains), ue_angles=pick(self.ue_angles),
            ue_gains=pick(self.ue_gains))


def assemble_bs_ris(paths: Sequence[BsRisPath], M: int, N_y: int, N_z: int) -> np.ndarray:
    """H_r = sqrt(M N / L) sum_l alpha_l a_M(u_A) b^H(u_D, v_D)."""
    L = len(paths)
    N = N_y * N_z
    H = np.zeros((M, N), dtype=complex)
    for path in paths:
        a = ula_response(path.arrival.u, M)
        b = ura_response(path.departure.u, path.departure.v, N_y, N_z)
        H += path.gain * np.outer(a, b.conj())
    return np.sqrt(M * N / L) * H


def assemble_ris_ue(angles: PathAngles, gain: complex, N_y: int, N_z: int) -> np.ndarray:
    """h_b = sqrt(N) alpha_b b(u, v)."""
    return np.sqrt(N_y * N_z) * gain * ura_response(angles.u, angles.v, N_y, N_z)


@dataclass(frozen=True)
class GridCounts:
    G1: int = 8
    G2: int = 8
    G3: int = 8
    G4: int = 16
    G5: int = 16


def _nlos_separations(geom: SystemGeometry, counts: Optional[GridCounts]) -> Tuple[float, float, float]:
    if counts is None:
        return 0.0, 0.0, 0.0
    widths = []
    for G, bound in ((counts.G1, geom.bs_bound), (counts.G2, geom.ris_bound),
                     (counts.G3, geom.ris_bound)):
        widths.append(2.0 * bound / (G - 1) if G > 1 else 0.0)
    return tuple(widths)


def _random_phase(rng: np.random.Generator) -> complex:
    return complex(np.exp(1j * rng.uniform(0.0, 2.0 * np.pi)))


def sample_channels(geom: SystemGeometry, seed: SeedLike = None,
                    gain_model: Optional[PathGainModel] = None,
                    grid_counts: Optional[GridCounts] = None,
                    max_attempts: int = 1000) -> ChannelRealization:
    """
    Draw one channel realization.

    Path 1 of every BS-RIS link is the LoS path given by the geometry; the other
    paths draw effective angles uniformly over the domain and are re-drawn while
    they sit within one grid cell of the LoS path in every dimension.

    Args:
        geom: deployment
        seed: anything accepted by numpy.random.default_rng
        gain_model: magnitude law, defaults to PathGainModel()
        grid_counts: grid sizes used to set the NLoS rejection distance
        max_attempts: rejection-sampling cap per path

    Returns:
        ChannelRealization: channels for every RIS, the fixed site and every UE
    """
    rng = np.random.default_rng(seed)
    gains = gain_model or PathGainModel()
    sep = _nlos_separations(geom, grid_counts)
    bs_b, ris_b = geom.bs_bound, geom.ris_bound

    H_r, paths_all, h_site, site_angles, site_gains = [], [], [], [], []
    h_ue, ue_angles, ue_gains = [], [], []
    for i, q in enumerate(geom.ris_positions):
        los_arrival = angles_from_positions(q, geom.bs_position, geom.d_bs, geom.wavelength)
        los_departure = angles_from_positions(geom.bs_position, q, geom.d_ris, geom.wavelength)
        distance = float(np.linalg.norm(q - geom.bs_position))
        paths = [BsRisPath(los_arrival, los_departure,
                           gains.amplitude(distance) * _random_phase(rng))]
        for _ in range(geom.L[i] - 1):
            for attempt in range(max_attempts):
                u_a = rng.uniform(-bs_b, bs_b)
                u_d = rng.uniform(-ris_b, ris_b)
                v_d = rng.uniform(-ris_b, ris_b)
                close = (abs(u_a - los_arrival.u) < sep[0] and abs(u_d - los_departure.u) < sep[1]
                         and abs(v_d - los_departure.v) < sep[2])
                if not close:
                    break
            else:
                logger.warning(f"NLoS rejection sampling hit {max_attempts} attempts on RIS {i}")
            excess = distance * (1.0 + rng.uniform(0.0, gains.nlos_excess))
            amp = gains.amplitude(excess) * 10.0 ** (-gains.nlos_loss_db / 20.0)
            paths.append(BsRisPath(PathAngles(u_a), PathAngles(u_d, v_d), amp * _random_phase(rng)))
        paths_all.append(tuple(paths))
        H_r.append(assemble_bs_ris(paths, geom.M, geom.N_y[i], geom.N_z[i]))

        ang = angles_from_positions(geom.site_position, q, geom.d_ris, geom.wavelength)
        g = gains.amplitude(float(np.linalg.norm(q - geom.site_position))) * _random_phase(rng)
        site_angles.append(ang)
        site_gains.append(g)
        h_site.append(assemble_ris_ue(ang, g, geom.N_y[i], geom.N_z[i]))

        angles_k, gains_k, rows = [], [], []
        for p in geom.ue_positions:
            ang_k = angles_from_positions(p, q, geom.d_ris, geom.wavelength)
            g_k = gains.amplitude(float(np.linalg.norm(q - p))) * _random_phase(rng)
            angles_k.append(ang_k)
            gains_k.append(g_k)
            rows.append(assemble_ris_ue(ang_k, g_k, geom.N_y[i], geom.N_z[i]))
        ue_angles.append(tuple(angles_k))
        ue_gains.append(np.array(gains_k, dtype=complex))
        h_ue.append(np.array(rows, dtype=complex).reshape(len(rows), geom.N(i)))

    return ChannelRealization(
        H_r=tuple(H_r), h_site=tuple(h_site), h_ue=tuple(h_ue),
        bs_ris_paths=tuple(paths_all), site_angles=tuple(site_angles),
        site_gains=tuple(site_gains), ue_angles=tuple(ue_angles), ue_gains=tuple(ue_gains))


def _uniform_midpoints(bound: float, portions: int) -> np.ndarray:
    width = 2.0 * bound / portions
    return -bound + (np.arange(portions) + 0.5) * width


@dataclass(frozen=True, eq=False)
class DictionaryGrids:
    """
    Per-RIS angle grids and the dictionaries they induce.

    BS-RIS grids hold the LoS angle in entry 0; refinement never moves it.
    """

    w_r2b_a: Tuple[np.ndarray, ...]
    w_r2b_d: Tuple[np.ndarray, ...]
    g_r2b_d: Tuple[np.ndarray, ...]
    w_u2r: Tuple[np.ndarray, ...]
    g_u2r: Tuple[np.ndarray, ...]
    M: int
    N_y: Tuple[int, ...]
    N_z: Tuple[int, ...]
    L: Tuple[int, ...] = ()
    bs_bound: float = 1.0
    ris_bound: float = 1.0

    @property
    def num_ris(self) -> int:
        return len(self.w_r2b_a)

    def N(self, i: int) -> int:
        return self.N_y[i] * self.N_z[i]

    def scale(self, i: int) -> float:
        """sqrt(M * N_i / L_i)."""
        L_i = self.L[i] if self.L else 1
        return float(np.sqrt(self.M * self.N(i) / L_i))

    def r2b_size(self, i: int) -> int:
        return len(self.w_r2b_a[i]) * len(self.w_r2b_d[i]) * len(self.g_r2b_d[i])

    def u2r_size(self, i: int) -> int:
        return len(self.w_u2r[i]) * len(self.g_u2r[i])

    def a_r2b(self, i: int) -> np.ndarray:
        return ula_matrix(self.w_r2b_a[i], self.M)

    def b_r2b(self, i: int) -> np.ndarray:
        return ura_matrix(self.w_r2b_d[i], self.g_r2b_d[i], self.N_y[i], self.N_z[i])

    def b_u2r(self, i: int) -> np.ndarray:
        return ura_matrix(self.w_u2r[i], self.g_u2r[i], self.N_y[i], self.N_z[i])

    def a_r2b_derivative(self, i: int) -> np.ndarray:
        return ula_matrix_derivative(self.w_r2b_a[i], self.M)

    def b_r2b_derivatives(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        return ura_matrix_derivatives(self.w_r2b_d[i], self.g_r2b_d[i], self.N_y[i], self.N_z[i])

    def b_u2r_derivatives(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        return ura_matrix_derivatives(self.w_u2r[i], self.g_u2r[i], self.N_y[i], self.N_z[i])

    def r2b_vector(self) -> np.ndarray:
        """Refinable BS-RIS grid entries (LoS excluded), RIS-major."""
        parts = []
        for i in range(self.num_ris):
            parts += [self.w_r2b_a[i][1:], self.w_r2b_d[i][1:], self.g_r2b_d[i][1:]]
        return np.concatenate(parts) if parts else np.zeros(0)

    def with_r2b_vector(self, nu_2: np.ndarray) -> "DictionaryGrids":
        nu_2 = np.asarray(nu_2, dtype=float)
        w_a, w_d, g_d = [], [], []
        pos = 0
        for i in range(self.num_ris):
            for src, dst in ((self.w_r2b_a[i], w_a), (self.w_r2b_d[i], w_d), (self.g_r2b_d[i], g_d)):
                n = len(src) - 1
                dst.append(np.concatenate([src[:1], nu_2[pos:pos + n]]))
                pos += n
        return dataclasses.replace(self, w_r2b_a=tuple(w_a), w_r2b_d=tuple(w_d), g_r2b_d=tuple(g_d))

    def u2r_vector(self) -> np.ndarray:
        """eta = [w_U2R per RIS, g_U2R per RIS]."""
        return np.concatenate(list(self.w_u2r) + list(self.g_u2r))

    def with_u2r_vector(self, eta: np.ndarray) -> "DictionaryGrids":
        eta = np.asarray(eta, dtype=float)
        w, g = [], []
        pos = 0
        for i in range(self.num_ris):
            w.append(eta[pos:pos + len(self.w_u2r[i])])
            pos += len(self.w_u2r[i])
        for i in range(self.num_ris):
            g.append(eta[pos:pos + len(self.g_u2r[i])])
            pos += len(self.g_u2r[i])
        return dataclasses.replace(self, w_u2r=tuple(w), g_u2r=tuple(g))

    def keep_ris(self, indices: Sequence[int]) -> "DictionaryGrids":
        idx = list(indices)
        pick = lambda seq: tuple(seq[i] for i in idx)
        return dataclasses.replace(
            self, w_r2b_a=pick(self.w_r2b_a), w_r2b_d=pick(self.w_r2b_d),
            g_r2b_d=pick(self.g_r2b_d), w_u2r=pick(self.w_u2r), g_u2r=pick(self.g_u2r),
            N_y=pick(self.N_y), N_z=pick(self.N_z), L=pick(self.L) if self.L else self.L)


def build_grids(geom: SystemGeometry, counts: GridCounts) -> DictionaryGrids:
    """
    LoS-anchored BS-RIS grids and uniform UE-side grids.

    Raises:
        ChannelConfigurationError: grid counts below the minimum
    """
    for i, L_i in enumerate(geom.L):
        minimum = 2 if L_i >= 2 else 1
        if min(counts.G1, counts.G2, counts.G3) < minimum:
            raise ChannelConfigurationError(
                f"G1, G2, G3 must be >= {minimum} for RIS {i} with L={L_i}, got {counts}")
    if min(counts.G4, counts.G5) < 2:
        raise ChannelConfigurationError(f"G4 and G5 must be >= 2, got {counts}")

    w_a, w_d, g_d, w_u, g_u = [], [], [], [], []
    for q in geom.ris_positions:
        arrival = angles_from_positions(q, geom.bs_position, geom.d_bs, geom.wavelength)
        departure = angles_from_positions(geom.bs_position, q, geom.d_ris, geom.wavelength)
        w_a.append(np.concatenate([[arrival.u], _uniform_midpoints(geom.bs_bound, counts.G1 - 1)]))
        w_d.append(np.concatenate([[departure.u], _uniform_midpoints(geom.ris_bound, counts.G2 - 1)]))
        g_d.append(np.concatenate([[departure.v], _uniform_midpoints(geom.ris_bound, counts.G3 - 1)]))
        w_u.append(_uniform_midpoints(geom.ris_bound, counts.G4))
        g_u.append(_uniform_midpoints(geom.ris_bound, counts.G5))
    return DictionaryGrids(
        w_r2b_a=tuple(w_a), w_r2b_d=tuple(w_d), g_r2b_d=tuple(g_d),
        w_u2r=tuple(w_u), g_u2r=tuple(g_u), M=geom.M, N_y=geom.N_y, N_z=geom.N_z, L=geom.L,
        bs_bound=geom.bs_bound, ris_bound=geom.ris_bound)


def _nearest(grid: np.ndarray, value: float, skip_first: bool = False) -> np.ndarray:
    """Grid indices ordered by distance to value."""
    order = np.argsort(np.abs(grid - value), kind="stable")
    if skip_first:
        order = order[order != 0]
    return order


def snap_to_grids(realization: ChannelRealization, geom: SystemGeometry,
                  grids: DictionaryGrids) -> ChannelRealization:
    """
    Move every angle onto its dictionary grid and reassemble the channels.

    NLoS BS-RIS paths go to the nearest non-LoS cell, each path to a distinct
    cell so that vec(Omega_i) keeps exactly L_i nonzeros.
    """
    H_r, paths_all = [], []
    for i, paths in enumerate(realization.bs_ris_paths):
        used = {(0, 0, 0)}
        snapped = [paths[0]]
        for path in paths[1:]:
            cand_a = _nearest(grids.w_r2b_a[i], path.arrival.u, skip_first=True)
            cand_d = _nearest(grids.w_r2b_d[i], path.departure.u, skip_first=True)
            cand_g = _nearest(grids.g_r2b_d[i], path.departure.v, skip_first=True)
            ranked = sorted(
                itertools.product(range(len(cand_a)), range(len(cand_d)), range(len(cand_g))),
                key=lambda r: (sum(r), r))
            for ra, rd, rg in ranked:
                cell = (int(cand_a[ra]), int(cand_d[rd]), int(cand_g[rg]))
                if cell not in used:
                    break
            else:
                raise ChannelConfigurationError(f"Not enough grid cells for {len(paths)} paths")
            used.add(cell)
            snapped.append(BsRisPath(
                PathAngles(float(grids.w_r2b_a[i][cell[0]])),
                PathAngles(float(grids.w_r2b_d[i][cell[1]]), float(grids.g_r2b_d[i][cell[2]])),
                path.gain))
        paths_all.append(tuple(snapped))
        H_r.append(assemble_bs_ris(snapped, geom.M, geom.N_y[i], geom.N_z[i]))

    def snap_ue(i: int, ang: PathAngles) -> PathAngles:
        w = grids.w_u2r[i][_nearest(grids.w_u2r[i], ang.u)[0]]
        g = grids.g_u2r[i][_nearest(grids.g_u2r[i], ang.v)[0]]
        return PathAngles(float(w), float(g))

    site_angles = tuple(snap_ue(i, a) for i, a in enumerate(realization.site_angles))
    h_site = tuple(assemble_ris_ue(a, g, geom.N_y[i], geom.N_z[i])
                   for i, (a, g) in enumerate(zip(site_angles, realization.site_gains)))
    ue_angles, h_ue = [], []
    for i, angles in enumerate(realization.ue_angles):
        snapped = tuple(snap_ue(i, a) for a in angles)
        ue_angles.append(snapped)
        rows = [assemble_ris_ue(a, g, geom.N_y[i], geom.N_z[i])
                for a, g in zip(snapped, realization.ue_gains[i])]
        h_ue.append(np.array(rows, dtype=complex).reshape(len(rows), geom.N(i)))
    return dataclasses.replace(
        realization, H_r=tuple(H_r), bs_ris_paths=tuple(paths_all), site_angles=site_angles,
        h_site=h_site, ue_angles=tuple(ue_angles), h_ue=tuple(h_ue))


def _grid_index(grid: np.ndarray, value: float, tol: float = 1e-9) -> int:
    idx = int(np.argmin(np.abs(grid - value)))
    if abs(grid[idx] - value) > tol:
        raise ChannelModelError(f"Angle {value} is not on the grid")
    return idx


def omega_from_realization(realization: ChannelRealization,
                           grids: DictionaryGrids) -> List[np.ndarray]:
    """
    Sparse BS-RIS coefficient matrices Omega_i (G1 x G2*G3) of an on-grid drop.

    Column index follows the dictionary: g_index * G2 + w_index.
    """
    omegas = []
    for i, paths in enumerate(realization.bs_ris_paths):
        G1, G2, G3 = len(grids.w_r2b_a[i]), len(grids.w_r2b_d[i]), len(grids.g_r2b_d[i])
        omega = np.zeros((G1, G2 * G3), dtype=complex)
        for path in paths:
            a = _grid_index(grids.w_r2b_a[i], path.arrival.u)
            d = _grid_index(grids.w_r2b_d[i], path.departure.u)
            g = _grid_index(grids.g_r2b_d[i], path.departure.v)
            omega[a, g * G2 + d] += path.gain
        omegas.append(omega)
    return omegas


def psi_from_realization(realization: ChannelRealization, grids: DictionaryGrids) -> np.ndarray:
    """
    Sparse UE-side coefficient vector psi of an on-grid drop, ordered (UE k, RIS i, cell).
    """
    K = len(realization.ue_angles[0]) if realization.ue_angles else 0
    blocks = []
    for k in range(K):
        for i in range(realization.num_ris):
            G4 = len(grids.w_u2r[i])
            block = np.zeros(grids.u2r_size(i), dtype=complex)
            ang = realization.ue_angles[i][k]
            w = _grid_index(grids.w_u2r[i], ang.u)
            g = _grid_index(grids.g_u2r[i], ang.v)
            block[g * G4 + w] = realization.ue_gains[i][k]
            blocks.append(block)
    return np.concatenate(blocks) if blocks else np.zeros(0, dtype=complex)

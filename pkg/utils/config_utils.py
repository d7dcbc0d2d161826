import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

# 設定日誌
logger = logging.getLogger(__name__)

SCENARIOS = ("fixed-site", "multi-ue")
BS_RIS_SOURCES = ("truth", "fixed-site")
PILOT_DESIGNS = ("orthogonal", "random")
DEFAULT_CONFIG_PATH = "config.example.json"


class ConfigurationError(Exception):
    """Invalid simulation configuration"""
    pass


def _tuple3(value, key: str) -> Tuple[float, float, float]:
    try:
        values = tuple(float(x) for x in value)
    except TypeError:
        raise ConfigurationError(f"{key} must be a list of three numbers, got {value!r}")
    if len(values) != 3:
        raise ConfigurationError(f"{key} must have three coordinates, got {len(values)}")
    return values


def _per_ris(value, count: int, key: str) -> Tuple[int, ...]:
    if isinstance(value, int):
        return (value,) * count
    values = tuple(int(x) for x in value)
    if len(values) != count:
        raise ConfigurationError(f"{key} has {len(values)} entries for {count} RISs")
    return values


@dataclass(frozen=True)
class GeometryConfig:
    bs_position: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    ris_positions: Tuple[Tuple[float, float, float], ...] = ((-30.0, 28.0, 21.0), (-20.0, 30.0, 20.0))
    site_position: Tuple[float, float, float] = (10.0, 20.0, 5.0)
    ue_box: Tuple[Tuple[float, float], ...] = ((10.0, 30.0), (5.0, 25.0), (0.0, 20.0))
    num_ues: int = 6
    M: int = 16
    N_y: Tuple[int, ...] = (12, 12)
    N_z: Tuple[int, ...] = (12, 12)
    L: Tuple[int, ...] = (3, 3)
    d_bs: float = 0.5
    d_ris: float = 0.5
    wavelength: float = 1.0


@dataclass(frozen=True)
class FrameConfig:
    T1: int = 256
    T2: int = 256
    xi0: float = 0.5
    xi_ue: float = 0.5
    P0: float = 1.0
    rho: float = 1.0
    reference_pilot_slots: int = 8
    pilot_design: str = "orthogonal"


@dataclass(frozen=True)
class GridConfig:
    G1: int = 8
    G2: int = 8
    G3: int = 8
    G4: int = 16
    G5: int = 16


@dataclass(frozen=True)
class SolverConfig:
    delta_chi: float = 1e-3
    delta_psi: float = 1e-3
    delta_eta: float = 1e-3
    delta_omega: float = 0.1
    j_max: int = 30
    j_max_multi: int = 20
    u_max: int = 300
    c: float = 50.0
    d: float = 0.5
    beta_max: float = 1e12
    gamma_max: float = 1e12
    normalize_gradient: bool = True
    mpa_iterations: int = 10
    omp_outer_iterations: int = 3
    omp_refine_steps: int = 5


@dataclass(frozen=True)
class GainConfig:
    reference_loss_db: float = 0.0
    path_loss_exponent: float = 2.0
    reference_distance: float = 1.0
    nlos_excess: float = 0.5
    nlos_loss_db: float = 6.0


@dataclass(frozen=True)
class SweepConfig:
    snr_db: Tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    t1: Tuple[int, ...] = ()
    trials: int = 10
    seed: int = 2024


@dataclass(frozen=True)
class SimulationConfig:
    """
    一次模擬實驗的完整設定 (不可變)

    欄位對應 JSON 設定檔的各個區塊；CLI 參數透過 apply_overrides 覆寫。
    """

    scenario: str = "fixed-site"
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    frame: FrameConfig = field(default_factory=FrameConfig)
    grids: GridConfig = field(default_factory=GridConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    gain_model: GainConfig = field(default_factory=GainConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    methods: Tuple[str, ...] = ()
    bs_ris_source: str = "truth"
    on_grid: bool = False
    codebook_path: Optional[str] = None
    trace: bool = False

    def validate(self) -> None:
        """
        檢查所有計數與容差

        Raises:
            ConfigurationError: 任何欄位不合法時，訊息中包含欄位名稱
        """
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.bs_ris_source not in BS_RIS_SOURCES:
            raise ConfigurationError(
                f"bs_ris_source must be one of {BS_RIS_SOURCES}, got {self.bs_ris_source!r}")
        counts = {
            "geometry.M": self.geometry.M,
            "geometry.num_ues": self.geometry.num_ues,
            "frame.T1": self.frame.T1,
            "frame.T2": self.frame.T2,
            "solver.j_max": self.solver.j_max,
            "solver.j_max_multi": self.solver.j_max_multi,
            "solver.u_max": self.solver.u_max,
            "solver.mpa_iterations": self.solver.mpa_iterations,
            "sweep.trials": self.sweep.trials,
        }
        counts.update({f"grids.{k}": v for k, v in dataclasses.asdict(self.grids).items()})
        for name in ("N_y", "N_z", "L"):
            for i, v in enumerate(getattr(self.geometry, name)):
                counts[f"geometry.{name}[{i}]"] = v
        for key, value in counts.items():
            if int(value) < 1:
                raise ConfigurationError(f"{key} must be >= 1, got {value}")
        positives = {
            "solver.delta_chi": self.solver.delta_chi,
            "solver.delta_psi": self.solver.delta_psi,
            "solver.delta_eta": self.solver.delta_eta,
            "solver.delta_omega": self.solver.delta_omega,
            "solver.c": self.solver.c,
            "frame.rho": self.frame.rho,
            "frame.P0": self.frame.P0,
            "geometry.d_bs": self.geometry.d_bs,
            "geometry.d_ris": self.geometry.d_ris,
            "geometry.wavelength": self.geometry.wavelength,
        }
        for key, value in positives.items():
            if not value > 0:
                raise ConfigurationError(f"{key} must be > 0, got {value}")
        if not 0.0 < self.solver.d <= 1.0:
            raise ConfigurationError(f"solver.d must lie in (0, 1], got {self.solver.d}")
        for key in ("xi0", "xi_ue"):
            value = getattr(self.frame, key)
            if not 0.0 < value < 1.0:
                raise ConfigurationError(f"frame.{key} must lie in (0, 1), got {value}")
        if not 0 < self.frame.reference_pilot_slots < self.frame.T1:
            raise ConfigurationError(
                f"frame.reference_pilot_slots must lie in (0, T1), got {self.frame.reference_pilot_slots}")
        if self.frame.pilot_design not in PILOT_DESIGNS:
            raise ConfigurationError(
                f"frame.pilot_design must be one of {PILOT_DESIGNS}, got {self.frame.pilot_design!r}")
        if (self.scenario == "multi-ue" and self.frame.pilot_design == "orthogonal"
                and self.frame.T2 < self.geometry.num_ues):
            raise ConfigurationError(
                f"frame.T2={self.frame.T2} is shorter than the {self.geometry.num_ues} orthogonal UE pilots")
        if len(self.geometry.ris_positions) < 1:
            raise ConfigurationError("geometry.ris_positions must list at least one RIS")
        if self.scenario == "multi-ue" and len(self.geometry.ris_positions) < 2:
            raise ConfigurationError("multi-ue localization needs geometry.ris_positions for >= 2 RISs")
        for axis, (low, high) in zip("xyz", self.geometry.ue_box):
            if low > high:
                raise ConfigurationError(f"geometry.ue_box.{axis} has min {low} > max {high}")
        if not self.sweep.snr_db:
            raise ConfigurationError("sweep.snr_db must list at least one SNR")
        for t1 in self.sweep.t1:
            if t1 < 1:
                raise ConfigurationError(f"sweep.t1 entries must be >= 1, got {t1}")

    @property
    def t1_values(self) -> Tuple[int, ...]:
        return self.sweep.t1 or (self.frame.T1,)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def _section(cls, data: Optional[Dict[str, Any]], key: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigurationError(f"{key} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"Unknown keys in {key}: {', '.join(sorted(unknown))}")
    return cls(**data)


def config_from_dict(data: Dict[str, Any]) -> SimulationConfig:
    """
    從字典建立並驗證 SimulationConfig

    Args:
        data: JSON 設定內容

    Returns:
        SimulationConfig: 已驗證的設定

    Raises:
        ConfigurationError: 欄位不合法
    """
    data = dict(data)
    geometry = dict(data.pop("geometry", None) or {})
    try:
        if "ris_positions" in geometry:
            geometry["ris_positions"] = tuple(
                _tuple3(q, f"geometry.ris_positions[{i}]") for i, q in enumerate(geometry["ris_positions"]))
        for key in ("bs_position", "site_position"):
            if key in geometry:
                geometry[key] = _tuple3(geometry[key], f"geometry.{key}")
        n_ris = len(geometry.get("ris_positions", GeometryConfig.ris_positions))
        for key in ("N_y", "N_z", "L"):
            geometry[key] = _per_ris(geometry.get(key, getattr(GeometryConfig, key)), n_ris,
                                     f"geometry.{key}")
        if "ue_box" in geometry:
            box = geometry["ue_box"]
            if isinstance(box, dict):
                box = [box[axis] for axis in "xyz"]
            geometry["ue_box"] = tuple(tuple(float(v) for v in pair) for pair in box)
        sweep = dict(data.pop("sweep", None) or {})
        if "snr_db" in sweep:
            sweep["snr_db"] = tuple(float(s) for s in sweep["snr_db"])
        if "t1" in sweep:
            sweep["t1"] = tuple(int(t) for t in sweep["t1"])
        config = SimulationConfig(
            scenario=data.pop("scenario", "fixed-site"),
            geometry=_section(GeometryConfig, geometry, "geometry"),
            frame=_section(FrameConfig, data.pop("frame", None), "frame"),
            grids=_section(GridConfig, data.pop("grids", None), "grids"),
            solver=_section(SolverConfig, data.pop("solver", None), "solver"),
            gain_model=_section(GainConfig, data.pop("gain_model", None), "gain_model"),
            sweep=_section(SweepConfig, sweep, "sweep"),
            methods=tuple(data.pop("methods", ()) or ()),
            bs_ris_source=data.pop("bs_ris_source", "truth"),
            on_grid=bool(data.pop("on_grid", False)),
            codebook_path=data.pop("codebook_path", None),
            trace=bool(data.pop("trace", False)),
        )
    except (TypeError, ValueError, KeyError) as e:
        raise ConfigurationError(f"Malformed configuration: {e}") from e
    data.pop("description", None)
    if data:
        raise ConfigurationError(f"Unknown top-level keys: {', '.join(sorted(data))}")
    config.validate()
    return config


def load_config(path: Optional[Union[str, Path]] = None) -> SimulationConfig:
    """
    讀取 JSON 設定檔

    Args:
        path: 設定檔路徑；未指定時使用 ISAC_CONFIG 環境變數，再退回 config.example.json

    Returns:
        SimulationConfig: 已驗證的設定
    """
    path = Path(path or os.getenv("ISAC_CONFIG", DEFAULT_CONFIG_PATH))
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigurationError(f"Config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Config file {path} is not valid JSON: {e}")
    config = config_from_dict(data)
    logger.info(f"已載入設定 {path} (scenario={config.scenario})")
    return config


def apply_overrides(config: SimulationConfig, scenario: Optional[str] = None,
                    methods: Optional[Sequence[str]] = None,
                    snr_db: Optional[Sequence[float]] = None,
                    t1: Optional[Sequence[int]] = None,
                    trials: Optional[int] = None, seed: Optional[int] = None,
                    trace: Optional[bool] = None) -> SimulationConfig:
    """
    以 CLI 參數覆寫設定，回傳新的已驗證副本

    None 表示保留設定檔中的值。
    """
    sweep = config.sweep
    sweep_changes: Dict[str, Any] = {}
    if snr_db is not None:
        sweep_changes["snr_db"] = tuple(float(s) for s in snr_db)
    if t1 is not None:
        sweep_changes["t1"] = tuple(int(t) for t in t1)
    if trials is not None:
        sweep_changes["trials"] = int(trials)
    if seed is not None:
        sweep_changes["seed"] = int(seed)
    changes: Dict[str, Any] = {}
    if sweep_changes:
        changes["sweep"] = dataclasses.replace(sweep, **sweep_changes)
    if scenario is not None:
        changes["scenario"] = scenario
    if methods is not None:
        changes["methods"] = tuple(methods)
    if trace is not None:
        changes["trace"] = bool(trace)
    updated = dataclasses.replace(config, **changes)
    updated.validate()
    return updated


def thread_limit(default: Optional[int] = None) -> int:
    """ISAC_THREADS 環境變數指定的平行度上限"""
    raw = os.getenv("ISAC_THREADS")
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ConfigurationError(f"ISAC_THREADS must be an integer, got {raw!r}")
        if value < 1:
            raise ConfigurationError(f"ISAC_THREADS must be >= 1, got {value}")
        return value
    return default or max(1, min(4, os.cpu_count() or 1))

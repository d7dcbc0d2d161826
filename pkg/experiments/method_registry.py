"""
Estimation method registry.

Every method is a provider that turns a Monte Carlo drop into a metrics
report; the registry orders them, tracks per-method success counts and
rejects unknown names.
"""

import logging
import threading
from typing import Any, Callable, Dict, List, Optional, Sequence

from metrics import MetricsReport
from models.multiue_estimator import Algorithm3Config, MultiUeEstimator, localize_from_pilots
from models.omp_estimator import OmpConfig, OmpEstimator
from models.reference_estimator import OrthogonalPilotEstimator, PerfectCsiEstimator
from models.sbl_estimator import Algorithm1Config, StructuredSblEstimator
from models.uamp_sbl import UampConfig
from experiments.scenarios import (
    FixedSiteDrop,
    MultiUeDrop,
    evaluate_fixed_site,
    evaluate_localization,
    evaluate_multiue,
    evaluate_reference,
    stage_one_drop,
)
from utils.config_utils import SimulationConfig
from utils.trace_utils import TraceWriter

logger = logging.getLogger(__name__)


class MethodRegistryError(Exception):
    """Base exception for method registry operations"""
    pass


class UnknownMethodError(MethodRegistryError):
    """Requested method is not registered"""
    pass


class MethodProvider:
    """Wrapper for one estimation method"""

    def __init__(self, name: str, scenario: str, runner: Callable[..., MetricsReport],
                 description: str = "", enabled: bool = True, priority: int = 10):
        self.name = name
        self.scenario = scenario
        self.runner = runner
        self.description = description
        self.enabled = enabled
        self.priority = priority
        self.success_count = 0
        self.failure_count = 0
        self.last_error: Optional[str] = None
        self._lock = threading.Lock()

    def run(self, drop: Any, trace: Optional[TraceWriter] = None) -> MetricsReport:
        """Run this method on one drop; failures are counted and re-raised"""
        try:
            report = self.runner(drop, trace)
        except Exception as e:
            with self._lock:
                self.failure_count += 1
                self.last_error = str(e)
            raise
        with self._lock:
            self.success_count += 1
            self.last_error = None
        return report

    @property
    def success_rate(self) -> float:
        total = self.success_count + self.failure_count
        if total == 0:
            return 0.0
        return self.success_count / total

    def __str__(self):
        return f"{self.name} (Success: {self.success_count}, Failed: {self.failure_count}, Rate: {self.success_rate:.1%})"


class MethodRegistry:
    """Named estimation methods for both scenarios"""

    def __init__(self):
        self.logger = logging.getLogger(__name__)
        self.providers: List[MethodProvider] = []

    def register(self, provider: MethodProvider) -> None:
        if any(p.name == provider.name for p in self.providers):
            raise MethodRegistryError(f"Method {provider.name} is already registered")
        self.providers.append(provider)
        self.providers.sort(key=lambda p: p.priority)

    def get(self, name: str) -> MethodProvider:
        provider = next((p for p in self.providers if p.name == name), None)
        if provider is None:
            raise UnknownMethodError(
                f"Unknown method {name!r}; available: {', '.join(self.names())}")
        return provider

    def names(self, scenario: Optional[str] = None) -> List[str]:
        return [p.name for p in self.providers
                if p.enabled and (scenario is None or p.scenario == scenario)]

    def select(self, scenario: str, names: Optional[Sequence[str]] = None) -> List[MethodProvider]:
        """
        Providers to run for a scenario, in registry order.

        Args:
            scenario: "fixed-site" or "multi-ue"
            names: explicit selection; every enabled method of the scenario when empty

        Raises:
            UnknownMethodError: a name is not registered
            MethodRegistryError: a name belongs to the other scenario
        """
        if not names:
            return [p for p in self.providers if p.enabled and p.scenario == scenario]
        chosen = []
        for name in names:
            provider = self.get(name)
            if provider.scenario != scenario:
                raise MethodRegistryError(
                    f"Method {name} belongs to scenario {provider.scenario}, not {scenario}")
            chosen.append(provider)
        return sorted(chosen, key=lambda p: p.priority)

    def set_method_enabled(self, name: str, enabled: bool) -> None:
        self.get(name).enabled = enabled
        self.logger.info(f"Method {name} {'enabled' if enabled else 'disabled'}")

    def get_method_stats(self) -> List[Dict[str, Any]]:
        return [{
            'name': p.name,
            'scenario': p.scenario,
            'enabled': p.enabled,
            'priority': p.priority,
            'success_count': p.success_count,
            'failure_count': p.failure_count,
            'success_rate': p.success_rate,
            'last_error': p.last_error,
        } for p in self.providers]

    def reset_method_stats(self) -> None:
        for p in self.providers:
            p.success_count = 0
            p.failure_count = 0
            p.last_error = None

    def __str__(self):
        if not self.providers:
            return "MethodRegistry (no methods)"
        return "MethodRegistry:\n" + "\n".join(f"  - [{p.scenario}] {p}" for p in self.providers)


def algorithm1_config(config: SimulationConfig, **changes: Any) -> Algorithm1Config:
    s = config.solver
    base = Algorithm1Config(
        rho=config.frame.rho, delta_chi=s.delta_chi, delta_omega=s.delta_omega, j_max=s.j_max,
        c=s.c, d=s.d, beta_max=s.beta_max, gamma_max=s.gamma_max,
        normalize_gradient=s.normalize_gradient)
    for key, value in changes.items():
        setattr(base, key, value)
    return base


def algorithm3_config(config: SimulationConfig) -> Algorithm3Config:
    s = config.solver
    return Algorithm3Config(
        delta_eta=s.delta_eta, j_max=s.j_max_multi, c=s.c, d=s.d,
        normalize_gradient=s.normalize_gradient, mpa_iterations=s.mpa_iterations,
        uamp=UampConfig(delta_psi=s.delta_psi, u_max=s.u_max, beta_max=s.beta_max))


def _bind(trace: Optional[TraceWriter], method: str) -> Optional[TraceWriter]:
    return trace.bind(method=method) if trace is not None else None


def baselines(config: SimulationConfig) -> MethodRegistry:
    """
    Registry of every method for the configured solver settings.

    Fixed site: algorithm1, sbl-ongrid, omp-ongrid, omp-offgrid, pure-pilot,
    perfect-csi, orthogonal-pilot, single-ris.
    Multi-UE: algorithm3, pilot-ls, algorithm3-genie.
    """
    registry = MethodRegistry()
    s = config.solver

    def sbl_runner(estimator: StructuredSblEstimator):
        def run(drop: FixedSiteDrop, trace: Optional[TraceWriter]) -> MetricsReport:
            known = drop.data if estimator.genie_symbols else None
            estimate = estimator.estimate(drop.problem(), known, _bind(trace, estimator.name))
            return evaluate_fixed_site(drop, estimate)
        return run

    registry.register(MethodProvider(
        "algorithm1", "fixed-site",
        sbl_runner(StructuredSblEstimator(algorithm1_config(config))),
        "Structure-aware off-grid SBL with joint data detection", priority=1))
    registry.register(MethodProvider(
        "sbl-ongrid", "fixed-site",
        sbl_runner(StructuredSblEstimator(algorithm1_config(config, refine_grids=False),
                                                        name="sbl-ongrid")),
        "Algorithm 1 with grid refinement frozen", priority=2))

    def omp_runner(estimator: OmpEstimator):
        def run(drop: FixedSiteDrop, trace: Optional[TraceWriter]) -> MetricsReport:
            return evaluate_fixed_site(drop, estimator.estimate(drop.problem()))
        return run

    registry.register(MethodProvider(
        "omp-ongrid", "fixed-site",
        omp_runner(OmpEstimator(OmpConfig(outer_iterations=s.omp_outer_iterations), "omp-ongrid")),
        "On-grid OMP alternating with data detection", priority=3))
    registry.register(MethodProvider(
        "omp-offgrid", "fixed-site",
        omp_runner(OmpEstimator(OmpConfig(outer_iterations=s.omp_outer_iterations,
                                          refine_steps=s.omp_refine_steps, c=s.c, d=s.d,
                                          normalize_gradient=s.normalize_gradient), "omp-offgrid")),
        "OMP followed by sub-gradient grid refinement", priority=4))
    registry.register(MethodProvider(
        "pure-pilot", "fixed-site",
        sbl_runner(StructuredSblEstimator(algorithm1_config(config), name="pure-pilot",
                                        genie_symbols=True)),
        "Algorithm 1 with the data symbols known (lower bound)", priority=5))

    perfect = PerfectCsiEstimator()

    def perfect_runner(drop: FixedSiteDrop, trace: Optional[TraceWriter]) -> MetricsReport:
        estimate = perfect.estimate(drop.received, drop.true_cascade, drop.pilot, drop.xi,
                                    drop.N_0, drop.P_0)
        return evaluate_reference(drop, estimate, superimposed=True)

    registry.register(MethodProvider("perfect-csi", "fixed-site", perfect_runner,
                                     "Detection with the true cascaded channel", priority=6))

    orthogonal = OrthogonalPilotEstimator(config.frame.reference_pilot_slots)

    def orthogonal_runner(drop: FixedSiteDrop, trace: Optional[TraceWriter]) -> MetricsReport:
        received = drop.orthogonal_reference(orthogonal.pilot_slots)
        estimate = orthogonal.estimate(received, drop.pilot, drop.N_0, drop.P_0)
        return evaluate_reference(drop, estimate, superimposed=False)

    registry.register(MethodProvider("orthogonal-pilot", "fixed-site", orthogonal_runner,
                                     "Time-multiplexed pilots, no sensing (SE reference)",
                                     priority=7))

    single = StructuredSblEstimator(algorithm1_config(config), name="single-ris")

    def single_runner(drop: FixedSiteDrop, trace: Optional[TraceWriter]) -> MetricsReport:
        if drop.channels.num_ris < 2:
            raise MethodRegistryError("single-ris needs a deployment with two RISs")
        reduced = drop.keep_ris([0])
        return sbl_runner(single)(reduced, trace)

    registry.register(MethodProvider("single-ris", "fixed-site", single_runner,
                                     "Algorithm 1 with the second RIS switched off", priority=8))

    a3_config = algorithm3_config(config)

    stage_one = StructuredSblEstimator(algorithm1_config(config), name="stage-one")

    def bs_ris_input(drop: MultiUeDrop) -> Optional[list]:
        if config.bs_ris_source != "fixed-site":
            return None
        stage = stage_one_drop(config, drop)
        return stage_one.estimate(stage.problem()).reconstruct_bs_ris()

    def a3_runner(name: str, genie: bool):
        estimator = MultiUeEstimator(a3_config, name=name, genie_codewords=genie)

        def run(drop: MultiUeDrop, trace: Optional[TraceWriter]) -> MetricsReport:
            H_r = bs_ris_input(drop)
            estimate = estimator.estimate(drop.problem(H_r), drop.frame.data_indices,
                                          trace_writer=_bind(trace, name))
            return evaluate_multiue(drop, estimate, H_r)
        return run

    registry.register(MethodProvider("algorithm3", "multi-ue", a3_runner("algorithm3", False),
                                     "SCMA-UAMP-SBL detection, angle refinement and localization",
                                     priority=1))

    def pilot_ls_runner(drop: MultiUeDrop, trace: Optional[TraceWriter]) -> MetricsReport:
        _, result = localize_from_pilots(drop.problem(bs_ris_input(drop)), a3_config.pilot_rcond)
        return evaluate_localization(drop, result)

    registry.register(MethodProvider("pilot-ls", "multi-ue", pilot_ls_runner,
                                     "Localization from the pilot-only LS coefficients",
                                     priority=2))
    registry.register(MethodProvider("algorithm3-genie", "multi-ue",
                                     a3_runner("algorithm3-genie", True),
                                     "Algorithm 3 with the codewords known", priority=3))
    return registry

"""
Monte Carlo experiment runner.

Trials run in worker threads bounded by a semaphore; each trial draws one
drop per sweep point and runs every selected method on it. Results are
reduced in trial order, so the CSV does not depend on completion order.
"""

import asyncio
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from metrics import MetricsReport
from processors.scma_processor import ScmaCodebook, build_default_codebook, load_codebook
from experiments.method_registry import MethodProvider, MethodRegistry, baselines
from experiments.scenarios import draw_fixed_site, draw_multiue
from utils.config_utils import SimulationConfig, thread_limit
from utils.trace_utils import TraceWriter

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["scenario", "method", "snr_db", "t1", "t2", "metric", "mean", "stderr", "trials", "seed0"]
METRIC_ORDER = ["nmse_hr", "nmse_phi", "ber", "se", "effective_throughput",
                "localization_error", "ebn0_db"]


@dataclass
class TrialOutcome:
    scenario: str
    method: str
    snr_db: float
    t1: int
    t2: int
    trial: int
    report: Optional[MetricsReport] = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.report is None


@dataclass
class ExperimentResult:
    rows: List[Dict[str, Any]]
    outcomes: List[TrialOutcome] = field(default_factory=list)

    @property
    def failed_trials(self) -> int:
        return sum(1 for o in self.outcomes if o.failed)

    @property
    def partial(self) -> bool:
        return self.failed_trials > 0


def _format(value: float) -> str:
    return format(float(value), ".17g")


def aggregate(outcomes: Sequence[TrialOutcome], seed0: int) -> List[Dict[str, Any]]:
    """
    One row per (scenario, method, snr, t1, t2, metric) with the mean and
    standard error over the successful trials.

    Group order follows first appearance in outcomes.
    """
    groups: Dict[Tuple, List[TrialOutcome]] = {}
    for outcome in outcomes:
        key = (outcome.scenario, outcome.method, outcome.snr_db, outcome.t1, outcome.t2)
        groups.setdefault(key, []).append(outcome)

    rows = []
    for (scenario, method, snr_db, t1, t2), members in groups.items():
        values: Dict[str, List[float]] = {}
        for o in sorted(members, key=lambda o: o.trial):
            if o.report is None:
                continue
            for metric, value in o.report.values().items():
                values.setdefault(metric, []).append(value)
        for metric in sorted(values, key=lambda m: (METRIC_ORDER.index(m) if m in METRIC_ORDER
                                                     else len(METRIC_ORDER), m)):
            data = np.asarray(values[metric], dtype=float)
            n = data.size
            stderr = float(np.std(data, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
            rows.append({
                "scenario": scenario, "method": method, "snr_db": _format(snr_db),
                "t1": t1, "t2": t2, "metric": metric, "mean": _format(np.mean(data)),
                "stderr": _format(stderr), "trials": n, "seed0": seed0,
            })
    return rows


def write_csv(rows: Iterable[Dict[str, Any]], path: Union[str, Path]) -> None:
    """Write result rows with the fixed column set."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


class ExperimentRunner:
    """Sweeps SNR and T1 over seeded trials for the selected methods"""

    def __init__(self, config: SimulationConfig, registry: Optional[MethodRegistry] = None,
                 threads: Optional[int] = None, trace_path: Optional[Union[str, Path]] = None,
                 progress: bool = True, codebook: Optional[ScmaCodebook] = None):
        self.logger = logging.getLogger(__name__)
        self.config = config
        self.registry = registry or baselines(config)
        self.methods = self.registry.select(config.scenario, config.methods)
        self.threads = thread_limit(threads)
        self.progress = progress
        self.trace = TraceWriter(trace_path) if config.trace or trace_path else None
        self.codebook = codebook
        if config.scenario == "multi-ue" and self.codebook is None:
            self.codebook = (load_codebook(config.codebook_path) if config.codebook_path
                             else build_default_codebook())

    def sweep_points(self) -> List[Tuple[float, int]]:
        return [(snr, t1) for snr in self.config.sweep.snr_db for t1 in self.config.t1_values]

    def _draw(self, snr_db: float, t1: int, trial: int):
        if self.config.scenario == "fixed-site":
            return draw_fixed_site(self.config, snr_db, t1, trial)
        return draw_multiue(self.config, self.codebook, snr_db, trial)

    def run_trial(self, snr_db: float, t1: int, trial: int) -> List[TrialOutcome]:
        """All methods on one drop; failures are recorded per method."""
        t2 = self.config.frame.T2
        scenario = self.config.scenario

        def outcome(provider: MethodProvider, **kwargs) -> TrialOutcome:
            return TrialOutcome(scenario, provider.name, snr_db, t1, t2, trial, **kwargs)

        try:
            drop = self._draw(snr_db, t1, trial)
        except Exception as e:
            self.logger.error(f"❌ Drop {trial} at {snr_db} dB failed: {e}")
            return [outcome(p, error=str(e)) for p in self.methods]

        results = []
        trace = self.trace.bind(trial=trial, snr_db=snr_db, t1=t1) if self.trace else None
        for provider in self.methods:
            try:
                results.append(outcome(provider, report=provider.run(drop, trace)))
            except Exception as e:
                self.logger.error(f"❌ {provider.name} failed on trial {trial} at {snr_db} dB: {e}")
                results.append(outcome(provider, error=str(e)))
        return results

    async def run_async(self) -> ExperimentResult:
        points = self.sweep_points()
        jobs = [(snr, t1, trial) for snr, t1 in points for trial in range(self.config.sweep.trials)]
        semaphore = asyncio.Semaphore(self.threads)
        bar = tqdm(total=len(jobs), desc=self.config.scenario, disable=not self.progress,
                   dynamic_ncols=True)

        async def worker(job):
            async with semaphore:
                result = await asyncio.to_thread(self.run_trial, *job)
            bar.update(1)
            return result

        self.logger.info(f"Running {len(jobs)} trials of {len(self.methods)} methods "
                         f"on {self.threads} workers")
        try:
            per_job = await asyncio.gather(*(worker(job) for job in jobs))
        finally:
            bar.close()
        outcomes = [o for batch in per_job for o in batch]
        rows = aggregate(outcomes, self.config.sweep.seed)
        result = ExperimentResult(rows=rows, outcomes=outcomes)
        if result.partial:
            self.logger.warning(f"⚠️ {result.failed_trials} method trials failed")
        else:
            self.logger.info(f"✅ {len(outcomes)} method trials completed")
        return result

    def run(self) -> ExperimentResult:
        return asyncio.run(self.run_async())


async def run_experiment_async(config: SimulationConfig, out: Optional[Union[str, Path]] = None,
                               threads: Optional[int] = None,
                               trace_path: Optional[Union[str, Path]] = None,
                               progress: bool = True) -> ExperimentResult:
    runner = ExperimentRunner(config, threads=threads, trace_path=trace_path, progress=progress)
    result = await runner.run_async()
    if out is not None:
        write_csv(result.rows, out)
        logger.info(f"✅ Wrote {len(result.rows)} rows to {out}")
    return result


def run_experiment(config: SimulationConfig, out: Optional[Union[str, Path]] = None,
                   threads: Optional[int] = None, trace_path: Optional[Union[str, Path]] = None,
                   progress: bool = True) -> ExperimentResult:
    """
    Run the configured sweep and optionally write the CSV.

    Returns:
        ExperimentResult: aggregated rows and every per-method trial outcome
    """
    return asyncio.run(run_experiment_async(config, out, threads, trace_path, progress))

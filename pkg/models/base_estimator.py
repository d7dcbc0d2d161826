import logging
from dataclasses import dataclass
from typing import Any, Callable, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)


class EstimatorError(Exception):
    """Base exception for estimation methods"""
    pass


class NumericalConditioningError(EstimatorError):
    """A regularized system is too ill-conditioned to solve"""
    pass


class NumericalError(EstimatorError):
    """Non-finite values appeared inside a solver"""
    pass


class BaseEstimator:
    """基礎估計器類"""

    def estimate(self, problem: Any) -> Any:
        """
        對一個觀測區塊執行估計

        Args:
            problem: 方法對應的問題描述 (接收訊號、已知導頻、字典網格等)

        Returns:
            Any: 方法對應的估計結果
        """
        raise NotImplementedError("子類必須實現此方法")

    def get_method_name(self) -> str:
        """獲取方法名稱"""
        raise NotImplementedError("子類必須實現此方法")

    def get_method_version(self) -> str:
        """獲取方法版本"""
        raise NotImplementedError("子類必須實現此方法")


@dataclass(frozen=True)
class StepSchedule:
    """Decaying step size eps_j = (range_max - range_min) / (c (1 + d j))."""

    c: float = 50.0
    d: float = 0.5
    range_max: float = 1.0
    range_min: float = -1.0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError(f"learning rate c must be positive, got {self.c}")
        if self.d < 0:
            raise ValueError(f"decay d must be non-negative, got {self.d}")
        if self.range_max <= self.range_min:
            raise ValueError(f"range_max {self.range_max} must exceed range_min {self.range_min}")

    def step(self, j: int, span: Optional[np.ndarray] = None) -> Any:
        """Step at iteration j; `span` replaces range_max - range_min per entry."""
        width = (self.range_max - self.range_min) if span is None else np.asarray(span, dtype=float)
        return width / (self.c * (1.0 + self.d * j))


def ensure_finite(name: str, value: np.ndarray, iteration: Optional[int] = None) -> np.ndarray:
    """Raise NumericalError if value carries NaN or inf."""
    if not np.all(np.isfinite(value)):
        where = f" at iteration {iteration}" if iteration is not None else ""
        raise NumericalError(f"{name} became non-finite{where}")
    return value


def signal_scale(y: np.ndarray) -> float:
    """RMS amplitude of y, 1.0 for an all-zero signal.

    Solvers with fixed hyperprior constants run on y / signal_scale(y) and
    rescale their estimates.
    """
    y = np.asarray(y)
    rms = float(np.sqrt(np.mean(np.abs(y) ** 2))) if y.size else 0.0
    return rms if rms > 0.0 and np.isfinite(rms) else 1.0


def normalize_direction(grad: np.ndarray) -> np.ndarray:
    """Scale so the largest magnitude is 1; zero stays zero."""
    peak = float(np.max(np.abs(grad))) if grad.size else 0.0
    return grad if peak == 0.0 else grad / peak


def backtracking_step(objective: Callable[[np.ndarray], float], x: np.ndarray,
                      direction: np.ndarray, step: Any, lower: np.ndarray, upper: np.ndarray,
                      maximize: bool = True, max_backtracks: int = 10,
                      current: Optional[float] = None) -> Tuple[np.ndarray, float, bool]:
    """
    Move x along direction, halving the step until the objective does not get worse.

    Args:
        objective: surrogate evaluated at candidate points
        x: current point
        direction: search direction (already signed for ascent or descent)
        step: scalar or per-entry step size
        lower, upper: box the candidate is clamped to
        maximize: whether larger objective values are better
        max_backtracks: number of halvings before giving up
        current: objective at x when already known

    Returns:
        Tuple[np.ndarray, float, bool]: accepted point, its objective value, whether a move happened
    """
    base = objective(x) if current is None else current
    better = (lambda new: new >= base) if maximize else (lambda new: new <= base)
    step = np.asarray(step, dtype=float)
    for _ in range(max_backtracks + 1):
        candidate = np.clip(x + step * direction, lower, upper)
        value = objective(candidate)
        if np.isfinite(value) and better(value):
            return candidate, float(value), not np.array_equal(candidate, x)
        step = step / 2.0
    logger.debug("Backtracking exhausted, keeping the previous grid")
    return x, float(base), False

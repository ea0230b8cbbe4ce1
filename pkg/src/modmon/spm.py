"""EWMA control chart for a scalar monitoring statistic."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from modmon.errors import ConfigError, InsufficientData

DEFAULT_ALPHA = 0.2
SIGMA_MULTIPLIER = 3.0


def _check_alpha(alpha: float):
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")


@dataclass(frozen=True)
class EwmaChart:
    alpha: float
    mu_hat: float
    sigma_hat: float
    z0: float

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.sigma_hat < 0:
            raise ConfigError("sigma_hat must be nonnegative")

    @property
    def asymptotic_half_width(self) -> float:
        return SIGMA_MULTIPLIER * self.sigma_hat * np.sqrt(self.alpha / (2.0 - self.alpha))


@dataclass(frozen=True, eq=False)
class MonitorResult:
    """Phase II trace. ``alarm_indices`` and ``first_alarm`` are 1-based steps."""

    z_series: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    alarm_indices: tuple
    first_alarm: Optional[int]

    @property
    def steps(self) -> int:
        return len(self.z_series)


def fit_phase1(scores: Sequence[float], alpha: float = DEFAULT_ALPHA) -> EwmaChart:
    """Sample mean and (m-1)-denominator standard deviation of Phase I scores."""
    _check_alpha(alpha)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size < 2:
        raise InsufficientData(f"need at least 2 Phase I scores, got {scores.size}")
    mu = float(scores.mean())
    sigma = float(scores.std(ddof=1))
    return EwmaChart(alpha=alpha, mu_hat=mu, sigma_hat=sigma, z0=mu)


def ewma_update(z_prev: float, s_t: float, alpha: float) -> float:
    # z_prev + alpha (s - z_prev) == alpha s + (1 - alpha) z_prev, and is exact
    # at the fixed point s == z_prev.
    return z_prev + alpha * (s_t - z_prev)


def control_limits(chart: EwmaChart, t) -> tuple:
    """Time-varying 3-sigma limits at Phase II step ``t`` (1-based)."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 1):
        raise ConfigError("control limits are defined for t >= 1")
    a = chart.alpha
    half = SIGMA_MULTIPLIER * chart.sigma_hat * np.sqrt(
        a / (2.0 - a) * (1.0 - (1.0 - a) ** (2.0 * t_arr))
    )
    if half.ndim == 0:
        half = float(half)
    return chart.mu_hat - half, chart.mu_hat + half


def monitor(chart: EwmaChart, phase2_scores: Sequence[float]) -> MonitorResult:
    """Run the EWMA over Phase II; monitoring continues after the first alarm."""
    scores = np.asarray(phase2_scores, dtype=np.float64)
    z = np.empty(scores.size)
    current = chart.z0
    for i, s in enumerate(scores):
        current = ewma_update(current, float(s), chart.alpha)
        z[i] = current
    steps = np.arange(1, scores.size + 1)
    lower, upper = control_limits(chart, steps) if scores.size else (np.empty(0), np.empty(0))
    lower = np.broadcast_to(lower, z.shape).copy()
    upper = np.broadcast_to(upper, z.shape).copy()
    alarms = tuple(int(i) for i in steps[(z < lower) | (z > upper)])
    return MonitorResult(
        z_series=z,
        lower=lower,
        upper=upper,
        alarm_indices=alarms,
        first_alarm=alarms[0] if alarms else None,
    )

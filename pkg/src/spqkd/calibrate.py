"""Parameter recovery from measurement data.

Saturation-curve and lifetime fits mirror the source characterization;
calibrate_q inverts the expected-QBER model so a measured error rate fixes
the misalignment parameter of a scenario.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .errors import FitDiverged, Infeasible, InsufficientDecay
from .photonics import SaturationModel
from .timetag import DelayHistogram

# Bins averaged for the background estimate, taken immediately before the
# histogram rise.
N_BACKGROUND_BINS = 20
MIN_TAIL_BINS = 5


@dataclass(frozen=True)
class PowerRatePoint:
    power: float
    rate_hz: float

    def __post_init__(self) -> None:
        if self.power < 0 or self.rate_hz < 0:
            raise ValueError("power and rate_hz must be >= 0")


def read_saturation_csv(path: str | Path) -> list[PowerRatePoint]:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return [PowerRatePoint(power=float(p), rate_hz=float(r)) for p, r in rows]


def fit_saturation(points: Sequence[PowerRatePoint]) -> tuple[SaturationModel, float]:
    """Least-squares fit of R(P) = R_inf * P / (P + P_sat).

    Deterministic: starts from r_inf = 2 * max(rate), p_sat = median(power).
    Returns the fitted model and the root-mean-square residual. Raises
    FitDiverged when the optimizer cannot do at least as well as the
    starting point.
    """
    powers = np.array([pt.power for pt in points], dtype=float)
    rates = np.array([pt.rate_hz for pt in points], dtype=float)
    if np.unique(powers).size < 3:
        raise ValueError("need at least 3 points with distinct powers")

    def residuals(theta: np.ndarray) -> np.ndarray:
        r_inf, p_sat = theta
        return r_inf * powers / (powers + p_sat) - rates

    x0 = np.array([2.0 * rates.max(), float(np.median(powers[powers > 0]))])
    rmse0 = float(np.sqrt(np.mean(residuals(x0) ** 2)))
    result = least_squares(residuals, x0, bounds=([1e-12, 1e-12], [np.inf, np.inf]))
    rmse = float(np.sqrt(np.mean(result.fun**2)))
    if not result.success or rmse > rmse0 + 1e-12:
        raise FitDiverged(f"saturation fit stalled (rmse {rmse:.4g} vs start {rmse0:.4g})")
    model = SaturationModel(r_inf_hz=float(result.x[0]), p_sat=float(result.x[1]))
    return model, rmse


def fit_lifetime(histogram: DelayHistogram) -> tuple[float, float]:
    """Exponential decay constant from a delay histogram.

    Background is the mean of the bins just before the rise; the tail after
    the peak is fitted by weighted least squares on log(counts - background)
    with Poisson weights. Returns (lifetime_ns, one-sigma uncertainty).
    """
    counts = histogram.counts.astype(np.float64)
    peak = int(np.argmax(counts))
    bg_lo = max(0, peak - N_BACKGROUND_BINS)
    background = float(np.mean(counts[bg_lo:peak])) if peak > 0 else 0.0

    floor = 3.0 * np.sqrt(background) if background > 0 else 0.0
    tail_bins: list[int] = []
    for j in range(peak + 1, counts.size):
        net = counts[j] - background
        if net <= floor or net <= 0:
            break
        tail_bins.append(j)
    if len(tail_bins) < MIN_TAIL_BINS:
        raise InsufficientDecay(
            f"only {len(tail_bins)} tail bins above background (need {MIN_TAIL_BINS})"
        )
    idx = np.array(tail_bins)
    net = counts[idx] - background
    x = idx * histogram.bin_width_ns
    y = np.log(net)
    weights = np.sqrt(net)  # 1/sigma of log counts under Poisson statistics
    coeffs, cov = np.polyfit(x, y, 1, w=weights, cov="unscaled")
    slope = coeffs[0]
    if slope >= 0:
        raise InsufficientDecay("tail is not decaying")
    lifetime = -1.0 / slope
    sigma_slope = float(np.sqrt(cov[0, 0]))
    return float(lifetime), sigma_slope * lifetime**2


def calibrate_q(
    measured_qber: float, *, p_click: float, p_signal: float, p_dc: float
) -> float:
    """Misalignment error rate q that reproduces a measured QBER.

    Inverts QBER = (q * p_signal + p_dc / 2) / p_click. Raises Infeasible
    when the dark floor alone exceeds the measurement.
    """
    if p_click <= 0:
        raise Infeasible("p_click must be > 0")
    dark_floor = (p_dc / 2.0) / p_click
    if measured_qber < dark_floor:
        raise Infeasible(
            f"measured QBER {measured_qber} below dark floor {dark_floor}"
        )
    excess = measured_qber * p_click - p_dc / 2.0
    if excess == 0.0:
        return 0.0
    if p_signal <= 0:
        raise Infeasible("no signal probability to attribute the excess QBER to")
    return excess / p_signal

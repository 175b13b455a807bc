"""Physical models: source statistics, polarization projection, channel and detectors.

Everything here is a pure function of its inputs. Random sampling helpers
take an explicit ``numpy.random.Generator`` so that callers own the stream
state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidStatistics

# B92 encoding and analysis angles (degrees).  Bit 0 is sent as vertical
# polarization, bit 1 as +45.  The conclusive-0 arm projects onto -45
# (orthogonal to +45), the conclusive-1 arm onto horizontal (orthogonal to V).
V_ANGLE_DEG = 90.0
PLUS45_ANGLE_DEG = 45.0
CONCLUSIVE0_ANALYZER_DEG = 135.0
CONCLUSIVE1_ANALYZER_DEG = 0.0

_PROB_TOL = 1e-12


@dataclass(frozen=True)
class SourceParams:
    """Photon-statistics and timing description of the emitter.

    mu is the mean photon number per pulse at Alice's input; g2_zero the
    second-order correlation at zero delay.  sync_delay_ns is the fixed
    electronic delay between the trigger edge and the emission peak.
    jitter_ns adds an optional Gaussian spread to emission times (default
    off; the timing model is sync delay plus an exponential lifetime draw).
    """

    mu: float
    g2_zero: float
    lifetime_ns: float
    rep_rate_hz: float
    sync_delay_ns: float = 0.0
    jitter_ns: float = 0.0

    def __post_init__(self) -> None:
        if self.mu < 0:
            raise InvalidStatistics(f"mu must be >= 0, got {self.mu}")
        if self.g2_zero < 0:
            raise InvalidStatistics(f"g2_zero must be >= 0, got {self.g2_zero}")
        if self.lifetime_ns <= 0:
            raise InvalidStatistics(f"lifetime_ns must be > 0, got {self.lifetime_ns}")
        if self.rep_rate_hz <= 0:
            raise InvalidStatistics(f"rep_rate_hz must be > 0, got {self.rep_rate_hz}")
        if self.jitter_ns < 0:
            raise InvalidStatistics(f"jitter_ns must be >= 0, got {self.jitter_ns}")
        if self.g2_zero * self.mu**2 / 2.0 > self.mu + _PROB_TOL:
            raise InvalidStatistics(
                "two-photon weight g2*mu^2/2 exceeds the mean photon number"
            )

    @property
    def period_ns(self) -> float:
        return 1e9 / self.rep_rate_hz


@dataclass(frozen=True)
class PhotonNumberDist:
    """Per-pulse photon-number probabilities truncated at n = 2."""

    p0: float
    p1: float
    p2: float

    def __post_init__(self) -> None:
        for name, p in (("p0", self.p0), ("p1", self.p1), ("p2", self.p2)):
            if not -_PROB_TOL <= p <= 1.0 + _PROB_TOL:
                raise InvalidStatistics(f"{name} = {p} outside [0, 1]")
        total = self.p0 + self.p1 + self.p2
        if abs(total - 1.0) > 1e-9:
            raise InvalidStatistics(f"probabilities sum to {total}, not 1")

    @property
    def mean(self) -> float:
        return self.p1 + 2.0 * self.p2


@dataclass(frozen=True)
class PolAngle:
    """Linear polarization angle in degrees, reduced modulo 180."""

    degrees: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "degrees", self.degrees % 180.0)


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float
    dark_rate_hz: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.efficiency <= 1.0:
            raise InvalidStatistics(f"efficiency {self.efficiency} outside [0, 1]")
        if self.dark_rate_hz < 0:
            raise InvalidStatistics(f"dark_rate_hz must be >= 0, got {self.dark_rate_hz}")


@dataclass(frozen=True)
class ChannelParams:
    """Attenuating channel plus the lumped transmission of the optical setup."""

    loss_db: float
    setup_transmission: float = 1.0

    def __post_init__(self) -> None:
        if self.loss_db < 0:
            raise InvalidStatistics(f"loss_db must be >= 0, got {self.loss_db}")
        if not 0.0 <= self.setup_transmission <= 1.0:
            raise InvalidStatistics(
                f"setup_transmission {self.setup_transmission} outside [0, 1]"
            )

    @property
    def transmission(self) -> float:
        return self.setup_transmission * 10.0 ** (-self.loss_db / 10.0)


@dataclass(frozen=True)
class SaturationModel:
    """Two-parameter emission saturation curve R(P) = R_inf * P / (P + P_sat)."""

    r_inf_hz: float
    p_sat: float

    def __post_init__(self) -> None:
        if self.r_inf_hz <= 0:
            raise InvalidStatistics(f"r_inf_hz must be > 0, got {self.r_inf_hz}")
        if self.p_sat <= 0:
            raise InvalidStatistics(f"p_sat must be > 0, got {self.p_sat}")


def photon_number_dist(source: SourceParams) -> PhotonNumberDist:
    """Build the minimal 3-point photon-number distribution for a source.

    The two-photon weight is fixed by the measured purity,
    p2 = g2(0) * mu^2 / 2, and the single-photon weight by the mean,
    p1 = mu - 2*p2.  Raises InvalidStatistics when the pair (mu, g2) admits
    no such distribution (for example mu large enough that p1 > 1).
    """
    p2 = 0.5 * source.g2_zero * source.mu**2
    p1 = source.mu - 2.0 * p2
    p0 = 1.0 - p1 - p2
    return PhotonNumberDist(p0=p0, p1=p1, p2=p2)


def multiphoton_prob(source: SourceParams) -> float:
    """Multi-photon emission probability P_m = (1/2) mu^2 g2(0)."""
    return 0.5 * source.mu**2 * source.g2_zero


def malus_prob(photon: PolAngle | float, analyzer: PolAngle | float) -> float:
    """Transmission probability of a linearly polarized photon through an analyzer.

    cos^2 of the angle difference; arguments in degrees.
    """
    a = photon.degrees if isinstance(photon, PolAngle) else float(photon)
    b = analyzer.degrees if isinstance(analyzer, PolAngle) else float(analyzer)
    return math.cos(math.radians(a - b)) ** 2


def emission_delay_cdf(t_ns: float, lifetime_ns: float) -> float:
    """Probability that the emission delay after the sync point is below t_ns."""
    if t_ns < 0:
        raise ValueError(f"t_ns must be >= 0, got {t_ns}")
    if lifetime_ns <= 0:
        raise ValueError(f"lifetime_ns must be > 0, got {lifetime_ns}")
    return -math.expm1(-t_ns / lifetime_ns)


def sample_emission_delays(
    rng: np.random.Generator, lifetime_ns: float, size: int
) -> np.ndarray:
    """Draw emission delays (ns) by inverse CDF from the generator's uniform stream."""
    u = rng.random(size)
    return -lifetime_ns * np.log1p(-u)


def saturation_rate(power: float, model: SaturationModel) -> float:
    """Emission rate at a given excitation power under the saturation model."""
    if power < 0:
        raise ValueError(f"power must be >= 0, got {power}")
    return model.r_inf_hz * power / (power + model.p_sat)


@dataclass(frozen=True)
class EfficiencyBudget:
    """Multiplicative transmission chain with per-stage cumulative products."""

    stages: tuple[tuple[str, float], ...]
    cumulative: tuple[float, ...]
    total: float = field(default=1.0)

    def report_lines(self) -> list[str]:
        lines = [f"{'stage':<24}{'transmission':>14}{'cumulative':>14}"]
        for (name, value), cum in zip(self.stages, self.cumulative):
            lines.append(f"{name:<24}{value:>14.6g}{cum:>14.6g}")
        lines.append(f"{'total':<24}{'':>14}{self.total:>14.6g}")
        return lines


def efficiency_budget(
    stages: Iterable[tuple[str, float]] | Sequence[float],
) -> EfficiencyBudget:
    """Multiply a chain of transmissions into an overall system efficiency.

    Accepts (name, value) pairs or bare values; each stage must lie in [0, 1].
    """
    named: list[tuple[str, float]] = []
    for i, stage in enumerate(stages):
        if isinstance(stage, tuple):
            name, value = stage
        else:
            name, value = f"stage{i + 1}", float(stage)
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"stage {name!r} transmission {value} outside [0, 1]")
        named.append((name, value))
    cumulative: list[float] = []
    total = 1.0
    for _, value in named:
        total *= value
        cumulative.append(total)
    return EfficiencyBudget(
        stages=tuple(named), cumulative=tuple(cumulative), total=total
    )

"""Analytic secret-key-rate machinery and the per-pulse probability oracle.

The rate model is the standard single-photon-source bound

    R = (P_click / 2) * [ beta * tau(e / beta) - f(e) * h(e) ]

with beta = (P_click - P_m) / P_click the single-photon click fraction,
P_m = mu^2 g2(0) / 2 the multi-photon emission probability, tau the
privacy-amplification compression against photon-number splitting, f the
error-correction inefficiency and h the binary entropy. The expected error
rate combines optical misalignment with the dark-count floor:

    QBER = q * P_signal / P_click + (P_dc / 2) / P_click.

`click_probability_oracle` computes exact per-pulse outcome probabilities
for the B92 Monte Carlo scenario by enumerating photon number, beamsplitter
branch, analyzer outcome and dark-count combinations; it validates the
event-level engine and the closed forms above.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import DomainError, OutOfTable, SecurityViolation
from .photonics import (
    CONCLUSIVE0_ANALYZER_DEG,
    CONCLUSIVE1_ANALYZER_DEG,
    emission_delay_cdf,
    malus_prob,
    photon_number_dist,
)

if TYPE_CHECKING:
    from .session import ScenarioConfig
    from .timetag import FilterWindow

# Error-correction inefficiency anchors (error rate, factor); linear
# interpolation between anchors, clamped to the first below it.
EC_TABLE: tuple[tuple[float, float], ...] = (
    (0.01, 1.16),
    (0.05, 1.16),
    (0.10, 1.22),
    (0.15, 1.35),
)
EC_TABLE_MAX = EC_TABLE[-1][0]


def binary_entropy(e: float) -> float:
    """Binary Shannon entropy h(e) in bits, with h(0) = h(1) = 0."""
    if not 0.0 <= e <= 1.0:
        raise DomainError(f"binary_entropy defined on [0, 1], got {e}")
    if e == 0.0 or e == 1.0:
        return 0.0
    return -e * math.log2(e) - (1.0 - e) * math.log2(1.0 - e)


def compression_tau(e: float) -> float:
    """Privacy-amplification retention tau(e) = 1 - log2(1 + 4e - 4e^2)."""
    if not 0.0 <= e <= 0.5:
        raise DomainError(f"compression_tau defined on [0, 1/2], got {e}")
    return 1.0 - math.log2(1.0 + 4.0 * e - 4.0 * e * e)


def ec_factor(e: float) -> float:
    """Error-correction inefficiency f(e) from the anchor table."""
    if e < 0.0:
        raise DomainError(f"error rate must be >= 0, got {e}")
    if e > EC_TABLE_MAX:
        raise OutOfTable(f"error rate {e} above tabulated range ({EC_TABLE_MAX})")
    xs = [x for x, _ in EC_TABLE]
    ys = [y for _, y in EC_TABLE]
    return float(np.interp(e, xs, ys))


def beta_factor(p_click: float, p_m: float) -> float:
    """Single-photon click fraction beta = (P_click - P_m) / P_click."""
    if not 0.0 < p_click <= 1.0:
        raise DomainError(f"p_click must be in (0, 1], got {p_click}")
    if p_m < 0.0:
        raise DomainError(f"p_m must be >= 0, got {p_m}")
    if p_m > p_click:
        raise SecurityViolation(
            f"multi-photon probability {p_m} exceeds click probability {p_click}"
        )
    return (p_click - p_m) / p_click


@dataclass(frozen=True)
class SecurityInputs:
    """Per-pulse probabilities and source figures entering the rate equations.

    p_dc is the total dark-count probability over both detectors in the
    filter window, 2 * r_d * delta_t for identical detectors of dark rate
    r_d each.
    """

    p_click: float
    p_signal: float
    p_dc: float
    q: float
    mu: float
    g2_zero: float
    rep_rate_hz: float
    delta_t_ns: float

    def __post_init__(self) -> None:
        for name in ("p_click", "p_signal", "p_dc", "q"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} = {value} outside [0, 1]")
        if self.p_click < self.p_signal:
            raise DomainError(
                f"p_click ({self.p_click}) below p_signal ({self.p_signal})"
            )
        if self.mu < 0 or self.g2_zero < 0:
            raise DomainError("mu and g2_zero must be >= 0")
        if self.rep_rate_hz <= 0 or self.delta_t_ns <= 0:
            raise DomainError("rep_rate_hz and delta_t_ns must be > 0")

    @property
    def p_m(self) -> float:
        return 0.5 * self.mu**2 * self.g2_zero


@dataclass(frozen=True)
class KeyRateReport:
    """Secret-key-rate result with every intermediate term."""

    qber_expected: float
    beta: float
    p_m: float
    tau_value: float
    f_value: float
    h_value: float
    skr_per_pulse: float
    skr_bps: float
    secure: bool


def expected_qber(inputs: SecurityInputs) -> float:
    """Expected QBER from misalignment and the dark floor."""
    if inputs.p_click <= 0:
        raise DomainError("expected_qber requires p_click > 0")
    e = (inputs.q * inputs.p_signal + inputs.p_dc / 2.0) / inputs.p_click
    if not 0.0 <= e <= 1.0:
        raise DomainError(f"expected QBER {e} outside [0, 1]")
    return e


def _rate_report(p_click: float, e: float, p_m: float, rep_rate_hz: float) -> KeyRateReport:
    """Assemble the rate report for a given click probability and error rate.

    Insecure corners are reported rather than raised: beta clamps to 0 when
    multi-photon clicks dominate, tau to 0 past e/beta = 1/2, and f holds
    its last table anchor above the tabulated range. The rate is negative
    in all those regimes and the secure flag is False.
    """
    if p_click <= 0:
        raise DomainError("key rate requires p_click > 0")
    h = binary_entropy(e)
    if p_m >= p_click:
        beta = 0.0
        tau = 0.0
    else:
        beta = (p_click - p_m) / p_click
        e_attr = e / beta
        tau = compression_tau(e_attr) if e_attr <= 0.5 else 0.0
    f = ec_factor(min(e, EC_TABLE_MAX))
    r_per_pulse = 0.5 * p_click * (beta * tau - f * h)
    return KeyRateReport(
        qber_expected=e,
        beta=beta,
        p_m=p_m,
        tau_value=tau,
        f_value=f,
        h_value=h,
        skr_per_pulse=r_per_pulse,
        skr_bps=r_per_pulse * rep_rate_hz,
        secure=r_per_pulse > 0,
    )


def skr_per_pulse(inputs: SecurityInputs) -> KeyRateReport:
    """Secret key rate per pulse for modelled inputs (QBER from expected_qber)."""
    e = expected_qber(inputs)
    return _rate_report(inputs.p_click, e, inputs.p_m, inputs.rep_rate_hz)


def skr_from_observed(
    p_click: float, qber: float, p_m: float, rep_rate_hz: float
) -> KeyRateReport:
    """Rate equation applied to a measured click probability and QBER."""
    if not 0.0 <= qber <= 1.0:
        raise DomainError(f"qber = {qber} outside [0, 1]")
    return _rate_report(p_click, qber, p_m, rep_rate_hz)


@dataclass(frozen=True)
class SweepParams:
    """Scenario-level quantities from which loss-sweep inputs are derived."""

    mu: float
    g2_zero: float
    setup_transmission: float
    det_efficiency: float
    dark_rate_hz: float  # per detector
    q: float
    delta_t_ns: float
    lifetime_ns: float
    rep_rate_hz: float

    def inputs_at(self, loss_db: float) -> SecurityInputs:
        transmission = self.setup_transmission * 10.0 ** (-loss_db / 10.0)
        window_fraction = emission_delay_cdf(self.delta_t_ns, self.lifetime_ns)
        p_signal = self.mu * transmission * self.det_efficiency * window_fraction
        p_dc = 2.0 * self.dark_rate_hz * self.delta_t_ns * 1e-9
        return SecurityInputs(
            p_click=p_signal + p_dc,
            p_signal=p_signal,
            p_dc=p_dc,
            q=self.q,
            mu=self.mu,
            g2_zero=self.g2_zero,
            rep_rate_hz=self.rep_rate_hz,
            delta_t_ns=self.delta_t_ns,
        )


def sweep_loss(
    params: SweepParams, loss_db_values: Sequence[float]
) -> list[tuple[float, KeyRateReport]]:
    """Key-rate curve over channel loss. Negative rates are kept for exact
    cutoff finding; CSV output clamps them at zero with a flag."""
    losses = [float(x) for x in loss_db_values]
    if any(b <= a for a, b in zip(losses, losses[1:])):
        raise ValueError("loss_db_values must be strictly ascending")
    return [(loss, skr_per_pulse(params.inputs_at(loss))) for loss in losses]


def positive_rate_cutoff_db(rows: Sequence[tuple[float, KeyRateReport]]) -> float | None:
    """Largest swept loss with a positive rate, or None if never positive."""
    cutoff = None
    for loss, report in rows:
        if report.skr_per_pulse > 0:
            cutoff = loss
    return cutoff


def keyrate_report_json(report: KeyRateReport) -> str:
    """Structured single-report form carrying every intermediate term."""
    return json.dumps(asdict(report), indent=2) + "\n"


def write_sweep_csv(rows: Sequence[tuple[float, KeyRateReport]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("loss_db,qber,skr_per_pulse,skr_bps,secure_flag\n")
        for loss, report in rows:
            clamped_pp = max(report.skr_per_pulse, 0.0)
            clamped_bps = max(report.skr_bps, 0.0)
            fh.write(
                f"{loss:g},{report.qber_expected:.6e},{clamped_pp:.6e},"
                f"{clamped_bps:.6e},{int(report.secure)}\n"
            )


@dataclass(frozen=True)
class OracleReport:
    """Exact per-pulse outcome probabilities for a B92 scenario and window.

    qber_exact comes from the full enumeration (what the Monte Carlo
    converges to); expected_qber is the closed-form model evaluated with
    the enumerated p_signal, first-order p_dc and effective q, for checking
    the analytic chain against the enumeration.
    """

    p_click_apd1: float
    p_click_apd2: float
    p_click_any: float
    p_signal: float
    p_double: float
    p_sifted: float
    p_error: float
    qber_exact: float
    p_dc_exact: float
    p_dc_first_order: float
    q_effective: float
    expected_qber: float


def click_probability_oracle(cfg: "ScenarioConfig", window: "FilterWindow") -> OracleReport:
    """Enumerate every discrete outcome of one pulse, exactly.

    Sums over photon number n in {0, 1, 2}, independent beamsplitter
    branches, analyzer pass/fail and dark events per detector, weighted by
    the bit frequencies of the encoding pattern. Requires the zero-jitter
    timing model (sync delay plus exponential decay).
    """
    source = cfg.source
    if source.jitter_ns != 0.0:
        raise ValueError("oracle enumeration requires jitter_ns = 0")
    dist = photon_number_dist(source)
    transmission = cfg.channel.transmission

    lo = window.t0_ns - source.sync_delay_ns
    hi = window.end_ns - source.sync_delay_ns
    w_lo = emission_delay_cdf(max(lo, 0.0), source.lifetime_ns)
    w_hi = emission_delay_cdf(max(hi, 0.0), source.lifetime_ns)
    window_fraction = w_hi - w_lo

    eps = cfg.pol_misalignment_deg
    analyzers = (CONCLUSIVE0_ANALYZER_DEG + eps, CONCLUSIVE1_ANALYZER_DEG + eps)
    effs = (cfg.detectors[0].efficiency, cfg.detectors[1].efficiency)

    delta_t_s = window.delta_t_ns * 1e-9
    darks = tuple(-math.expm1(-d.dark_rate_hz * delta_t_s) for d in cfg.detectors)
    darks_fo = tuple(d.dark_rate_hz * delta_t_s for d in cfg.detectors)

    pattern = np.asarray(cfg.pattern, dtype=np.uint8)
    weights = {bit: float(np.mean(pattern == bit)) for bit in (0, 1)}

    from .protocol import BIT_ANGLES_DEG

    totals = {
        "p_click_apd1": 0.0,
        "p_click_apd2": 0.0,
        "p_click_any": 0.0,
        "p_signal": 0.0,
        "p_double": 0.0,
        "p_sifted": 0.0,
        "p_error": 0.0,
        "signal_wrong_only": 0.0,
    }
    d1, d2 = darks
    for bit, weight in weights.items():
        if weight == 0.0:
            continue
        angle = BIT_ANGLES_DEG[bit]
        # Per-photon probability of an in-window click on each detector;
        # the 0.5 is the beamsplitter branch choice.
        r = [
            transmission * 0.5 * malus_prob(angle, analyzers[arm]) * effs[arm] * window_fraction
            for arm in (0, 1)
        ]
        none = 1.0 - r[0] - r[1]
        # Joint signal-click probabilities per pulse: exactly one on APD1,
        # exactly one on APD2, both, neither.
        s1 = dist.p1 * r[0] + dist.p2 * (r[0] ** 2 + 2.0 * r[0] * none)
        s2 = dist.p1 * r[1] + dist.p2 * (r[1] ** 2 + 2.0 * r[1] * none)
        s12 = dist.p2 * 2.0 * r[0] * r[1]
        s0 = dist.p0 + dist.p1 * none + dist.p2 * none**2

        p11 = s12 + s1 * d2 + s2 * d1 + s0 * d1 * d2
        p10 = s1 * (1.0 - d2) + s0 * d1 * (1.0 - d2)
        p01 = s2 * (1.0 - d1) + s0 * (1.0 - d1) * d2

        error = p01 if bit == 0 else p10
        wrong_only = s2 if bit == 0 else s1

        totals["p_click_apd1"] += weight * (p11 + p10)
        totals["p_click_apd2"] += weight * (p11 + p01)
        totals["p_click_any"] += weight * (p11 + p10 + p01)
        totals["p_signal"] += weight * (1.0 - s0)
        totals["p_double"] += weight * p11
        totals["p_sifted"] += weight * (p10 + p01)
        totals["p_error"] += weight * error
        totals["signal_wrong_only"] += weight * wrong_only

    qber_exact = totals["p_error"] / totals["p_sifted"] if totals["p_sifted"] > 0 else 0.0
    p_dc_fo = darks_fo[0] + darks_fo[1]
    p_dc_exact = 1.0 - (1.0 - d1) * (1.0 - d2)
    p_signal = totals["p_signal"]
    q_eff = totals["signal_wrong_only"] / p_signal if p_signal > 0 else 0.0
    p_click_model = p_signal + p_dc_fo
    eq2 = (
        (q_eff * p_signal + p_dc_fo / 2.0) / p_click_model if p_click_model > 0 else 0.0
    )
    return OracleReport(
        p_click_apd1=totals["p_click_apd1"],
        p_click_apd2=totals["p_click_apd2"],
        p_click_any=totals["p_click_any"],
        p_signal=p_signal,
        p_double=totals["p_double"],
        p_sifted=totals["p_sifted"],
        p_error=totals["p_error"],
        qber_exact=qber_exact,
        p_dc_exact=p_dc_exact,
        p_dc_first_order=p_dc_fo,
        q_effective=q_eff,
        expected_qber=eq2,
    )

"""Offline analysis of time-tag streams.

Trigger-relative delay histograms, temporal filtering, the filter-width
scan behind the QBER/key-rate trade-off, and pulsed g2(0) estimation from
two-detector coincidences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import EmptyStream, InsufficientCoincidences
from .photonics import SourceParams, multiphoton_prob
from .protocol import PulseLedger, PulseRecord, b92_sift, measure_qber
from .security import skr_from_observed
from .streams import Channel, TimeTagStream


@dataclass
class DelayHistogram:
    """Counts of detection delays folded into one repetition period."""

    bin_width_ns: float
    counts: np.ndarray

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.bin_width_ns <= 0:
            raise ValueError(f"bin_width_ns must be > 0, got {self.bin_width_ns}")
        if np.any(self.counts < 0):
            raise ValueError("histogram counts must be >= 0")

    @property
    def n_bins(self) -> int:
        return int(self.counts.size)

    @property
    def bin_centers_ns(self) -> np.ndarray:
        return (np.arange(self.n_bins) + 0.5) * self.bin_width_ns

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class FilterWindow:
    """Temporal acceptance gate [t0, t0 + delta_t) relative to the trigger."""

    t0_ns: float
    delta_t_ns: float

    def __post_init__(self) -> None:
        if self.delta_t_ns <= 0:
            raise ValueError(f"delta_t_ns must be > 0, got {self.delta_t_ns}")
        if self.t0_ns < 0:
            raise ValueError(f"t0_ns must be >= 0, got {self.t0_ns}")

    @property
    def end_ns(self) -> float:
        return self.t0_ns + self.delta_t_ns


@dataclass(frozen=True)
class FilterScanRow:
    """One filter width of the QBER versus key-rate trade-off."""

    delta_t_ns: float
    sifted_rate_bps: float
    qber: float
    skr_measured_bps: float
    skr_eq1_bps: float = float("nan")

    def __post_init__(self) -> None:
        if not 0.0 <= self.qber <= 1.0:
            raise ValueError(f"qber {self.qber} outside [0, 1]")
        if self.sifted_rate_bps < 0:
            raise ValueError(f"sifted_rate_bps must be >= 0, got {self.sifted_rate_bps}")


class G2Estimate(NamedTuple):
    value: float
    uncertainty: float


def _trigger_relative_delays(
    stream: TimeTagStream, rep_rate_hz: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fold detections against the nearest preceding trigger, modulo the period.

    Streams without trigger events fall back to folding absolute times by
    the repetition period. Returns (detector codes, times, delays in ps).
    """
    period_ps = 1e12 / rep_rate_hz
    det_ch, det_t = stream.detections()
    trig = stream.trigger_times_ps
    if trig.size:
        idx = np.searchsorted(trig, det_t, side="right") - 1
        delays = det_t - trig[np.clip(idx, 0, None)]
    else:
        delays = det_t.copy()
    delays = np.mod(delays.astype(np.float64), period_ps)
    return det_ch, det_t, delays


def build_histogram(
    stream: TimeTagStream, rep_rate_hz: float, bin_width_ns: float = 1.0
) -> DelayHistogram:
    """Histogram trigger-relative detection delays over one period."""
    if stream.trigger_times_ps.size == 0:
        raise EmptyStream("histogram requires trigger events")
    period_ns = 1e9 / rep_rate_hz
    n_bins = int(math.ceil(period_ns / bin_width_ns))
    _, _, delays_ps = _trigger_relative_delays(stream, rep_rate_hz)
    bins = np.floor(delays_ps / (bin_width_ns * 1e3)).astype(np.int64)
    bins = np.clip(bins, 0, n_bins - 1)
    counts = np.bincount(bins, minlength=n_bins)
    return DelayHistogram(bin_width_ns=bin_width_ns, counts=counts)


def suggest_window_start(hist: DelayHistogram) -> float:
    """Default filter anchor: one bin before the histogram maximum."""
    peak_ns = float(np.argmax(hist.counts)) * hist.bin_width_ns
    return max(0.0, peak_ns - hist.bin_width_ns)


def apply_window(
    stream: TimeTagStream, window: FilterWindow, rep_rate_hz: float
) -> TimeTagStream:
    """Keep triggers plus the detections whose delay falls inside the window."""
    period_ns = 1e9 / rep_rate_hz
    if window.end_ns > period_ns:
        raise ValueError(
            f"window [{window.t0_ns}, {window.end_ns}) ns exceeds the "
            f"{period_ns} ns repetition period"
        )
    det_ch, det_t, delays_ps = _trigger_relative_delays(stream, rep_rate_hz)
    keep = (delays_ps >= window.t0_ns * 1e3) & (delays_ps < window.end_ns * 1e3)
    trig_mask = stream.channels == Channel.TRIGGER
    channels = np.concatenate([stream.channels[trig_mask], det_ch[keep]])
    times = np.concatenate([stream.times_ps[trig_mask], det_t[keep]])
    order = np.lexsort((channels, times))
    return TimeTagStream(channels[order], times[order])


def filter_scan(
    stream: TimeTagStream,
    alice: Sequence[PulseRecord] | PulseLedger,
    rep_rate_hz: float,
    t0_ns: float,
    delta_list: Sequence[float],
    source: SourceParams | None = None,
) -> list[FilterScanRow]:
    """Sift and score the stream for each filter width in delta_list.

    Reports the measured rate convention (sifted clicks / 2) per row and,
    when the source parameters are supplied, the key fraction of the
    analytic rate equation applied to the same clicks.
    """
    if len(delta_list) == 0:
        raise ValueError("delta_list must be non-empty")
    deltas = [float(d) for d in delta_list]
    if any(b <= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("delta_list must be strictly ascending")
    n_triggers = int(stream.trigger_times_ps.size)
    if n_triggers == 0:
        raise EmptyStream("filter scan requires trigger events")
    duration_s = n_triggers / rep_rate_hz

    p_m = multiphoton_prob(source) if source is not None else None

    rows: list[FilterScanRow] = []
    for delta_t in deltas:
        filtered = apply_window(stream, FilterWindow(t0_ns, delta_t), rep_rate_hz)
        key = b92_sift(alice, filtered, rep_rate_hz)
        if len(key):
            qber, n_sifted, _ = measure_qber(key)
        else:
            qber, n_sifted = 0.0, 0
        sifted_rate = n_sifted / duration_s
        skr_eq1 = float("nan")
        if p_m is not None and n_sifted:
            report = skr_from_observed(
                p_click=n_sifted / n_triggers,
                qber=qber,
                p_m=p_m,
                rep_rate_hz=rep_rate_hz,
            )
            skr_eq1 = report.skr_bps
        rows.append(
            FilterScanRow(
                delta_t_ns=delta_t,
                sifted_rate_bps=sifted_rate,
                qber=qber,
                skr_measured_bps=sifted_rate / 2.0,
                skr_eq1_bps=skr_eq1,
            )
        )
    return rows


def estimate_g2(
    stream: TimeTagStream, rep_rate_hz: float, n_side_peaks: int = 10
) -> G2Estimate:
    """Pulsed g2(0) from APD1 x APD2 coincidences.

    Each detection is assigned to its pulse; the coincidence count at pulse
    separation m integrates a full repetition period around peak m. g2 is
    the zero-separation count over the mean of n_side_peaks neighbouring
    peaks, with a Poisson counting uncertainty.
    """
    t1 = stream.detection_times(Channel.APD1)
    t2 = stream.detection_times(Channel.APD2)
    if t1.size == 0 or t2.size == 0:
        raise InsufficientCoincidences("both detector channels must be present")
    period_ps = 1e12 / rep_rate_hz
    trig = stream.trigger_times_ps
    if trig.size:
        n_pulses = int(trig.size)
        p1 = np.clip(np.searchsorted(trig, t1, side="right") - 1, 0, None)
        p2 = np.clip(np.searchsorted(trig, t2, side="right") - 1, 0, None)
    else:
        origin = int(stream.times_ps[0])
        p1 = np.floor((t1 - origin) / period_ps).astype(np.int64)
        p2 = np.floor((t2 - origin) / period_ps).astype(np.int64)
        n_pulses = int(max(p1.max(), p2.max())) + 1
    half = max(1, n_side_peaks // 2)
    if n_pulses <= half:
        raise InsufficientCoincidences(
            f"need more than {half} pulses for {n_side_peaks} side peaks"
        )
    c1 = np.bincount(p1, minlength=n_pulses).astype(np.float64)
    c2 = np.bincount(p2, minlength=n_pulses).astype(np.float64)
    center = float(np.dot(c1, c2))
    sides = []
    for m in range(-half, half + 1):
        if m == 0:
            continue
        if m > 0:
            sides.append(float(np.dot(c1[: n_pulses - m], c2[m:])))
        else:
            sides.append(float(np.dot(c1[-m:], c2[: n_pulses + m])))
    if any(s == 0 for s in sides):
        raise InsufficientCoincidences("a side peak has zero coincidences")
    side_sum = float(np.sum(sides))
    k = len(sides)
    side_mean = side_sum / k
    g2 = center / side_mean
    variance = max(center, 1.0) / side_mean**2 + center**2 * side_sum / (
        k**2 * side_mean**4
    )
    return G2Estimate(value=g2, uncertainty=math.sqrt(variance))


def write_histogram_csv(hist: DelayHistogram, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("bin_ns,counts\n")
        for i, count in enumerate(hist.counts):
            fh.write(f"{i * hist.bin_width_ns:g},{count}\n")


def read_histogram_csv(path: str | Path, bin_width_ns: float | None = None) -> DelayHistogram:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if rows.size == 0:
        raise EmptyStream(f"no histogram rows in {path}")
    width = bin_width_ns
    if width is None:
        width = float(rows[1, 0] - rows[0, 0]) if rows.shape[0] > 1 else 1.0
    return DelayHistogram(bin_width_ns=width, counts=rows[:, 1].astype(np.int64))


def write_scan_csv(rows: Sequence[FilterScanRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("delta_t_ns,sifted_rate_bps,qber,skr_eq1_bps\n")
        for row in rows:
            fh.write(
                f"{row.delta_t_ns:g},{row.sifted_rate_bps:.6f},"
                f"{row.qber:.6f},{row.skr_eq1_bps:.6f}\n"
            )

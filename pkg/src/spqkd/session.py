"""Deterministic Monte Carlo engine for QKD and HBT correlation sessions.

Pulses are generated in fixed blocks of 2**16, each block driven by its own
substream derived from the master seed, so blocks can be produced
independently (or in parallel) and merged without changing the result.
Identical (config, seed) pairs replay to byte-identical streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidStatistics
from .photonics import (
    CONCLUSIVE0_ANALYZER_DEG,
    CONCLUSIVE1_ANALYZER_DEG,
    ChannelParams,
    DetectorParams,
    SourceParams,
    malus_prob,
    photon_number_dist,
    sample_emission_delays,
)
from .protocol import BIT_ANGLES_DEG, PulseLedger, encode_pattern
from .streams import Channel, TimeTagStream, merge_sorted

BLOCK_PULSES = 2**16

# Substream domains under the master seed: pulse blocks and dark-count
# processes never share generator state.
_DOMAIN_PULSE_BLOCK = 0
_DOMAIN_DARKS = 1


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a simulated run needs, including its master seed."""

    source: SourceParams
    channel: ChannelParams
    detectors: tuple[DetectorParams, DetectorParams]
    pol_misalignment_deg: float = 0.0
    pattern: tuple[int, ...] = (0, 1)
    duration_s: float = 1.0
    seed: int = field(default=0)

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ValueError(f"duration_s must be > 0, got {self.duration_s}")
        if len(self.pattern) == 0:
            raise ValueError("pattern must be non-empty")
        if len(self.detectors) != 2:
            raise ValueError("exactly two detectors (APD1, APD2) are required")

    @property
    def n_pulses(self) -> int:
        return int(round(self.duration_s * self.source.rep_rate_hz))

    @property
    def period_ps(self) -> float:
        return 1e12 / self.source.rep_rate_hz


def derive_substream_seed(master_seed: int, block_index: int) -> int:
    """Collision-free substream seed for one pulse block.

    Built on SeedSequence spawn keys: distinct block indices give
    statistically independent streams, and the mapping is stable across
    runs and platforms.
    """
    if block_index < 0:
        raise ValueError(f"block_index must be >= 0, got {block_index}")
    ss = np.random.SeedSequence(master_seed, spawn_key=(_DOMAIN_PULSE_BLOCK, block_index))
    return int.from_bytes(ss.generate_state(4, np.uint32).tobytes(), "little")


def _dark_seed(master_seed: int, detector_index: int) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=(_DOMAIN_DARKS, detector_index))
    return int.from_bytes(ss.generate_state(4, np.uint32).tobytes(), "little")


def _arm_pass_probs(cfg: ScenarioConfig, project_polarization: bool) -> np.ndarray:
    """Per-(arm, alice bit) probability that a photon reaching Bob clicks.

    Includes the analyzer projection (QKD mode) and detector efficiency,
    not the 50/50 beamsplitter choice.
    """
    eff1 = cfg.detectors[0].efficiency
    eff2 = cfg.detectors[1].efficiency
    if not project_polarization:
        return np.array([[eff1, eff1], [eff2, eff2]])
    eps = cfg.pol_misalignment_deg
    a1 = CONCLUSIVE0_ANALYZER_DEG + eps
    a2 = CONCLUSIVE1_ANALYZER_DEG + eps
    probs = np.empty((2, 2))
    for bit in (0, 1):
        angle = BIT_ANGLES_DEG[bit]
        probs[0, bit] = malus_prob(angle, a1) * eff1
        probs[1, bit] = malus_prob(angle, a2) * eff2
    return probs


def _dedupe_same_arm(pulse_idx: np.ndarray, t_ps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Collapse multiple clicks of one detector within a pulse to the earliest."""
    if pulse_idx.size < 2:
        return pulse_idx, t_ps
    order = np.lexsort((t_ps, pulse_idx))
    pulse_idx = pulse_idx[order]
    t_ps = t_ps[order]
    first = np.ones(pulse_idx.size, dtype=bool)
    first[1:] = pulse_idx[1:] != pulse_idx[:-1]
    return pulse_idx[first], t_ps[first]


def signal_block_events(
    cfg: ScenarioConfig,
    block_index: int,
    bits: np.ndarray,
    project_polarization: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Generate the signal detections of one pulse block.

    `bits` holds Alice's bits for the pulses of this block only. Returns
    (channel codes, times in ps), unsorted. The substream consumption
    order is fixed; re-invoking with the same arguments replays exactly.
    """
    rng = np.random.default_rng(derive_substream_seed(cfg.seed, block_index))
    source = cfg.source
    dist = photon_number_dist(source)
    transmission = cfg.channel.transmission
    pass_probs = _arm_pass_probs(cfg, project_polarization)
    n_block = bits.size
    base = block_index * BLOCK_PULSES

    u = rng.random(n_block)
    n_photons = (u >= dist.p0).astype(np.int8)
    n_photons += u >= dist.p0 + dist.p1

    out_pulse: dict[int, list[np.ndarray]] = {1: [], 2: []}
    out_time: dict[int, list[np.ndarray]] = {1: [], 2: []}
    for threshold in (1, 2):
        slot = np.nonzero(n_photons >= threshold)[0]
        m = slot.size
        alive = rng.random(m) < transmission
        to_arm1 = rng.random(m) < 0.5
        u_pass = rng.random(m)
        arm_idx = np.where(to_arm1, 0, 1)
        p_pass = pass_probs[arm_idx, bits[slot]]
        detected = alive & (u_pass < p_pass)
        k = int(np.count_nonzero(detected))
        delays_ns = sample_emission_delays(rng, source.lifetime_ns, k)
        if source.jitter_ns > 0:
            delays_ns = delays_ns + rng.standard_normal(k) * source.jitter_ns
        pulses = base + slot[detected]
        trigger_ps = np.rint(pulses * cfg.period_ps).astype(np.int64)
        t_ps = trigger_ps + np.rint((source.sync_delay_ns + delays_ns) * 1e3).astype(np.int64)
        arm_of_detected = arm_idx[detected]
        for arm, channel in ((0, Channel.APD1), (1, Channel.APD2)):
            sel = arm_of_detected == arm
            out_pulse[int(channel)].append(pulses[sel])
            out_time[int(channel)].append(t_ps[sel])

    channels: list[np.ndarray] = []
    times: list[np.ndarray] = []
    for channel in (Channel.APD1, Channel.APD2):
        pid = np.concatenate(out_pulse[int(channel)])
        tt = np.concatenate(out_time[int(channel)])
        pid, tt = _dedupe_same_arm(pid, tt)
        channels.append(np.full(tt.size, int(channel), dtype=np.uint8))
        times.append(tt)
    return np.concatenate(channels), np.concatenate(times)


def _dark_events(cfg: ScenarioConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """Poisson dark counts, uniform over the whole run, per detector."""
    parts = []
    for det_index, (det, channel) in enumerate(
        zip(cfg.detectors, (Channel.APD1, Channel.APD2))
    ):
        rng = np.random.default_rng(_dark_seed(cfg.seed, det_index))
        count = int(rng.poisson(det.dark_rate_hz * cfg.duration_s))
        t = np.sort(rng.random(count)) * cfg.duration_s * 1e12
        parts.append(
            (np.full(count, int(channel), dtype=np.uint8), np.rint(t).astype(np.int64))
        )
    return parts


def _run(cfg: ScenarioConfig, bits: np.ndarray, project_polarization: bool) -> TimeTagStream:
    n_pulses = bits.size
    trigger_times = np.rint(np.arange(n_pulses, dtype=np.float64) * cfg.period_ps).astype(np.int64)
    parts: list[tuple[np.ndarray, np.ndarray]] = [
        (np.zeros(n_pulses, dtype=np.uint8), trigger_times)
    ]
    n_blocks = -(-n_pulses // BLOCK_PULSES)
    for block in range(n_blocks):
        lo = block * BLOCK_PULSES
        hi = min(lo + BLOCK_PULSES, n_pulses)
        parts.append(signal_block_events(cfg, block, bits[lo:hi], project_polarization))
    parts.extend(_dark_events(cfg))
    return merge_sorted(parts)


def run_qkd_session(cfg: ScenarioConfig) -> tuple[PulseLedger, TimeTagStream]:
    """Simulate one B92 run: Alice's truth record plus Bob's time tags.

    Raises InvalidStatistics (via the photon-number model) when the source
    parameters admit no 3-point distribution.
    """
    ledger = encode_pattern(cfg.pattern, cfg.n_pulses)
    stream = _run(cfg, ledger.bits, project_polarization=True)
    return ledger, stream


def run_hbt_session(cfg: ScenarioConfig) -> TimeTagStream:
    """Simulate an HBT correlation run: 50/50 split, no polarization analysis."""
    bits = np.zeros(cfg.n_pulses, dtype=np.uint8)
    return _run(cfg, bits, project_polarization=False)

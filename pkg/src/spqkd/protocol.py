"""B92 encoding, sifting and error-rate measurement."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import EmptyKey, UnmatchedEvent
from .photonics import PLUS45_ANGLE_DEG, V_ANGLE_DEG, PolAngle
from .streams import Channel, TimeTagStream

BIT_ANGLES_DEG = {0: V_ANGLE_DEG, 1: PLUS45_ANGLE_DEG}


@dataclass(frozen=True)
class PulseRecord:
    """Alice's truth for one emitted pulse."""

    pulse_index: int
    alice_bit: int
    encoded_angle: PolAngle


class PulseLedger(Sequence[PulseRecord]):
    """Array-backed sequence of PulseRecord, cheap at millions of pulses."""

    def __init__(self, bits: np.ndarray):
        self._bits = np.asarray(bits, dtype=np.uint8)
        if self._bits.ndim != 1:
            raise ValueError("bits must be a 1-d array")
        if self._bits.size and not np.all((self._bits == 0) | (self._bits == 1)):
            raise ValueError("bits must be 0 or 1")

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    def __len__(self) -> int:
        return int(self._bits.size)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return PulseLedger(self._bits[index])
        i = int(index)
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(index)
        bit = int(self._bits[i])
        return PulseRecord(i, bit, PolAngle(BIT_ANGLES_DEG[bit]))

    def __iter__(self) -> Iterator[PulseRecord]:
        for i in range(len(self)):
            yield self[i]


def _bits_of(alice: Sequence[PulseRecord] | PulseLedger) -> np.ndarray:
    if isinstance(alice, PulseLedger):
        return alice.bits
    return np.fromiter((rec.alice_bit for rec in alice), dtype=np.uint8, count=len(alice))


def encode_pattern(pattern: Sequence[int], length: int) -> PulseLedger:
    """Repeat a bit pattern cyclically over `length` pulses.

    Bit 0 encodes as vertical polarization, bit 1 as +45 degrees.
    """
    if len(pattern) == 0:
        raise ValueError("pattern must be non-empty")
    pat = np.asarray(list(pattern), dtype=np.uint8)
    if pat.size and not np.all((pat == 0) | (pat == 1)):
        raise ValueError("pattern bits must be 0 or 1")
    if length == 0:
        return PulseLedger(np.empty(0, dtype=np.uint8))
    reps = -(-length // pat.size)
    return PulseLedger(np.tile(pat, reps)[:length])


@dataclass(frozen=True)
class SiftedKey:
    """Position-aligned Alice/Bob bit pairs after B92 sifting."""

    pulse_indices: np.ndarray
    alice_bits: np.ndarray
    bob_bits: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "pulse_indices", np.asarray(self.pulse_indices, dtype=np.int64))
        object.__setattr__(self, "alice_bits", np.asarray(self.alice_bits, dtype=np.uint8))
        object.__setattr__(self, "bob_bits", np.asarray(self.bob_bits, dtype=np.uint8))
        if not (len(self.pulse_indices) == len(self.alice_bits) == len(self.bob_bits)):
            raise ValueError("sifted key arrays must have equal length")
        if self.pulse_indices.size > 1 and np.any(np.diff(self.pulse_indices) <= 0):
            raise ValueError("pulse indices must be strictly increasing")
        for bits in (self.alice_bits, self.bob_bits):
            if bits.size and bits.max() > 1:
                raise ValueError("key bits must be 0 or 1")

    def __len__(self) -> int:
        return int(self.pulse_indices.size)

    @property
    def entries(self) -> list[tuple[int, int, int]]:
        return [
            (int(p), int(a), int(b))
            for p, a, b in zip(self.pulse_indices, self.alice_bits, self.bob_bits)
        ]


def b92_sift(
    alice: Sequence[PulseRecord] | PulseLedger,
    filtered: TimeTagStream,
    rep_rate_hz: float,
) -> SiftedKey:
    """Sift a window-filtered stream against Alice's pulse records.

    Each detection is charged to the pulse whose trigger precedes it
    (folding by the repetition period when the stream carries no triggers).
    An APD1 click yields bob bit 0, an APD2 click bit 1. Pulses where both
    detectors fired are discarded; repeated clicks on one detector within a
    pulse count once.
    """
    trig = filtered.trigger_times_ps
    det_ch, det_t = filtered.detections()
    n_pulses = len(alice)
    if trig.size:
        pidx = np.searchsorted(trig, det_t, side="right") - 1
    else:
        pidx = np.floor(det_t / (1e12 / rep_rate_hz)).astype(np.int64)
    if det_t.size and pidx.min() < 0:
        raise UnmatchedEvent("detection precedes the first trigger")
    if det_t.size and pidx.max() >= n_pulses:
        raise UnmatchedEvent(
            f"detection on pulse {int(pidx.max())} beyond Alice's {n_pulses} records"
        )
    clicked1 = np.zeros(n_pulses, dtype=bool)
    clicked2 = np.zeros(n_pulses, dtype=bool)
    clicked1[pidx[det_ch == Channel.APD1]] = True
    clicked2[pidx[det_ch == Channel.APD2]] = True
    conclusive = clicked1 ^ clicked2
    pulses = np.nonzero(conclusive)[0]
    bob = clicked2[pulses].astype(np.uint8)
    return SiftedKey(pulses, _bits_of(alice)[pulses], bob)


def measure_qber(key: SiftedKey) -> tuple[float, int, int]:
    """QBER over a sifted key: (error fraction, sifted length, error count)."""
    n = len(key)
    if n == 0:
        raise EmptyKey("cannot measure QBER on an empty key")
    n_err = int(np.count_nonzero(key.alice_bits != key.bob_bits))
    return n_err / n, n, n_err


def write_sifted_csv(key: SiftedKey, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("pulse_index,alice_bit,bob_bit\n")
        for p, a, b in zip(key.pulse_indices, key.alice_bits, key.bob_bits):
            fh.write(f"{p},{a},{b}\n")

"""Core domain types: sensor traces and paired reference measurements."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Channel(enum.Enum):
    PPG_RAW = "PpgRaw"
    CUFF_PRESSURE = "CuffPressure"
    CLAMP_PRESSURE = "ClampPressure"


# Default units and sample rates per channel (pressure 100 Hz, pulse 25 Hz).
CHANNEL_UNITS = {
    Channel.PPG_RAW: "volts",
    Channel.CUFF_PRESSURE: "mmHg",
    Channel.CLAMP_PRESSURE: "mmHg",
}

CHANNEL_RATES_HZ = {
    Channel.PPG_RAW: 25.0,
    Channel.CUFF_PRESSURE: 100.0,
    Channel.CLAMP_PRESSURE: 100.0,
}


@dataclass
class Trace:
    """One uniformly sampled sensor channel.

    PPG samples are in sensor volts, pressures in mmHg. There are no
    per-sample timestamps: gaps are an ingestion error, not a data state.
    """

    channel: Channel
    fs_hz: float
    samples: np.ndarray
    t0_ms: int = 0
    units: str = ""

    def __post_init__(self):
        if self.fs_hz <= 0:
            raise ValueError(f"fs_hz must be positive, got {self.fs_hz}")
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not self.units:
            self.units = CHANNEL_UNITS[self.channel]

    def __len__(self):
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.fs_hz

    def times_s(self) -> np.ndarray:
        return self.t0_ms / 1000.0 + np.arange(len(self.samples)) / self.fs_hz


class Quantity(enum.Enum):
    PULSE = "Pulse"
    SBP = "Sbp"
    DBP = "Dbp"


@dataclass(frozen=True)
class PairedSample:
    """One (device, reference) measurement pair for a subject."""

    subject_id: str
    quantity: Quantity
    device_value: float
    reference_value: float

    def __post_init__(self):
        for name in ("device_value", "reference_value"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be finite and positive, got {v}")

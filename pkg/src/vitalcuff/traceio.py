"""File formats: traces, ground-truth sidecars and paired measurements.

Traces are plain CSV with a ``#``-prefixed header block, one sample per row
(optionally ``t_ms,value`` rows, which are checked for uniform spacing).
Numbers are locale-independent decimal text written at full round-trip
precision.
"""

from __future__ import annotations

import json
import warnings
from pathlib import Path

import numpy as np

from .errors import (
    MalformedHeader,
    MalformedRow,
    NonUniformSampling,
    RateMismatch,
    UnitMismatch,
    UnknownQuantity,
)
from .traces import CHANNEL_RATES_HZ, CHANNEL_UNITS, Channel, PairedSample, Quantity, Trace

SCHEMA_VERSION = 1

_REQUIRED_HEADER = ("channel", "fs_hz", "t0_ms", "units", "schema_version")


def write_trace(trace: Trace, path) -> None:
    path = Path(path)
    lines = [
        f"# channel: {trace.channel.value}",
        f"# fs_hz: {trace.fs_hz!r}",
        f"# t0_ms: {trace.t0_ms}",
        f"# units: {trace.units}",
        f"# schema_version: {SCHEMA_VERSION}",
    ]
    lines.extend(repr(float(v)) for v in trace.samples)
    path.write_text("\n".join(lines) + "\n")


def read_trace(path, override_rates: bool = False) -> Trace:
    """Parse a trace file, validating header, units and sample rate.

    A rate that disagrees with the channel's published value is rejected
    unless ``override_rates`` is set, in which case a warning is emitted.
    """
    path = Path(path)
    header = {}
    values = []
    times = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if ":" not in line:
                raise MalformedHeader(f"{path}:{lineno}: header line without ':'")
            key, _, val = line.lstrip("#").partition(":")
            header[key.strip()] = val.strip()
            continue
        parts = line.split(",")
        try:
            if len(parts) == 1:
                values.append(float(parts[0]))
            elif len(parts) == 2:
                times.append(float(parts[0]))
                values.append(float(parts[1]))
            else:
                raise ValueError
        except ValueError:
            raise MalformedRow(f"{path}:{lineno}: bad data row {raw!r}") from None

    missing = [k for k in _REQUIRED_HEADER if k not in header]
    if missing:
        raise MalformedHeader(f"{path}: missing header fields {missing}")
    try:
        channel = Channel(header["channel"])
    except ValueError:
        raise MalformedHeader(f"{path}: unknown channel {header['channel']!r}") from None
    try:
        fs_hz = float(header["fs_hz"])
        t0_ms = int(header["t0_ms"])
        int(header["schema_version"])
    except ValueError:
        raise MalformedHeader(f"{path}: non-numeric header values") from None
    if fs_hz <= 0:
        raise MalformedHeader(f"{path}: fs_hz must be positive")

    units = header["units"]
    if units not in ("mmHg", "volts"):
        raise MalformedHeader(f"{path}: units must be mmHg or volts, got {units!r}")
    if units != CHANNEL_UNITS[channel]:
        raise UnitMismatch(f"{path}: {channel.value} expects {CHANNEL_UNITS[channel]}, got {units}")

    expected_fs = CHANNEL_RATES_HZ[channel]
    if fs_hz != expected_fs:
        msg = f"{path}: {channel.value} expects {expected_fs} Hz, header says {fs_hz} Hz"
        if not override_rates:
            raise RateMismatch(msg)
        warnings.warn(msg, stacklevel=2)

    if times:
        if len(times) != len(values):
            raise MalformedRow(f"{path}: mixed timestamped and bare rows")
        dt = np.diff(np.asarray(times))
        if len(dt) and not np.allclose(dt, 1000.0 / fs_hz, rtol=1e-6, atol=1e-6):
            raise NonUniformSampling(f"{path}: sample spacing disagrees with fs_hz={fs_hz}")

    return Trace(
        channel=channel,
        fs_hz=fs_hz,
        samples=np.asarray(values, dtype=float),
        t0_ms=t0_ms,
        units=units,
    )


PAIRS_COLUMNS = ("subject_id", "quantity", "device_value", "reference_value")


def write_pairs(pairs, path) -> None:
    path = Path(path)
    lines = [",".join(PAIRS_COLUMNS)]
    for p in pairs:
        lines.append(
            f"{p.subject_id},{p.quantity.value},{p.device_value!r},{p.reference_value!r}"
        )
    path.write_text("\n".join(lines) + "\n")


def read_pairs(path) -> list:
    """Parse a paired-measurement CSV; empty files yield an empty list."""
    path = Path(path)
    pairs = []
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        return pairs
    start = 1 if lines[0].replace(" ", "").lower().startswith("subject_id,") else 0
    for lineno, line in enumerate(lines[start:], start=start + 1):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 4:
            raise MalformedRow(f"{path}:{lineno}: expected 4 columns, got {len(parts)}")
        subject, quantity_text, device_text, reference_text = parts
        try:
            quantity = Quantity(quantity_text)
        except ValueError:
            raise UnknownQuantity(f"{path}:{lineno}: unknown quantity {quantity_text!r}") from None
        try:
            device = float(device_text)
            reference = float(reference_text)
        except ValueError:
            raise MalformedRow(f"{path}:{lineno}: non-numeric values") from None
        try:
            pairs.append(PairedSample(subject, quantity, device, reference))
        except ValueError as exc:
            raise MalformedRow(f"{path}:{lineno}: {exc}") from None
    return pairs


def group_pairs(pairs) -> dict:
    """Pairs grouped by quantity, preserving input order."""
    grouped = {}
    for p in pairs:
        grouped.setdefault(p.quantity, []).append(p)
    return grouped


def write_ground_truth(truth: dict, path) -> None:
    Path(path).write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")


def read_ground_truth(path) -> dict:
    return json.loads(Path(path).read_text())

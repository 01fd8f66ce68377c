"""Reusable DSP primitives.

Filter design and application (streaming and zero-phase), numerical
differentiation, polynomial smoothing and peak detection with topographic
prominence. Everything here is pure or operates on caller-owned state, so
concurrent use on disjoint data is safe.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import (
    EvenTaps,
    InvalidCorner,
    NonMonotoneX,
    SignalTooShort,
    StateShapeMismatch,
    TooFewPoints,
)


class FilterKind(enum.Enum):
    IIR_BUTTERWORTH_LOWPASS = "IirButterworthLowpass"
    FIR_BANDPASS = "FirBandpass"


@dataclass(frozen=True)
class FilterSpec:
    """A designed digital filter.

    IIR filters are realized as cascaded second-order sections for numerical
    robustness at low cutoff-to-fs ratios; ``coefficients`` is then the
    (n_sections, 6) SOS array. FIR filters store the tap vector.
    """

    kind: FilterKind
    order_or_taps: int
    corner_hz: tuple
    fs_hz: float
    coefficients: np.ndarray

    @property
    def state_size(self) -> int:
        """Length of the delay line a fresh FilterState must have."""
        if self.kind is FilterKind.IIR_BUTTERWORTH_LOWPASS:
            return 2 * self.coefficients.shape[0]
        return len(self.coefficients) - 1

    def is_stable(self) -> bool:
        """All poles strictly inside the unit circle (FIR is always stable)."""
        if self.kind is FilterKind.FIR_BANDPASS:
            return True
        for section in self.coefficients:
            poles = np.roots(section[3:])
            if np.any(np.abs(poles) >= 1.0):
                return False
        return True

    def frequency_response(self, freqs_hz) -> np.ndarray:
        """Complex response of a single (forward) pass at the given frequencies."""
        w = 2 * np.pi * np.asarray(freqs_hz, dtype=float) / self.fs_hz
        if self.kind is FilterKind.IIR_BUTTERWORTH_LOWPASS:
            _, h = sps.sosfreqz(self.coefficients, worN=w)
        else:
            _, h = sps.freqz(self.coefficients, worN=w)
        return h


@dataclass
class FilterState:
    """Streaming delay-line state. A fresh state is all zeros."""

    values: np.ndarray

    @classmethod
    def zeros(cls, spec: FilterSpec) -> "FilterState":
        if spec.kind is FilterKind.IIR_BUTTERWORTH_LOWPASS:
            return cls(np.zeros((spec.coefficients.shape[0], 2)))
        return cls(np.zeros(spec.state_size))


def design_butterworth_lowpass(order: int, cutoff_hz: float, fs_hz: float) -> FilterSpec:
    """Butterworth IIR low-pass via prewarped bilinear transform, as SOS.

    Unit DC gain and monotone magnitude by construction; the -3 dB point
    lands exactly at ``cutoff_hz``.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if fs_hz <= 0:
        raise ValueError(f"fs_hz must be positive, got {fs_hz}")
    if not 0 < cutoff_hz < fs_hz / 2:
        raise InvalidCorner(f"cutoff {cutoff_hz} Hz outside (0, {fs_hz / 2}) Hz")
    sos = sps.butter(order, cutoff_hz, btype="low", fs=fs_hz, output="sos")
    return FilterSpec(
        kind=FilterKind.IIR_BUTTERWORTH_LOWPASS,
        order_or_taps=order,
        corner_hz=(cutoff_hz,),
        fs_hz=fs_hz,
        coefficients=sos,
    )


def design_fir_bandpass(low_hz: float, high_hz: float, fs_hz: float, taps: int = 201) -> FilterSpec:
    """Linear-phase FIR band-pass (windowed sinc, Hamming window).

    The tap mean is subtracted so the DC gain is exactly zero: with a low
    corner below the window's transition width the plain windowed-sinc
    design leaks a few percent of DC, which matters when the passband rides
    on a pressure ramp two orders of magnitude larger.
    """
    if fs_hz <= 0:
        raise ValueError(f"fs_hz must be positive, got {fs_hz}")
    if not 0 < low_hz < high_hz < fs_hz / 2:
        raise InvalidCorner(
            f"band ({low_hz}, {high_hz}) Hz must satisfy 0 < low < high < {fs_hz / 2}"
        )
    if taps % 2 == 0:
        raise EvenTaps(f"taps must be odd, got {taps}")
    h = sps.firwin(taps, [low_hz, high_hz], pass_zero=False, window="hamming", fs=fs_hz)
    h = h - np.mean(h)
    return FilterSpec(
        kind=FilterKind.FIR_BANDPASS,
        order_or_taps=taps,
        corner_hz=(low_hz, high_hz),
        fs_hz=fs_hz,
        coefficients=h,
    )


def filter_stateful(spec: FilterSpec, state: FilterState, chunk) -> tuple[np.ndarray, FilterState]:
    """Filter one chunk, carrying the delay line across calls.

    Concatenated chunked outputs are bit-identical to a single whole-signal
    call, which is what keeps filtering continuous between signal fragments.
    """
    x = np.asarray(chunk, dtype=float)
    if spec.kind is FilterKind.IIR_BUTTERWORTH_LOWPASS:
        expected = (spec.coefficients.shape[0], 2)
        if state.values.shape != expected:
            raise StateShapeMismatch(f"state shape {state.values.shape} != {expected}")
        y, z = sps.sosfilt(spec.coefficients, x, zi=state.values)
    else:
        if state.values.shape != (spec.state_size,):
            raise StateShapeMismatch(
                f"state shape {state.values.shape} != ({spec.state_size},)"
            )
        y, z = sps.lfilter(spec.coefficients, [1.0], x, zi=state.values)
    return y, FilterState(z)


def filter_forward(spec: FilterSpec, signal_in) -> np.ndarray:
    """Single-pass filtering from a zero state (convenience wrapper)."""
    y, _ = filter_stateful(spec, FilterState.zeros(spec), signal_in)
    return y


def filter_memory(spec: FilterSpec) -> int:
    """Effective impulse-response length in samples.

    Exact for FIR (taps - 1); for IIR the response decays over a few
    periods of the lowest corner frequency.
    """
    if spec.kind is FilterKind.FIR_BANDPASS:
        return spec.state_size
    return int(math.ceil(spec.fs_hz / min(spec.corner_hz)))


def filter_zero_phase(spec: FilterSpec, signal_in) -> np.ndarray:
    """Forward-backward filtering; cancels the filter's phase shift.

    The signal is extended by odd reflection over three filter memories
    before the two passes, so linear trends continue smoothly across the
    edges. Output length equals input length.
    """
    x = np.asarray(signal_in, dtype=float)
    pad = 3 * filter_memory(spec)
    if len(x) <= pad:
        raise SignalTooShort(f"need more than {pad} samples, got {len(x)}")
    if spec.kind is FilterKind.IIR_BUTTERWORTH_LOWPASS:
        return sps.sosfiltfilt(spec.coefficients, x, padtype="odd", padlen=pad)
    return sps.filtfilt(spec.coefficients, [1.0], x, padtype="odd", padlen=pad)


def derivative(signal_in, fs_hz: float) -> np.ndarray:
    """Central-difference derivative scaled to units/second.

    Endpoints use one-sided differences; output length equals input length.
    """
    x = np.asarray(signal_in, dtype=float)
    if len(x) < 2:
        raise SignalTooShort("derivative needs at least 2 samples")
    return np.gradient(x, 1.0 / fs_hz)


def polyfit_smooth(xs, ys, degree: int) -> np.ndarray:
    """Least-squares polynomial fit evaluated back at ``xs``."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(x) != len(y):
        raise ValueError("xs and ys must have the same length")
    if len(x) < degree + 1:
        raise TooFewPoints(f"degree {degree} needs {degree + 1} points, got {len(x)}")
    if np.any(np.diff(x) <= 0):
        raise NonMonotoneX("xs must be strictly increasing")
    # Center/scale for conditioning; polyfit residual equals the normal-equations
    # solution within roundoff.
    x0 = x.mean()
    scale = max(float(np.ptp(x)), 1.0)
    coeffs = np.polyfit((x - x0) / scale, y, degree)
    return np.polyval(coeffs, (x - x0) / scale)


@dataclass(frozen=True)
class Peak:
    index: int
    time_s: float
    value: float
    prominence: float

    def __post_init__(self):
        if self.prominence < 0:
            raise ValueError("prominence must be >= 0")


@dataclass
class PeakSet:
    """Detected peaks, strictly increasing in index."""

    peaks: list = field(default_factory=list)

    def __post_init__(self):
        idx = self.indices()
        if np.any(np.diff(idx) <= 0):
            raise ValueError("peak indices must be strictly increasing")

    def __len__(self):
        return len(self.peaks)

    def __iter__(self):
        return iter(self.peaks)

    def __getitem__(self, i):
        return self.peaks[i]

    def indices(self) -> np.ndarray:
        return np.array([p.index for p in self.peaks], dtype=int)

    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.peaks], dtype=float)

    def prominences(self) -> np.ndarray:
        return np.array([p.prominence for p in self.peaks], dtype=float)


def find_peaks(
    signal_in,
    min_distance: int,
    min_height: float | None = None,
    min_prominence: float | None = None,
    prominence_window: int | None = None,
    fs_hz: float | None = None,
) -> PeakSet:
    """Strict local maxima with a minimum separation.

    When two candidates are closer than ``min_distance`` samples the taller
    one survives. Prominence is the standard topographic definition,
    evaluated inside ``prominence_window`` samples when given and globally
    otherwise; every returned peak carries its prominence. ``time_s`` is in
    seconds when ``fs_hz`` is given, in samples otherwise.
    """
    if min_distance < 1:
        raise ValueError(f"min_distance must be >= 1, got {min_distance}")
    x = np.asarray(signal_in, dtype=float)
    if len(x) < 3:
        return PeakSet([])
    idx, props = sps.find_peaks(
        x,
        height=min_height,
        distance=min_distance,
        prominence=min_prominence,
        wlen=prominence_window,
        plateau_size=(1, 1),
    )
    if min_prominence is not None:
        proms = props["prominences"]
    else:
        proms = sps.peak_prominences(x, idx, wlen=prominence_window)[0]
    dt = 1.0 / fs_hz if fs_hz else 1.0
    return PeakSet(
        [
            Peak(index=int(i), time_s=float(i) * dt, value=float(x[i]), prominence=float(p))
            for i, p in zip(idx, proms)
        ]
    )


def strict_local_maxima(signal_in) -> np.ndarray:
    """Indices i with x[i-1] < x[i] > x[i+1] (no distance rule)."""
    x = np.asarray(signal_in, dtype=float)
    if len(x) < 3:
        return np.array([], dtype=int)
    interior = (x[1:-1] > x[:-2]) & (x[1:-1] > x[2:])
    return np.flatnonzero(interior) + 1


def prune_by_distance(indices, heights, min_distance: int) -> np.ndarray:
    """Keep the taller of any two candidates closer than ``min_distance``.

    Same priority rule as find_peaks' distance condition, usable on an
    arbitrary candidate subset (e.g. after rejecting known-bad peaks).
    """
    indices = np.asarray(indices, dtype=int)
    heights = np.asarray(heights, dtype=float)
    order = np.argsort(-heights, kind="stable")
    keep = np.ones(len(indices), dtype=bool)
    for j in order:
        if not keep[j]:
            continue
        close = np.abs(indices - indices[j]) < min_distance
        close[j] = False
        keep &= ~(close & keep)
        keep[j] = True
    return np.sort(indices[keep])

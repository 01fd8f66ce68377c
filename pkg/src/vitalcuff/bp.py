"""Oscillometric blood-pressure analysis of one cuff-deflation trace.

Chain: zero-phase band-pass, derivative, morphological peak criteria,
distance-histogram grouping, oscillation envelope with cubic smoothing,
MAP at the envelope maximum, systolic/diastolic at fixed fractions of the
MAP amplitude, plausibility gating and the three-attempt retry protocol.
The whole pipeline is a pure function of the input trace and configuration.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import savgol_filter

from .config import BpConfig
from .dsp import (
    FilterSpec,
    PeakSet,
    derivative,
    design_butterworth_lowpass,
    design_fir_bandpass,
    filter_zero_phase,
    find_peaks,
)
from .errors import (
    InsufficientBeats,
    SourceExhausted,
    ThresholdNotReached,
    TooFewGroupedPeaks,
)
from .traces import Channel, Trace

SENTINEL = -1.0


class FailureReason(enum.Enum):
    NO_PEAKS = "NoPeaks"
    IMPLAUSIBLE_SBP = "ImplausibleSbp"
    IMPLAUSIBLE_DBP = "ImplausibleDbp"
    TOO_FEW_GROUPED_PEAKS = "TooFewGroupedPeaks"


@dataclass
class VitalsEstimate:
    hr_bpm: float = SENTINEL
    sbp_mmhg: float = SENTINEL
    dbp_mmhg: float = SENTINEL
    map_mmhg: float = SENTINEL
    valid: bool = False
    failure_reason: FailureReason | None = None

    def to_json_dict(self) -> dict:
        if self.valid:
            return {
                "hr_bpm": self.hr_bpm,
                "sbp_mmhg": self.sbp_mmhg,
                "dbp_mmhg": self.dbp_mmhg,
                "map_mmhg": self.map_mmhg,
                "valid": True,
                "failure_reason": None,
            }
        return {
            "hr_bpm": SENTINEL,
            "sbp_mmhg": SENTINEL,
            "dbp_mmhg": SENTINEL,
            "map_mmhg": SENTINEL,
            "valid": False,
            "failure_reason": self.failure_reason.value if self.failure_reason else None,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "VitalsEstimate":
        reason = d.get("failure_reason")
        return cls(
            hr_bpm=float(d["hr_bpm"]),
            sbp_mmhg=float(d["sbp_mmhg"]),
            dbp_mmhg=float(d["dbp_mmhg"]),
            map_mmhg=float(d["map_mmhg"]),
            valid=bool(d["valid"]),
            failure_reason=FailureReason(reason) if reason else None,
        )


@dataclass
class DeceasedAlert:
    """Raised-to-personnel outcome after the maximum consecutive failures."""

    attempts: list
    message: str = "no pulse or pressure detected after repeated attempts"


@dataclass
class DistanceHistogram:
    bin_edges: np.ndarray        # samples, left-closed/right-open bins
    counts: np.ndarray
    selected_bins: list
    valid_range: tuple           # (lo, hi) in samples, half-open

    def contains(self, distance: float) -> bool:
        return self.valid_range[0] <= distance < self.valid_range[1]


@dataclass
class OscillometricEnvelope:
    peaks: PeakSet
    cuff_pressure_at_peak: np.ndarray
    amplitude: np.ndarray
    amplitude_smoothed: np.ndarray
    map_index: int

    @property
    def map_mmhg(self) -> float:
        return float(self.cuff_pressure_at_peak[self.map_index])

    @property
    def map_amplitude(self) -> float:
        return float(self.amplitude_smoothed[self.map_index])


def preprocess(cuff: Trace, cfg: BpConfig | None = None) -> np.ndarray:
    """Zero-phase FIR band-pass; isolates the oscillations, drops the ramp."""
    cfg = cfg or BpConfig()
    spec = design_fir_bandpass(
        cfg.bandpass_low_hz, cfg.bandpass_high_hz, cuff.fs_hz, cfg.bandpass_taps
    )
    return filter_zero_phase(spec, cuff.samples)


def inflation_end_index(samples) -> int:
    """First index at which the cuff pressure reaches its maximum."""
    return int(np.argmax(np.asarray(samples)))


def pressure_baseline(cuff: Trace) -> np.ndarray:
    """Pulse-free cuff pressure: zero-phase low-pass well below the pulse band."""
    spec = design_butterworth_lowpass(2, 0.3, cuff.fs_hz)
    return filter_zero_phase(spec, cuff.samples)


def detect_oscillation_peaks(
    d,
    fs_hz: float,
    inflation_end: int,
    cfg: BpConfig | None = None,
    scale_region: tuple | None = None,
) -> PeakSet:
    """Morphological filter on the derivative signal.

    Height and prominence thresholds scale with the largest derivative
    excursion (absolute floors keep pulseless noise out); the prominence
    window is twice the longest expected beat interval. Peaks during the
    inflation phase are removed.
    """
    cfg = cfg or BpConfig()
    d = np.asarray(d, dtype=float)
    if scale_region is None:
        scale = float(np.max(np.abs(d))) if len(d) else 0.0
    else:
        lo, hi = scale_region
        seg = d[lo:hi]
        scale = float(np.max(np.abs(seg))) if len(seg) else float(np.max(np.abs(d)))
    height = max(cfg.peak_height_frac * scale, cfg.peak_height_floor)
    prominence = max(cfg.peak_prominence_frac * scale, cfg.peak_prominence_floor)
    window = int(round(2 * (60.0 / cfg.hr_min_bpm) * fs_hz))
    peaks = find_peaks(
        d,
        min_distance=1,
        min_height=height,
        min_prominence=prominence,
        prominence_window=window,
        fs_hz=fs_hz,
    )
    return PeakSet([p for p in peaks if p.index > inflation_end])


def distance_histogram(distances, fs_hz: float, cfg: BpConfig | None = None) -> DistanceHistogram:
    """Histogram of consecutive-peak distances over the 40..230 bpm span.

    Bin width is 90 ms; up to five non-zero bins with the highest counts are
    selected and the valid range spans from the start of the first selected
    bin to the end of the last one.
    """
    cfg = cfg or BpConfig()
    lo = math.floor(60.0 / cfg.hr_max_bpm * fs_hz)
    hi = 60.0 / cfg.hr_min_bpm * fs_hz
    width = int(round(cfg.histogram_bin_ms / 1000.0 * fs_hz))
    n_bins = max(1, math.ceil((hi - lo) / width))
    edges = lo + width * np.arange(n_bins + 1)
    counts = np.zeros(n_bins, dtype=int)
    for dist in np.asarray(distances):
        k = int((dist - lo) // width)
        if 0 <= k < n_bins:
            counts[k] += 1
    nonzero = np.flatnonzero(counts)
    by_count = set(sorted(nonzero, key=lambda k: (-counts[k], k))[:5])
    if by_count:
        # Isolated low-count bins far from the mode would stretch the valid
        # range across empty territory and readmit the irregular intervals
        # this filter exists to remove; keep the contiguous block of selected
        # bins around the most populated one.
        mode = min(by_count, key=lambda k: (-counts[k], k))
        lo_bin = hi_bin = mode
        while lo_bin - 1 in by_count:
            lo_bin -= 1
        while hi_bin + 1 in by_count:
            hi_bin += 1
        selected = list(range(lo_bin, hi_bin + 1))
        valid = (float(edges[lo_bin]), float(edges[hi_bin + 1]))
    else:
        selected = []
        valid = (float(edges[0]), float(edges[0]))
    return DistanceHistogram(
        bin_edges=edges, counts=counts, selected_bins=selected, valid_range=valid
    )


def _longest_run(indices, hist: DistanceHistogram) -> list:
    """Longest group of consecutive peaks with in-range successive distances.

    A single out-of-range distance is tolerated (the offending peak is
    skipped) when the sum of it and the next distance is in range, so an
    isolated noise peak does not split an otherwise valid group.
    """
    n = len(indices)
    best = []
    for start in range(n):
        run = [start]
        cur = start
        while True:
            if cur + 1 < n and hist.contains(indices[cur + 1] - indices[cur]):
                cur += 1
                run.append(cur)
            elif cur + 2 < n and hist.contains(indices[cur + 2] - indices[cur]):
                cur += 2
                run.append(cur)
            else:
                break
        if len(run) > len(best):
            best = run
    return best


def distance_histogram_filter(
    peaks: PeakSet, fs_hz: float, cfg: BpConfig | None = None
) -> tuple[PeakSet, DistanceHistogram]:
    """Second-stage grouping: keep the longest temporally regular peak run."""
    cfg = cfg or BpConfig()
    if len(peaks) < 3:
        raise TooFewGroupedPeaks(f"need at least 3 peaks, got {len(peaks)}")
    indices = peaks.indices()
    hist = distance_histogram(np.diff(indices), fs_hz, cfg)
    run = _longest_run(indices, hist)
    if len(run) < 3:
        raise TooFewGroupedPeaks(f"longest regular group has {len(run)} peaks")
    return PeakSet([peaks[i] for i in run]), hist


def _pav_increasing(y) -> np.ndarray:
    """L2 isotonic (non-decreasing) fit via pool-adjacent-violators."""
    vals, wts = [], []
    for v in np.asarray(y, dtype=float):
        vals.append(v)
        wts.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            v2, w2 = vals.pop(), wts.pop()
            v1, w1 = vals.pop(), wts.pop()
            vals.append((v1 * w1 + v2 * w2) / (w1 + w2))
            wts.append(w1 + w2)
    out = np.empty(len(y))
    i = 0
    for v, w in zip(vals, wts):
        out[i : i + w] = v
        i += w
    return out


def unimodal_project(y, mode_index: int) -> np.ndarray:
    """Closest (per-flank L2) unimodal sequence peaking at ``mode_index``."""
    y = np.asarray(y, dtype=float)
    left = _pav_increasing(y[: mode_index + 1])
    right = _pav_increasing(y[mode_index:][::-1])[::-1]
    return np.concatenate([left, right[1:]])


def smooth_envelope(pressures, amplitudes, cfg: BpConfig | None = None) -> np.ndarray:
    """Cubic smoothing of the oscillation envelope.

    A fixed-span local cubic gives a provisional MAP location; each point is
    then re-fit by a weighted local polynomial whose pressure bandwidth
    grows with the distance from that MAP. Near the MAP the fit stays cubic
    (that is where the envelope bends); on the far flanks, where curvature
    is negligible, a local line estimates the same value with far less
    variance. The result is projected onto a unimodal shape, which the true
    envelope is.
    """
    cfg = cfg or BpConfig()
    p = np.asarray(pressures, dtype=float)
    a = np.asarray(amplitudes, dtype=float)
    n = len(a)
    w = min(cfg.smooth_points, n if n % 2 else n - 1)
    provisional = savgol_filter(a, w, 3) if w > 3 else a.copy()
    p_map = p[int(np.argmax(provisional))]

    span = float(np.max(p) - np.min(p)) if n > 1 else 1.0
    out = np.empty(n)
    p_hi = float(np.max(p))
    p_lo = float(np.min(p))
    for i in range(n):
        dist = abs(p[i] - p_map)
        # Cap the bandwidth near the data edges: a wide one-sided window
        # would extrapolate the flank's inner slope onto the edge points.
        outer = (p_hi - p[i]) if p[i] > p_map else (p[i] - p_lo)
        h = max(
            cfg.smooth_bandwidth_mmhg,
            min(cfg.smooth_growth * dist, cfg.smooth_bandwidth_mmhg + outer),
        )
        mask = np.abs(p - p[i]) <= h
        while mask.sum() < min(8, n) and h < 2 * span:
            h *= 1.35
            mask = np.abs(p - p[i]) <= h
        x = p[mask] - p[i]
        weights = (1.0 - np.minimum(np.abs(x) / h, 1.0) ** 3) ** 3 + 1e-9
        # The high-pressure flank is long and nearly straight, so a local
        # line suffices there; the low-pressure flank is short and curved
        # and keeps the cubic.
        far_left = p[i] > p_map and dist > 1.25 * cfg.smooth_bandwidth_mmhg
        if far_left:
            degree = 1 if mask.sum() >= 3 else 0
        else:
            degree = 3 if mask.sum() >= 6 else max(1, int(mask.sum()) - 2)
        coeffs = np.polyfit(x, a[mask], degree, w=np.sqrt(weights))
        out[i] = coeffs[-1]
    return unimodal_project(out, int(np.argmax(out)))


def build_envelope(
    peaks: PeakSet,
    filtered,
    raw_cuff: Trace,
    cfg: BpConfig | None = None,
    baseline=None,
    window_clip: tuple | None = None,
) -> OscillometricEnvelope:
    """Per-beat oscillation amplitudes against cuff pressure, smoothed.

    Each beat's amplitude is the RMS of the cardiac oscillation inside a
    window around its derivative peak, obtained by regressing the
    band-passed signal on the first harmonics of the beat rate plus a
    linear trend: the trend soaks up the near-DC ramp residue that
    survives the band-pass, and restricting to the pulse harmonics keeps
    the off-harmonic noise out. The value is scaled to a peak-to-peak
    equivalent; the constant factor cancels in the ratio rules. The cuff
    pressure annotation comes from the pulse-free baseline, so the
    oscillation riding on it does not bias it. Ties at the smoothed
    maximum break toward the lower index (higher cuff pressure).
    """
    cfg = cfg or BpConfig()
    if len(peaks) < 4:
        raise TooFewGroupedPeaks(f"cubic envelope needs >= 4 peaks, got {len(peaks)}")
    filtered = np.asarray(filtered, dtype=float)
    if baseline is None:
        baseline = pressure_baseline(raw_cuff)
    half = int(round(cfg.amplitude_window_s * raw_cuff.fs_hz))
    n = len(filtered)
    clip_lo, clip_hi = window_clip if window_clip is not None else (0, n)
    beat_hz = raw_cuff.fs_hz / float(np.mean(np.diff(peaks.indices())))
    n_harmonics = max(1, min(3, int((cfg.bandpass_high_hz - 0.1) / beat_hz)))
    amplitude = np.empty(len(peaks))
    pressure = np.empty(len(peaks))
    for k, peak in enumerate(peaks):
        # Windows stay inside the controlled-deflation segment: the filtered
        # inflation/release corners would leak into the fit otherwise.
        lo = max(0, peak.index - half, min(clip_lo, peak.index - half // 4))
        hi = min(n, peak.index + half + 1, max(clip_hi, peak.index + half // 4 + 1))
        seg = filtered[lo:hi]
        t = (np.arange(lo, hi) - peak.index) / raw_cuff.fs_hz
        cols = [np.ones_like(t), t]
        for m in range(1, n_harmonics + 1):
            w = 2.0 * np.pi * m * beat_hz * t
            cols.extend([np.cos(w), np.sin(w)])
        design = np.column_stack(cols)
        coef, *_ = np.linalg.lstsq(design, seg, rcond=None)
        pulse_fit = design[:, 2:] @ coef[2:]
        amplitude[k] = 2.0 * math.sqrt(2.0) * float(np.sqrt(np.mean(pulse_fit**2)))
        pressure[k] = float(baseline[peak.index])
    smoothed = smooth_envelope(pressure, amplitude, cfg)
    map_index = int(np.argmax(smoothed))
    return OscillometricEnvelope(
        peaks=peaks,
        cuff_pressure_at_peak=pressure,
        amplitude=amplitude,
        amplitude_smoothed=smoothed,
        map_index=map_index,
    )


def estimate_bp(env: OscillometricEnvelope, cfg: BpConfig | None = None) -> tuple[float, float]:
    """Systolic/diastolic pressures at fixed fractions of the MAP amplitude.

    Systolic: the peak closest before the MAP whose smoothed amplitude and
    that of the peak preceding it both stay at or below 88% of the MAP
    amplitude. Diastolic mirrors it after the MAP with the 42% fraction and
    the following peak. The second peak is the double check against erratic
    amplitudes.
    """
    cfg = cfg or BpConfig()
    sm = env.amplitude_smoothed
    mi = env.map_index
    a_map = sm[mi]
    sbp_threshold = cfg.sbp_ratio * a_map
    dbp_threshold = cfg.dbp_ratio * a_map

    sbp = None
    for i in range(mi - 1, 0, -1):
        if sm[i] <= sbp_threshold and sm[i - 1] <= sbp_threshold:
            sbp = float(env.cuff_pressure_at_peak[i])
            break
    if sbp is None:
        raise ThresholdNotReached("sbp")

    dbp = None
    for i in range(mi + 1, len(sm) - 1):
        if sm[i] <= dbp_threshold and sm[i + 1] <= dbp_threshold:
            dbp = float(env.cuff_pressure_at_peak[i])
            break
    if dbp is None:
        raise ThresholdNotReached("dbp")
    return sbp, dbp


def estimate_hr_from_peaks(peaks: PeakSet, fs_hz: float) -> float:
    """Heart rate from the mean interval between accepted peaks."""
    if len(peaks) < 2:
        raise InsufficientBeats(f"need >= 2 peaks, got {len(peaks)}")
    mean_interval = float(np.mean(np.diff(peaks.indices())))
    return 60.0 * fs_hz / mean_interval


def validate(
    sbp: float,
    dbp: float,
    hr: float,
    map_mmhg: float | None = None,
    cfg: BpConfig | None = None,
) -> VitalsEstimate:
    """Plausibility gate; invalidity is a value, not an error."""
    cfg = cfg or BpConfig()
    if not cfg.sbp_range_mmhg[0] <= sbp <= cfg.sbp_range_mmhg[1]:
        return VitalsEstimate(valid=False, failure_reason=FailureReason.IMPLAUSIBLE_SBP)
    if not cfg.dbp_range_mmhg[0] <= dbp <= cfg.dbp_range_mmhg[1]:
        return VitalsEstimate(valid=False, failure_reason=FailureReason.IMPLAUSIBLE_DBP)
    if dbp >= sbp:
        return VitalsEstimate(valid=False, failure_reason=FailureReason.IMPLAUSIBLE_DBP)
    if map_mmhg is not None:
        if map_mmhg >= sbp:
            return VitalsEstimate(valid=False, failure_reason=FailureReason.IMPLAUSIBLE_SBP)
        if map_mmhg <= dbp:
            return VitalsEstimate(valid=False, failure_reason=FailureReason.IMPLAUSIBLE_DBP)
    return VitalsEstimate(
        hr_bpm=hr,
        sbp_mmhg=sbp,
        dbp_mmhg=dbp,
        map_mmhg=map_mmhg if map_mmhg is not None else SENTINEL,
        valid=True,
    )


@dataclass
class AnalysisArtifacts:
    """Intermediate products of one trace analysis, for debugging/plots."""

    filtered: np.ndarray = None
    derivative: np.ndarray = None
    baseline: np.ndarray = None
    inflation_end: int = 0
    peaks_all: PeakSet | None = None
    peaks_grouped: PeakSet | None = None
    histogram: DistanceHistogram | None = None
    envelope: OscillometricEnvelope | None = None


def analyze_trace(
    trace: Trace,
    cfg: BpConfig | None = None,
    artifacts: AnalysisArtifacts | None = None,
) -> VitalsEstimate:
    """Full oscillometric pipeline on one cuff trace.

    Expected failure modes map onto the estimate's failure reason; an
    invalid estimate serializes every numeric field as -1.
    """
    cfg = cfg or BpConfig()
    art = artifacts if artifacts is not None else AnalysisArtifacts()

    filtered = preprocess(trace, cfg)
    baseline = pressure_baseline(trace)
    d = derivative(filtered, trace.fs_hz)
    infl_end = inflation_end_index(trace.samples)

    # Threshold scale from the controlled-deflation segment: the inflation
    # and release corners leak broadband energy through the band-pass and
    # would inflate it otherwise.
    margin = int(round(1.0 * trace.fs_hz))
    below = np.flatnonzero(baseline[infl_end:] < 35.0)
    release_start = infl_end + (int(below[0]) if len(below) else len(baseline) - infl_end)
    scale_region = (min(infl_end + margin, len(d)), max(release_start, infl_end + margin + 1))

    art.filtered = filtered
    art.derivative = d
    art.baseline = baseline
    art.inflation_end = infl_end

    peaks = detect_oscillation_peaks(d, trace.fs_hz, infl_end, cfg, scale_region)
    art.peaks_all = peaks
    if len(peaks) == 0:
        return VitalsEstimate(valid=False, failure_reason=FailureReason.NO_PEAKS)
    try:
        grouped, hist = distance_histogram_filter(peaks, trace.fs_hz, cfg)
        art.peaks_grouped = grouped
        art.histogram = hist
        clip = (infl_end + int(round(0.3 * trace.fs_hz)), release_start)
        envelope = build_envelope(
            grouped, filtered, trace, cfg, baseline=baseline, window_clip=clip
        )
        art.envelope = envelope
        sbp, dbp = estimate_bp(envelope, cfg)
    except TooFewGroupedPeaks:
        return VitalsEstimate(valid=False, failure_reason=FailureReason.TOO_FEW_GROUPED_PEAKS)
    except ThresholdNotReached as exc:
        reason = (
            FailureReason.IMPLAUSIBLE_SBP if exc.side == "sbp" else FailureReason.IMPLAUSIBLE_DBP
        )
        return VitalsEstimate(valid=False, failure_reason=reason)
    hr = estimate_hr_from_peaks(grouped, trace.fs_hz)
    return validate(sbp, dbp, hr, map_mmhg=envelope.map_mmhg, cfg=cfg)


def run_measurement(trace_source, cfg: BpConfig | None = None, max_attempts: int | None = None):
    """Measure with retries: first valid estimate wins.

    ``trace_source`` yields one full deflation trace per attempt (an
    iterable or a zero-argument callable). After ``max_attempts`` consecutive
    invalid results a DeceasedAlert is returned so rescue personnel can be
    notified.
    """
    cfg = cfg or BpConfig()
    attempts = max_attempts if max_attempts is not None else cfg.max_attempts
    if callable(trace_source):
        def _next():
            t = trace_source()
            if t is None:
                raise SourceExhausted("trace provider returned None")
            return t
    else:
        iterator = iter(trace_source)

        def _next():
            try:
                return next(iterator)
            except StopIteration:
                raise SourceExhausted("trace provider is exhausted") from None

    history = []
    for _ in range(attempts):
        estimate = analyze_trace(_next(), cfg)
        history.append(estimate)
        if estimate.valid:
            return estimate
    return DeceasedAlert(attempts=history)

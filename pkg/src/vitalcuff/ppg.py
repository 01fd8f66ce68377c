"""Streaming heart-rate estimation from the PPG channel.

Samples arrive in 200 ms chunks, pass through a stateful 4th-order 3.5 Hz
Butterworth low-pass, and beats are re-detected over a trailing buffer.
Candidates clear a 0.3 s separation rule and an adaptive prominence band
around the mean prominence of the beats accepted in the previous 20 s;
metrics (PPM, IBI, frequency, SDNN, RMSSD) come from the accepted beats.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import peak_prominences

from .config import PpgConfig
from .dsp import (
    FilterState,
    Peak,
    PeakSet,
    design_butterworth_lowpass,
    filter_stateful,
    find_peaks,
    prune_by_distance,
    strict_local_maxima,
)
from .errors import NotInitialized

SENTINEL = -1.0

_METRIC_FIELDS = ("ppm", "ibi_ms", "freq_hz", "sdnn_ms", "rmssd_ms")


@dataclass
class HrvMetrics:
    ppm: float = SENTINEL
    ibi_ms: float = SENTINEL
    freq_hz: float = SENTINEL
    sdnn_ms: float = SENTINEL
    rmssd_ms: float = SENTINEL
    valid: bool = False

    def to_json_dict(self) -> dict:
        if not self.valid:
            return {name: SENTINEL for name in _METRIC_FIELDS}
        return {name: getattr(self, name) for name in _METRIC_FIELDS}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, d: dict) -> "HrvMetrics":
        values = {name: float(d[name]) for name in _METRIC_FIELDS}
        valid = all(v != SENTINEL for v in values.values())
        if not valid:
            return cls()
        return cls(valid=True, **values)

    @classmethod
    def from_json(cls, text: str) -> "HrvMetrics":
        return cls.from_json_dict(json.loads(text))


def hrv_metrics(beats: PeakSet, fs_hz: float) -> HrvMetrics:
    """Beat-interval metrics; fewer than two beats yields the -1 sentinel.

    IBI is the mean successive interval, PPM = 60000/IBI, SDNN the
    population standard deviation of the intervals and RMSSD the RMS of
    successive interval differences (both 0 while only one interval exists).
    """
    if len(beats) < 2:
        return HrvMetrics()
    intervals_ms = np.diff(beats.indices()) * 1000.0 / fs_hz
    ibi = float(np.mean(intervals_ms))
    ppm = 60000.0 / ibi
    sdnn = float(np.std(intervals_ms))
    diffs = np.diff(intervals_ms)
    rmssd = float(np.sqrt(np.mean(diffs**2))) if len(diffs) else 0.0
    return HrvMetrics(
        ppm=ppm, ibi_ms=ibi, freq_hz=ppm / 60.0, sdnn_ms=sdnn, rmssd_ms=rmssd, valid=True
    )


@dataclass
class BeatHistory:
    """Accepted beats inside a trailing window, with their prominences."""

    window_s: float
    fs_hz: float
    entries: list = field(default_factory=list)  # (abs_index, prominence)

    def copy(self) -> "BeatHistory":
        return BeatHistory(self.window_s, self.fs_hz, list(self.entries))

    def add(self, abs_index: int, prominence: float) -> None:
        self.entries.append((abs_index, prominence))
        horizon = abs_index - int(self.window_s * self.fs_hz)
        while self.entries and self.entries[0][0] < horizon:
            self.entries.pop(0)

    def mean_prominence(self, before_index: int) -> float | None:
        """Mean prominence of beats in the window ending at ``before_index``.

        Only previously accepted beats count; the candidate itself is not in
        the window. Returns None while the window is empty.
        """
        horizon = before_index - int(self.window_s * self.fs_hz)
        proms = [p for idx, p in self.entries if horizon <= idx < before_index]
        if not proms:
            return None
        return float(np.mean(proms))


def detect_beats(filtered, fs_hz: float, min_separation_s: float = 0.3,
                 min_prominence: float | None = None) -> PeakSet:
    """First-pass beat candidates: strict maxima at least 0.3 s apart.

    The separation corresponds to a 200 bpm ceiling; rounding is upward so
    faster rates can never be admitted.
    """
    distance = math.ceil(min_separation_s * fs_hz)
    return find_peaks(filtered, min_distance=distance, min_prominence=min_prominence,
                      fs_hz=fs_hz)


def adaptive_prominence_filter(candidates: PeakSet, history: BeatHistory,
                               band: tuple = (0.6, 1.6)) -> PeakSet:
    """Keep peaks whose prominence sits inside the band around the history mean.

    With an empty history every candidate is accepted and seeds the window;
    accepted peaks update the history as they are processed.
    """
    kept = []
    for peak in candidates:
        mu = history.mean_prominence(peak.index)
        if mu is None or band[0] * mu <= peak.prominence <= band[1] * mu:
            kept.append(peak)
            history.add(peak.index, peak.prominence)
    return PeakSet(kept)


class StreamingHeartRate:
    """Chunk-driven heart-rate pipeline over a single PPG stream.

    One instance owns its state and is single-threaded; call ``start()``
    before pushing chunks. Identical chunk sequences produce identical
    metric sequences (no wall-clock dependence).
    """

    def __init__(self, cfg: PpgConfig | None = None):
        self.cfg = cfg or PpgConfig()
        self._started = False

    def start(self) -> None:
        cfg = self.cfg
        self._spec = design_butterworth_lowpass(cfg.lowpass_order, cfg.lowpass_cutoff_hz, cfg.fs_hz)
        self._state = None          # seeded from the first sample's DC level
        self._buffer = np.empty(0)
        self._buffer_start = 0      # absolute index of buffer[0]
        self._total = 0             # samples consumed so far
        self._committed: list[Peak] = []
        self._committed_idx: set[int] = set()
        self._rejected: set[int] = set()
        # Excised-artifact positions: an interval spanning one is not an
        # inter-beat interval (the artifact may hide beats inside it).
        self._breaks: list[int] = []
        self._history = BeatHistory(cfg.prominence_window_s, cfg.fs_hz)
        self._boundary = 0          # absolute index up to which beats are final
        self._started = True

    def push_chunk(self, chunk) -> HrvMetrics | None:
        """Filter one chunk, re-detect beats, return metrics once available."""
        if not self._started:
            raise NotInitialized("call start() before pushing chunks")
        chunk = np.asarray(chunk, dtype=float)
        if len(chunk) == 0:
            return self._maybe_metrics()
        if self._state is None:
            # Steady-state init at the first sample's level: a zero delay
            # line would emit a step transient tall enough to seed the
            # adaptive filter with a bogus prominence.
            from scipy.signal import sosfilt_zi

            self._state = FilterState(sosfilt_zi(self._spec.coefficients) * chunk[0])
        filtered, self._state = filter_stateful(self._spec, self._state, chunk)
        self._buffer = np.concatenate([self._buffer, filtered])
        self._total += len(chunk)
        max_len = int(self.cfg.buffer_s * self.cfg.fs_hz)
        if len(self._buffer) > max_len:
            drop = len(self._buffer) - max_len
            self._buffer = self._buffer[drop:]
            self._buffer_start += drop
        boundary = self._total - int(self.cfg.commit_margin_s * self.cfg.fs_hz)
        self._commit_through(boundary)
        return self._maybe_metrics()

    def flush(self) -> HrvMetrics:
        """Commit the still-pending tail (end of stream) and report metrics."""
        if not self._started:
            raise NotInitialized("call start() before flushing")
        self._commit_through(self._total)
        return self.metrics()

    def metrics(self) -> HrvMetrics:
        """Beat metrics over intervals that do not span an excised artifact.

        Two beats separated by a cut-out region are not successive: the
        artifact may have hidden beats between them, so that span carries no
        rate information and is left out of the interval statistics.
        """
        indices = np.array([p.index for p in self._committed], dtype=int)
        if len(indices) < 2:
            return HrvMetrics()
        breaks = np.array(sorted(self._breaks), dtype=int)
        intervals = []
        adjacent_to_previous = []
        previous_kept = False
        for a, b in zip(indices[:-1], indices[1:]):
            crossing = len(breaks) > 0 and bool(np.any((breaks > a) & (breaks < b)))
            if crossing:
                previous_kept = False
                continue
            intervals.append((b - a) * 1000.0 / self.cfg.fs_hz)
            adjacent_to_previous.append(previous_kept)
            previous_kept = True
        if not intervals:
            return HrvMetrics()
        intervals = np.asarray(intervals)
        ibi = float(np.mean(intervals))
        ppm = 60000.0 / ibi
        diffs = [
            intervals[k] - intervals[k - 1]
            for k in range(1, len(intervals))
            if adjacent_to_previous[k]
        ]
        rmssd = float(np.sqrt(np.mean(np.square(diffs)))) if diffs else 0.0
        return HrvMetrics(
            ppm=ppm,
            ibi_ms=ibi,
            freq_hz=ppm / 60.0,
            sdnn_ms=float(np.std(intervals)),
            rmssd_ms=rmssd,
            valid=True,
        )

    def beats(self) -> PeakSet:
        return PeakSet(list(self._committed))

    def _maybe_metrics(self) -> HrvMetrics | None:
        if len(self._committed) >= 2:
            return self.metrics()
        return None

    def _commit_through(self, boundary: int) -> None:
        """Accept/reject candidates up to ``boundary`` (absolute samples).

        Detection runs over the whole buffer so prominences have context.
        When a candidate is rejected, its lobe is excised from a working
        copy of the buffer and the landscape is re-evaluated: an artifact
        tall enough to be rejected also rides over its neighbours, displacing
        them in the distance selection and stealing their topographic
        prominence, so genuine beats next to it only survive once it is cut
        out. Candidacy is by "not yet committed" inside a trailing recovery
        window, not a single high-water mark, so a beat whose first chance
        fell in an earlier chunk can still be recovered. Repeats until a
        pass adds no new rejection.
        """
        cfg = self.cfg
        if boundary <= self._boundary or len(self._buffer) < 3:
            return
        distance = math.ceil(cfg.min_beat_separation_s * cfg.fs_hz)
        band = (cfg.prominence_band_low, cfg.prominence_band_high)
        recovery = int((2 * cfg.commit_margin_s + 2.0) * cfg.fs_hz)
        floor_idx = max(self._buffer_start, boundary - recovery)
        work = self._buffer.copy()
        for abs_idx in self._rejected:
            self._excise(work, abs_idx - self._buffer_start)

        while True:
            maxima = strict_local_maxima(work)
            if len(maxima) == 0:
                self._boundary = boundary
                return
            proms = peak_prominences(work, maxima)[0]
            floor_ok = proms >= cfg.min_beat_prominence
            maxima, proms = maxima[floor_ok], proms[floor_ok]
            keep = np.array(
                [(m + self._buffer_start) not in self._rejected for m in maxima], dtype=bool
            )
            maxima, proms = maxima[keep], proms[keep]
            if len(maxima) == 0:
                self._boundary = boundary
                return
            prom_by_rel = dict(zip(maxima.tolist(), proms.tolist()))
            selected = prune_by_distance(maxima, work[maxima], distance)
            candidates = [
                rel
                for rel in selected.tolist()
                if floor_idx <= rel + self._buffer_start <= boundary
                and (rel + self._buffer_start) not in self._committed_idx
            ]
            trial = self._history.copy()
            accepted, too_small, too_tall = [], [], []
            for rel in candidates:
                abs_idx = rel + self._buffer_start
                prom = prom_by_rel[rel]
                mu = trial.mean_prominence(abs_idx)
                if mu is None or band[0] * mu <= prom <= band[1] * mu:
                    trial.add(abs_idx, prom)
                    accepted.append((abs_idx, prom))
                elif prom > band[1] * mu:
                    too_tall.append(abs_idx)
                else:
                    too_small.append(abs_idx)
            if too_tall:
                # Over-prominent outliers first: their lobes ride over the
                # neighbouring beats, so under-prominent candidates are
                # re-judged only after the offenders are excised.
                self._rejected.update(too_tall)
                self._breaks.extend(too_tall)
                for abs_idx in too_tall:
                    self._excise(work, abs_idx - self._buffer_start)
                continue
            # Under-prominent candidates stay pending rather than being
            # permanently rejected: a later excision can restore the
            # prominence an artifact stole from them.
            self._history = trial
            for abs_idx, prom in accepted:
                self._committed.append(
                    Peak(
                        index=abs_idx,
                        time_s=abs_idx / cfg.fs_hz,
                        value=float(self._buffer[abs_idx - self._buffer_start]),
                        prominence=float(prom),
                    )
                )
                self._committed_idx.add(abs_idx)
            self._committed.sort(key=lambda pk: pk.index)
            self._boundary = boundary
            self._rejected = {r for r in self._rejected if r >= self._buffer_start}
            self._committed_idx = {c for c in self._committed_idx if c >= self._buffer_start}
            return

    def _excise(self, work: np.ndarray, rel: int) -> None:
        """Bridge a rejected peak's lobe between its flanking troughs.

        Anchoring at the local minima keeps the neighbouring beats' own
        lobes intact, so their prominence recovers once the offender is
        gone.
        """
        span = int(round(0.5 * self.cfg.fs_hz))
        n = len(work)
        if not 0 <= rel < n:
            return
        lo = rel
        stop = max(0, rel - span)
        while lo > stop and not (work[lo] < work[rel] and work[lo] <= work[lo - 1]):
            lo -= 1
        hi = rel
        stop = min(n - 1, rel + span)
        while hi < stop and not (work[hi] < work[rel] and work[hi] <= work[hi + 1]):
            hi += 1
        if hi - lo >= 2:
            work[lo : hi + 1] = np.linspace(work[lo], work[hi], hi - lo + 1)

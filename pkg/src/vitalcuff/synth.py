"""Ground-truth synthetic signals for both estimation pipelines.

Every generator is a pure function of (spec, seed): the same seed gives a
bit-identical trace. Oscillometric traces carry an analytic amplitude
envelope whose systolic/diastolic ratio crossings are placed exactly, so
the generated ground truth needs no simulation to verify.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleEnvelope, InvalidSynthSpec
from .traces import Channel, Trace

PPG_CENTER_V = 1.65          # sensor output centred at VDD/2 with VDD = 3.3 V
PPG_PULSE_V = 0.30
PPG_WANDER_V = 0.05
PPG_WANDER_HZ = 0.1
ARTIFACT_GAIN = 3.5          # artifact height relative to the pulse amplitude

PULSE_RISE_S = 0.15
PULSE_DECAY_S = 0.45


@dataclass
class SynthSpec:
    """Parameters of one synthetic subject/measurement."""

    hr_bpm: float = 75.0
    sbp_mmhg: float = 121.0
    dbp_mmhg: float = 79.0
    map_mmhg: float = 95.0
    deflation_rate: float = 4.0      # mmHg/s
    fs_hz: float = 100.0
    noise_sigma: float = 0.3         # channel units (mmHg or volts)
    artifact_rate: float = 0.0       # spikes per minute (PPG only)
    amplitude_mmhg: float | None = None   # oscillation size at the MAP
    seed: int = 0

    def __post_init__(self):
        if self.amplitude_mmhg is None:
            # Oscillation size grows with pulse pressure (compliance model).
            # The small sealed cuff has little gas volume, so its pressure
            # swing per arterial volume pulse is large; 3.5 + 0.055*PP spans
            # roughly 5..7 mmHg over common pressures.
            self.amplitude_mmhg = 3.5 + 0.055 * (self.sbp_mmhg - self.dbp_mmhg)

    def validate(self) -> "SynthSpec":
        if not 40.0 <= self.hr_bpm <= 230.0:
            raise InvalidSynthSpec(f"hr_bpm must be in [40, 230], got {self.hr_bpm}")
        if not self.dbp_mmhg < self.map_mmhg < self.sbp_mmhg:
            raise InvalidSynthSpec(
                f"need dbp < map < sbp, got {self.dbp_mmhg}/{self.map_mmhg}/{self.sbp_mmhg}"
            )
        if self.fs_hz <= 0:
            raise InvalidSynthSpec("fs_hz must be positive")
        if self.noise_sigma < 0 or self.artifact_rate < 0:
            raise InvalidSynthSpec("noise_sigma and artifact_rate must be >= 0")
        if self.amplitude_mmhg <= 0:
            raise InvalidSynthSpec("amplitude_mmhg must be positive")
        return self


def pulse_wave(offsets_s) -> np.ndarray:
    """One heartbeat's waveform, peaking (value 1) at offset 0.

    Raised-cosine rise over 0.15 s and decay over 0.45 s, zero outside.
    """
    u = np.asarray(offsets_s, dtype=float)
    out = np.zeros_like(u)
    rising = (u >= -PULSE_RISE_S) & (u < 0)
    falling = (u >= 0) & (u <= PULSE_DECAY_S)
    out[rising] = 0.5 * (1 + np.cos(np.pi * u[rising] / PULSE_RISE_S))
    out[falling] = 0.5 * (1 + np.cos(np.pi * u[falling] / PULSE_DECAY_S))
    return out


def _pulse_train(times_s, beat_times) -> np.ndarray:
    x = np.zeros_like(times_s)
    fs = 1.0 / (times_s[1] - times_s[0])
    n = len(times_s)
    for tb in beat_times:
        lo = max(0, int((tb - times_s[0] - PULSE_RISE_S) * fs) - 1)
        hi = min(n, int((tb - times_s[0] + PULSE_DECAY_S) * fs) + 2)
        x[lo:hi] += pulse_wave(times_s[lo:hi] - tb)
    return x


CUFF_DECAY_TAU_S = 0.35


def cuff_pulse_wave(phase_s, period_s) -> np.ndarray:
    """Periodic arterial pulse: fast rise, diastolic runoff until the next beat.

    The exponential decay spans the whole interval (no dead time between
    beats), which is what real cuff oscillations look like; a waveform with
    flat gaps would ring through the band-pass and fake extra beats. Peak
    value 1 at phase 0; continuous across the beat boundary.
    """
    phase = np.asarray(phase_s, dtype=float) % period_s
    tail = math.exp(-max(period_s - PULSE_RISE_S, 0.0) / CUFF_DECAY_TAU_S)
    out = np.empty_like(phase)
    rising = phase >= period_s - PULSE_RISE_S
    u = (phase[rising] - (period_s - PULSE_RISE_S)) / PULSE_RISE_S
    out[rising] = tail + (1.0 - tail) * 0.5 * (1 - np.cos(np.pi * u))
    out[~rising] = np.exp(-phase[~rising] / CUFF_DECAY_TAU_S)
    return out - _cuff_wave_mean(period_s)


def _cuff_wave_mean(period_s: float) -> float:
    """Per-period mean of the raw pulse shape (rise + runoff), in closed form.

    Subtracting it keeps the injected oscillation zero-mean per beat, so the
    cuff baseline stays the reference axis that the ground truth uses.
    """
    rise = min(PULSE_RISE_S, period_s)
    decay_span = max(period_s - PULSE_RISE_S, 0.0)
    tail = math.exp(-decay_span / CUFF_DECAY_TAU_S)
    area_decay = CUFF_DECAY_TAU_S * (1.0 - tail)
    area_rise = rise * (1.0 + tail) / 2.0
    return (area_decay + area_rise) / period_s


def envelope_widths(sbp, map_p, dbp, sbp_ratio=0.88, dbp_ratio=0.42) -> tuple:
    """Per-side Gaussian widths that place both ratio crossings exactly.

    The left width solves A(sbp) = sbp_ratio * A(map), the right width
    A(dbp) = dbp_ratio * A(map).
    """
    if not dbp < map_p < sbp:
        raise InfeasibleEnvelope("crossings require dbp < map < sbp")
    if not 0 < dbp_ratio < 1 or not 0 < sbp_ratio < 1:
        raise InfeasibleEnvelope("ratios must lie strictly inside (0, 1)")
    sigma_left = (sbp - map_p) / math.sqrt(-2.0 * math.log(sbp_ratio))
    sigma_right = (map_p - dbp) / math.sqrt(-2.0 * math.log(dbp_ratio))
    return sigma_left, sigma_right


def amplitude_envelope(pressure, map_p, sigma_left, sigma_right) -> np.ndarray:
    """Unimodal envelope: Gaussian flanks with independent widths, peak 1."""
    p = np.asarray(pressure, dtype=float)
    out = np.empty_like(p)
    above = p >= map_p
    out[above] = np.exp(-((p[above] - map_p) ** 2) / (2 * sigma_left**2))
    out[~above] = np.exp(-((p[~above] - map_p) ** 2) / (2 * sigma_right**2))
    return out


def make_pulse_source(spec: SynthSpec):
    """Oscillation source f(t_s, cuff_mmhg) -> mmHg for the plant simulator."""
    spec.validate()
    sigma_left, sigma_right = envelope_widths(spec.sbp_mmhg, spec.map_mmhg, spec.dbp_mmhg)
    period = 60.0 / spec.hr_bpm

    def source(t_s, cuff_mmhg):
        a = amplitude_envelope(cuff_mmhg, spec.map_mmhg, sigma_left, sigma_right)
        return spec.amplitude_mmhg * a * float(cuff_pulse_wave(t_s, period))

    return source


def synth_ppg(spec: SynthSpec, duration_s: float, fs_hz: float = 25.0):
    """Synthetic PPG trace plus the exact beat and artifact times.

    Beats sit on an exact grid at the requested heart rate; artifacts are
    tall narrow spikes dropped near the midpoints of randomly chosen
    inter-beat gaps, which keeps them separable from genuine beats and
    rejectable by their outsized prominence. ``noise_sigma`` is in volts.
    """
    spec.validate()
    if duration_s < 10.0:
        raise InvalidSynthSpec(f"duration must be >= 10 s, got {duration_s}")
    rng = np.random.default_rng(spec.seed)
    n = int(round(duration_s * fs_hz))
    t = np.arange(n) / fs_hz
    period = 60.0 / spec.hr_bpm
    beat_times = np.arange(0.4, duration_s - 0.5, period)

    x = PPG_CENTER_V + PPG_PULSE_V * _pulse_train(t, beat_times)
    x += PPG_WANDER_V * np.sin(2 * np.pi * PPG_WANDER_HZ * t + rng.uniform(0, 2 * np.pi))

    artifact_times = []
    n_artifacts = int(round(spec.artifact_rate * duration_s / 60.0))
    if n_artifacts:
        gaps = np.flatnonzero(beat_times[:-1] > 1.0)  # gaps fully inside the trace
        chosen = rng.choice(gaps, size=min(n_artifacts, len(gaps)), replace=False)
        for g in np.sort(chosen):
            mid = beat_times[g] + 0.5 * period
            ta = mid + rng.uniform(-0.05, 0.05) * period
            artifact_times.append(float(ta))
            # Motion artifacts rail the sensor briefly: a near-impulse whose
            # low-passed remnant is still far more prominent than a beat.
            i0 = int(round(ta * fs_hz))
            x[i0 : min(n, i0 + 2)] = PPG_CENTER_V + ARTIFACT_GAIN * PPG_PULSE_V

    if spec.noise_sigma > 0:
        x += rng.normal(0.0, spec.noise_sigma, size=n)

    trace = Trace(channel=Channel.PPG_RAW, fs_hz=fs_hz, samples=x)
    return trace, np.asarray(beat_times), np.asarray(artifact_times)


def _measurement_baseline(duration_s, fs_hz, inflate_to, inflation_rate, deflation_rate,
                          floor_mmhg=2.0, release_rate=80.0, corner_s=0.5):
    """Clean cuff-pressure profile: idle, inflate, bleed, full release.

    Corners are rounded over ~``corner_s`` (two box passes, a triangular
    blend); valve transitions are not instantaneous in the real plant, and
    sharp slope steps would ring through the analysis band-pass. Linear
    segments pass through the blending untouched.
    """
    n = int(round(duration_s * fs_hz))
    t = np.arange(n) / fs_hz
    t_idle = 1.0
    t_top = t_idle + inflate_to / inflation_rate
    deflate_span = max(inflate_to - 30.0, 0.0)
    t_release = t_top + deflate_span / deflation_rate

    p = np.zeros(n)
    seg = (t >= t_idle) & (t < t_top)
    p[seg] = (t[seg] - t_idle) * inflation_rate
    seg = (t >= t_top) & (t < t_release)
    p[seg] = inflate_to - (t[seg] - t_top) * deflation_rate
    seg = t >= t_release
    p[seg] = np.maximum(
        inflate_to - deflate_span - (t[seg] - t_release) * release_rate, floor_mmhg / 2
    )
    p = np.clip(p, 0.0, None)
    k = max(1, int(round(corner_s * fs_hz / 2)))
    kernel = np.ones(k) / k
    for _ in range(2):
        padded = np.pad(p, (k, k), mode="edge")
        p = np.convolve(padded, kernel, mode="same")[k:-k]
    return t, p, t_release


def synth_oscillometric(spec: SynthSpec, inflate_to: float = 190.0, inflation_rate: float = 40.0):
    """Cuff-deflation trace with an analytically placed envelope.

    Returns the trace and a ground-truth dict whose sbp/dbp entries are the
    exact pressures where the envelope crosses 88% / 42% of its peak.
    """
    spec.validate()
    if not 3.0 <= spec.deflation_rate <= 5.0:
        raise InvalidSynthSpec("deflation_rate must lie in [3, 5] mmHg/s")
    sigma_left, sigma_right = envelope_widths(spec.sbp_mmhg, spec.map_mmhg, spec.dbp_mmhg)

    duration = 1.0 + inflate_to / inflation_rate + (inflate_to - 30.0) / spec.deflation_rate + 3.0
    t, base, _ = _measurement_baseline(
        duration, spec.fs_hz, inflate_to, inflation_rate, spec.deflation_rate
    )
    period = 60.0 / spec.hr_bpm
    beat_times = np.arange(0.2, duration, period)
    pulses = cuff_pulse_wave(t - beat_times[0], period)
    envelope = spec.amplitude_mmhg * amplitude_envelope(
        base, spec.map_mmhg, sigma_left, sigma_right
    )
    x = base + envelope * pulses
    rng = np.random.default_rng(spec.seed)
    if spec.noise_sigma > 0:
        x += rng.normal(0.0, spec.noise_sigma, size=len(x))

    trace = Trace(channel=Channel.CUFF_PRESSURE, fs_hz=spec.fs_hz, samples=x)
    truth = {
        "hr_bpm": spec.hr_bpm,
        "sbp_mmhg": spec.sbp_mmhg,
        "dbp_mmhg": spec.dbp_mmhg,
        "map_mmhg": spec.map_mmhg,
        "sigma_left": sigma_left,
        "sigma_right": sigma_right,
        "beat_times": [float(tb) for tb in beat_times],
    }
    return trace, truth


def synth_mannequin(duration_s: float, fs_hz: float = 100.0, noise_sigma: float = 0.3,
                    seed: int = 0) -> Trace:
    """Pulseless measurement: the deflation baseline plus sensor noise."""
    if duration_s < 10.0:
        raise InvalidSynthSpec(f"duration must be >= 10 s, got {duration_s}")
    _, base, _ = _measurement_baseline(duration_s, fs_hz, 190.0, 40.0, 4.0)
    rng = np.random.default_rng(seed)
    x = base.copy()
    if noise_sigma > 0:
        x += rng.normal(0.0, noise_sigma, size=len(x))
    return Trace(channel=Channel.CUFF_PRESSURE, fs_hz=fs_hz, samples=x)

"""Run configuration with the published defaults.

Every tunable of the heart-rate pipeline, the oscillometric pipeline and the
pneumatic simulator lives here. Values are validated against their physical
ranges at load time. Files use INI sections ([ppg], [bp], [sim]) with
``key = value`` lines; precedence is flags > file > defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields

from .errors import ConfigError


@dataclass
class PpgConfig:
    fs_hz: float = 25.0                  # pulse sensor rate (40 ms interval)
    chunk_ms: float = 200.0              # samples accumulated per processing call
    lowpass_cutoff_hz: float = 3.5
    lowpass_order: int = 4
    min_beat_separation_s: float = 0.3   # 200 bpm ceiling
    prominence_window_s: float = 20.0    # adaptive-filter history span
    prominence_band_low: float = 0.6     # 40% below the running mean
    prominence_band_high: float = 1.6    # 60% above the running mean
    min_beat_prominence: float = 0.02    # volts; noise floor for candidates
    buffer_s: float = 30.0               # re-detection window
    commit_margin_s: float = 2.0         # region younger than this stays pending

    def validate(self):
        if not 0 < self.lowpass_cutoff_hz < self.fs_hz / 2:
            raise ConfigError("ppg lowpass cutoff must lie below Nyquist")
        if self.lowpass_order < 1:
            raise ConfigError("ppg lowpass order must be >= 1")
        if self.min_beat_separation_s <= 0:
            raise ConfigError("ppg min beat separation must be positive")
        if not 0 < self.prominence_band_low < 1 < self.prominence_band_high:
            raise ConfigError("ppg prominence band must straddle 1.0")
        if self.prominence_window_s <= 0 or self.buffer_s <= 0:
            raise ConfigError("ppg window lengths must be positive")
        if self.chunk_ms <= 0 or self.commit_margin_s < 0:
            raise ConfigError("ppg chunking parameters out of range")
        if self.min_beat_prominence < 0:
            raise ConfigError("ppg beat prominence floor must be >= 0")


@dataclass
class BpConfig:
    fs_hz: float = 100.0                 # cuff pressure rate (10 ms interval)
    bandpass_low_hz: float = 0.5
    bandpass_high_hz: float = 4.0
    bandpass_taps: int = 201
    hr_min_bpm: float = 40.0
    hr_max_bpm: float = 230.0
    histogram_bin_ms: float = 90.0
    peak_height_frac: float = 0.15       # of max |derivative|
    peak_prominence_frac: float = 0.10
    peak_height_floor: float = 3.0       # mmHg/s; absolute gates so pulseless
    peak_prominence_floor: float = 2.0   # traces fail instead of fitting noise
    amplitude_window_s: float = 0.6      # half-width around each accepted peak
    sbp_ratio: float = 0.88
    dbp_ratio: float = 0.42
    sbp_range_mmhg: tuple = (70.0, 240.0)
    dbp_range_mmhg: tuple = (40.0, 140.0)
    smooth_points: int = 9               # local cubic fit span (peaks)
    smooth_bandwidth_mmhg: float = 14.0  # minimum pressure bandwidth of the fit
    smooth_growth: float = 0.8           # bandwidth gain with distance from MAP
    max_attempts: int = 3

    def validate(self):
        if not 0 < self.bandpass_low_hz < self.bandpass_high_hz < self.fs_hz / 2:
            raise ConfigError("bp bandpass corners must satisfy 0 < low < high < Nyquist")
        if self.bandpass_taps % 2 == 0 or self.bandpass_taps < 3:
            raise ConfigError("bp bandpass taps must be odd and >= 3")
        if not 0 < self.hr_min_bpm < self.hr_max_bpm:
            raise ConfigError("bp heart-rate range invalid")
        if self.histogram_bin_ms <= 0:
            raise ConfigError("bp histogram bin must be positive")
        if not 0 < self.dbp_ratio < self.sbp_ratio < 1:
            raise ConfigError("bp ratios must satisfy 0 < dbp < sbp < 1")
        if not 0 < self.sbp_range_mmhg[0] < self.sbp_range_mmhg[1]:
            raise ConfigError("bp systolic plausibility range invalid")
        if not 0 < self.dbp_range_mmhg[0] < self.dbp_range_mmhg[1]:
            raise ConfigError("bp diastolic plausibility range invalid")
        if self.smooth_points < 5 or self.smooth_points % 2 == 0:
            raise ConfigError("bp smooth_points must be odd and >= 5")
        if self.max_attempts < 1:
            raise ConfigError("bp max_attempts must be >= 1")
        if min(self.peak_height_frac, self.peak_prominence_frac) <= 0:
            raise ConfigError("bp peak criteria fractions must be positive")
        if min(self.peak_height_floor, self.peak_prominence_floor) < 0:
            raise ConfigError("bp peak criteria floors must be >= 0")
        if self.amplitude_window_s <= 0 or self.smooth_bandwidth_mmhg <= 0:
            raise ConfigError("bp window parameters must be positive")


@dataclass
class SimConfig:
    dt_ms: int = 10                      # 100 Hz control/sensor tick
    clamp_target_mmhg: float = 600.0
    cuff_target_mmhg: float = 190.0
    deflation_rate_mmhg_s: float = 4.0   # steady bleed, within 3..5
    deflation_stop_mmhg: float = 40.0    # below audible-Korotkoff pressures
    vent_threshold_mmhg: float = 2.0     # "virtually negligible"
    watchdog_ms: int = 500
    pump_rate_mmhg_s: float = 40.0
    vent_rate_mmhg_s: float = 80.0
    sensor_noise_sigma: float = 0.3
    cuff_ceiling_mmhg: float = 320.0     # sensor tops out near 300 mmHg
    clamp_ceiling_mmhg: float = 700.0    # clamp circuit must exceed 600
    noprogress_window_ms: int = 3000
    noprogress_min_delta_mmhg: float = 0.5

    def validate(self):
        if not 1 <= self.dt_ms <= 20:
            raise ConfigError("sim dt_ms must be in [1, 20]")
        if not 3.0 <= self.deflation_rate_mmhg_s <= 5.0:
            raise ConfigError("sim deflation rate must be within [3, 5] mmHg/s")
        if self.watchdog_ms <= 0:
            raise ConfigError("sim watchdog must be positive")
        if self.cuff_target_mmhg >= self.cuff_ceiling_mmhg:
            raise ConfigError("sim cuff target must stay below the cuff ceiling")
        if self.clamp_target_mmhg >= self.clamp_ceiling_mmhg:
            raise ConfigError("sim clamp target must stay below the clamp ceiling")
        if self.pump_rate_mmhg_s <= 0 or self.vent_rate_mmhg_s <= 0:
            raise ConfigError("sim pump/vent rates must be positive")
        if self.sensor_noise_sigma < 0:
            raise ConfigError("sim sensor noise must be >= 0")
        if self.deflation_stop_mmhg <= self.vent_threshold_mmhg:
            raise ConfigError("sim deflation stop must exceed the vent threshold")
        if self.noprogress_window_ms <= 0 or self.noprogress_min_delta_mmhg <= 0:
            raise ConfigError("sim no-progress guard parameters must be positive")


@dataclass
class RunConfig:
    ppg: PpgConfig = field(default_factory=PpgConfig)
    bp: BpConfig = field(default_factory=BpConfig)
    sim: SimConfig = field(default_factory=SimConfig)

    def validate(self) -> "RunConfig":
        self.ppg.validate()
        self.bp.validate()
        self.sim.validate()
        return self


def _coerce(current, text):
    if isinstance(current, bool):
        return text.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, tuple):
        parts = [float(p) for p in text.replace("(", "").replace(")", "").split(",")]
        return tuple(parts)
    return text


def _apply(section_obj, key, text):
    names = {f.name: f for f in fields(section_obj)}
    if key not in names:
        raise ConfigError(f"unknown config key '{key}' for [{type(section_obj).__name__}]")
    try:
        value = _coerce(getattr(section_obj, key), text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc
    setattr(section_obj, key, value)


def load_config(path=None, overrides=()) -> RunConfig:
    """Build a RunConfig from defaults, an optional file, then overrides.

    Overrides are ``section.key=value`` strings, e.g. ``sim.deflation_rate_mmhg_s=3.5``.
    """
    cfg = RunConfig()
    sections = {"ppg": cfg.ppg, "bp": cfg.bp, "sim": cfg.sim}
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for name, proxy in parser.items():
            if name == "DEFAULT":
                continue
            if name not in sections:
                raise ConfigError(f"unknown config section [{name}]")
            for key, text in proxy.items():
                _apply(sections[name], key, text)
    for ov in overrides:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {ov!r}")
        dotted, text = ov.split("=", 1)
        section, key = dotted.split(".", 1)
        if section not in sections:
            raise ConfigError(f"unknown config section '{section}'")
        _apply(sections[section], key.strip(), text.strip())
    return cfg.validate()


def config_as_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)

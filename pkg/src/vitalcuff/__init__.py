"""Desk-scale toolkit for cuff-based vital-signs estimation.

Streaming PPG heart-rate metrics, oscillometric blood pressure from
cuff-deflation traces, a pneumatic controller/plant simulator, synthetic
ground-truth signal generation and agreement statistics.
"""

from .agreement import (
    AgreementReport,
    agreement_report,
    bland_altman,
    error_metrics,
    spearman_homoscedasticity,
)
from .bp import (
    DeceasedAlert,
    FailureReason,
    OscillometricEnvelope,
    VitalsEstimate,
    analyze_trace,
    run_measurement,
)
from .config import BpConfig, PpgConfig, RunConfig, SimConfig, load_config
from .dsp import (
    FilterKind,
    FilterSpec,
    FilterState,
    Peak,
    PeakSet,
    derivative,
    design_butterworth_lowpass,
    design_fir_bandpass,
    filter_stateful,
    filter_zero_phase,
    find_peaks,
    polyfit_smooth,
)
from .pneumatics import Phase, PlantState, Routing, Simulator, safe_state, step_plant, watchdog_check
from .ppg import BeatHistory, HrvMetrics, StreamingHeartRate, adaptive_prominence_filter, detect_beats, hrv_metrics
from .synth import SynthSpec, synth_mannequin, synth_oscillometric, synth_ppg
from .traceio import read_pairs, read_trace, write_pairs, write_trace
from .traces import Channel, PairedSample, Quantity, Trace

__version__ = "0.1.0"

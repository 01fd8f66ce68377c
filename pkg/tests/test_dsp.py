"""signal-core: filter design, stateful/zero-phase filtering, peaks, fits."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vitalcuff.dsp import (
    FilterState,
    derivative,
    design_butterworth_lowpass,
    design_fir_bandpass,
    filter_stateful,
    filter_zero_phase,
    find_peaks,
    polyfit_smooth,
)
from vitalcuff.errors import (
    EvenTaps,
    InvalidCorner,
    NonMonotoneX,
    SignalTooShort,
    StateShapeMismatch,
    TooFewPoints,
)


# --- Butterworth low-pass design -------------------------------------------

def test_butterworth_dc_gain_is_unity():
    spec = design_butterworth_lowpass(4, 3.5, 25)
    gain = abs(spec.frequency_response([0.0])[0])
    assert gain == pytest.approx(1.0, abs=1e-9)


def test_butterworth_minus_3db_exactly_at_cutoff():
    # prewarped bilinear design puts the half-power point at the cutoff
    spec = design_butterworth_lowpass(4, 3.5, 25)
    gain = abs(spec.frequency_response([3.5])[0])
    assert gain == pytest.approx(1 / np.sqrt(2), abs=1e-6)


def test_butterworth_rejects_corner_at_or_above_nyquist():
    with pytest.raises(InvalidCorner):
        design_butterworth_lowpass(4, 12.6, 25)
    with pytest.raises(InvalidCorner):
        design_butterworth_lowpass(4, 12.5, 25)


def test_butterworth_rejects_bad_order():
    with pytest.raises(ValueError):
        design_butterworth_lowpass(0, 3.5, 25)


@given(order=st.integers(1, 8), cutoff=st.floats(0.2, 10.0))
@settings(max_examples=40, deadline=None)
def test_butterworth_always_stable(order, cutoff):
    spec = design_butterworth_lowpass(order, cutoff, 25)
    assert spec.is_stable()


@given(order=st.integers(1, 6), cutoff=st.floats(0.5, 10.0))
@settings(max_examples=25, deadline=None)
def test_butterworth_magnitude_monotone(order, cutoff):
    spec = design_butterworth_lowpass(order, cutoff, 25)
    freqs = np.linspace(0, 12.4, 200)
    mag = np.abs(spec.frequency_response(freqs))
    assert np.all(np.diff(mag) < 1e-9)


def test_butterworth_step_response_converges():
    spec = design_butterworth_lowpass(4, 3.5, 25)
    y, _ = filter_stateful(spec, FilterState.zeros(spec), np.ones(2000))
    assert np.all(np.abs(y) < 10)
    assert y[-1] == pytest.approx(1.0, abs=1e-6)


# --- FIR band-pass design ---------------------------------------------------

def test_fir_bandpass_gains():
    spec = design_fir_bandpass(0.5, 4.0, 100, 201)
    g2 = abs(spec.frequency_response([2.0])[0])
    g20 = abs(spec.frequency_response([20.0])[0])
    assert 0.95 <= g2 <= 1.05
    assert g20 < 0.01


def test_fir_bandpass_symmetric_linear_phase():
    spec = design_fir_bandpass(0.5, 4.0, 100, 201)
    h = spec.coefficients
    assert np.allclose(h, h[::-1])


def test_fir_bandpass_rejects_reversed_corners():
    with pytest.raises(InvalidCorner):
        design_fir_bandpass(4.0, 0.5, 100, 201)


def test_fir_bandpass_rejects_even_taps():
    with pytest.raises(EvenTaps):
        design_fir_bandpass(0.5, 4.0, 100, 200)


# --- stateful filtering ------------------------------------------------------

def test_stateful_constant_converges_to_input():
    spec = design_butterworth_lowpass(4, 3.5, 25)
    y, _ = filter_stateful(spec, FilterState.zeros(spec), np.ones(1500))
    assert y[-1] == pytest.approx(1.0, abs=1e-6)


def test_chunked_equals_single_call_exactly():
    # the chunk-splitting oracle: one call on the whole signal
    rng = np.random.default_rng(0)
    x = rng.normal(size=500)
    spec = design_butterworth_lowpass(4, 3.5, 25)
    whole, _ = filter_stateful(spec, FilterState.zeros(spec), x)
    state = FilterState.zeros(spec)
    parts = []
    for start in range(0, len(x), 5):
        out, state = filter_stateful(spec, state, x[start : start + 5])
        parts.append(out)
    assert np.max(np.abs(np.concatenate(parts) - whole)) < 1e-12


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_chunked_equivalence_random_partitions(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=200)
    spec = design_butterworth_lowpass(4, 3.5, 25)
    whole, _ = filter_stateful(spec, FilterState.zeros(spec), x)
    cuts = np.sort(rng.choice(np.arange(1, 200), size=rng.integers(1, 12), replace=False))
    state = FilterState.zeros(spec)
    parts = []
    for lo, hi in zip(np.r_[0, cuts], np.r_[cuts, 200]):
        out, state = filter_stateful(spec, state, x[lo:hi])
        parts.append(out)
    assert np.max(np.abs(np.concatenate(parts) - whole)) < 1e-12


def test_impulse_response_prefix_matches_hand_recurrence():
    # oracle: evaluate the cascaded biquads by hand for the first samples
    spec = design_butterworth_lowpass(2, 3.5, 25)
    impulse = np.zeros(8)
    impulse[0] = 1.0
    y, _ = filter_stateful(spec, FilterState.zeros(spec), impulse)
    b0, b1, b2, a0, a1, a2 = spec.coefficients[0]
    x = impulse
    ref = np.zeros(8)
    for n in range(8):
        ref[n] = b0 * x[n]
        if n >= 1:
            ref[n] += b1 * x[n - 1] - a1 * ref[n - 1]
        if n >= 2:
            ref[n] += b2 * x[n - 2] - a2 * ref[n - 2]
    assert np.allclose(y[:3], ref[:3], atol=1e-12)


def test_state_shape_mismatch_raises():
    spec = design_butterworth_lowpass(4, 3.5, 25)
    bad = FilterState(np.zeros(3))
    with pytest.raises(StateShapeMismatch):
        filter_stateful(spec, bad, np.ones(10))


def test_output_length_equals_input_length():
    spec = design_fir_bandpass(0.5, 4.0, 100, 51)
    y, _ = filter_stateful(spec, FilterState.zeros(spec), np.ones(77))
    assert len(y) == 77


# --- zero-phase filtering ----------------------------------------------------

def test_zero_phase_keeps_symmetric_peak_position():
    t = np.arange(1000) / 100.0
    x = np.exp(-((t - 5.0) ** 2) / (2 * 0.5**2))
    spec = design_butterworth_lowpass(4, 3.5, 100)
    y = filter_zero_phase(spec, x)
    assert abs(int(np.argmax(y)) - 500) <= 1


def test_zero_phase_sine_amplitude_and_lag():
    # cross-correlation oracle for the phase shift
    fs = 100.0
    t = np.arange(3000) / fs
    x = np.sin(2 * np.pi * 2.0 * t)
    spec = design_fir_bandpass(0.5, 4.0, fs, 201)
    y = filter_zero_phase(spec, x)
    core = slice(500, 2500)
    amp = np.max(np.abs(y[core]))
    assert amp == pytest.approx(1.0, rel=0.05)
    lags = np.arange(-5, 6)
    xc = [np.dot(y[core], np.roll(x, lag)[core]) for lag in lags]
    assert abs(lags[int(np.argmax(xc))]) < 1


def test_zero_phase_removes_deflation_ramp():
    # pure ramp is annihilated by the zero-DC symmetric FIR kernel
    fs = 100.0
    ramp = np.linspace(160.0, 60.0, 3000)
    spec = design_fir_bandpass(0.5, 4.0, fs, 201)
    y = filter_zero_phase(spec, ramp)
    assert np.sqrt(np.mean(y**2)) < 0.01 * np.ptp(ramp)


def test_zero_phase_retains_oscillations_zero_mean():
    # 1.2 Hz sits near the 201-tap design's lower transition edge, so the
    # two-pass recovery tops out around 0.93 of the injected amplitude.
    fs = 100.0
    t = np.arange(3000) / fs
    ramp = np.linspace(160.0, 60.0, 3000)
    x = ramp + 1.0 * np.sin(2 * np.pi * 1.2 * t)
    spec = design_fir_bandpass(0.5, 4.0, fs, 201)
    y = filter_zero_phase(spec, x)
    core = slice(400, 2600)
    assert abs(np.mean(y)) < 0.01 * np.ptp(x)
    assert 0.90 <= np.max(y[core]) <= 1.05


def test_zero_phase_signal_too_short():
    spec = design_fir_bandpass(0.5, 4.0, 100, 201)
    with pytest.raises(SignalTooShort):
        filter_zero_phase(spec, np.ones(500))


# --- derivative --------------------------------------------------------------

def test_derivative_of_ramp_is_slope():
    fs = 100.0
    x = 3.0 * np.arange(500) / fs
    d = derivative(x, fs)
    assert np.allclose(d[1:-1], 3.0, atol=1e-9)
    assert len(d) == len(x)


def test_derivative_of_constant_is_zero():
    d = derivative(np.full(100, 7.5), 100.0)
    assert np.allclose(d, 0.0)


def test_derivative_of_sine_matches_analytic():
    fs = 100.0
    t = np.arange(5000) / fs
    d = derivative(np.sin(2 * np.pi * t), fs)
    assert np.max(d) == pytest.approx(2 * np.pi, rel=1e-3)


def test_derivative_too_short():
    with pytest.raises(SignalTooShort):
        derivative([1.0], 100.0)


# --- polynomial smoothing ----------------------------------------------------

def _normal_equations_fit(xs, ys, degree):
    # independent oracle: solve the normal equations directly
    xs = np.asarray(xs, dtype=float)
    v = np.vander(xs, degree + 1)
    coeffs = np.linalg.solve(v.T @ v, v.T @ np.asarray(ys, dtype=float))
    return v @ coeffs


def test_polyfit_exact_on_cubic():
    xs = np.linspace(0, 10, 30)
    ys = 2 - 0.5 * xs + 0.3 * xs**2 - 0.02 * xs**3
    assert np.max(np.abs(polyfit_smooth(xs, ys, 3) - ys)) < 1e-8


def test_polyfit_matches_normal_equations_under_noise():
    rng = np.random.default_rng(42)
    xs = np.linspace(0, 10, 50)
    true = 1 + xs - 0.2 * xs**2 + 0.05 * xs**3
    ys = true + rng.normal(0, 1.0, size=50)
    fit = polyfit_smooth(xs, ys, 3)
    oracle = _normal_equations_fit(xs, ys, 3)
    assert np.max(np.abs(fit - oracle)) < 1e-6
    assert np.max(np.abs(fit - true)) < 1.0


def test_polyfit_too_few_points():
    with pytest.raises(TooFewPoints):
        polyfit_smooth([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], 3)


def test_polyfit_non_monotone_x():
    with pytest.raises(NonMonotoneX):
        polyfit_smooth([1.0, 3.0, 2.0, 4.0], [0.0, 1.0, 2.0, 3.0], 2)


@given(st.lists(st.floats(-5, 5), min_size=5, max_size=12))
@settings(max_examples=40, deadline=None)
def test_polyfit_idempotent_on_polynomials(coeffs_sample):
    # fitting a cubic to exact cubic data returns the data
    xs = np.linspace(-1, 1, max(5, len(coeffs_sample)))
    ys = 0.3 + 0.7 * xs - 1.1 * xs**2 + 0.4 * xs**3
    out = polyfit_smooth(xs, ys, 3)
    assert np.max(np.abs(out - ys)) < 1e-8


# --- peak detection -----------------------------------------------------------

def test_find_peaks_simple():
    peaks = find_peaks([0, 1, 0, 2, 0], min_distance=1)
    assert list(peaks.indices()) == [1, 3]


def test_find_peaks_distance_keeps_taller():
    x = np.zeros(20)
    x[5] = 1.0
    x[10] = 2.0
    peaks = find_peaks(x, min_distance=8)
    assert list(peaks.indices()) == [10]


def test_find_peaks_sinusoid_counts():
    # brute-force maxima oracle on a long sinusoid
    fs = 25.0
    t = np.arange(int(60 * fs)) / fs
    x = np.sin(2 * np.pi * 1.0 * t)
    peaks = find_peaks(x, min_distance=8)
    brute = [
        i for i in range(1, len(x) - 1) if x[i] > x[i - 1] and x[i] > x[i + 1]
    ]
    assert len(peaks) == pytest.approx(60, abs=1)
    assert set(peaks.indices()).issubset(set(brute))
    spacings = np.diff(peaks.indices())
    assert np.all(np.abs(spacings - 25) <= 1)


def test_find_peaks_empty_result_is_valid():
    assert len(find_peaks(np.zeros(50), min_distance=3)) == 0


def test_find_peaks_prominence_window():
    rng = np.random.default_rng(3)
    x = np.sin(2 * np.pi * np.arange(400) / 40) + 0.05 * rng.normal(size=400)
    windowed = find_peaks(x, min_distance=5, prominence_window=80)
    globally = find_peaks(x, min_distance=5)
    assert len(windowed) > 0
    # windowed prominence can only be <= the global one
    win = {p.index: p.prominence for p in windowed}
    glob = {p.index: p.prominence for p in globally}
    for idx in set(win) & set(glob):
        assert win[idx] <= glob[idx] + 1e-12


@given(st.integers(0, 2**31 - 1), st.integers(1, 10))
@settings(max_examples=40, deadline=None)
def test_find_peaks_invariants_random(seed, min_distance):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=120)
    peaks = find_peaks(x, min_distance=min_distance)
    idx = peaks.indices()
    if len(idx) > 1:
        assert np.all(np.diff(idx) >= min_distance)
    for i in idx:
        assert x[i] > x[i - 1] and x[i] > x[i + 1]
    assert np.all(peaks.prominences() >= 0)

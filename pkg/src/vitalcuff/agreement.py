"""Error and agreement statistics for paired (device, reference) values.

Sign convention: differences are device minus reference, so a negative bias
means the device underestimates. Limits of agreement are bias +- 1.96 times
the sample (n-1) standard deviation.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from scipy import stats as spstats

from .errors import EmptyInput, TooFewSamples

LOA_FACTOR = 1.96


@dataclass(frozen=True)
class ErrorMetrics:
    mae: float
    rmse: float
    medae: float
    pct_error: float


@dataclass(frozen=True)
class BlandAltman:
    bias: float
    sd: float
    loa_low: float
    loa_high: float


@dataclass(frozen=True)
class AgreementReport:
    mae: float
    rmse: float
    medae: float
    pct_error_mae: float
    bias: float
    sd: float
    loa_low: float
    loa_high: float
    spearman_rho: float
    p_value: float
    n: int

    def to_json_dict(self) -> dict:
        return asdict(self)


def _device_reference(pairs):
    device = np.array([p.device_value for p in pairs], dtype=float)
    reference = np.array([p.reference_value for p in pairs], dtype=float)
    return device, reference


def error_metrics(pairs) -> ErrorMetrics:
    """MAE, RMSE, MedAE and mean percent error (relative to the reference)."""
    if len(pairs) == 0:
        raise EmptyInput("error metrics need at least one pair")
    device, reference = _device_reference(pairs)
    abs_err = np.abs(device - reference)
    return ErrorMetrics(
        mae=float(np.mean(abs_err)),
        rmse=float(np.sqrt(np.mean(abs_err**2))),
        medae=float(np.median(abs_err)),
        pct_error=float(100.0 * np.mean(abs_err / reference)),
    )


def bland_altman(pairs) -> BlandAltman:
    """Bias and 95% limits of agreement of device-minus-reference."""
    if len(pairs) < 2:
        raise EmptyInput("Bland-Altman needs at least two pairs")
    device, reference = _device_reference(pairs)
    diff = device - reference
    bias = float(np.mean(diff))
    sd = float(np.std(diff, ddof=1))
    return BlandAltman(
        bias=bias, sd=sd, loa_low=bias - LOA_FACTOR * sd, loa_high=bias + LOA_FACTOR * sd
    )


def spearman_rho(x, y) -> float:
    """Spearman rank correlation with average ranks; 0 when either side is all ties."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rx = spstats.rankdata(x, method="average")
    ry = spstats.rankdata(y, method="average")
    sx, sy = np.std(rx), np.std(ry)
    if sx == 0 or sy == 0:
        return 0.0
    return float(np.mean((rx - rx.mean()) * (ry - ry.mean())) / (sx * sy))


def spearman_p_value(rho: float, n: int) -> float:
    """Two-sided p via the Student-t approximation with n-2 dof."""
    if n < 3:
        raise TooFewSamples("p-value needs n >= 3")
    if abs(rho) >= 1.0:
        return 0.0
    t = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    return float(2.0 * spstats.t.sf(abs(t), df=n - 2))


def spearman_homoscedasticity(pairs) -> tuple[float, float]:
    """Correlation of the differences against the pairwise means.

    A small rho with a large p indicates the error spread does not grow with
    the measured level, i.e. homoscedastic errors.
    """
    if len(pairs) < 4:
        raise TooFewSamples(f"need at least 4 pairs, got {len(pairs)}")
    device, reference = _device_reference(pairs)
    diff = device - reference
    mean = 0.5 * (device + reference)
    rho = spearman_rho(diff, mean)
    return rho, spearman_p_value(rho, len(pairs))


def agreement_report(pairs) -> AgreementReport:
    """All error and agreement statistics for one quantity."""
    err = error_metrics(pairs)
    ba = bland_altman(pairs)
    rho, p = spearman_homoscedasticity(pairs)
    return AgreementReport(
        mae=err.mae,
        rmse=err.rmse,
        medae=err.medae,
        pct_error_mae=err.pct_error,
        bias=ba.bias,
        sd=ba.sd,
        loa_low=ba.loa_low,
        loa_high=ba.loa_high,
        spearman_rho=rho,
        p_value=p,
        n=len(pairs),
    )


def bland_altman_points(pairs) -> tuple[np.ndarray, np.ndarray]:
    """(mean, difference) scatter coordinates for a Bland-Altman plot."""
    device, reference = _device_reference(pairs)
    return 0.5 * (device + reference), device - reference


def render_report(reports: dict, out_dir) -> dict:
    """Write per-quantity report JSON plus Bland-Altman plot data CSV.

    ``reports`` maps a quantity to (pairs, AgreementReport). The CSV holds
    the (mean, difference) points; the bias and both limits of agreement ride
    in its header block as the three horizontal reference lines.
    """
    import json
    from pathlib import Path

    if not reports:
        raise EmptyInput("nothing to render")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for quantity, (pairs, report) in reports.items():
        name = quantity.value.lower()
        report_path = out_dir / f"{name}_report.json"
        report_path.write_text(json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n")
        means, diffs = bland_altman_points(pairs)
        lines = [
            f"# bias: {report.bias!r}",
            f"# loa_low: {report.loa_low!r}",
            f"# loa_high: {report.loa_high!r}",
            "mean,difference",
        ]
        lines += [f"{m!r},{d!r}" for m, d in zip(means, diffs)]
        csv_path = out_dir / f"{name}_bland_altman.csv"
        csv_path.write_text("\n".join(lines) + "\n")
        written[quantity.value] = {"report": str(report_path), "points": str(csv_path)}
    return written

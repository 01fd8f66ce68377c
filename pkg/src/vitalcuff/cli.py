"""Command-line entry point.

Subcommands: hr (streaming heart rate on a PPG trace), bp (oscillometric
analysis of cuff traces, with the retry protocol when several traces are
given), simulate (pneumatic scenario runner), synth (ground-truth signal
generation), agree (agreement statistics) and e2e (synthesize, simulate,
estimate, compare).

Exit codes: 0 success, 1 e2e comparison failed, 2 invalid input,
3 measurement invalid (-1 sentinels), 4 deceased alert.
Machine-readable JSON goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import agreement, bp, pneumatics, synth, traceio
from .config import RunConfig, load_config
from .errors import VitalcuffError
from .ppg import StreamingHeartRate
from .svgplot import plot_svg
from .traces import Channel

EXIT_OK = 0
EXIT_E2E_FAIL = 1
EXIT_BAD_INPUT = 2
EXIT_INVALID_MEASUREMENT = 3
EXIT_DECEASED = 4


def _emit(payload, compact: bool) -> None:
    if compact:
        print(json.dumps(payload, sort_keys=True, separators=(",", ":")))
    else:
        print(json.dumps(payload, sort_keys=True, indent=2))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vitalcuff",
        description="Cuff-based vital signs toolkit: heart rate, oscillometric "
        "blood pressure, pneumatic control simulation and agreement statistics.",
    )
    parser.add_argument("--config", metavar="PATH", help="INI config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable; wins over the file)",
    )
    parser.add_argument("--seed", type=int, default=0, help="random seed for synthesis/simulation")
    parser.add_argument("--json", action="store_true", help="compact single-line JSON output")
    parser.add_argument(
        "--override-rates",
        action="store_true",
        help="accept traces whose header rate disagrees with the channel default",
    )

    sub = parser.add_subparsers(dest="command", required=True)

    p_hr = sub.add_parser("hr", help="streaming heart-rate metrics from a PPG trace")
    p_hr.add_argument("trace", help="PPG trace CSV")

    p_bp = sub.add_parser("bp", help="oscillometric estimate from cuff deflation trace(s)")
    p_bp.add_argument("traces", nargs="+", help="cuff trace CSV (several = retry attempts)")
    p_bp.add_argument("--debug-dir", metavar="DIR", help="dump intermediate stages as CSV/SVG")

    p_sim = sub.add_parser("simulate", help="run a pneumatic control scenario")
    p_sim.add_argument("scenario", help="scenario JSON")
    p_sim.add_argument("--out-dir", default=".", help="where produced traces are written")

    p_synth = sub.add_parser("synth", help="generate a synthetic trace plus ground truth")
    p_synth.add_argument("spec", help="synthesis spec JSON")
    p_synth.add_argument("--out-dir", default=".", help="output directory")

    p_agree = sub.add_parser("agree", help="agreement statistics on paired measurements")
    p_agree.add_argument("pairs", help="pairs CSV (subject_id,quantity,device,reference)")
    p_agree.add_argument("--out-dir", help="also write per-quantity report/plot files")
    p_agree.add_argument(
        "--drop-subject", action="append", default=[], help="exclude a subject id (repeatable)"
    )

    p_e2e = sub.add_parser("e2e", help="synth -> simulate -> estimate -> compare")
    p_e2e.add_argument("spec", help="synthesis spec JSON")
    p_e2e.add_argument("--trials", type=int, default=1, help="independent seeds to run")
    return parser


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise VitalcuffError(f"cannot read JSON from {path}: {exc}") from exc


def _synth_spec_from_dict(d: dict, seed: int) -> synth.SynthSpec:
    sbp = float(d.get("sbp_mmhg", 121.0))
    dbp = float(d.get("dbp_mmhg", 79.0))
    default_map = dbp + 0.45 * (sbp - dbp)
    return synth.SynthSpec(
        hr_bpm=float(d.get("hr_bpm", 75.0)),
        sbp_mmhg=sbp,
        dbp_mmhg=dbp,
        map_mmhg=float(d.get("map_mmhg", default_map)),
        deflation_rate=float(d.get("deflation_rate", 4.0)),
        fs_hz=float(d.get("fs_hz", 100.0)),
        noise_sigma=float(d.get("noise_sigma", 0.3)),
        artifact_rate=float(d.get("artifact_rate", 0.0)),
        amplitude_mmhg=(None if d.get("amplitude_mmhg") is None else float(d["amplitude_mmhg"])),
        seed=int(d.get("seed", seed)),
    ).validate()


def cmd_hr(args, cfg: RunConfig) -> int:
    trace = traceio.read_trace(args.trace, override_rates=args.override_rates)
    if trace.channel is not Channel.PPG_RAW:
        raise VitalcuffError(f"hr expects a PpgRaw trace, got {trace.channel.value}")
    pipe = StreamingHeartRate(cfg.ppg)
    pipe.start()
    chunk = max(1, int(round(cfg.ppg.chunk_ms / 1000.0 * trace.fs_hz)))
    for start in range(0, len(trace.samples), chunk):
        pipe.push_chunk(trace.samples[start : start + chunk])
    metrics = pipe.flush()
    _emit(metrics.to_json_dict(), args.json)
    return EXIT_OK if metrics.valid else EXIT_INVALID_MEASUREMENT


def _dump_bp_debug(debug_dir, trace, art: bp.AnalysisArtifacts, estimate) -> None:
    out = Path(debug_dir)
    out.mkdir(parents=True, exist_ok=True)
    t = trace.times_s()

    def write_csv(name, header, columns):
        rows = [header]
        rows += [",".join(repr(float(c[i])) for c in columns) for i in range(len(columns[0]))]
        (out / name).write_text("\n".join(rows) + "\n")

    write_csv(
        "filtered.csv", "t_s,raw_mmhg,filtered_mmhg", [t, trace.samples, art.filtered]
    )
    write_csv("derivative.csv", "t_s,derivative_mmhg_s", [t, art.derivative])
    (out / "filtered.svg").write_text(
        plot_svg(
            lines=[(t, trace.samples, "#888"), (t, art.filtered, "#0366c4")],
            title="Cuff pressure and band-passed oscillations",
            xlabel="time [s]",
            ylabel="pressure [mmHg]",
        )
    )
    if art.peaks_all is not None and len(art.peaks_all):
        idx = art.peaks_all.indices()
        write_csv(
            "peaks_detected.csv",
            "t_s,derivative_mmhg_s,prominence",
            [t[idx], art.derivative[idx], art.peaks_all.prominences()],
        )
        (out / "peaks_detected.svg").write_text(
            plot_svg(
                lines=[(t, art.derivative, "#0366c4")],
                points=[(t[idx], art.derivative[idx], "#c43603")],
                title="Derivative peaks after the morphological filter",
                xlabel="time [s]",
                ylabel="d(pressure)/dt [mmHg/s]",
            )
        )
    if art.histogram is not None:
        h = art.histogram
        centers = 0.5 * (h.bin_edges[:-1] + h.bin_edges[1:])
        write_csv("histogram.csv", "bin_center_samples,count", [centers, h.counts])
    if art.peaks_grouped is not None and len(art.peaks_grouped):
        idx = art.peaks_grouped.indices()
        write_csv(
            "peaks_grouped.csv",
            "t_s,derivative_mmhg_s",
            [t[idx], art.derivative[idx]],
        )
    if art.envelope is not None:
        env = art.envelope
        write_csv(
            "envelope.csv",
            "cuff_pressure_mmhg,amplitude,amplitude_smoothed",
            [env.cuff_pressure_at_peak, env.amplitude, env.amplitude_smoothed],
        )
        hl = []
        if estimate.valid:
            hl = [
                (estimate.sbp_mmhg, "#c43603", f"SBP {estimate.sbp_mmhg:.0f}"),
                (estimate.map_mmhg, "#2a9d3a", f"MAP {estimate.map_mmhg:.0f}"),
                (estimate.dbp_mmhg, "#7a3fc4", f"DBP {estimate.dbp_mmhg:.0f}"),
            ]
        (out / "envelope.svg").write_text(
            plot_svg(
                lines=[(env.cuff_pressure_at_peak, env.amplitude_smoothed, "#0366c4")],
                points=[(env.cuff_pressure_at_peak, env.amplitude, "#888")],
                hlines=[],
                title="Oscillation envelope (points raw, line smoothed)",
                xlabel="cuff pressure [mmHg]",
                ylabel="amplitude [mmHg]",
            )
        )
        (out / "estimate.svg").write_text(
            plot_svg(
                lines=[(t, trace.samples, "#888")],
                hlines=hl,
                title="Estimate over the deflation trace",
                xlabel="time [s]",
                ylabel="pressure [mmHg]",
            )
        )


def cmd_bp(args, cfg: RunConfig) -> int:
    traces = [traceio.read_trace(p, override_rates=args.override_rates) for p in args.traces]
    for trace in traces:
        if trace.channel is not Channel.CUFF_PRESSURE:
            raise VitalcuffError(f"bp expects CuffPressure traces, got {trace.channel.value}")
    if len(traces) == 1:
        art = bp.AnalysisArtifacts()
        estimate = bp.analyze_trace(traces[0], cfg.bp, artifacts=art)
        if args.debug_dir:
            _dump_bp_debug(args.debug_dir, traces[0], art, estimate)
        _emit(estimate.to_json_dict(), args.json)
        return EXIT_OK if estimate.valid else EXIT_INVALID_MEASUREMENT
    result = bp.run_measurement(iter(traces), cfg.bp, max_attempts=len(traces))
    if isinstance(result, bp.DeceasedAlert):
        _emit(
            {
                "alert": "deceased",
                "message": result.message,
                "attempts": [e.to_json_dict() for e in result.attempts],
            },
            args.json,
        )
        return EXIT_DECEASED
    _emit(result.to_json_dict(), args.json)
    return EXIT_OK if result.valid else EXIT_INVALID_MEASUREMENT


def cmd_simulate(args, cfg: RunConfig) -> int:
    scenario = _load_json(args.scenario)
    seed = int(scenario.get("seed", args.seed))
    pulse = None
    if scenario.get("pulse"):
        pulse = synth.make_pulse_source(_synth_spec_from_dict(scenario["pulse"], seed))
    sim = pneumatics.Simulator(cfg.sim, seed=seed, pulse_source=pulse)
    for drop in scenario.get("sensor_dropouts", []):
        sim.add_sensor_dropout(int(drop["at_ms"]), int(drop["duration_ms"]))
    commands = scenario.get("commands", ["close", "measure", "open"])
    traces = pneumatics.run_scenario(sim, commands)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for k, trace in enumerate(traces):
        traceio.write_trace(trace, out_dir / f"trace_{k:03d}.csv")
    sys.stdout.write(pneumatics.events_to_ndjson(sim.events))
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    spec_dict = _load_json(args.spec)
    kind = spec_dict.get("kind", "oscillometric")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trace.csv"
    truth_path = out_dir / "ground_truth.json"
    if kind == "ppg":
        spec = _synth_spec_from_dict(spec_dict, args.seed)
        trace, beats, artifacts = synth.synth_ppg(
            spec,
            duration_s=float(spec_dict.get("duration_s", 60.0)),
            fs_hz=float(spec_dict.get("fs_hz", 25.0)),
        )
        truth = {
            "hr_bpm": spec.hr_bpm,
            "beat_times": beats.tolist(),
            "artifact_times": artifacts.tolist(),
        }
    elif kind == "oscillometric":
        spec = _synth_spec_from_dict(spec_dict, args.seed)
        trace, truth = synth.synth_oscillometric(
            spec, inflate_to=float(spec_dict.get("inflate_to", 190.0))
        )
    elif kind == "mannequin":
        trace = synth.synth_mannequin(
            duration_s=float(spec_dict.get("duration_s", 60.0)),
            fs_hz=float(spec_dict.get("fs_hz", 100.0)),
            noise_sigma=float(spec_dict.get("noise_sigma", 0.3)),
            seed=int(spec_dict.get("seed", args.seed)),
        )
        truth = {"pulseless": True}
    else:
        raise VitalcuffError(f"unknown synth kind {kind!r}")
    traceio.write_trace(trace, trace_path)
    traceio.write_ground_truth(truth, truth_path)
    _emit({"trace": str(trace_path), "ground_truth": str(truth_path)}, args.json)
    return EXIT_OK


def cmd_agree(args, cfg: RunConfig) -> int:
    pairs = traceio.read_pairs(args.pairs)
    pairs = [p for p in pairs if p.subject_id not in set(args.drop_subject)]
    grouped = traceio.group_pairs(pairs)
    if not grouped:
        raise VitalcuffError("no pairs to analyze")
    payload = {}
    rendered = {}
    for quantity, qpairs in grouped.items():
        report = agreement.agreement_report(qpairs)
        payload[quantity.value] = report.to_json_dict()
        rendered[quantity] = (qpairs, report)
    if args.out_dir:
        paths = agreement.render_report(rendered, args.out_dir)
        for quantity, (qpairs, report) in rendered.items():
            means, diffs = agreement.bland_altman_points(qpairs)
            svg = plot_svg(
                points=[(means, diffs, "#0366c4")],
                hlines=[
                    (report.bias, "#2a9d3a", f"bias {report.bias:.2f}"),
                    (report.loa_low, "#c43603", f"LoA {report.loa_low:.2f}"),
                    (report.loa_high, "#c43603", f"LoA {report.loa_high:.2f}"),
                ],
                title=f"Bland-Altman: {quantity.value}",
                xlabel="pair mean",
                ylabel="device - reference",
            )
            svg_path = Path(args.out_dir) / f"{quantity.value.lower()}_bland_altman.svg"
            svg_path.write_text(svg)
            paths[quantity.value]["svg"] = str(svg_path)
        payload["_files"] = paths
    _emit(payload, args.json)
    return EXIT_OK


def cmd_e2e(args, cfg: RunConfig) -> int:
    spec_dict = _load_json(args.spec)
    results = []
    overall_pass = True
    any_invalid = False
    for trial in range(max(1, args.trials)):
        seed = args.seed + trial
        spec = _synth_spec_from_dict({**spec_dict, "seed": seed}, seed)
        sim = pneumatics.Simulator(cfg.sim, seed=seed, pulse_source=synth.make_pulse_source(spec))
        sim.close_clamp()
        trace = sim.measure_sequence()
        sim.open_clamp()
        if trace is None:
            results.append({"seed": seed, "error": "simulation fault"})
            overall_pass = False
            any_invalid = True
            continue
        estimate = bp.analyze_trace(trace, cfg.bp)
        entry = {"seed": seed, "estimate": estimate.to_json_dict()}
        if not estimate.valid:
            any_invalid = True
            overall_pass = False
            entry["pass"] = False
        else:
            d_hr = abs(estimate.hr_bpm - spec.hr_bpm)
            d_sbp = abs(estimate.sbp_mmhg - spec.sbp_mmhg)
            d_dbp = abs(estimate.dbp_mmhg - spec.dbp_mmhg)
            ok = d_hr <= 2.0 and d_sbp <= 5.0 and d_dbp <= 5.0
            entry.update(
                {
                    "truth": {
                        "hr_bpm": spec.hr_bpm,
                        "sbp_mmhg": spec.sbp_mmhg,
                        "dbp_mmhg": spec.dbp_mmhg,
                    },
                    "delta": {"hr_bpm": d_hr, "sbp_mmhg": d_sbp, "dbp_mmhg": d_dbp},
                    "pass": ok,
                }
            )
            overall_pass &= ok
        results.append(entry)
    _emit({"pass": overall_pass, "trials": results}, args.json)
    if overall_pass:
        return EXIT_OK
    return EXIT_INVALID_MEASUREMENT if any_invalid else EXIT_E2E_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        handler = {
            "hr": cmd_hr,
            "bp": cmd_bp,
            "simulate": cmd_simulate,
            "synth": cmd_synth,
            "agree": cmd_agree,
            "e2e": cmd_e2e,
        }[args.command]
        return handler(args, cfg)
    except VitalcuffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())

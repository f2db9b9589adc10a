#!/usr/bin/env python3
"""
RNGA Loop Pairing Tool
Command-line entry point: load a transfer-function plant, compute RGA/RNGA,
recommend pairings, tune decentralized IMC-PID loops, simulate set-point steps
and verify the array properties on random matrices.

Exit codes: 0 success, 1 property failure, 2 invalid input, 3 infeasible pairing.
"""

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from analysis_report import AnalysisReport, ScenarioResult, export_pdf, export_workbook, render
from closed_loop_sim import (
    Scenario,
    SetpointStep,
    compare_plans,
    metrics_document,
    simulate,
    write_trace_csv,
)
from gain_arrays import ArrayShape, binet_cauchy_col_sums, col_sums, rga, rnga, row_sums
from loop_pairing import NoViablePairing, PairingPlan, recommend
from pid_tuning import tune_plan
from plant_model import TransferMatrix, load_plant_file, normalized_gain, serialize_plant, steady_state_gain
from property_suite import check_array_properties, format_summary, run_property_suite, summary_document
from results_store import ResultsStore
from settings import AnalysisSettings, load_settings, save_settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PROPERTY_FAILURE = 1
EXIT_INVALID_INPUT = 2
EXIT_INFEASIBLE_PAIRING = 3

DEPTHS = {"analyze": 0, "pair": 1, "tune": 2, "simulate": 3}
BASES = {"rnga": ("RNGA",), "rga": ("RGA",), "both": ("RNGA", "RGA")}


def setup_logging(verbose: bool = False, log_dir: Optional[str] = None) -> None:
    """Log to stderr, and to a dated file when a log directory is given"""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
        log_filename = os.path.join(log_dir, f"rnga_tool_{datetime.now().strftime('%Y%m%d')}.log")
        handlers.append(logging.FileHandler(log_filename))
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=handlers,
    )


@dataclass(frozen=True)
class LambdaOverride:
    output: int
    input: Optional[int]
    value: float

    def applies_to(self, plan: PairingPlan) -> bool:
        if self.input is None:
            return any(p.output == self.output for p in plan.pairs)
        return any(p.output == self.output and p.input == self.input for p in plan.pairs)


def parse_lambda_override(text: str) -> LambdaOverride:
    """LOOP=VALUE where LOOP is an output number "i" or a loop "i-j" (1-based)."""
    loop, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected LOOP=VALUE, got {text!r}")
    try:
        parts = [int(p) for p in loop.split("-")]
        lam = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse lambda override {text!r}") from None
    if len(parts) > 2 or any(p < 1 for p in parts):
        raise argparse.ArgumentTypeError(f"loop must be 'i' or 'i-j' with 1-based numbers, got {loop!r}")
    if lam <= 0:
        raise argparse.ArgumentTypeError(f"lambda_f must be > 0, got {value}")
    return LambdaOverride(parts[0] - 1, parts[1] - 1 if len(parts) == 2 else None, lam)


# ---------------- Output files ----------------

def _write_atomic(path, writer: Callable[[str], None]) -> None:
    """Let `writer` fill a temporary sibling file, then move it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=path.suffix, dir=path.parent)
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def _write_text(path, text: str) -> None:
    def fill(tmp):
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    _write_atomic(path, fill)


# ---------------- Pipeline ----------------

def build_report(tm: TransferMatrix, basis: str, depth: int, settings: AnalysisSettings,
                 step_outputs: Sequence[int] = (), overrides: Sequence[LambdaOverride] = ()
                 ) -> Tuple[AnalysisReport, Dict[str, Dict]]:
    """Run the pipeline to `depth` (0 analyze, 1 pair, 2 tune, 3 simulate).

    Returns the report and, for simulations, the traces keyed by scenario and basis.
    """
    bases = BASES[basis]
    report = AnalysisReport(plant_name=tm.name)
    k = steady_state_gain(tm)
    nga = normalized_gain(tm)
    report.arrays["K"] = k
    report.arrays["NGA"] = nga
    sources = {"RGA": k, "RNGA": nga}
    for name in ("RGA", "RNGA"):
        if name not in bases:
            continue
        lam = rga(k) if name == "RGA" else rnga(nga)
        report.arrays[name] = lam
        report.row_sums[name] = row_sums(lam)
        if lam.shape is not ArrayShape.TALL:
            report.col_sums[name] = col_sums(lam)
            report.binet_cauchy_sums[name] = binet_cauchy_col_sums(sources[name], settings.minor_warn_limit)
        report.property_checks[name] = check_array_properties(sources[name])
    traces: Dict[str, Dict] = {}
    if depth < 1:
        return report, traces

    report.plans = {}
    for name in bases:
        report.plans[name] = recommend(report.arrays[name], settings.warn_threshold,
                                       settings.near_tie_margin, settings.max_pairing_rows)
    if depth < 2:
        return report, traces

    unused = [o for o in overrides if not any(o.applies_to(p) for p in report.plans.values())]
    if unused:
        loops = ", ".join(f"{o.output + 1}" + (f"-{o.input + 1}" if o.input is not None else "") for o in unused)
        raise ValueError(f"lambda_f override(s) for loop(s) {loops} match no recommended pairing")
    report.tunings = {}
    for name, plan in report.plans.items():
        lam_by_output = {o.output: o.value for o in overrides if o.applies_to(plan)}
        report.tunings[name] = tune_plan(tm, plan, lam_by_output, settings.derivative_filter_ratio)
    if depth < 3:
        return report, traces

    outputs = list(step_outputs) or list(range(tm.rows))
    report.scenarios = []
    report.comparisons = {} if len(bases) > 1 else None
    for i in outputs:
        if not 0 <= i < tm.rows:
            raise ValueError(f"--step-output {i + 1} outside 1..{tm.rows}")
        sc = Scenario(steps=(SetpointStep(i),), horizon=settings.horizon,
                      step_size=settings.step_size, clamp=settings.clamp)
        runs = []
        for name, plan in report.plans.items():
            pids_by_output = {loop.output: loop.settings for loop in report.tunings[name]}
            pids = [pids_by_output[pair.output] for pair in plan.pairs]
            logger.info("Simulating %s with %s pairing %s", sc.label, name, plan.label)
            trace = simulate(tm, plan, pids, sc)
            traces.setdefault(f"yr{i + 1}", {})[name] = trace
            report.scenarios.append(ScenarioResult.from_trace(sc.label, plan, trace))
            runs.append((plan, trace))
        if report.comparisons is not None:
            report.comparisons[sc.label] = compare_plans(runs)
    return report, traces


# ---------------- Commands ----------------

def run_pipeline(args, command: str) -> int:
    settings = load_settings(args.settings).updated(
        step_size=getattr(args, "step_size", None),
        horizon=getattr(args, "horizon", None),
        clamp=getattr(args, "clamp", None),
        derivative_filter_ratio=getattr(args, "filter_ratio", None),
    )
    tm = load_plant_file(args.plant)
    steps = [n - 1 for n in (getattr(args, "step_output", None) or [])]
    overrides = getattr(args, "lambda_f", None) or []
    report, traces = build_report(tm, args.basis, DEPTHS[command], settings, steps, overrides)
    text = render(report, args.format)

    # everything is computed; only now touch the filesystem
    if command == "simulate" and args.out:
        out_dir = Path(args.out)
        for scenario, by_basis in traces.items():
            for basis, trace in by_basis.items():
                _write_atomic(out_dir / f"trace_{basis.lower()}_{scenario}.csv",
                              lambda tmp, trace=trace: write_trace_csv(trace, tmp))
        metrics = {
            "plant": tm.name,
            "runs": [metrics_document(t) for by_basis in traces.values() for t in by_basis.values()],
        }
        _write_text(out_dir / "metrics.json", json.dumps(metrics, indent=2) + "\n")
        _write_text(out_dir / "plant.json", serialize_plant(tm))
        _write_atomic(out_dir / "settings.json", lambda tmp: save_settings(settings, tmp))
        _write_text(out_dir / f"report.{'json' if args.format == 'json' else 'txt'}", text)
        print(f"[OK] Simulation outputs written to {out_dir}", file=sys.stderr)
    elif args.out:
        _write_text(args.out, text)
        print(f"[OK] Report written to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)

    if args.xlsx:
        _write_atomic(args.xlsx, lambda tmp: export_workbook(report, tmp))
    if args.pdf:
        _write_atomic(args.pdf, lambda tmp: export_pdf(report, tmp))
    if args.db:
        ResultsStore(args.db).record_report(report, command)
    return EXIT_OK


def run_verify(args) -> int:
    summary = run_property_suite(args.trials, args.max_r, args.max_s, args.seed, args.workers)
    if args.format == "json":
        text = json.dumps(summary_document(summary), indent=2) + "\n"
    else:
        text = format_summary(summary)
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    if not summary.passed:
        print(f"[WARNING] {len(summary.failures)} property checks failed", file=sys.stderr)
        return EXIT_PROPERTY_FAILURE
    return EXIT_OK


def _history_table(runs: List[Dict], metrics: Optional[List[Dict]]) -> str:
    lines = [f"{'id':>4}  {'plant':<16} {'command':<9} {'created':<19}  props  pairs  metrics"]
    for r in runs:
        props = "PASS" if r["properties_passed"] else "FAIL"
        lines.append(f"{r['id']:>4}  {r['plant']:<16} {r['command']:<9} {r['created_at']:<19}  "
                     f"{props:<5}  {r['pairs']:>5}  {r['metrics']:>7}")
    if metrics is not None:
        lines.append("")
        for m in metrics:
            lines.append(f"  {m['scenario']:<12} {m['basis']:<5} {m['metric']:<5} {m['signal']:<6} {m['value']:.4f}")
    return "\n".join(lines) + "\n"


def run_history(args) -> int:
    if not Path(args.db).is_file():
        raise FileNotFoundError(f"results database {args.db} does not exist")
    store = ResultsStore(args.db)
    runs = store.list_runs()
    metrics = None
    if args.run is not None:
        metrics = store.metrics_for_run(args.run)
        runs = [r for r in runs if r["id"] == args.run]
    if args.format == "json":
        doc = {"runs": runs}
        if metrics is not None:
            doc["metrics"] = metrics
        text = json.dumps(doc, indent=2) + "\n"
    else:
        text = _history_table(runs, metrics)
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rnga_tool",
        description="RGA / RNGA loop pairing, IMC-PID tuning and closed-loop simulation",
    )
    parser.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    parser.add_argument('--log-dir', type=str, help='Also log to a dated file in this directory')
    sub = parser.add_subparsers(dest='command', required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--format', choices=['json', 'table'], default='json', help='Report format')
    common.add_argument('--out', type=str, help='Output file (simulate: output directory)')

    pipeline = argparse.ArgumentParser(add_help=False, parents=[common])
    pipeline.add_argument('--plant', type=str, required=True, help='Plant document (.json or .toml)')
    pipeline.add_argument('--basis', choices=sorted(BASES), default='both', help='Pairing basis')
    pipeline.add_argument('--settings', type=str, help='JSON settings overrides')
    pipeline.add_argument('--db', type=str, help='Record the run in this SQLite file')
    pipeline.add_argument('--xlsx', type=str, help='Also export an Excel workbook')
    pipeline.add_argument('--pdf', type=str, help='Also export a PDF report')

    tuning = argparse.ArgumentParser(add_help=False)
    tuning.add_argument('--lambda-f', type=parse_lambda_override, action='append',
                        metavar='LOOP=VALUE', help="IMC filter constant for loop 'i' or 'i-j' (repeatable)")
    tuning.add_argument('--filter-ratio', type=float, help='Derivative filter ratio N')

    sub.add_parser('analyze', parents=[pipeline], help='Gain arrays, sums and property checks')
    sub.add_parser('pair', parents=[pipeline], help='Analysis plus pairing recommendations')
    sub.add_parser('tune', parents=[pipeline, tuning], help='Pairing plus IMC-PID settings')
    sim = sub.add_parser('simulate', parents=[pipeline, tuning], help='Closed-loop set-point step runs')
    sim.add_argument('--step-output', type=int, action='append',
                     help='Output whose set-point is stepped (1-based, repeatable; default each in turn)')
    sim.add_argument('--step-size', type=float, help='Integration step h in seconds')
    sim.add_argument('--horizon', type=float, help='Simulated time in seconds')
    sim.add_argument('--clamp', type=float, help='Symmetric limit on every control signal')

    verify = sub.add_parser('verify', parents=[common], help='Random-matrix property suite')
    verify.add_argument('--trials', type=int, default=1000)
    verify.add_argument('--seed', type=int, default=0)
    verify.add_argument('--max-r', type=int, default=3)
    verify.add_argument('--max-s', type=int, default=6)
    verify.add_argument('--workers', type=int, default=1)

    history = sub.add_parser('history', parents=[common], help='Runs recorded with --db')
    history.add_argument('--db', type=str, required=True, help='SQLite file written by --db')
    history.add_argument('--run', type=int, help='Also list the closed-loop metrics of this run id')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID_INPUT
    setup_logging(args.verbose, args.log_dir)

    try:
        if args.command == "verify":
            return run_verify(args)
        if args.command == "history":
            return run_history(args)
        return run_pipeline(args, args.command)
    except NoViablePairing as exc:
        logger.error("Infeasible pairing: %s", exc)
        return EXIT_INFEASIBLE_PAIRING
    except (ValueError, ArithmeticError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_INVALID_INPUT


if __name__ == "__main__":
    sys.exit(main())

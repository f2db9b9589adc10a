"""
Analysis Report
Collects the arrays, sums, pairing plans, PID settings, simulation metrics and
property checks of one run and renders them as JSON or as plain tables, with
optional Excel workbook and PDF exports.
"""

import json
import logging
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Dict, List, Optional, Sequence, Tuple

import openpyxl
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils import get_column_letter

from closed_loop_sim import LoopComparison, SimulationTrace
from gain_arrays import GainArray, SumVector
from loop_pairing import PairingPlan
from pid_tuning import TunedLoop
from property_suite import PropertyCheck

logger = logging.getLogger(__name__)

ABSENT = "absent"
DISPLAY_STEP = Decimal("0.0001")

ARRAY_TITLES = {
    "K": "steady-state gain",
    "NGA": "normalized gain",
    "RGA": "relative gain array",
    "RNGA": "relative normalized gain array",
}


@dataclass(frozen=True)
class ScenarioResult:
    scenario: str
    basis: str
    plan: str
    iae: Tuple[Tuple[str, float], ...]
    isci: Tuple[Tuple[str, float], ...]

    @classmethod
    def from_trace(cls, scenario: str, plan: PairingPlan, trace: SimulationTrace) -> "ScenarioResult":
        return cls(
            scenario=scenario,
            basis=plan.basis.value,
            plan=plan.label,
            iae=tuple(zip(trace.output_names, trace.iae_values)),
            isci=tuple(zip(trace.input_names, trace.isci_values)),
        )


@dataclass
class AnalysisReport:
    """Everything one invocation computed. Sections left as None were not run."""
    plant_name: str
    arrays: Dict[str, GainArray] = field(default_factory=dict)
    row_sums: Dict[str, SumVector] = field(default_factory=dict)
    col_sums: Dict[str, SumVector] = field(default_factory=dict)
    binet_cauchy_sums: Dict[str, SumVector] = field(default_factory=dict)
    property_checks: Dict[str, List[PropertyCheck]] = field(default_factory=dict)
    plans: Optional[Dict[str, PairingPlan]] = None
    tunings: Optional[Dict[str, List[TunedLoop]]] = None
    scenarios: Optional[List[ScenarioResult]] = None
    comparisons: Optional[Dict[str, List[LoopComparison]]] = None

    @property
    def all_properties_passed(self) -> bool:
        return all(c.passed for checks in self.property_checks.values() for c in checks)


def display(value: float) -> str:
    """Round half-even to 4 decimals; negative zero prints as 0.0000."""
    text = str(Decimal(value).quantize(DISPLAY_STEP, rounding=ROUND_HALF_EVEN))
    return "0.0000" if text == "-0.0000" else text


def _full(value: float) -> float:
    # json writes the shortest repr, which reads back to the identical double
    return float(value)


# ---------------- JSON ----------------

def _array_doc(arr: GainArray) -> Dict:
    return {
        "role": arr.role.value,
        "shape": arr.shape.value,
        "outputs": list(arr.output_names),
        "inputs": list(arr.input_names),
        "values": [[_full(v) for v in row] for row in arr.matrix],
        "display": [[display(v) for v in row] for row in arr.matrix],
    }


def _sum_doc(sums: SumVector) -> Dict:
    return {
        "values": [_full(v) for v in sums.values],
        "display": [display(v) for v in sums.values],
    }


def _plan_doc(plan: PairingPlan, arr: GainArray) -> Dict:
    return {
        "label": plan.label,
        "retained_inputs": [arr.input_names[j] for j in plan.retained_inputs],
        "eliminated_inputs": [
            {"input": arr.input_names[j], "column_sum": _full(c), "display": display(c)}
            for j, c in plan.eliminated_inputs
        ],
        "pairs": [
            {"output": p.output_name, "input": p.input_name, "value": _full(p.value),
             "display": display(p.value)}
            for p in plan.pairs
        ],
        "total_deviation": _full(plan.total_deviation),
        "warnings": list(plan.warnings),
    }


def _tuning_doc(loops: Sequence[TunedLoop]) -> List[Dict]:
    return [
        {
            "loop": loop.label,
            "kc": _full(loop.settings.kc),
            "tau_i": _full(loop.settings.tau_i),
            "tau_d": _full(loop.settings.tau_d),
            "lambda_f": _full(loop.settings.lambda_f),
            "derivative_filter_ratio": _full(loop.settings.derivative_filter_ratio),
        }
        for loop in loops
    ]


def report_document(report: AnalysisReport) -> Dict:
    doc: Dict = {"plant": report.plant_name}
    doc["arrays"] = {name: _array_doc(arr) for name, arr in report.arrays.items()}
    doc["sums"] = {
        name: {
            "row": _sum_doc(report.row_sums[name]),
            "column": _sum_doc(report.col_sums[name]) if name in report.col_sums else ABSENT,
            "binet_cauchy": (_sum_doc(report.binet_cauchy_sums[name])
                             if name in report.binet_cauchy_sums else ABSENT),
        }
        for name in report.row_sums
    }
    doc["properties"] = {
        name: [
            {"name": c.name, "passed": c.passed, "residual": _full(c.residual), "detail": c.detail}
            for c in checks
        ]
        for name, checks in report.property_checks.items()
    }
    if report.plans is None:
        doc["pairing"] = ABSENT
    else:
        doc["pairing"] = {b: _plan_doc(p, report.arrays[b]) for b, p in report.plans.items()}
    if report.tunings is None:
        doc["tuning"] = ABSENT
    else:
        doc["tuning"] = {b: _tuning_doc(loops) for b, loops in report.tunings.items()}
    if report.scenarios is None:
        doc["metrics"] = ABSENT
    else:
        doc["metrics"] = [
            {
                "scenario": s.scenario,
                "basis": s.basis,
                "pairing": s.plan,
                "iae": {name: _full(v) for name, v in s.iae},
                "isci": {name: _full(v) for name, v in s.isci},
            }
            for s in report.scenarios
        ]
    if report.comparisons is not None:
        doc["comparison"] = {
            scenario: [
                {
                    "output": row.output_name,
                    "by_basis": {
                        basis: {"input": inp, "iae": _full(a), "isci": _full(e)}
                        for basis, inp, a, e in row.entries
                    },
                }
                for row in rows
            ]
            for scenario, rows in report.comparisons.items()
        }
    return doc


# ---------------- Plain tables ----------------

def _grid(row_names: Sequence[str], col_names: Sequence[str], cells: Sequence[Sequence[str]],
          first: str = "") -> List[str]:
    head_width = max([len(first)] + [len(n) for n in row_names]) + 2
    width = max([10] + [len(n) + 2 for n in col_names] + [len(c) + 2 for row in cells for c in row])
    lines = [first.ljust(head_width) + "".join(n.rjust(width) for n in col_names)]
    for name, row in zip(row_names, cells):
        lines.append(name.ljust(head_width) + "".join(c.rjust(width) for c in row))
    return lines


def _table_lines(report: AnalysisReport) -> List[str]:
    lines = [f"Plant: {report.plant_name}"]
    for name, arr in report.arrays.items():
        lines += ["", f"{name} ({ARRAY_TITLES[name]}, {arr.rows}x{arr.cols} {arr.shape.value})"]
        lines += _grid(arr.output_names, arr.input_names,
                       [[display(v) for v in row] for row in arr.matrix])

    for name, rows in report.row_sums.items():
        arr = report.arrays[name]
        lines += ["", f"{name} sums"]
        lines.append("  row R(i):     " + "  ".join(
            f"{n}={display(v)}" for n, v in zip(arr.output_names, rows.values)))
        if name in report.col_sums:
            lines.append("  column C(j):  " + "  ".join(
                f"{n}={display(v)}" for n, v in zip(arr.input_names, report.col_sums[name].values)))
        if name in report.binet_cauchy_sums:
            lines.append("  minor oracle: " + "  ".join(
                f"{n}={display(v)}" for n, v in zip(arr.input_names, report.binet_cauchy_sums[name].values)))

    for name, checks in report.property_checks.items():
        lines += ["", f"Property checks ({name})"]
        for c in checks:
            lines.append(f"  [{'OK' if c.passed else 'FAIL'}] {c.name:<28} residual {c.residual:.3e}  {c.detail}")

    lines += ["", "Pairing"]
    if report.plans is None:
        lines.append(f"  ({ABSENT})")
    else:
        for basis, plan in report.plans.items():
            arr = report.arrays[basis]
            kept = ", ".join(arr.input_names[j] for j in plan.retained_inputs)
            dropped = ", ".join(f"{arr.input_names[j]} (C={display(c)})" for j, c in plan.eliminated_inputs)
            lines.append(f"  {basis}: {plan.label}")
            lines.append(f"    retained: {kept}")
            lines.append(f"    eliminated: {dropped or 'none'}")
            lines.append("    elements: " + ", ".join(f"{p.label}={display(p.value)}" for p in plan.pairs))
            lines.append(f"    total deviation: {display(plan.total_deviation)}")
            for message in plan.warnings:
                lines.append(f"    [WARNING] {message}")

    lines += ["", "PID tuning"]
    if report.tunings is None:
        lines.append(f"  ({ABSENT})")
    else:
        for basis, loops in report.tunings.items():
            lines.append(f"  {basis}")
            lines += ["    " + line for line in _grid(
                [loop.label for loop in loops], ["kc", "tau_i", "tau_d", "lambda_f"],
                [[f"{l.settings.kc:.3f}", f"{l.settings.tau_i:.3f}", f"{l.settings.tau_d:.3f}",
                  f"{l.settings.lambda_f:.3f}"] for l in loops],
                first="loop",
            )]

    lines += ["", "Closed-loop metrics"]
    if report.scenarios is None:
        lines.append(f"  ({ABSENT})")
    else:
        for s in report.scenarios:
            lines.append(f"  {s.scenario}, {s.basis} {s.plan}")
            lines.append("    IAE:  " + "  ".join(f"{n}={v:.2f}" for n, v in s.iae))
            lines.append("    ISCI: " + "  ".join(f"{n}={v:.2f}" for n, v in s.isci))
    if report.comparisons:
        for scenario, rows in report.comparisons.items():
            bases = [entry[0] for entry in rows[0].entries] if rows else []
            lines += ["", f"Comparison, {scenario}"]
            header = [f"IAE {b}" for b in bases] + [f"ISCI {b}" for b in bases]
            cells = []
            for row in rows:
                cells.append([f"{e[2]:.2f}" for e in row.entries]
                             + [f"{e[3]:.2f} ({e[1]})" for e in row.entries])
            lines += ["  " + line for line in _grid([r.output_name for r in rows], header, cells, "output")]
    return lines


def render(report: AnalysisReport, fmt: str = "json") -> str:
    """Deterministic text rendition: "json" or "table"."""
    if fmt == "json":
        return json.dumps(report_document(report), indent=2, ensure_ascii=False) + "\n"
    if fmt == "table":
        return "\n".join(_table_lines(report)) + "\n"
    raise ValueError(f"unknown report format {fmt!r} (expected 'json' or 'table')")


# ---------------- Exports ----------------

def export_workbook(report: AnalysisReport, path) -> None:
    """Excel workbook: one sheet per array plus sums, pairing, tuning and metrics sheets."""
    wb = openpyxl.Workbook()
    wb.remove(wb.active)

    header_font = Font(name='Calibri', size=12, bold=True)
    title_font = Font(name='Calibri', size=14, bold=True)
    header_fill = PatternFill(start_color='DDEBF7', end_color='DDEBF7', fill_type='solid')
    center_alignment = Alignment(horizontal='center', vertical='center')

    def heading(ws, row, values):
        for col, value in enumerate(values, start=1):
            cell = ws.cell(row=row, column=col, value=value)
            cell.font = header_font
            cell.fill = header_fill
            cell.alignment = center_alignment

    for name, arr in report.arrays.items():
        ws = wb.create_sheet(name)
        ws['A1'] = f"{report.plant_name}: {name} ({ARRAY_TITLES[name]})"
        ws['A1'].font = title_font
        heading(ws, 3, [""] + list(arr.input_names))
        for i, out in enumerate(arr.output_names):
            ws.cell(row=4 + i, column=1, value=out).font = header_font
            for j, value in enumerate(arr.matrix[i]):
                cell = ws.cell(row=4 + i, column=2 + j, value=float(value))
                cell.number_format = '0.0000'
        for col in range(1, arr.cols + 2):
            ws.column_dimensions[get_column_letter(col)].width = 14

    ws = wb.create_sheet("Sums")
    heading(ws, 1, ["array", "axis", "label", "value"])
    row = 2
    for name, rows in report.row_sums.items():
        arr = report.arrays[name]
        groups = [("row", arr.output_names, rows)]
        if name in report.col_sums:
            groups.append(("column", arr.input_names, report.col_sums[name]))
        for axis, labels, sums in groups:
            for label, value in zip(labels, sums.values):
                ws.append([name, axis, label, float(value)])
                ws.cell(row=row, column=4).number_format = '0.0000'
                row += 1

    if report.plans is not None:
        ws = wb.create_sheet("Pairing")
        heading(ws, 1, ["basis", "output", "input", "element", "warnings"])
        for basis, plan in report.plans.items():
            for pair in plan.pairs:
                ws.append([basis, pair.output_name, pair.input_name, float(pair.value),
                           "; ".join(plan.warnings)])

    if report.tunings is not None:
        ws = wb.create_sheet("Tuning")
        heading(ws, 1, ["basis", "loop", "kc", "tau_i", "tau_d", "lambda_f", "N"])
        for basis, loops in report.tunings.items():
            for loop in loops:
                s = loop.settings
                ws.append([basis, loop.label, s.kc, s.tau_i, s.tau_d, s.lambda_f,
                           s.derivative_filter_ratio])

    if report.scenarios is not None:
        ws = wb.create_sheet("Metrics")
        heading(ws, 1, ["scenario", "basis", "pairing", "metric", "signal", "value"])
        for s in report.scenarios:
            for metric, values in (("IAE", s.iae), ("ISCI", s.isci)):
                for signal, value in values:
                    ws.append([s.scenario, s.basis, s.plan, metric, signal, float(value)])

    wb.save(path)
    logger.info("workbook written to %s", path)


def export_pdf(report: AnalysisReport, path) -> None:
    """Plain-table report on letter pages in a fixed-width font."""
    from reportlab.lib.pagesizes import letter
    from reportlab.lib.units import inch
    from reportlab.pdfgen import canvas

    width, height = letter
    c = canvas.Canvas(str(path), pagesize=letter)
    c.setTitle(f"{report.plant_name} loop pairing analysis")
    line_height = 11
    top = height - 0.75 * inch
    y = top

    c.setFont("Helvetica-Bold", 16)
    c.drawString(0.75 * inch, y, f"Loop pairing analysis: {report.plant_name}")
    y -= 2 * line_height
    c.setFont("Courier", 8)
    for line in _table_lines(report)[1:]:
        if y < 0.75 * inch:
            c.showPage()
            c.setFont("Courier", 8)
            y = top
        c.drawString(0.75 * inch, y, line)
        y -= line_height
    c.save()
    logger.info("PDF report written to %s", path)

"""
Property Verifier
Checks the structural properties of RGA/RNGA arrays on one gain matrix
(row sums, column-sum bounds, the minor-based column-sum oracle, output
scaling invariance, input scaling variance, permutation equivariance and
wide/tall transpose duality) and runs them over seeded random wide matrices.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from gain_arrays import (
    ArrayRole,
    ArrayShape,
    GainArray,
    binet_cauchy_col_sums,
    col_sums,
    input_scaling_witness,
    permute,
    relative_array,
    row_sums,
    scale_inputs,
    scale_outputs,
    transpose,
)
from matrix_ops import SingularMatrix, det, enumerate_minors, left_pinv, right_pinv

logger = logging.getLogger(__name__)

ALGEBRAIC_TOL = 1e-12
PROPERTY_TOL = 1e-9
SCALING_TOL = 1e-10
WITNESS_THRESHOLD = 1e-8
MAX_DRAWS = 1000

PROPERTY_NAMES = (
    "row_sums",
    "column_sum_bounds",
    "column_sum_total",
    "binet_cauchy_oracle",
    "output_scaling_invariance",
    "input_scaling_witness",
    "permutation_equivariance",
    "transpose_duality",
)


@dataclass(frozen=True)
class PropertyCheck:
    name: str
    passed: bool
    residual: float
    detail: str = ""


def _relative(gains: GainArray) -> GainArray:
    role = ArrayRole.RNGA if gains.role is ArrayRole.NGA else ArrayRole.RGA
    return relative_array(gains, role)


def _max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def check_array_properties(gains: GainArray, q_out=None, q_in=None,
                           pr=None, ps=None) -> List[PropertyCheck]:
    """Property checks for the relative array of a K or NGA array.

    Scalings and permutations default to fixed, non-trivial choices so the
    result is reproducible for a given plant.
    """
    r, s = gains.rows, gains.cols
    q_out = np.resize([5.0, 0.2], r) if q_out is None else np.asarray(q_out, dtype=float)
    q_in = np.array([2.0] + [1.0] * (s - 1)) if q_in is None else np.asarray(q_in, dtype=float)
    pr = np.arange(r)[::-1] if pr is None else np.asarray(pr)
    ps = np.roll(np.arange(s), 1) if ps is None else np.asarray(ps)

    lam = _relative(gains)
    checks: List[PropertyCheck] = []
    dual = _relative(transpose(gains)).matrix
    duality = _max_abs(dual - lam.matrix.T)
    tall = gains.shape is ArrayShape.TALL

    if not tall:
        rows = row_sums(lam).as_array()
        residual = _max_abs(rows - 1.0)
        checks.append(PropertyCheck("row_sums", residual <= PROPERTY_TOL, residual,
                                    "every row sums to 1"))

        cols = col_sums(lam).as_array()
        excess = max(0.0, float(-cols.min()), float(cols.max() - 1.0))
        checks.append(PropertyCheck("column_sum_bounds", excess <= PROPERTY_TOL, excess,
                                    f"column sums in [{cols.min():.6f}, {cols.max():.6f}]"))

        total = abs(float(cols.sum()) - r)
        checks.append(PropertyCheck("column_sum_total", total <= PROPERTY_TOL, total,
                                    f"column sums add up to {r}"))

        oracle = _max_abs(binet_cauchy_col_sums(gains).as_array() - cols)
        checks.append(PropertyCheck("binet_cauchy_oracle", oracle <= PROPERTY_TOL, oracle,
                                    "minor-based column sums agree with the inverse-based ones"))

        scaled = _relative(scale_outputs(gains, q_out)).matrix
        drift = _max_abs(scaled - lam.matrix)
        checks.append(PropertyCheck("output_scaling_invariance", drift <= SCALING_TOL, drift,
                                    f"Q_r = diag({', '.join(f'{q:g}' for q in q_out)})"))

        if np.ptp(q_in) > 0:
            witness = _witness(gains, q_in)
            if witness is None:
                checks.append(PropertyCheck("input_scaling_witness", False, 0.0,
                                            "no element moved under non-uniform input scaling"))
            else:
                i, j, delta = witness
                checks.append(PropertyCheck(
                    "input_scaling_witness", True, delta,
                    f"element ({gains.output_names[i]}, {gains.input_names[j]}) moved by {delta:.3e}",
                ))

        moved = _relative(permute(gains, pr, ps)).matrix
        expected = permute(lam, pr, ps).matrix
        perm_err = _max_abs(moved - expected)
        scale = max(1.0, _max_abs(lam.matrix))
        checks.append(PropertyCheck("permutation_equivariance", perm_err <= ALGEBRAIC_TOL * scale,
                                    perm_err, "relative array follows row/column permutations"))

    checks.append(PropertyCheck("transpose_duality", duality <= ALGEBRAIC_TOL, duality,
                                "tall formula on the transpose equals the transposed wide result"))
    return checks


def _witness(gains: GainArray, q_in) -> Optional[Tuple[int, int, float]]:
    if gains.role is ArrayRole.NGA:
        return input_scaling_witness(gains, q_in, WITNESS_THRESHOLD)
    before = _relative(gains).matrix
    after = _relative(scale_inputs(gains, q_in)).matrix
    delta = np.abs(after - before)
    i, j = np.unravel_index(int(np.argmax(delta)), delta.shape)
    return (int(i), int(j), float(delta[i, j])) if delta[i, j] > WITNESS_THRESHOLD else None


def kernel_checks(a: np.ndarray) -> List[PropertyCheck]:
    """Binet-Cauchy identity and left/right inverse duality for a wide matrix."""
    r = a.shape[0]
    gram = det(a @ a.T)
    minors = sum(value * value for _, value in enumerate_minors(a, r))
    bc = abs(gram - minors) / max(abs(gram), np.finfo(float).tiny)
    dual = _max_abs(left_pinv(a.T) - right_pinv(a).T)
    return [
        PropertyCheck("binet_cauchy_identity", bc <= ALGEBRAIC_TOL, bc,
                      "det(A A^T) equals the sum of squared order-r minors"),
        PropertyCheck("pinv_duality", dual <= ALGEBRAIC_TOL, dual,
                      "left inverse of A^T equals the transposed right inverse of A"),
    ]


# ---------------- Random suite ----------------

@dataclass
class PropertyTally:
    applicable: int = 0
    passed: int = 0
    max_residual: float = 0.0

    @property
    def failed(self) -> int:
        return self.applicable - self.passed


@dataclass
class SuiteSummary:
    trials: int
    max_r: int
    max_s: int
    seed: int
    tallies: Dict[str, PropertyTally] = field(default_factory=dict)
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(t.failed == 0 for t in self.tallies.values())


def random_wide_matrix(rng: np.random.Generator, r: int, s: int) -> np.ndarray:
    """Entries uniform in [-1, 1] with |x| >= 0.05; redrawn while A A^T is singular."""
    for _ in range(MAX_DRAWS):
        magnitude = rng.uniform(0.05, 1.0, size=(r, s))
        a = np.where(rng.random((r, s)) < 0.5, -magnitude, magnitude)
        try:
            relative_array(GainArray(ArrayRole.NGA, a), ArrayRole.RNGA)
        except SingularMatrix:
            continue
        return a
    raise RuntimeError(f"no full-row-rank {r}x{s} matrix after {MAX_DRAWS} draws")


def _trial(seed: int, index: int, max_r: int, max_s: int) -> List[PropertyCheck]:
    rng = np.random.default_rng([seed, index])
    r = int(rng.integers(1, max_r + 1))
    s = int(rng.integers(r + 1, max_s + 1))
    a = random_wide_matrix(rng, r, s)
    q_out = rng.uniform(0.5, 2.0, size=r)
    q_in = rng.uniform(0.5, 2.0, size=s)
    pr = rng.permutation(r)
    ps = rng.permutation(s)
    checks = check_array_properties(GainArray(ArrayRole.NGA, a), q_out, q_in, pr, ps)
    checks.extend(kernel_checks(a))
    logger.debug("trial %d: %dx%d, %d checks", index, r, s, len(checks))
    return checks


def run_property_suite(trials: int, max_r: int = 3, max_s: int = 6, seed: int = 0,
                       workers: int = 1) -> SuiteSummary:
    """Run the property checks over `trials` random wide matrices.

    Trial t draws from a generator seeded with (seed, t), so the summary does
    not depend on the number of workers.
    """
    if trials < 0:
        raise ValueError(f"trials must be >= 0, got {trials}")
    if not 1 <= max_r < max_s <= 8:
        raise ValueError(f"need 1 <= max r < max s <= 8, got max r {max_r}, max s {max_s}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")

    summary = SuiteSummary(trials, max_r, max_s, seed)
    for name in PROPERTY_NAMES + ("binet_cauchy_identity", "pinv_duality"):
        summary.tallies[name] = PropertyTally()

    indices = range(trials)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda t: _trial(seed, t, max_r, max_s), indices))
    else:
        results = [_trial(seed, t, max_r, max_s) for t in indices]

    for index, checks in enumerate(results):
        for check in checks:
            tally = summary.tallies[check.name]
            tally.applicable += 1
            tally.passed += int(check.passed)
            tally.max_residual = max(tally.max_residual, check.residual)
            if not check.passed:
                summary.failures.append(f"trial {index}: {check.name} residual {check.residual:.3e}")
    if summary.failures:
        logger.warning("%d property failures in %d trials", len(summary.failures), trials)
    return summary


def summary_document(summary: SuiteSummary) -> Dict:
    return {
        "trials": summary.trials,
        "max_r": summary.max_r,
        "max_s": summary.max_s,
        "seed": summary.seed,
        "passed": summary.passed,
        "properties": {
            name: {
                "applicable": t.applicable,
                "passed": t.passed,
                "failed": t.failed,
                "max_residual": t.max_residual,
            }
            for name, t in summary.tallies.items()
        },
        "failures": list(summary.failures),
    }


def format_summary(summary: SuiteSummary) -> str:
    lines = [
        f"Property suite: {summary.trials} trials, r <= {summary.max_r}, s <= {summary.max_s}, "
        f"seed {summary.seed}",
        "",
        f"{'property':<28}{'checked':>9}{'passed':>9}{'failed':>9}{'max residual':>16}",
    ]
    for name, t in summary.tallies.items():
        lines.append(f"{name:<28}{t.applicable:>9}{t.passed:>9}{t.failed:>9}{t.max_residual:>16.3e}")
    lines.append("")
    lines.append("RESULT: PASS" if summary.passed else f"RESULT: FAIL ({len(summary.failures)} failures)")
    lines.extend(f"  {f}" for f in summary.failures[:20])
    return "\n".join(lines) + "\n"

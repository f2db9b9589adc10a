"""
Loop Pairing
Turns an RGA/RNGA array into a decentralized pairing: drop the surplus inputs
with the smallest column sums, then give every output one retained input,
preferring elements closest to unity.
"""

import logging
from dataclasses import dataclass, field
from itertools import permutations
from typing import List, Optional, Sequence, Tuple

from gain_arrays import ArrayRole, ArrayShape, GainArray, SumVector, col_sums

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-9


class NoViablePairing(ValueError):
    """Every matching over the retained inputs uses a non-positive element."""


class UnsupportedShape(ValueError):
    """The array cannot be paired (tall, or too many outputs to search)."""


@dataclass(frozen=True)
class LoopPair:
    output: int
    input: int
    value: float
    output_name: str = ""
    input_name: str = ""

    @property
    def label(self) -> str:
        return f"{self.output_name or f'Y{self.output + 1}'}-{self.input_name or f'U{self.input + 1}'}"


@dataclass(frozen=True)
class PairingPlan:
    basis: ArrayRole
    retained_inputs: Tuple[int, ...]
    pairs: Tuple[LoopPair, ...]
    eliminated_inputs: Tuple[Tuple[int, float], ...]
    total_deviation: float
    warnings: Tuple[str, ...] = field(default=())

    @property
    def label(self) -> str:
        return "/".join(p.label for p in self.pairs)

    def input_for(self, output: int) -> int:
        for pair in self.pairs:
            if pair.output == output:
                return pair.input
        raise KeyError(f"output {output + 1} is not paired")


def eliminate_inputs(arr: GainArray, sums: SumVector) -> Tuple[List[int], List[Tuple[int, float]]]:
    """Keep the r columns with the largest column sums.

    Ties go to the lower column index. Returns (retained, eliminated) with
    retained ascending and eliminated as (column, sum) pairs, ascending.
    """
    if arr.shape is ArrayShape.TALL:
        raise UnsupportedShape(f"cannot eliminate inputs of a tall {arr.rows}x{arr.cols} array")
    if len(sums.values) != arr.cols:
        raise ValueError(f"{len(sums.values)} column sums for {arr.cols} columns")
    ranked = sorted(range(arr.cols), key=lambda j: (-sums.values[j], j))
    retained = sorted(ranked[:arr.rows])
    eliminated = [(j, sums.values[j]) for j in sorted(ranked[arr.rows:])]
    return retained, eliminated


def _column_sum_tie(arr: GainArray, sums: SumVector) -> Optional[str]:
    if arr.cols <= arr.rows:
        return None
    ranked = sorted(range(arr.cols), key=lambda j: (-sums.values[j], j))
    kept, dropped = ranked[arr.rows - 1], ranked[arr.rows]
    if abs(sums.values[kept] - sums.values[dropped]) <= TIE_TOLERANCE:
        return (
            f"column sums of {arr.input_names[kept]} and {arr.input_names[dropped]} tie at "
            f"{sums.values[kept]:.6f}; kept {arr.input_names[kept]}"
        )
    return None


def _candidates(arr: GainArray, retained: Sequence[int]):
    """(cost, pairs) for every matching whose elements are all positive."""
    m = arr.matrix
    for order in permutations(retained):
        values = [float(m[i, j]) for i, j in enumerate(order)]
        if any(v <= 0.0 for v in values):
            continue
        cost = sum(abs(v - 1.0) for v in values)
        yield cost, tuple((i, j) for i, j in enumerate(order)), values


def recommend(arr: GainArray, warn_threshold: float = 0.5, near_tie_margin: float = 0.05,
              max_rows: int = 10) -> PairingPlan:
    """Pairing plan minimizing sum |lambda - 1| over positive-element matchings."""
    if arr.role not in (ArrayRole.RGA, ArrayRole.RNGA):
        raise ValueError(f"pairing needs an RGA or RNGA array, got {arr.role.value}")
    if arr.shape is ArrayShape.TALL:
        raise UnsupportedShape(
            f"{arr.rows}x{arr.cols} array has more outputs than inputs; tall arrays are for "
            "analysis only and have no pairing rule"
        )
    if arr.rows > max_rows:
        raise UnsupportedShape(f"{arr.rows} outputs exceed the exhaustive search limit of {max_rows}")

    sums = col_sums(arr)
    retained, eliminated = eliminate_inputs(arr, sums)
    warnings: List[str] = []
    tie = _column_sum_tie(arr, sums)
    if tie:
        warnings.append(tie)

    viable = list(_candidates(arr, retained))
    if not viable:
        names = ", ".join(arr.input_names[j] for j in retained)
        raise NoViablePairing(
            f"every {arr.role.value} matching over retained inputs {names} contains a "
            "non-positive element"
        )
    best_cost, best_pairs, best_values = min(viable, key=lambda c: (c[0], c[1]))

    pairs = tuple(
        LoopPair(i, j, v, arr.output_names[i], arr.input_names[j])
        for (i, j), v in zip(best_pairs, best_values)
    )
    for pair in pairs:
        if pair.value < warn_threshold:
            warnings.append(
                f"{pair.label} element {pair.value:.4f} is below {warn_threshold}"
            )
    for cost, other, _ in sorted(viable, key=lambda c: (c[0], c[1])):
        if other == best_pairs or cost - best_cost > near_tie_margin:
            continue
        alt = "/".join(f"{arr.output_names[i]}-{arr.input_names[j]}" for i, j in other)
        warnings.append(
            f"alternative pairing {alt} is within {near_tie_margin} of the optimum "
            f"(deviation {cost:.4f} vs {best_cost:.4f})"
        )

    plan = PairingPlan(
        basis=arr.role,
        retained_inputs=tuple(retained),
        pairs=pairs,
        eliminated_inputs=tuple(eliminated),
        total_deviation=best_cost,
        warnings=tuple(warnings),
    )
    logger.info("%s pairing: %s (deviation %.4f)", arr.role.value, plan.label, best_cost)
    for message in warnings:
        logger.warning("%s pairing: %s", arr.role.value, message)
    return plan

"""
Interaction Arrays
RGA / RNGA for wide, tall and square gain matrices, their row and column
sums, the determinant-minor column-sum oracle, and the scaling/permutation
transforms the array properties are stated in terms of.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from matrix_ops import (
    Matrix,
    MatrixShapeError,
    SingularMatrix,
    as_matrix,
    enumerate_minors,
    left_pinv,
    schur,
    solve,
)

logger = logging.getLogger(__name__)


class ArrayRole(str, Enum):
    K = "K"
    NGA = "NGA"
    RGA = "RGA"
    RNGA = "RNGA"


class ArrayShape(str, Enum):
    WIDE = "wide"
    TALL = "tall"
    SQUARE = "square"


class SumAxis(str, Enum):
    ROW = "row"
    COLUMN = "column"


class InvalidTransform(ValueError):
    """A scaling or permutation argument is not admissible."""


class DegenerateArray(ValueError):
    """An input (or, for tall arrays, an output) has no gain on any channel."""


def shape_of(rows: int, cols: int) -> ArrayShape:
    if rows < cols:
        return ArrayShape.WIDE
    if rows > cols:
        return ArrayShape.TALL
    return ArrayShape.SQUARE


def default_labels(prefix: str, count: int) -> Tuple[str, ...]:
    return tuple(f"{prefix}{n}" for n in range(1, count + 1))


@dataclass(frozen=True, eq=False)
class GainArray:
    """An r x s real array tagged with what it represents."""
    role: ArrayRole
    matrix: Matrix
    output_names: Tuple[str, ...] = field(default=())
    input_names: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        data = as_matrix(self.matrix, f"{self.role.value} array").copy()
        data.setflags(write=False)
        object.__setattr__(self, "matrix", data)
        rows, cols = data.shape
        if not self.output_names:
            object.__setattr__(self, "output_names", default_labels("Y", rows))
        if not self.input_names:
            object.__setattr__(self, "input_names", default_labels("U", cols))
        if len(self.output_names) != rows or len(self.input_names) != cols:
            raise MatrixShapeError(
                f"{self.role.value} array is {rows}x{cols} but has "
                f"{len(self.output_names)} output and {len(self.input_names)} input labels"
            )

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    @property
    def shape(self) -> ArrayShape:
        return shape_of(self.rows, self.cols)

    def with_matrix(self, matrix: Matrix, role: Optional[ArrayRole] = None,
                    output_names=None, input_names=None) -> "GainArray":
        return GainArray(
            role=role or self.role,
            matrix=matrix,
            output_names=tuple(output_names) if output_names is not None else self.output_names,
            input_names=tuple(input_names) if input_names is not None else self.input_names,
        )


@dataclass(frozen=True)
class SumVector:
    axis: SumAxis
    values: Tuple[float, ...]

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=np.float64)


def _require_role(arr: GainArray, allowed: Sequence[ArrayRole], what: str) -> None:
    if arr.role not in allowed:
        names = "/".join(r.value for r in allowed)
        raise ValueError(f"{what} expects a {names} array, got {arr.role.value}")


def _reject_zero_lines(arr: GainArray) -> None:
    # zero rows of a wide array (zero columns of a tall one) already surface as SingularMatrix
    if arr.shape is ArrayShape.TALL:
        lines, names, kind = arr.matrix, arr.output_names, "output"
    else:
        lines, names, kind = arr.matrix.T, arr.input_names, "input"
    for index, line in enumerate(lines):
        if not np.any(line):
            raise DegenerateArray(
                f"{arr.role.value} array: {kind} {index + 1} ({names[index]}) has zero gain on every channel"
            )


def relative_array(arr: GainArray, role: ArrayRole) -> GainArray:
    """A o (A^+)^T with the right inverse for wide/square and left inverse for tall."""
    a = arr.matrix
    _reject_zero_lines(arr)
    try:
        if arr.shape is ArrayShape.TALL:
            inverse_t = left_pinv(a).T
        else:
            # (A A^T)^-1 A is (A^+)^T for the right inverse
            inverse_t = solve(a @ a.T, a)
    except SingularMatrix as exc:
        rank_kind = "column" if arr.shape is ArrayShape.TALL else "row"
        raise SingularMatrix(
            f"{arr.rows}x{arr.cols} {arr.shape.value} {arr.role.value} array lacks full "
            f"{rank_kind} rank: {exc}"
        ) from exc
    return arr.with_matrix(schur(a, inverse_t), role=role)


def rnga(nga: GainArray) -> GainArray:
    """Relative normalized gain array of a normalized gain array."""
    _require_role(nga, (ArrayRole.NGA,), "rnga")
    return relative_array(nga, ArrayRole.RNGA)


def rga(k: GainArray) -> GainArray:
    """Relative gain array of a steady-state gain array."""
    _require_role(k, (ArrayRole.K,), "rga")
    return relative_array(k, ArrayRole.RGA)


def row_sums(arr: GainArray) -> SumVector:
    _require_role(arr, (ArrayRole.RGA, ArrayRole.RNGA), "row_sums")
    return SumVector(SumAxis.ROW, tuple(float(v) for v in arr.matrix.sum(axis=1)))


def col_sums(arr: GainArray) -> SumVector:
    """Column sums; bounded to [0, 1] only for wide/square arrays."""
    _require_role(arr, (ArrayRole.RGA, ArrayRole.RNGA), "col_sums")
    return SumVector(SumAxis.COLUMN, tuple(float(v) for v in arr.matrix.sum(axis=0)))


def _minor_weights(gains: GainArray, warn_limit: Optional[int] = None) -> Tuple[np.ndarray, float]:
    """Per-column sum of squared order-r minors containing that column, and the total."""
    _require_role(gains, (ArrayRole.K, ArrayRole.NGA), "Binet-Cauchy column sums")
    if gains.shape is ArrayShape.TALL:
        raise MatrixShapeError(
            f"Binet-Cauchy column sums need rows <= cols, got {gains.rows}x{gains.cols}"
        )
    per_column = np.zeros(gains.cols)
    total = 0.0
    for columns, value in enumerate_minors(gains.matrix, gains.rows, warn_limit):
        square = value * value
        total += square
        per_column[list(columns)] += square
    if total == 0.0:
        raise SingularMatrix("every order-r minor vanishes; the array is rank deficient")
    return per_column, total


def col_sum_binet_cauchy(gains: GainArray, j: int) -> float:
    """C(j) from determinant minors only, independent of any generalized inverse.

    j is a 0-based column index.
    """
    if not 0 <= j < gains.cols:
        raise IndexError(f"column {j} outside 0..{gains.cols - 1}")
    per_column, total = _minor_weights(gains)
    return float(per_column[j] / total)


def binet_cauchy_col_sums(gains: GainArray, warn_limit: Optional[int] = None) -> SumVector:
    per_column, total = _minor_weights(gains, warn_limit)
    return SumVector(SumAxis.COLUMN, tuple(float(v / total) for v in per_column))


def _diagonal(q, size: int, what: str) -> np.ndarray:
    values = np.asarray(q, dtype=np.float64).ravel()
    if values.shape != (size,):
        raise InvalidTransform(f"{what} scaling needs {size} entries, got {values.size}")
    if not np.all(np.isfinite(values)):
        raise InvalidTransform(f"{what} scaling contains non-finite entries")
    zero = np.flatnonzero(values == 0.0)
    if zero.size:
        raise InvalidTransform(f"{what} scaling entry {int(zero[0]) + 1} is zero")
    return values


def scale_outputs(gains: GainArray, q) -> GainArray:
    """Q_r A for diagonal Q_r = diag(q); the RNGA is unchanged by this."""
    diag = _diagonal(q, gains.rows, "output")
    return gains.with_matrix(diag[:, None] * gains.matrix)


def scale_inputs(gains: GainArray, q) -> GainArray:
    """A Q_s for diagonal Q_s = diag(q); the RNGA generally changes."""
    diag = _diagonal(q, gains.cols, "input")
    return gains.with_matrix(gains.matrix * diag[None, :])


def _check_permutation(perm, size: int, what: str) -> np.ndarray:
    order = np.asarray(perm, dtype=int).ravel()
    if order.shape != (size,) or sorted(order.tolist()) != list(range(size)):
        raise InvalidTransform(f"{what} permutation must reorder 0..{size - 1}, got {list(perm)}")
    return order


def permute(arr: GainArray, pr, ps) -> GainArray:
    """P_r A P_s: row i of the result is row pr[i], column j is column ps[j]."""
    rows = _check_permutation(pr, arr.rows, "row")
    cols = _check_permutation(ps, arr.cols, "column")
    return arr.with_matrix(
        arr.matrix[np.ix_(rows, cols)],
        output_names=[arr.output_names[i] for i in rows],
        input_names=[arr.input_names[j] for j in cols],
    )


def input_scaling_witness(nga: GainArray, q, threshold: float = 1e-8):
    """Find an RNGA element that moves under input scaling by q.

    Returns (i, j, delta) for the largest change when it exceeds threshold,
    otherwise None.
    """
    before = rnga(nga).matrix
    after = rnga(scale_inputs(nga, q)).matrix
    delta = np.abs(after - before)
    i, j = np.unravel_index(int(np.argmax(delta)), delta.shape)
    if delta[i, j] > threshold:
        return int(i), int(j), float(delta[i, j])
    return None


def transpose(arr: GainArray) -> GainArray:
    """Swap the roles of outputs and inputs (a wide array becomes tall)."""
    return GainArray(
        role=arr.role,
        matrix=arr.matrix.T,
        output_names=arr.input_names,
        input_names=arr.output_names,
    )

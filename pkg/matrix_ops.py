"""
Dense Matrix Kernel
Small real-matrix helpers for the gain-array computations: Schur product,
pivoted Gaussian elimination, determinants, generalized inverses and
k-column minor enumeration.

Matrices are 2-D float64 numpy arrays. Sizes here are tiny (a handful of
rows), so the generalized inverses go through the normal equations rather
than an orthogonal factorization.
"""

import logging
from itertools import combinations
from math import comb
from typing import Iterator, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

logger = logging.getLogger(__name__)

Matrix = NDArray[np.float64]
MinorIndex = Tuple[int, ...]

# Relative pivot threshold for solve(); see SingularMatrix.
PIVOT_TOLERANCE = 1e-12
MINOR_WARN_LIMIT = 10 ** 6


class MatrixShapeError(ValueError):
    """Operands have incompatible or unsupported dimensions."""


class SingularMatrix(ArithmeticError):
    """A pivot failed the relative magnitude test during elimination."""


def as_matrix(data, name: str = "matrix") -> Matrix:
    """Coerce data to a finite 2-D float64 array (1-D input becomes one row)."""
    arr = np.array(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.size == 0:
        raise MatrixShapeError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise MatrixShapeError(f"{name} contains non-finite entries")
    return arr


def schur(a: Matrix, b: Matrix) -> Matrix:
    """Elementwise (Schur/Hadamard) product of two equally sized matrices."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != b.shape:
        raise MatrixShapeError(f"Schur product needs equal shapes, got {a.shape} and {b.shape}")
    return a * b


def _eliminate(a: Matrix, rhs: Matrix, check_pivots: bool):
    """Forward elimination with partial pivoting, in place on copies.

    Returns (upper, reduced_rhs, swap_count) or None when a pivot is exactly
    zero and check_pivots is False.
    """
    u = a.copy()
    x = rhs.copy()
    n = u.shape[0]
    row_scale = np.max(np.abs(u), axis=1)
    swaps = 0
    for col in range(n):
        pivot_row = col + int(np.argmax(np.abs(u[col:, col])))
        pivot = u[pivot_row, col]
        if check_pivots:
            scale = row_scale[pivot_row]
            if scale == 0.0 or abs(pivot) < PIVOT_TOLERANCE * scale:
                raise SingularMatrix(
                    f"pivot {pivot:.3e} in column {col + 1} is below {PIVOT_TOLERANCE:g} "
                    f"x row scale {scale:.3e}"
                )
        elif pivot == 0.0:
            return None
        if pivot_row != col:
            u[[col, pivot_row]] = u[[pivot_row, col]]
            x[[col, pivot_row]] = x[[pivot_row, col]]
            row_scale[[col, pivot_row]] = row_scale[[pivot_row, col]]
            swaps += 1
        factors = u[col + 1:, col] / u[col, col]
        u[col + 1:, col:] -= np.outer(factors, u[col, col:])
        x[col + 1:] -= np.outer(factors, x[col])
    return u, x, swaps


def solve(sym: Matrix, rhs: Matrix) -> Matrix:
    """Solve sym @ X = rhs by Gaussian elimination with partial pivoting.

    Raises SingularMatrix when a pivot magnitude is below 1e-12 times the
    largest absolute entry of its row.
    """
    sym = as_matrix(sym, "sym")
    if sym.shape[0] != sym.shape[1]:
        raise MatrixShapeError(f"solve needs a square matrix, got {sym.shape}")
    rhs_arr = np.array(rhs, dtype=np.float64)
    vector_rhs = rhs_arr.ndim == 1
    if vector_rhs:
        rhs_arr = rhs_arr.reshape(-1, 1)
    if rhs_arr.shape[0] != sym.shape[0]:
        raise MatrixShapeError(
            f"right-hand side has {rhs_arr.shape[0]} rows, matrix has {sym.shape[0]}"
        )

    u, x, _ = _eliminate(sym, rhs_arr, check_pivots=True)
    n = u.shape[0]
    for row in range(n - 1, -1, -1):
        x[row] = (x[row] - u[row, row + 1:] @ x[row + 1:]) / u[row, row]
    return x.ravel() if vector_rhs else x


def det(a: Matrix) -> float:
    """Determinant via the same pivoted elimination; 0.0 for a singular matrix."""
    a = as_matrix(a, "a")
    if a.shape[0] != a.shape[1]:
        raise MatrixShapeError(f"determinant needs a square matrix, got {a.shape}")
    result = _eliminate(a, np.zeros((a.shape[0], 1)), check_pivots=False)
    if result is None:
        return 0.0
    u, _, swaps = result
    value = float(np.prod(np.diag(u)))
    return -value if swaps % 2 else value


def right_pinv(a: Matrix) -> Matrix:
    """Right generalized inverse A^T (A A^T)^-1 of a wide (or square) matrix."""
    a = as_matrix(a, "a")
    rows, cols = a.shape
    if rows > cols:
        raise MatrixShapeError(f"right inverse needs rows <= cols, got {a.shape}")
    # solve gives (A A^T)^-1 A, which is the transpose of A^+
    return solve(a @ a.T, a).T


def left_pinv(a: Matrix) -> Matrix:
    """Left generalized inverse (A^T A)^-1 A^T of a tall (or square) matrix."""
    a = as_matrix(a, "a")
    rows, cols = a.shape
    if rows < cols:
        raise MatrixShapeError(f"left inverse needs rows >= cols, got {a.shape}")
    return solve(a.T @ a, a.T)


def enumerate_minors(a: Matrix, order: int,
                     warn_limit: Optional[int] = None) -> Iterator[Tuple[MinorIndex, float]]:
    """Yield (column subset, determinant) for every order-k column minor.

    Minors are taken from the top `order` rows; subsets come out in
    lexicographic order as 0-based column tuples.
    """
    a = as_matrix(a, "a")
    rows, cols = a.shape
    if order < 1 or order > min(rows, cols):
        raise MatrixShapeError(f"minor order {order} outside 1..{min(rows, cols)}")
    count = comb(cols, order)
    if count > (MINOR_WARN_LIMIT if warn_limit is None else warn_limit):
        logger.warning("Enumerating %d minors of order %d; this will be slow", count, order)
    top = a[:order]
    for columns in combinations(range(cols), order):
        yield columns, det(top[:, columns])

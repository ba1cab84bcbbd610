"""Small exact-rational helpers shared by the linear-algebra and root-counting code."""

from __future__ import annotations

import numbers
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

Matrix = list[list[Fraction]]


def as_fraction(value) -> Fraction | None:
    """Return ``value`` as a Fraction when it is exactly rational by type, else None.

    Integers, Fractions and strings such as ``"3/2"`` or ``"0.25"`` count as exact.
    Python and numpy floats do not, because a float like ``cos(pi/3)`` is only
    an approximation of the intended number.
    """
    if isinstance(value, bool):
        raise TypeError("booleans are not matrix entries")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, numbers.Integral):
        return Fraction(int(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"cannot parse {value!r} as a rational number") from exc
    return None


def exact_matrix(rows) -> Matrix | None:
    """Convert a 2-D nested sequence to a Fraction matrix, or None if any entry is inexact."""
    if isinstance(rows, np.ndarray):
        if not np.issubdtype(rows.dtype, np.integer) and rows.dtype != object:
            return None
        rows = rows.tolist()
    out: Matrix = []
    for row in rows:
        conv = []
        for v in row:
            f = as_fraction(v)
            if f is None:
                return None
            conv.append(f)
        out.append(conv)
    return out


def _to_float(value) -> float:
    if isinstance(value, str):
        return float(Fraction(value.strip()))
    return float(value)


def to_float_matrix(rows) -> np.ndarray:
    if isinstance(rows, np.ndarray) and rows.dtype != object:
        return rows.astype(float)
    return np.array([[_to_float(v) for v in row] for row in rows], dtype=float)


def det(mat: Sequence[Sequence[Fraction]]) -> Fraction:
    """Determinant by fraction-exact Gaussian elimination."""
    a = [list(row) for row in mat]
    size = len(a)
    sign = 1
    result = Fraction(1)
    for col in range(size):
        pivot = next((i for i in range(col, size) if a[i][col] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            a[col], a[pivot] = a[pivot], a[col]
            sign = -sign
        p = a[col][col]
        result *= p
        for i in range(col + 1, size):
            if a[i][col] != 0:
                factor = a[i][col] / p
                row_i, row_c = a[i], a[col]
                for j in range(col + 1, size):
                    row_i[j] -= factor * row_c[j]
    return sign * result


def rank(mat: Iterable[Sequence[Fraction]]) -> int:
    a = [list(row) for row in mat]
    if not a:
        return 0
    ncols = len(a[0])
    r = 0
    for col in range(ncols):
        pivot = next((i for i in range(r, len(a)) if a[i][col] != 0), None)
        if pivot is None:
            continue
        a[r], a[pivot] = a[pivot], a[r]
        p = a[r][col]
        for i in range(r + 1, len(a)):
            if a[i][col] != 0:
                factor = a[i][col] / p
                for j in range(col, ncols):
                    a[i][j] -= factor * a[r][j]
        r += 1
        if r == len(a):
            break
    return r

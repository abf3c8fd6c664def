"""Exact integer matrix helpers and a small floating-point lattice toolkit.

Integer routines work on lists of Python ints so nothing overflows. The
lattice routines (LLL, Fincke-Pohst enumeration) are plain float
implementations sized for dimensions up to about six.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

IntMatrix = list[list[int]]


def as_int_matrix(rows: Sequence[Sequence[int]]) -> IntMatrix:
    return [[int(v) for v in row] for row in rows]


def int_det(rows: Sequence[Sequence[int]]) -> int:
    """Determinant by fraction-free Bareiss elimination."""
    a = as_int_matrix(rows)
    n = len(a)
    if any(len(r) != n for r in a):
        raise ValueError("matrix is not square")
    if n == 0:
        return 1
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for i in range(k + 1, n):
                if a[i][k] != 0:
                    a[k], a[i] = a[i], a[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def int_inverse(rows: Sequence[Sequence[int]]) -> IntMatrix:
    """Inverse of a unimodular integer matrix (exact)."""
    n = len(rows)
    aug = [[Fraction(v) for v in row] + [Fraction(int(i == j)) for j in range(n)]
           for i, row in enumerate(rows)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if piv is None:
            raise ValueError("matrix is singular")
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    inv = [row[n:] for row in aug]
    if any(v.denominator != 1 for row in inv for v in row):
        raise ValueError("matrix is not unimodular")
    return [[int(v) for v in row] for row in inv]


def mat_mul(a: Sequence[Sequence[int]], b: Sequence[Sequence[int]]) -> IntMatrix:
    return [[sum(x * y for x, y in zip(row, col)) for col in zip(*b)] for row in a]


def transpose(a: Sequence[Sequence[int]]) -> IntMatrix:
    return [list(col) for col in zip(*a)]


def identity(n: int) -> IntMatrix:
    return [[int(i == j) for j in range(n)] for i in range(n)]


def column_echelon(rows: Sequence[Sequence[int]]) -> tuple[IntMatrix, IntMatrix, int]:
    """Column-reduce ``A`` by unimodular column operations.

    Returns ``(H, U, rank)`` with ``A @ U == H``; columns ``rank:`` of ``H``
    are zero, so ``U[:, rank:]`` is a basis of the integer kernel of ``A``.
    """
    a = as_int_matrix(rows)
    r = len(a)
    n = len(a[0]) if r else 0
    u = identity(n)

    def colop(dst: int, src: int, q: int) -> None:
        # column dst -= q * column src
        for row in a:
            row[dst] -= q * row[src]
        for row in u:
            row[dst] -= q * row[src]

    def swap(i: int, j: int) -> None:
        for row in a:
            row[i], row[j] = row[j], row[i]
        for row in u:
            row[i], row[j] = row[j], row[i]

    c = 0
    for i in range(r):
        if c >= n:
            break
        while True:
            nz = [j for j in range(c, n) if a[i][j] != 0]
            if not nz:
                break
            p = min(nz, key=lambda j: abs(a[i][j]))
            if p != c:
                swap(p, c)
            done = True
            for j in range(c + 1, n):
                if a[i][j] != 0:
                    colop(j, c, a[i][j] // a[i][c])
                    if a[i][j] != 0:
                        done = False
            if done:
                break
        if a[i][c] != 0:
            if a[i][c] < 0:
                for row in a:
                    row[c] = -row[c]
                for row in u:
                    row[c] = -row[c]
            c += 1
    return a, u, c


def integer_kernel(rows: Sequence[Sequence[int]], n: int | None = None) -> IntMatrix:
    """Basis (as rows) of ``{x in Z^n : A x = 0}``."""
    if not rows:
        return identity(n or 0)
    _, u, rank = column_echelon(rows)
    ncols = len(u)
    return [[u[i][j] for i in range(ncols)] for j in range(rank, ncols)]


def saturate(basis: Sequence[Sequence[int]]) -> IntMatrix:
    """Basis (rows) of ``span(basis) ∩ Z^n``; rank-deficient input is allowed."""
    basis = as_int_matrix(basis)
    n = len(basis[0])
    kern = integer_kernel(basis)
    if not kern:
        return identity(n)
    return integer_kernel(kern)


def complete_unimodular(basis: Sequence[Sequence[int]]) -> IntMatrix:
    """Unimodular ``M`` whose first ``k`` rows span the saturation of ``basis``."""
    sat = saturate(basis)
    _, u, rank = column_echelon(sat)
    if rank != len(sat):
        raise ValueError("basis is rank deficient")
    return int_inverse(u)


def is_primitive(v: Sequence[int]) -> bool:
    return math.gcd(*[int(x) for x in v]) == 1


# ---------------------------------------------------------------------------
# floating point lattice tools


def _gso(b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = b.shape[0]
    bstar = np.zeros_like(b, dtype=float)
    mu = np.zeros((k, k))
    for i in range(k):
        v = b[i].astype(float).copy()
        for j in range(i):
            denom = bstar[j] @ bstar[j]
            mu[i, j] = (b[i] @ bstar[j]) / denom if denom > 0 else 0.0
            v -= mu[i, j] * bstar[j]
        bstar[i] = v
    return bstar, mu


def lll_reduce(basis: np.ndarray, delta: float = 0.99) -> tuple[np.ndarray, np.ndarray]:
    """LLL-reduce the rows of a real basis.

    Returns ``(reduced, U)`` with ``reduced == U @ basis`` and ``U`` an
    integer unimodular matrix (int64 entries).
    """
    b = np.array(basis, dtype=float)
    k = b.shape[0]
    u = np.eye(k, dtype=np.int64)
    bstar, mu = _gso(b)
    i = 1
    while i < k:
        for j in range(i - 1, -1, -1):
            q = round(mu[i, j])
            if q:
                b[i] -= q * b[j]
                u[i] -= q * u[j]
                bstar, mu = _gso(b)
        lhs = bstar[i] @ bstar[i]
        rhs = (delta - mu[i, i - 1] ** 2) * (bstar[i - 1] @ bstar[i - 1])
        if lhs >= rhs:
            i += 1
        else:
            b[[i - 1, i]] = b[[i, i - 1]]
            u[[i - 1, i]] = u[[i, i - 1]]
            bstar, mu = _gso(b)
            i = max(i - 1, 1)
    return b, u


def enumerate_short(basis: np.ndarray, radius: float, limit: int = 100_000,
                    reduce: bool = True) -> Iterator[np.ndarray]:
    """Yield integer coefficient vectors ``c != 0`` with ``||c @ basis|| <= radius``.

    Fincke-Pohst enumeration over an (optionally LLL-reduced) basis. Yields
    coefficients with respect to the *input* basis. Stops after ``limit``
    vectors.
    """
    b = np.array(basis, dtype=float)
    k = b.shape[0]
    u = np.eye(k, dtype=np.int64)
    if reduce:
        b, u = lll_reduce(b)
    bstar, mu = _gso(b)
    norms = np.array([v @ v for v in bstar])
    r2 = radius * radius * (1 + 1e-12)
    coeff = np.zeros(k, dtype=np.int64)
    count = 0

    def rec(level: int, partial: float) -> Iterator[np.ndarray]:
        nonlocal count
        center = -sum(coeff[j] * mu[j, level] for j in range(level + 1, k))
        rem = r2 - partial
        if rem < 0 or norms[level] <= 0:
            return
        half = math.sqrt(rem / norms[level])
        lo, hi = math.ceil(center - half), math.floor(center + half)
        for t in range(lo, hi + 1):
            coeff[level] = t
            p = partial + (t - center) ** 2 * norms[level]
            if p > r2:
                continue
            if level == 0:
                if coeff.any():
                    count += 1
                    yield coeff @ u
                    if count >= limit:
                        return
            else:
                yield from rec(level - 1, p)
                if count >= limit:
                    return
        coeff[level] = 0

    yield from rec(k - 1, 0.0)

"""Selectors, coverings and lattice-point bounds for products of linear forms.

The constructions follow the inequalities that control small values of a
product of linear forms: a floor for the largest normalized form, a greedy
choice of n factors that are simultaneously small, covering of the solution
set of a product inequality by boxes in orthonormal coordinates, and the
volume / lattice-point bounds for such boxes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import numpy as np

from . import intlinalg
from .forms import DecomposableForm, FormError, height, proportional
from .invariants import (SpanTester, _iprime, _span_count, compute_a,
                         compute_c, disc_nonzero)


class BudgetExceeded(RuntimeError):
    pass


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


# ---------------------------------------------------------------------------
# the floor for the largest normalized value


def lemma4_floor(forms, x) -> float:
    """Lower bound ||x|| |det| / (n^(n/2) prod ||L_i||) for max_i |L_i(x)|/||L_i||."""
    K = np.atleast_2d(np.asarray(forms, dtype=complex))
    n = K.shape[0]
    if K.shape != (n, n):
        raise FormError("need n forms in n variables")
    norms = np.linalg.norm(K, axis=1)
    if SpanTester(K, 1e-12).rank < n:
        raise FormError("forms are linearly dependent")
    det = abs(np.linalg.det(K))
    return float(np.linalg.norm(x) * det / (n ** (n / 2) * np.prod(norms)))


def max_normalized(forms, x) -> float:
    K = np.atleast_2d(np.asarray(forms, dtype=complex))
    return float(np.max(np.abs(K @ np.asarray(x, dtype=float)) / np.linalg.norm(K, axis=1)))


# ---------------------------------------------------------------------------
# greedy selection of simultaneously small factors


@dataclass(frozen=True)
class GreedySelection:
    tuple: tuple[int, ...]
    minima: tuple[float, ...]
    span_counts: tuple[int, ...]


def greedy_tuple(F: DecomposableForm, x) -> GreedySelection:
    """Pick factors one at a time by smallest normalized value outside the current span.

    When the conjugate of the last pick is not yet spanned, the next pick
    must be proportional to it. Ties go to the lowest index.
    """
    f = F.factorization
    if not _iprime(f):
        raise FormError("I(F) is empty")
    m = f.matrix
    vals = np.abs(m @ np.asarray(x, dtype=float)) / f.norms
    chosen: list[int] = []
    minima: list[float] = []
    for j in range(f.n):
        span = SpanTester(m[chosen], f.tol) if chosen else None
        cands = [i for i in range(f.d) if span is None or not span.contains(m[i])]
        pick = None
        if chosen:
            c = np.conj(m[chosen[-1]])
            if not span.contains(c):
                conj = [i for i in cands if proportional(m[i], c, f.tol)]
                if not conj:
                    raise FormError("factorization is not closed under conjugation")
                pick = conj[0]
        if pick is None:
            pick = min(cands, key=lambda i: (vals[i], i))
        chosen.append(pick)
        minima.append(float(vals[pick]))
    counts = [_span_count(f, frozenset(chosen[: j + 1])) for j in range(f.n)]
    span_counts = [counts[0]] + [counts[j] - counts[j - 1] for j in range(1, f.n)]
    return GreedySelection(tuple(chosen), tuple(minima), tuple(span_counts))


def lemma5_kappa(n: int, d: int, a: Fraction) -> float:
    return float(n ** (n * (d - n * a) / (2 * a)))


@dataclass(frozen=True)
class Certificate:
    lhs: float
    rhs: float
    ok: bool


def lemma5_certificate(F: DecomposableForm, sel: GreedySelection, x) -> Certificate:
    """Check prod |L_ij(x)| / |det| <= kappa (|F(x)| / ||x||^(d - n a))^(1/a) H^c."""
    f = F.factorization
    a = compute_a(f)
    if a is None or a >= Fraction(f.d, f.n):
        raise FormError("certificate needs a(F) defined and below d/n")
    x = np.asarray(x, dtype=float)
    nx = float(np.linalg.norm(x))
    if nx == 0:
        raise FormError("x must be nonzero")
    c = compute_c(f, a, disc_nonzero(f))
    m = f.matrix
    t = list(sel.tuple)
    det = abs(np.linalg.det(m[t]))
    vals = np.abs(m @ x)
    lhs = float(np.prod(vals[t]) / det)
    Fx = float(np.prod(vals))
    n, d = f.n, f.d
    af = float(a)
    # logs keep large d / large H in range
    log_rhs = (math.log(lemma5_kappa(n, d, a)) + float(c) * math.log(height(f))
               + ((math.log(Fx) if Fx > 0 else -math.inf) - (d - n * af) * math.log(nx)) / af)
    rhs = math.exp(log_rhs) if log_rhs > -math.inf else 0.0
    return Certificate(lhs, rhs, lhs <= rhs * (1 + 1e-9) or lhs == 0.0)


def lemma6_kappa(n: int, d: int) -> float:
    """Explicit constant for the minimal-height selector (Minkowski's second theorem chain)."""
    return 2 ** n / unit_ball_volume(n) * math.sqrt(n ** 3 * math.comb(d, n) / d)


@dataclass(frozen=True)
class Lemma6Result:
    tuple: tuple[int, ...]
    ratio: float
    bound: float
    diagnostic_ok: bool


def lemma6_tuple(F: DecomposableForm, x) -> Lemma6Result:
    f = F.factorization
    combos = _iprime(f)
    if not combos:
        raise FormError("I(F) is empty")
    m = f.matrix
    vals = np.abs(m @ np.asarray(x, dtype=float))
    best = min(combos, key=lambda c: (np.prod(vals[list(c)]) / abs(np.linalg.det(m[list(c)])), c))
    ratio = float(np.prod(vals[list(best)]) / abs(np.linalg.det(m[list(best)])))
    Fx = float(np.prod(vals))
    bound = lemma6_kappa(f.n, f.d) * Fx ** (f.n / f.d) / height(f) ** (1 / f.d)
    return Lemma6Result(best, ratio, bound, ratio <= bound * (1 + 1e-9))


# ---------------------------------------------------------------------------
# exponent tuples


def exponent_tuples(n: int, total: int, pinned_zero: int | None = None) -> Iterator[tuple[int, ...]]:
    """Nonnegative integer n-tuples summing to ``total`` (lexicographic order)."""
    if total < 0:
        raise ValueError("total must be nonnegative")
    free = [i for i in range(n) if i != pinned_zero]
    k = len(free)
    if k == 0:
        if total == 0:
            yield (0,) * n
        return
    # stars and bars
    for bars in itertools.combinations(range(total + k - 1), k - 1):
        parts = []
        prev = -1
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(total + k - 2 - prev)
        z = [0] * n
        for i, p in zip(free, parts):
            z[i] = p
        yield tuple(z)


def f_count(n: int, a: int) -> int:
    return math.comb(a + n - 1, n - 1)


def f_cap(n: int, a: int) -> float:
    return (a + n - 1) ** (n - 1) / math.factorial(n - 1)


# ---------------------------------------------------------------------------
# cells of the form {y : |K'_i(y)| <= a_i}


def orthonormalize(forms, order: Sequence[int]) -> np.ndarray:
    """Gram-Schmidt (hermitian) of the forms taken in the given order."""
    K = np.asarray(forms, dtype=complex)
    Q: list[np.ndarray] = []
    for i in order:
        v = K[i].copy()
        for q in Q:
            v = v - np.vdot(q, v) * q
        nv = np.linalg.norm(v)
        if nv <= 1e-13 * np.linalg.norm(K[i]):
            raise FormError("degenerate forms")
        Q.append(v / nv)
    return np.array(Q)


def greedy_ordering(forms, x) -> tuple[int, ...]:
    """Ordering whose orthogonalization keeps the product of values small at x.

    At each step the next form is the one whose component orthogonal to the
    forms already chosen takes the smallest normalized value at x.
    """
    K = np.asarray(forms, dtype=complex)
    x = np.asarray(x, dtype=float)
    n = K.shape[0]
    rem = list(range(n))
    Q: list[np.ndarray] = []
    order = []
    for _ in range(n):
        best = None
        for i in rem:
            v = K[i].copy()
            for q in Q:
                v = v - np.vdot(q, v) * q
            v = v / np.linalg.norm(v)
            val = abs(v @ x)
            if best is None or val < best[0]:
                best = (val, i, v)
        Q.append(best[2])
        rem.remove(best[1])
        order.append(best[1])
    return tuple(order)


@dataclass(frozen=True)
class ConvexCell:
    forms: np.ndarray           # n x n complex, orthonormal rows
    bounds: tuple[float, ...]
    ordering: tuple[int, ...] = ()
    exponents: tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return len(self.bounds)

    @property
    def product(self) -> float:
        return float(np.prod(self.bounds))

    def contains(self, y) -> bool:
        vals = np.abs(self.forms @ np.asarray(y, dtype=float))
        a = np.asarray(self.bounds)
        return bool(np.all(vals <= a + 1e-12 * a))

    def contains_many(self, Y: np.ndarray) -> np.ndarray:
        vals = np.abs(np.asarray(Y, dtype=float) @ self.forms.T)
        a = np.asarray(self.bounds)
        return np.all(vals <= a + 1e-12 * a, axis=1)

    def half_widths(self) -> np.ndarray:
        """Bounding box: y = T^H (T y) gives |y_k| <= sum_i |T_ik| a_i."""
        return np.abs(self.forms).T @ np.asarray(self.bounds)

    def scaled(self, s: float) -> "ConvexCell":
        return ConvexCell(self.forms, tuple(s * a for a in self.bounds), self.ordering, self.exponents)

    def to_json(self) -> dict:
        return {"forms": [[[z.real, z.imag] for z in row] for row in self.forms],
                "bounds": list(self.bounds), "ordering": list(self.ordering),
                "exponents": list(self.exponents)}


@dataclass
class CoveringFamily:
    cells: list[ConvexCell]
    params: dict
    variant: str
    Q: float
    bound_product: float
    cell_count_cap: float
    bases: dict = field(default_factory=dict)

    def covers(self, x) -> bool:
        return any(c.contains(x) for c in self.cells)

    def locate(self, x) -> int | None:
        """Index of the cell the construction assigns to x, or None."""
        order = greedy_ordering(self.params["forms"], x)
        T = self.bases[order]
        C, D = self.params["C"], self.params["D"]
        vals = np.abs(T @ np.asarray(x, dtype=float))
        total = _exponent_total(self.variant, self.Q)
        with np.errstate(divide="ignore"):
            ni = np.where(vals > 0, np.log(C / np.maximum(vals, 1e-300)) / math.log(D), np.inf)
        fl = np.floor(np.minimum(ni, total + 1)).astype(int)
        if self.variant == "7":
            i0 = int(np.argmax(vals))
            fl[i0] = 0
        if np.any(fl < 0) or fl.sum() < total:
            return None
        z = [0] * len(fl)
        left = total
        for i in range(len(fl)):
            z[i] = min(fl[i], left)
            left -= z[i]
        for idx, c in enumerate(self.cells):
            if c.ordering == order and c.exponents == tuple(z):
                return idx
        return None


def _exponent_total(variant: str, Q: float) -> int:
    """Sum of the exponents z_i.

    Without the lower norm bound the floors [n_i] of a solution sum to more
    than Q, hence to at least [Q] + 1; using [Q] + 1 is what keeps the
    product of the a_i below D^n n! A.
    """
    if Q < 0:
        return 0
    return math.floor(Q) + (1 if variant == "7prime" else 0)


def build_covering(forms, A: float, C: float, D: float, B: float | None = None) -> CoveringFamily:
    """Cells covering the solutions of prod|K_i(x)|/|det| <= A in a norm window.

    With ``B`` given the window is B <= ||x|| <= C and one exponent is pinned
    to zero; without it the window is ||x|| <= C.
    """
    K = np.asarray(forms, dtype=complex)
    n = K.shape[0]
    if K.shape != (n, n) or SpanTester(K, 1e-12).rank < n:
        raise FormError("degenerate forms")
    if A <= 0 or C <= 0 or D <= 1:
        raise ValueError("need A, C > 0 and D > 1")
    if B is not None and not 0 < B < C:
        raise ValueError("need 0 < B < C")
    nf = math.factorial(n)
    logD = math.log(D)
    if B is not None:
        variant = "7"
        Q = math.log(B * C ** (n - 1) / (D ** (n - 1) * nf * n ** (n / 2) * A)) / logD
        bound_product = D ** n * nf * n ** (n / 2) * C * A / B
        if Q >= 0:
            L = math.log(B * C ** (n - 1) / (nf * n ** (n / 2) * A)) / logD
            cap = n ** 3 * L ** (n - 2)
        else:
            cap = float(nf)
    else:
        variant = "7prime"
        Q = math.log(C ** n / (D ** n * nf * A)) / logD
        bound_product = D ** n * nf * A
        cap = n * (math.log(C ** n / (nf * A)) / logD) ** (n - 1) if Q >= 0 else float(nf)
    total = _exponent_total(variant, Q)

    if variant == "7":
        tuples = sorted({z for i0 in range(n) for z in exponent_tuples(n, total, i0)})
    else:
        tuples = list(exponent_tuples(n, total))
    bases = {}
    cells = []
    for order in itertools.permutations(range(n)):
        T = orthonormalize(K, order)
        bases[order] = T
        for z in tuples:
            cells.append(ConvexCell(T, tuple(D ** (-zi) * C for zi in z), order, z))
    params = {"forms": K, "A": A, "B": B, "C": C, "D": D}
    return CoveringFamily(cells, params, variant, Q, bound_product, cap, bases)


def cell_volume_bound(cell: ConvexCell) -> float:
    return 2 ** cell.n * math.factorial(cell.n) * cell.product


def cell_mc_volume(cell: ConvexCell, samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo volume of a cell in its bounding box; returns (value, std error)."""
    h = cell.half_widths()
    box = float(np.prod(2 * h))
    Y = (rng.random((samples, cell.n)) * 2 - 1) * h
    p = cell.contains_many(Y).mean()
    return box * p, box * math.sqrt(p * (1 - p) / samples)


def lemma9_count_cap(cell: ConvexCell) -> float:
    n = cell.n
    return 3 ** n * 2 ** (n * (n - 1) // 2) * math.factorial(n) * cell.product


def cell_lattice_points(cell: ConvexCell, lattice=None, cap: int = 2_000_000) -> list[tuple[int, ...]]:
    """Exact list of integer coefficient vectors c with c @ lattice inside the cell.

    Candidates come from the enclosing ellipsoid sum |K'_i y|^2 / a_i^2 <= n,
    enumerated by Fincke-Pohst, and are then filtered by membership.
    """
    n = cell.n
    Bm = np.eye(n) if lattice is None else np.asarray(lattice, dtype=float)
    W = cell.forms / np.asarray(cell.bounds)[:, None]
    G = np.real(W.conj().T @ W)
    gram = Bm @ G @ Bm.T
    R = np.linalg.cholesky(gram + 1e-300 * np.eye(n))
    pts = [tuple([0] * n)]
    for c in intlinalg.enumerate_short(R, math.sqrt(n) * (1 + 1e-9), limit=cap + 1):
        if len(pts) > cap:
            raise BudgetExceeded("candidate cap exceeded in cell enumeration")
        if cell.contains(c @ Bm):
            pts.append(tuple(int(v) for v in c))
    if len(pts) > cap:
        raise BudgetExceeded("candidate cap exceeded in cell enumeration")
    return sorted(pts)


def points_span(points) -> bool:
    P = np.asarray(points, dtype=float)
    if P.ndim != 2 or P.shape[0] == 0:
        return False
    return np.linalg.matrix_rank(P) == P.shape[1]


# ---------------------------------------------------------------------------
# the recursive lattice-point bound


@dataclass
class Lemma8Result:
    bound: float
    witness: np.ndarray          # rows y_1..y_n in coefficient coordinates
    exact_count: int


def lemma8_recursive_bound(points_in: Callable[[float], list], k: int) -> Lemma8Result:
    """Certified count bound 3^k 2^(k(k-1)/2) |det(y_i)| for a symmetric convex body.

    ``points_in(s)`` must return every integer point (coefficient vector) of
    the body scaled by ``s``. The recursion splits Z^k into the saturated
    sublattice spanned by k-1 interior points plus one complementary
    direction, exactly as in the inductive argument.
    """
    pts = [tuple(int(v) for v in p) for p in points_in(1.0)]
    exact = len(pts)
    bound, Y = _lemma8(points_in, k)
    return Lemma8Result(bound, Y, exact)


def _independent_subset(points, k: int) -> list:
    chosen: list = []
    for p in sorted(points, key=lambda p: (sum(abs(v) for v in p), p)):
        if not any(p):
            continue
        trial = chosen + [list(p)]
        if np.linalg.matrix_rank(np.array(trial, dtype=float)) == len(trial):
            chosen.append(list(p))
            if len(chosen) == k:
                break
    return chosen


def _lemma8(points_in: Callable[[float], list], k: int) -> tuple[float, np.ndarray]:
    pts = [tuple(int(v) for v in p) for p in points_in(1.0)]
    if k == 1:
        y1 = max(abs(p[0]) for p in pts)
        if y1 < 1:
            raise FormError("body has no nonzero lattice point")
        return 3.0 * y1, np.array([[float(y1)]])
    z = _independent_subset(pts, k)
    if len(z) < k:
        raise FormError("fewer than n independent lattice points in the body")
    M = intlinalg.complete_unimodular(z[: k - 1])
    Minv = np.array(intlinalg.int_inverse(M), dtype=np.int64)
    Mf = np.array(M, dtype=np.int64)

    def coords(p):
        return np.asarray(p, dtype=np.int64) @ Minv

    best = max(pts, key=lambda p: (abs(int(coords(p)[k - 1])), p))

    def sub_points(s: float):
        out = []
        for p in points_in(2.0 * s):
            c = coords(p)
            if c[k - 1] == 0:
                out.append(tuple(int(v) for v in c[: k - 1]))
        return out

    sub_bound, Ysub = _lemma8(sub_points, k - 1)
    # lift y^- back to Z^k coordinates and halve
    ylift = (Ysub @ Mf[: k - 1].astype(float)) / 2.0
    Y = np.vstack([ylift, np.asarray(best, dtype=float)[None, :]])
    # equals sub_bound * 3 * |last coordinate of best|, the induction step's count bound
    bound = 3 ** k * 2 ** (k * (k - 1) // 2) * abs(np.linalg.det(Y))
    return float(bound), Y


def cell_points_fn(cell: ConvexCell, lattice=None, cap: int = 2_000_000) -> Callable[[float], list]:
    return lambda s: cell_lattice_points(cell.scaled(s), lattice, cap)

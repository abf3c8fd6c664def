"""Combinatorial and arithmetic invariants of a decomposable form.

Everything here is computed from the factorization: the index-tuple sets
I(F), I'(F), J(F), the occurrence counts b, the exponents a(F) and c(F),
semi-discriminants, and the finite-volume classification.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from . import intlinalg
from .forms import (DecomposableForm, Factorization, FormError, IntegerForm,
                    height, proportional, substitute)


class Classification(str, enum.Enum):
    FINITE = "FiniteVolume"
    INFINITE = "InfiniteVolume"
    EXCEPTIONAL = "ExceptionalDefiniteQuadratic"


class FiniteTypeVerdict(str, enum.Enum):
    FINITE_TYPE = "FiniteType"
    NOT_FINITE_TYPE = "NotFiniteType"
    TESTED_ONLY = "FiniteTypeOnTestedSubspaces"


# ---------------------------------------------------------------------------
# numerical linear algebra at a single tolerance


def _unit_rows(vectors) -> np.ndarray:
    m = np.atleast_2d(np.asarray(vectors, dtype=complex))
    norms = np.linalg.norm(m, axis=1)
    norms[norms == 0] = 1.0
    return m / norms[:, None]


class SpanTester:
    """Rank and span membership for a set of complex vectors.

    Rows are normalized first, so the threshold ``tol * sigma_max`` does not
    depend on how each vector happens to be scaled.
    """

    def __init__(self, vectors, tol: float):
        self.tol = tol
        m = _unit_rows(vectors)
        if m.shape[0] == 0:
            self.rank = 0
            self.basis = np.zeros((0, m.shape[1]), dtype=complex)
            return
        _, s, vh = np.linalg.svd(m)
        self.rank = int(np.sum(s > tol * s[0])) if s[0] > 0 else 0
        self.basis = vh[: self.rank]

    def contains(self, v) -> bool:
        v = np.asarray(v, dtype=complex)
        nv = np.linalg.norm(v)
        if nv == 0:
            return True
        if self.rank == 0:
            return False
        proj = (v @ self.basis.conj().T) @ self.basis
        return bool(np.linalg.norm(v - proj) <= self.tol * nv)


def rank_span(vectors, tol: float) -> tuple[int, SpanTester]:
    t = SpanTester(vectors, tol)
    return t.rank, t


def _independent(f: Factorization, idx: Sequence[int]) -> bool:
    return SpanTester(f.matrix[list(idx)], f.tol).rank == len(idx)


# ---------------------------------------------------------------------------
# index tuples


@lru_cache(maxsize=256)
def _iprime(f: Factorization) -> tuple[tuple[int, ...], ...]:
    return tuple(c for c in itertools.combinations(range(f.d), f.n) if _independent(f, c))


def enumerate_I_prime(f: Factorization) -> Iterator[tuple[int, ...]]:
    """Ascending n-tuples of independent factors (0-based indices)."""
    yield from _iprime(f)


def enumerate_I(f: Factorization) -> Iterator[tuple[int, ...]]:
    for c in _iprime(f):
        yield from itertools.permutations(c)


def count_I(f: Factorization) -> int:
    return math.factorial(f.n) * len(_iprime(f))


def disc_nonzero(f: Factorization) -> bool:
    """Nonvanishing discriminant, read off as |I'(F)| = C(d, n)."""
    return len(_iprime(f)) == math.comb(f.d, f.n)


def b_values(f: Factorization) -> tuple[tuple[int, ...], int]:
    occ = [0] * f.d
    for c in _iprime(f):
        for i in c:
            occ[i] += 1
    nf = math.factorial(f.n)
    b = tuple(nf * k for k in occ)
    return b, max(b) if b else 0


@lru_cache(maxsize=4096)
def _span_count(f: Factorization, idx: frozenset) -> int:
    t = SpanTester(f.matrix[sorted(idx)], f.tol)
    return sum(t.contains(row) for row in f.matrix)


def in_J(f: Factorization, tup: Sequence[int]) -> bool:
    """Chain condition: each conjugate is either the next factor or already spanned."""
    m = f.matrix
    if not _independent(f, tup):
        return False
    for j in range(len(tup) - 1):
        cj = np.conj(m[tup[j]])
        if proportional(m[tup[j + 1]], cj, f.tol):
            continue
        if not SpanTester(m[list(tup[: j + 1])], f.tol).contains(cj):
            return False
    return True


@lru_cache(maxsize=256)
def _J(f: Factorization) -> tuple[tuple[int, ...], ...]:
    return tuple(t for t in enumerate_I(f) if in_J(f, t))


def enumerate_J(f: Factorization) -> Iterator[tuple[int, ...]]:
    yield from _J(f)


def compute_a(f: Factorization) -> Fraction | None:
    """a(F) as an exact rational, or None when J(F) is empty."""
    J = _J(f)
    if not J or f.n < 2:
        return None
    best = Fraction(0)
    for t in J:
        for j in range(1, f.n):
            best = max(best, Fraction(_span_count(f, frozenset(t[:j])), j))
    return best


def compute_c(f: Factorization, a_value: Fraction | None, disc: bool | None = None) -> Fraction | None:
    if a_value is None:
        return None
    if disc is None:
        disc = disc_nonzero(f)
    n, d = f.n, f.d
    if disc:
        return Fraction(math.comb(d - 1, n - 1) - 1)
    _, bF = b_values(f)
    a = Fraction(a_value)
    return Fraction(bF) * (d - (n - 1) * a) / (math.factorial(n) * a) - 1 / a


# ---------------------------------------------------------------------------
# semi-discriminants


@dataclass(frozen=True)
class SemiDiscriminant:
    value: complex          # S(F); may overflow to inf for large forms
    log_abs: float          # log |S(F)|, -inf when S = 0
    log_abs_normalized: float  # log |NS(F)|

    @property
    def norm_mod(self) -> float:
        return math.exp(self.log_abs_normalized) if self.log_abs_normalized > -math.inf else 0.0


def semi_discriminants(f: Factorization) -> SemiDiscriminant:
    """S(F) over all ordered tuples, and |NS(F)|.

    The n! orderings of one ascending tuple contribute det^(n!) times the
    product of the permutation signs, which is (-1)^(n!/2) for n >= 2.
    """
    combos = _iprime(f)
    if not combos:
        return SemiDiscriminant(0j, -math.inf, -math.inf)
    nf = math.factorial(f.n)
    m = f.matrix
    log_abs = 0.0
    phase = 0.0
    for c in combos:
        det = np.linalg.det(m[list(c)])
        log_abs += nf * math.log(abs(det))
        phase += nf * np.angle(det)
    if f.n >= 2 and (nf // 2) % 2:
        phase += math.pi
    b, _ = b_values(f)
    log_norm = log_abs - float(np.dot(b, np.log(f.norms)))
    with np.errstate(over="ignore"):
        val = complex(np.exp(log_abs) * np.exp(1j * phase)) if log_abs < 700 else complex(math.inf)
    # snap the phase of real results
    if abs(val.imag) <= 1e-9 * abs(val):
        val = complex(val.real, 0.0)
    return SemiDiscriminant(val, log_abs, log_norm)


def hadamard_ratios(f: Factorization) -> dict[tuple[int, ...], float]:
    """|det| / prod of norms for each tuple of I'(F) (order does not matter)."""
    combos = _iprime(f)
    if not combos:
        raise FormError("I(F) is empty")
    m = f.matrix
    return {c: float(abs(np.linalg.det(m[list(c)])) / np.prod(f.norms[list(c)])) for c in combos}


# ---------------------------------------------------------------------------
# classification


def _as_factorization(F) -> Factorization:
    return F.factorization if isinstance(F, DecomposableForm) else F


def is_exceptional(F: DecomposableForm) -> bool:
    f = F.factorization
    if f.n != 2 or np.any(f.is_real):
        return False
    m = f.matrix
    c0 = np.conj(m[0])
    if not all(proportional(row, m[0], f.tol) or proportional(row, c0, f.tol) for row in m):
        return False
    return F.integer_form.monomials.get((f.d, 0), 0) > 0


def classify_volume(F: DecomposableForm) -> Classification:
    f = F.factorization
    if is_exceptional(F):
        return Classification.EXCEPTIONAL
    if f.n == 1:
        # c X^d with c != 0 always has a bounded solution set
        return Classification.FINITE
    a = compute_a(f)
    if a is not None and a < Fraction(f.d, f.n):
        return Classification.FINITE
    return Classification.INFINITE


# ---------------------------------------------------------------------------
# subspaces


@dataclass(frozen=True)
class Restriction:
    basis: tuple[tuple[int, ...], ...]   # rows: a Z-basis of W ∩ Z^n
    form: DecomposableForm | None
    identically_zero: bool

    @property
    def dim(self) -> int:
        return len(self.basis)


def restrict_to_subspace(F: DecomposableForm, basis: Sequence[Sequence[int]]) -> Restriction:
    """Restrict F to the rational subspace spanned by ``basis``.

    The basis is first saturated, so integer points of W correspond exactly
    to integer coordinate vectors y via x = W^T y.
    """
    basis = intlinalg.as_int_matrix(basis)
    if not basis or any(len(r) != F.n for r in basis):
        raise FormError("subspace basis has the wrong shape")
    sat = intlinalg.saturate(basis)
    if len(sat) != len(basis):
        raise FormError("subspace basis is rank deficient")
    W = tuple(tuple(r) for r in sat)
    Wt = intlinalg.transpose(sat)
    mono = substitute(F.integer_form.monomials, Wt)
    if not mono:
        return Restriction(W, None, True)
    fac = Factorization(tuple(map(tuple, F.factorization.matrix @ np.array(Wt, dtype=float))),
                        F.tol)
    g = IntegerForm.from_monomials(len(W), F.d, mono)
    return Restriction(W, DecomposableForm(fac, g, F.label + "|W" if F.label else ""), False)


def rational_kernel_candidates(f: Factorization, scale: float = 1e7) -> list[list[list[int]]]:
    """Rational subspaces lying (numerically) in the kernel of some factor subset.

    Integer relations among the columns of a factor subset are found by LLL
    on the stacked real and imaginary parts; short relations whose residual
    is at rounding level are kept.
    """
    n = f.n
    m = _unit_rows(f.matrix)
    out: list[list[list[int]]] = []
    seen = set()
    for r in range(1, f.d + 1):
        for S in itertools.combinations(range(f.d), r):
            sub = m[list(S)]
            if SpanTester(sub, f.tol).rank >= n:
                continue
            key = tuple(np.round(SpanTester(sub, f.tol).basis.flatten(), 6))
            if key in seen:
                continue
            seen.add(key)
            emb = np.hstack([np.eye(n), scale * sub.real.T, scale * sub.imag.T])
            red, _ = intlinalg.lll_reduce(emb)
            rel = []
            for row in red:
                c = np.round(row[:n]).astype(np.int64)
                if not c.any():
                    continue
                resid = np.linalg.norm(sub @ c)
                if resid <= 1e3 * f.tol * np.linalg.norm(c) + 1e-12:
                    rel.append([int(v) for v in c])
            if rel:
                sat = intlinalg.saturate(rel)
                if 0 < len(sat) < n:
                    out.append(sat)
    return out


def binary_has_rational_zero(g: IntegerForm) -> bool:
    """Whether a binary integer form vanishes at some nonzero rational point."""
    import sympy

    x, y = sympy.symbols("x y")
    expr = sum(c * x ** e[0] * y ** e[1] for e, c in g.terms)
    _, facs = sympy.factor_list(expr)
    return any(sympy.Poly(p, x, y).total_degree() == 1 for p, _ in facs)


@dataclass
class FiniteTypeResult:
    verdict: FiniteTypeVerdict
    full_space: Classification
    details: list[dict] = field(default_factory=list)
    witness_subspace: list[list[int]] | None = None


def finite_type_check(F: DecomposableForm, extra_subspaces: Sequence[Sequence[Sequence[int]]] = ()) -> FiniteTypeResult:
    """Sound rejection test for finite type.

    FiniteType is only claimed for n <= 2, where the proper rational
    subspaces are lines and the test is exact.
    """
    n = F.n
    full = classify_volume(F)
    res = FiniteTypeResult(FiniteTypeVerdict.TESTED_ONLY, full)
    if full == Classification.INFINITE:
        res.verdict = FiniteTypeVerdict.NOT_FINITE_TYPE
        res.witness_subspace = [list(r) for r in intlinalg.identity(n)]
        return res

    subspaces: list[list[list[int]]] = []
    eye = intlinalg.identity(n)
    for r in range(1, n):
        for S in itertools.combinations(range(n), r):
            subspaces.append([eye[i] for i in S])
    subspaces += rational_kernel_candidates(F.factorization)
    subspaces += [intlinalg.as_int_matrix(s) for s in extra_subspaces]

    seen = set()
    for sub in subspaces:
        R = restrict_to_subspace(F, sub)
        if R.basis in seen:
            continue
        seen.add(R.basis)
        if R.identically_zero:
            ok, cls = False, "IdenticallyZero"
        else:
            c = classify_volume(R.form)
            ok = c != Classification.INFINITE
            if ok and R.dim == 2 and binary_has_rational_zero(R.form.integer_form):
                ok = False
            cls = c.value
        res.details.append({"basis": [list(r) for r in R.basis], "classification": cls, "ok": ok})
        if not ok:
            res.verdict = FiniteTypeVerdict.NOT_FINITE_TYPE
            res.witness_subspace = [list(r) for r in R.basis]
            return res

    if n == 1:
        res.verdict = FiniteTypeVerdict.FINITE_TYPE
    elif n == 2:
        zero = binary_has_rational_zero(F.integer_form)
        res.details.append({"basis": "rational lines", "classification": "exact", "ok": not zero})
        res.verdict = FiniteTypeVerdict.NOT_FINITE_TYPE if zero else FiniteTypeVerdict.FINITE_TYPE
    return res


# ---------------------------------------------------------------------------
# the small linear program


def lp_min(b: Sequence[float], A: float) -> tuple[float, list[float]]:
    """Minimize sum b_i x_i over x_i >= 0, prefix sums <= jA, total kA.

    For nondecreasing b the minimum sits at x_i = A for every i.
    """
    b = [float(v) for v in b]
    if any(b[i] > b[i + 1] for i in range(len(b) - 1)):
        raise ValueError("b must be nondecreasing")
    if A <= 0:
        raise ValueError("A must be positive")
    k = len(b)
    x = [float(A)] * k
    # sanity: the witness is feasible
    assert all(sum(x[: j + 1]) <= (j + 1) * A * (1 + 1e-15) for j in range(k))
    return A * sum(b), x


# ---------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class InvariantReport:
    height: float
    b_per_factor: tuple[int, ...]
    b_max: int
    i_count: int
    iprime_count: int
    a_value: Fraction | None
    c_value: Fraction | None
    semi_disc: complex
    log_abs_semi_disc: float
    norm_semi_disc_mod: float
    log_norm_semi_disc: float
    disc_nonzero: bool
    classification: Classification


def invariant_report(F: DecomposableForm) -> InvariantReport:
    f = F.factorization
    b, bF = b_values(f)
    disc = disc_nonzero(f)
    a = compute_a(f)
    c = compute_c(f, a, disc)
    sd = semi_discriminants(f)
    return InvariantReport(
        height=height(f), b_per_factor=b, b_max=bF, i_count=count_I(f),
        iprime_count=len(_iprime(f)), a_value=a, c_value=c, semi_disc=sd.value,
        log_abs_semi_disc=sd.log_abs, norm_semi_disc_mod=sd.norm_mod,
        log_norm_semi_disc=sd.log_abs_normalized, disc_nonzero=disc,
        classification=classify_volume(F))

"""Decomposable forms: factorizations, exact integer forms and equivalence.

A decomposable form is stored twice. The complex factorization drives every
invariant and geometric computation, and the expanded integer polynomial is
the only thing used to evaluate F at integer points.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, reduce
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import intlinalg

DEFAULT_TOL = 1e-8


class FormError(ValueError):
    """Raised for malformed form data or failed integrality checks."""


Exponent = tuple[int, ...]


# ---------------------------------------------------------------------------
# polynomial helpers (dicts exponent -> coefficient)


def _poly_mul(p: Mapping, q: Mapping) -> dict:
    out: dict = {}
    for e1, c1 in p.items():
        for e2, c2 in q.items():
            e = tuple(a + b for a, b in zip(e1, e2))
            out[e] = out.get(e, 0) + c1 * c2
    return {e: c for e, c in out.items() if c != 0}


def _linear_poly(coeffs: Sequence, n: int) -> dict:
    out = {}
    for i, c in enumerate(coeffs):
        if c != 0:
            e = [0] * n
            e[i] = 1
            out[tuple(e)] = c
    return out


def substitute(monomials: Mapping[Exponent, int], T: Sequence[Sequence[int]]) -> dict:
    """Exact coefficients of ``g(T y)`` for an integer polynomial ``g``."""
    n_in = len(T)
    n_out = len(T[0])
    lin = [_linear_poly(T[i], n_out) for i in range(n_in)]
    powers: dict[tuple[int, int], dict] = {}

    def power(i: int, k: int) -> dict:
        if (i, k) not in powers:
            if k == 0:
                powers[(i, k)] = {(0,) * n_out: 1}
            else:
                powers[(i, k)] = _poly_mul(power(i, k - 1), lin[i])
        return powers[(i, k)]

    out: dict = {}
    for e, c in monomials.items():
        term = {(0,) * n_out: c}
        for i, k in enumerate(e):
            if k:
                term = _poly_mul(term, power(i, k))
        for e2, c2 in term.items():
            out[e2] = out.get(e2, 0) + c2
    return {e: c for e, c in out.items() if c != 0}


class _ExactComplex:
    """Minimal exact complex number over the rationals."""

    __slots__ = ("re", "im")

    def __init__(self, re: Fraction, im: Fraction = Fraction(0)):
        self.re = re
        self.im = im

    @classmethod
    def from_complex(cls, z: complex) -> "_ExactComplex":
        return cls(Fraction(z.real), Fraction(z.imag))

    def __add__(self, other):
        if isinstance(other, int) and other == 0:
            return self
        return _ExactComplex(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __mul__(self, other):
        return _ExactComplex(self.re * other.re - self.im * other.im,
                             self.re * other.im + self.im * other.re)

    def __ne__(self, other):
        if isinstance(other, int):
            return self.re != other or self.im != 0
        return self.re != other.re or self.im != other.im

    def __eq__(self, other):
        return not self.__ne__(other)


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class Factorization:
    """The d complex linear factors of a form in n variables."""

    factors: tuple[tuple[complex, ...], ...]
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        facs = tuple(tuple(complex(c) for c in f) for f in self.factors)
        object.__setattr__(self, "factors", facs)
        if not facs:
            raise FormError("a form needs at least one factor")
        n = len(facs[0])
        if n < 1 or any(len(f) != n for f in facs):
            raise FormError("factors have inconsistent lengths")
        for i, f in enumerate(facs):
            if not all(map(np.isfinite, f)):
                raise FormError(f"factor {i} has non-finite entries")
            if all(c == 0 for c in f):
                raise FormError(f"zero factor at index {i}")
        if self.tol < 0:
            raise FormError("tolerance must be nonnegative")

    @property
    def n(self) -> int:
        return len(self.factors[0])

    @property
    def d(self) -> int:
        return len(self.factors)

    @cached_property
    def matrix(self) -> np.ndarray:
        """d x n complex matrix whose rows are the coefficient vectors."""
        return np.array(self.factors, dtype=complex)

    @cached_property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.matrix, axis=1)

    @cached_property
    def is_real(self) -> np.ndarray:
        m = self.matrix
        return np.abs(m.imag).max(axis=1) <= self.tol * np.abs(m).max(axis=1)

    @cached_property
    def conjugate_closed(self) -> bool:
        # greedy matching of each factor with a proportional conjugate
        unused = set(range(self.d))
        m = self.matrix
        for i in range(self.d):
            if i not in unused:
                continue
            unused.discard(i)
            if self.is_real[i]:
                continue
            c = np.conj(m[i])
            match = next((j for j in sorted(unused) if proportional(m[j], c, self.tol)), None)
            if match is None:
                return False
            unused.discard(match)
        return True

    def map(self, T: np.ndarray | Sequence[Sequence[int]]) -> "Factorization":
        """Factors of ``F(T y)``: each coefficient vector L becomes L T."""
        m = self.matrix @ np.asarray(T, dtype=float)
        return Factorization(tuple(map(tuple, m)), self.tol)


def proportional(u: np.ndarray, v: np.ndarray, tol: float) -> bool:
    """Whether two nonzero complex vectors are proportional (rank test)."""
    s = np.linalg.svd(np.vstack([u, v]), compute_uv=False)
    return s[1] <= tol * s[0]


@dataclass(frozen=True)
class IntegerForm:
    """Homogeneous integer polynomial stored as sorted (exponent, coefficient) terms."""

    n: int
    d: int
    terms: tuple[tuple[Exponent, int], ...]

    def __post_init__(self):
        clean = tuple(sorted((tuple(int(a) for a in e), int(c))
                             for e, c in self.terms if int(c) != 0))
        object.__setattr__(self, "terms", clean)
        if not clean:
            raise FormError("integer form is identically zero")
        for e, _ in clean:
            if len(e) != self.n or sum(e) != self.d or min(e) < 0:
                raise FormError(f"monomial {e} is not of degree {self.d} in {self.n} variables")

    @classmethod
    def from_monomials(cls, n: int, d: int, monomials: Mapping[Exponent, int]) -> "IntegerForm":
        return cls(n, d, tuple(monomials.items()))

    @property
    def monomials(self) -> dict[Exponent, int]:
        return dict(self.terms)

    @cached_property
    def max_abs_coeff(self) -> int:
        return max(abs(c) for _, c in self.terms)

    def __str__(self) -> str:
        parts = []
        for e, c in sorted(self.terms, reverse=True):
            mono = "*".join(f"X{i + 1}" + (f"^{k}" if k > 1 else "")
                            for i, k in enumerate(e) if k)
            parts.append(f"{c}*{mono}" if mono else str(c))
        return " + ".join(parts).replace("+ -", "- ")


@dataclass(frozen=True)
class UnimodularMap:
    entries: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(int(v) for v in r) for r in self.entries)
        object.__setattr__(self, "entries", rows)
        if any(len(r) != len(rows) for r in rows):
            raise FormError("unimodular map must be square")
        if abs(intlinalg.int_det(rows)) != 1:
            raise FormError("matrix is not unimodular (det != ±1)")

    @property
    def n(self) -> int:
        return len(self.entries)

    def inverse(self) -> "UnimodularMap":
        return UnimodularMap(tuple(map(tuple, intlinalg.int_inverse(self.entries))))

    def as_array(self) -> np.ndarray:
        return np.array(self.entries, dtype=np.int64)


@dataclass(frozen=True)
class DecomposableForm:
    factorization: Factorization
    integer_form: IntegerForm
    label: str = ""

    @property
    def n(self) -> int:
        return self.factorization.n

    @property
    def d(self) -> int:
        return self.factorization.d

    @property
    def tol(self) -> float:
        return self.factorization.tol


# ---------------------------------------------------------------------------
# core operations


def expand(f: Factorization) -> IntegerForm:
    """Expand the factor product and round to an integer form.

    The float coefficients are converted to exact rationals before
    multiplying, so the only approximation left is in the input itself.
    """
    n = f.n
    poly: dict = {(0,) * n: _ExactComplex(Fraction(1))}
    for fac in f.factors:
        poly = _poly_mul(poly, _linear_poly([_ExactComplex.from_complex(c) for c in fac], n))
    coeffs = {e: (float(c.re), float(c.im)) for e, c in poly.items()}
    scale = max([1.0] + [math.hypot(*v) for v in coeffs.values()])
    thresh = f.tol * scale
    out = {}
    for e, (re, im) in coeffs.items():
        r = round(re)
        if abs(re - r) > thresh or abs(im) > thresh:
            raise FormError("not an integer form at this tolerance "
                            f"(monomial {e}: {re:+.3g}{im:+.3g}i)")
        if r:
            out[e] = int(r)
    return IntegerForm.from_monomials(n, f.d, out)


def make_form(factors: Iterable[Sequence[complex]], label: str = "", tol: float = DEFAULT_TOL,
              expected: Mapping[Exponent, int] | None = None) -> DecomposableForm:
    fac = Factorization(tuple(tuple(f) for f in factors), tol)
    g = expand(fac)
    if expected is not None and g.monomials != {k: v for k, v in expected.items() if v}:
        raise FormError("expansion does not match expected_integer_form")
    return DecomposableForm(fac, g, label)


def evaluate_int(g: IntegerForm, x: Sequence[int]) -> int:
    x = [int(v) for v in x]
    total = 0
    for e, c in g.terms:
        t = c
        for xi, k in zip(x, e):
            if k:
                t *= xi ** k
        total += t
    return total


def evaluate_factors(f: Factorization, x: Sequence[float]) -> tuple[np.ndarray, float]:
    vals = np.abs(f.matrix @ np.asarray(x, dtype=float))
    return vals, float(np.prod(vals))


def height(f: Factorization) -> float:
    # sum of logs avoids overflow for large d
    return float(math.exp(np.sum(np.log(f.norms))))


def content(g: IntegerForm) -> int:
    return reduce(math.gcd, (abs(c) for _, c in g.terms))


def compose_unimodular(F: DecomposableForm, T: UnimodularMap | Sequence[Sequence[int]]) -> DecomposableForm:
    """The equivalent form ``G(y) = F(T y)``."""
    if not isinstance(T, UnimodularMap):
        T = UnimodularMap(tuple(map(tuple, T)))
    if T.n != F.n:
        raise FormError("dimension mismatch")
    fac = F.factorization.map(T.entries)
    g = IntegerForm.from_monomials(F.n, F.d, substitute(F.integer_form.monomials, T.entries))
    return DecomposableForm(fac, g, F.label)


def parse_form(source: str) -> DecomposableForm:
    """Parse the JSON form-file format."""
    try:
        data = json.loads(source)
    except json.JSONDecodeError as exc:
        raise FormError(f"malformed form file: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise FormError("malformed form file: top level must be an object")
    for key in ("n", "d", "factors"):
        if key not in data:
            raise FormError(f"malformed form file: missing field '{key}'")
    n, d = data["n"], data["d"]
    raw = data["factors"]
    if not isinstance(raw, list) or len(raw) != d:
        raise FormError(f"malformed form file: expected {d} factors")
    factors = []
    for i, fac in enumerate(raw):
        if not isinstance(fac, list) or len(fac) != n:
            raise FormError(f"malformed form file: factor {i} must have {n} entries")
        try:
            factors.append([complex(float(re), float(im)) for re, im in fac])
        except (TypeError, ValueError):
            raise FormError(f"malformed form file: factor {i} entries must be [re, im]") from None
    expected = None
    if "expected_integer_form" in data:
        expected = {tuple(int(t) for t in k.split(",")): int(v)
                    for k, v in data["expected_integer_form"].items()}
    tol = float(data.get("tol", DEFAULT_TOL))
    return make_form(factors, data.get("label", ""), tol, expected)


def load_form(path) -> DecomposableForm:
    with open(path, encoding="utf-8") as fh:
        return parse_form(fh.read())


def form_to_json(F: DecomposableForm) -> dict:
    return {
        "label": F.label,
        "n": F.n,
        "d": F.d,
        "tol": F.tol,
        "factors": [[[c.real, c.imag] for c in fac] for fac in F.factorization.factors],
        "expected_integer_form": {",".join(map(str, e)): str(c) for e, c in F.integer_form.terms},
    }


def _elementary_moves(n: int):
    for i, j in itertools.permutations(range(n), 2):
        for s in (1, -1):
            T = intlinalg.identity(n)
            T[j][i] = s  # column i gets s * column j: X_i <- X_i + s X_j
            yield T
    for i, j in itertools.combinations(range(n), 2):
        T = intlinalg.identity(n)
        T[i][i] = T[j][j] = 0
        T[i][j] = T[j][i] = 1
        yield T


def reduce_height_heuristic(F: DecomposableForm, budget: int = 100) -> DecomposableForm:
    """Greedy descent of the height over elementary unimodular moves.

    Not a certified minimum; stops at the first local minimum or when the
    step budget runs out.
    """
    cur = F
    h = height(F.factorization)
    for _ in range(max(0, budget)):
        best = None
        for T in _elementary_moves(F.n):
            h2 = height(cur.factorization.map(T))
            if h2 < h * (1 - 1e-12) and (best is None or h2 < best[0]):
                best = (h2, T)
        if best is None:
            break
        h = best[0]
        cur = compose_unimodular(cur, best[1])
    return cur

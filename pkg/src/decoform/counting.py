"""Exact counts of integer solutions to |F(x)| <= m in sup-norm boxes."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .forms import DecomposableForm, evaluate_int, height
from .geometry import BudgetExceeded, lemma5_kappa
from .invariants import (FiniteTypeVerdict, compute_a, compute_c, disc_nonzero,
                         finite_type_check, restrict_to_subspace)
from .measure import VolumeEstimate, box_volume, volume_VF


class PreconditionError(ValueError):
    pass


DEFAULT_CANDIDATE_CAP = 50_000_000
SAMPLE_CAP = 200


@dataclass
class CountReport:
    m: int
    box_X: int
    count: int
    per_shell: list[int]
    stabilized: bool = False
    solutions_sample: list[tuple[int, ...]] = field(default_factory=list)
    infinite: bool = False
    history: list[tuple[int, int]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"m": self.m, "box_X": self.box_X, "count": self.count,
                "per_shell": self.per_shell, "stabilized": self.stabilized,
                "infinite": self.infinite,
                "history": [list(h) for h in self.history],
                "solutions_sample": [list(s) for s in self.solutions_sample]}


def _slab_poly(terms, rest: Sequence[int], d: int) -> list[int]:
    """Integer coefficients c[e] of x1 -> F(x1, rest) (index = power of x1)."""
    c = [0] * (d + 1)
    for e, coef in terms:
        t = coef
        for xi, k in zip(rest, e[1:]):
            if k:
                t *= xi ** k
        c[e[0]] += t
    return c


def _horner(c: list[int], x: int) -> int:
    v = 0
    for a in reversed(c):
        v = v * x + a
    return v


def _critical_points(c: list[int], m: int) -> list[float]:
    """Real parts of all roots of p(x) = m and p(x) = -m."""
    deg = max((i for i, a in enumerate(c) if a), default=0)
    if deg == 0:
        return []
    pts = []
    hi = np.array([float(a) for a in reversed(c[: deg + 1])])
    for s in (m, -m):
        cc = hi.copy()
        cc[-1] -= s
        pts.extend(np.roots(cc).real.tolist())
    return pts


class _ShellAccumulator:
    def __init__(self, X: int):
        self.diff = [0] * (X + 2)

    def add_range(self, lo: int, hi: int, w: int = 1):
        if lo <= hi:
            self.diff[lo] += w
            self.diff[hi + 1] -= w

    def add_x1_range(self, lo: int, hi: int, s: int, w: int):
        """Solutions x1 in [lo, hi] of a slab whose other coordinates have sup-norm s."""
        if lo > hi:
            return
        inner_lo, inner_hi = max(lo, -s), min(hi, s)
        if inner_lo <= inner_hi:
            self.add_range(s, s, w * (inner_hi - inner_lo + 1))
        # positive tail: shells s+1.. from x1 itself
        plo = max(lo, s + 1)
        if plo <= hi:
            self.add_range(plo, hi, w)
        nhi = min(hi, -s - 1)
        if lo <= nhi:
            self.add_range(-nhi, -lo, w)

    def shells(self) -> list[int]:
        out, run = [], 0
        for v in self.diff[:-1]:
            run += v
            out.append(run)
        return out


def _count_line(c: list[int], m: int, X: int):
    """Integer x1 in [-X, X] with |p(x1)| <= m, as a list of disjoint ranges."""
    deg = max((i for i, a in enumerate(c) if a), default=-1)
    if deg <= 0:
        const = c[0] if deg == 0 else 0
        return [(-X, X)] if abs(const) <= m else []
    crit = sorted(x for x in _critical_points(c, m) if -X - 3 <= x <= X + 3)
    near: set[int] = set()
    for x in crit:
        base = math.floor(x)
        for t in range(base - 2, base + 4):
            if -X <= t <= X:
                near.add(t)
    near.update((-X, X))
    near = sorted(near)
    ok = {t: abs(_horner(c, t)) <= m for t in near}
    ranges = []
    # runs of exactly evaluated points, and the gaps between them
    prev = None
    for t in near:
        if prev is not None and t > prev + 1:
            lo, hi = prev + 1, t - 1
            # gap interior: constant membership; confirm at both ends
            left = abs(_horner(c, lo)) <= m
            right = abs(_horner(c, hi)) <= m
            if left and right:
                ranges.append((lo, hi))
            elif left or right:
                # root estimate was off; fall back to a full scan
                ranges.extend((u, u) for u in range(lo, hi + 1) if abs(_horner(c, u)) <= m)
        if ok[t]:
            ranges.append((t, t))
        prev = t
    # merge adjacent ranges
    ranges.sort()
    merged = []
    for lo, hi in ranges:
        if merged and lo <= merged[-1][1] + 1:
            merged[-1] = (merged[-1][0], max(hi, merged[-1][1]))
        else:
            merged.append((lo, hi))
    return merged


def count_box(F: DecomposableForm, m: float, X: int, candidate_cap: int = DEFAULT_CANDIDATE_CAP,
              sample_cap: int = SAMPLE_CAP) -> CountReport:
    """Exact number of x in Z^n with |x_i| <= X and |F(x)| <= m (origin included).

    Slabs fix x_2..x_n; along x_1 the solution set is cut out by the real
    roots of F = +-m, integers near those roots are evaluated exactly and the
    gaps in between are counted in bulk. Slabs come in +- pairs since
    |F(-x)| = |F(x)|.
    """
    if m < 0 or X < 0:
        raise ValueError("need m >= 0 and X >= 0")
    mi = math.floor(m)
    X = int(X)
    n, d = F.n, F.d
    if (2 * X + 1) ** (n - 1) > candidate_cap:
        raise BudgetExceeded(f"box of side {2 * X + 1} exceeds the candidate cap")
    terms = F.integer_form.terms
    acc = _ShellAccumulator(X)
    sample: list[tuple[int, ...]] = []
    total = 0
    rng_rest = range(-X, X + 1)
    for rest in itertools.product(rng_rest, repeat=n - 1):
        # keep one slab from each +- pair (first nonzero coordinate positive)
        first = next((v for v in rest if v), 0)
        if first < 0:
            continue
        w = 1 if first == 0 else 2
        s = max((abs(v) for v in rest), default=0)
        c = _slab_poly(terms, rest, d)
        for lo, hi in _count_line(c, mi, X):
            total += w * (hi - lo + 1)
            acc.add_x1_range(lo, hi, s, w)
            if len(sample) < sample_cap:
                for x1 in range(lo, min(hi, lo + sample_cap - len(sample) - 1) + 1):
                    sample.append((x1,) + tuple(rest))
    shells = acc.shells()
    return CountReport(mi, X, total, shells, False, sorted(sample))


def count_brute(F: DecomposableForm, m: float, X: int) -> int:
    """Plain loop over the box; only for small boxes and tests."""
    g = F.integer_form
    return sum(1 for x in itertools.product(range(-X, X + 1), repeat=F.n)
               if abs(evaluate_int(g, x)) <= m)


def count_stabilized(F: DecomposableForm, m: float, X0: int = 8, max_doublings: int = 12,
                     candidate_cap: int = DEFAULT_CANDIDATE_CAP, check_type: bool = True) -> CountReport:
    """Double the box until the count is unchanged twice in a row.

    Without an effective bound on solution size this is a heuristic; an
    unstabilized result is flagged, never reported as N_F(m).
    """
    if check_type:
        ft = finite_type_check(F)
        if ft.verdict == FiniteTypeVerdict.NOT_FINITE_TYPE:
            raise PreconditionError(f"form is not of finite type (subspace {ft.witness_subspace})")
    m = max(m, 1)
    X = max(1, int(X0))
    history = []
    rep = None
    same = 0
    for _ in range(max_doublings + 1):
        try:
            rep = count_box(F, m, X, candidate_cap)
        except BudgetExceeded:
            break
        if history and history[-1][1] == rep.count:
            same += 1
        else:
            same = 0
        history.append((X, rep.count))
        if same >= 2:
            break
        X *= 2
    if rep is None:
        raise BudgetExceeded("initial box exceeds the candidate cap")
    rep.history = history
    rep.stabilized = same >= 2
    return rep


def primitive_decompose(x: Sequence[int]) -> tuple[int, tuple[int, ...]]:
    x = [int(v) for v in x]
    g = math.gcd(*x)
    if g == 0:
        raise ValueError("zero vector")
    return g, tuple(v // g for v in x)


def count_in_subspace(F: DecomposableForm, basis: Sequence[Sequence[int]], m: float, X: int,
                      candidate_cap: int = 5_000_000) -> CountReport:
    """Solutions inside the rational subspace W with sup-norm at most X.

    Points of W ∩ Z^n are W^T y for y in Z^r (saturated basis), so the
    restricted form is counted over the y that land in the box.
    """
    R = restrict_to_subspace(F, basis)
    W = np.array(R.basis, dtype=np.int64)           # r x n
    P = np.linalg.pinv(W.T.astype(float))           # y = P x
    bound = np.ceil(np.abs(P).sum(axis=1) * X + 1e-9).astype(int)
    if np.prod(2 * bound + 1) > candidate_cap:
        raise BudgetExceeded("subspace box exceeds the candidate cap")
    mi = math.floor(max(m, 0))
    acc = _ShellAccumulator(X)
    count, sample = 0, []
    g = None if R.identically_zero else R.form.integer_form
    for y in itertools.product(*[range(-b, b + 1) for b in bound]):
        x = [int(v) for v in np.asarray(y, dtype=np.int64) @ W]
        s = max(abs(v) for v in x)
        if s > X:
            continue
        if g is not None and abs(evaluate_int(g, y)) > mi:
            continue
        count += 1
        acc.add_range(s, s)
        if len(sample) < SAMPLE_CAP:
            sample.append(tuple(x))
    return CountReport(mi, X, count, acc.shells(), False, sorted(sample), R.identically_zero)


@dataclass(frozen=True)
class Lemma14Check:
    S0: int
    V0: VolumeEstimate
    bound: float
    ok: bool


def compare_count_volume(F: DecomposableForm, m: float, B0: float, samples: int = 200_000,
                         seed: int = 0) -> Lemma14Check:
    """Small solutions vs their volume: |S0' - V0'| <= d n (2 B0 + 1)^(n - 1)."""
    if m < 1 or B0 < 1:
        raise ValueError("need m >= 1 and B0 >= 1")
    S0 = count_box(F, m, math.floor(B0)).count
    V0 = box_volume(F, m, B0, samples, seed)
    bound = F.d * F.n * (2 * B0 + 1) ** (F.n - 1)
    return Lemma14Check(S0, V0, bound, abs(S0 - V0.value) <= bound + 3 * V0.std_error)


@dataclass(frozen=True)
class AsymptoticRow:
    m: float
    N: int
    vol_term: float
    residual: float
    cap: float
    stabilized: bool

    def to_json(self) -> dict:
        return {"m": self.m, "N": self.N, "volTerm": self.vol_term, "residual": self.residual,
                "cap": self.cap, "stabilized": self.stabilized}


@dataclass
class ScanResult:
    rows: list[AsymptoticRow]
    volume: VolumeEstimate
    fitted_exponent: float | None
    theoretical_exponent: float


def residual_cap(F: DecomposableForm, m: float) -> float:
    """kappa m^((n-1)/(d-a)) (1 + log m)^(n-2) H^c with the explicit selector constant."""
    f = F.factorization
    a = compute_a(f)
    if a is None:
        return math.inf
    c = compute_c(f, a, disc_nonzero(f))
    n, d = f.n, f.d
    return (lemma5_kappa(n, d, a) * m ** ((n - 1) / (d - float(a)))
            * (1 + math.log(m)) ** (n - 2) * height(f) ** float(c))


def fit_exponent(ms: Sequence[float], residuals: Sequence[float]) -> float | None:
    pts = [(math.log(x), math.log(r)) for x, r in zip(ms, residuals) if x > 0 and r > 0]
    if len(pts) < 2:
        return None
    xs, ys = np.array(pts).T
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)


def asymptotic_scan(F: DecomposableForm, m_list: Sequence[float], samples: int = 200_000,
                    seed: int = 0, X0: int = 8, max_doublings: int = 14,
                    volume: VolumeEstimate | None = None) -> ScanResult:
    f = F.factorization
    a = compute_a(f)
    n, d = f.n, f.d
    if volume is None:
        volume = volume_VF(F, samples, seed)
    if volume.divergent_flag:
        raise PreconditionError("V(F) is infinite")
    ft = finite_type_check(F)
    if ft.verdict == FiniteTypeVerdict.NOT_FINITE_TYPE:
        raise PreconditionError("form is not of finite type")
    rows = []
    for m in m_list:
        rep = count_stabilized(F, m, X0, max_doublings, check_type=False)
        vt = m ** (n / d) * volume.value
        rows.append(AsymptoticRow(m, rep.count, vt, abs(rep.count - vt), residual_cap(F, m),
                                  rep.stabilized))
    usable = [r for r in rows if r.stabilized]
    fitted = fit_exponent([r.m for r in usable], [r.residual for r in usable])
    theo = (n - 1) / (d - float(a)) if a is not None else math.nan
    return ScanResult(rows, volume, fitted, theo)

"""Volumes of solution sets {|F(x)| <= m} and witnesses for infinite volume.

V(F) is computed from the polar-coordinate identity

    V(F) = (1/n) * integral over S^(n-1) of |F(u)|^(-n/d) dsigma(u),

which follows from |F(r u)| = r^d |F(u)|: in direction u the solution set
is the segment r <= |F(u)|^(-1/d), contributing r^n / n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import integrate

from . import intlinalg
from .forms import DecomposableForm, FormError, evaluate_int, height, proportional
from .geometry import unit_ball_volume
from .invariants import (Classification, SpanTester, _J, _span_count, classify_volume,
                         compute_a, compute_c, disc_nonzero, enumerate_J)

DEFAULT_STRATA = 16


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    std_error: float
    samples: int
    method: str                 # SphereMC, BoxMC, Quadrature1D, BoxGrid1D
    divergent_flag: bool = False
    seed: int | None = None
    tail_fraction: float | None = None

    def to_json(self) -> dict:
        return {"value": self.value if math.isfinite(self.value) else str(self.value),
                "std_error": self.std_error if math.isfinite(self.std_error) else str(self.std_error),
                "samples": self.samples, "method": self.method,
                "divergent_flag": self.divergent_flag, "seed": self.seed,
                "tail_fraction": self.tail_fraction}


# ---------------------------------------------------------------------------
# sampling helpers


def _strata_rngs(seed: int, strata: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(strata)]


def sphere_points(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((count, n))
    return g / np.linalg.norm(g, axis=1)[:, None]


def _abs_F(F: DecomposableForm, X: np.ndarray) -> np.ndarray:
    f = F.factorization
    return np.prod(np.abs(X @ f.matrix.T), axis=1)


def _split(samples: int, strata: int) -> list[int]:
    base, extra = divmod(samples, strata)
    return [base + (1 if i < extra else 0) for i in range(strata)]


def _stratified_mean(values_fn, samples: int, seed: int, strata: int = DEFAULT_STRATA):
    """Mean and standard error from independent strata, combined in index order."""
    vals = [values_fn(rng, k) for rng, k in zip(_strata_rngs(seed, strata), _split(samples, strata)) if k]
    allv = np.concatenate(vals)
    mean = float(allv.mean())
    se = float(allv.std(ddof=1) / math.sqrt(len(allv))) if len(allv) > 1 else math.inf
    return mean, se, allv


def _tail_fraction(v: np.ndarray, q: float = 1e-3) -> float:
    if v.size == 0 or not np.all(np.isfinite(v)):
        return 1.0
    k = max(1, int(math.ceil(q * v.size)))
    top = np.partition(v, v.size - k)[v.size - k:]
    s = v.sum()
    return float(top.sum() / s) if s > 0 else 0.0


# ---------------------------------------------------------------------------
# V(F)


def volume_VF(F: DecomposableForm, samples: int = 200_000, seed: int = 0,
              method: str = "auto") -> VolumeEstimate:
    """V(F), the volume of {x : |F(x)| <= 1}.

    ``method`` is "mc" (sphere Monte Carlo), "quad" (n = 2 only) or "auto"
    (quadrature when n = 2). Infinite-volume forms come back with
    ``divergent_flag`` set and value inf.
    """
    cls = classify_volume(F)
    if method == "auto":
        method = "quad" if F.n == 2 else "mc"
    if method == "quad":
        if F.n != 2:
            raise FormError("quadrature is only available for n = 2")
        return _volume_quad2(F, cls)
    return _volume_mc(F, samples, seed, cls)


def _volume_mc(F: DecomposableForm, samples: int, seed: int, cls: Classification) -> VolumeEstimate:
    n, d = F.n, F.d
    vn = unit_ball_volume(n)

    def draw(rng, k):
        U = sphere_points(n, k, rng)
        with np.errstate(divide="ignore"):
            return vn * _abs_F(F, U) ** (-n / d)

    mean, se, v = _stratified_mean(draw, samples, seed)
    # second, independent refinement for the tail test
    _, _, v2 = _stratified_mean(draw, samples, seed + 0x9E3779B9)
    tf = max(_tail_fraction(v), _tail_fraction(v2))
    heavy = _tail_fraction(v) > 0.5 and _tail_fraction(v2) > 0.5
    divergent = cls == Classification.INFINITE or heavy or not math.isfinite(mean)
    if cls == Classification.INFINITE:
        mean, se = math.inf, math.inf
    return VolumeEstimate(mean, se, samples, "SphereMC", divergent, seed, tf)


def _real_zero_angles(F: DecomposableForm) -> list[tuple[float, int, float]]:
    """(angle in [0, pi), multiplicity, product of norms) for real factors, grouped."""
    f = F.factorization
    groups: list[list] = []
    for i in range(f.d):
        if not f.is_real[i]:
            continue
        l1, l2 = f.matrix[i].real
        phi = math.atan2(-l1, l2) % math.pi
        for g in groups:
            if proportional(f.matrix[g[3]], f.matrix[i], f.tol):
                g[1] += 1
                g[2] *= f.norms[i]
                break
        else:
            groups.append([phi, 1, f.norms[i], i])
    return sorted((g[0], g[1], g[2]) for g in groups)


def _volume_quad2(F: DecomposableForm, cls: Classification) -> VolumeEstimate:
    """n = 2: V = integral over [0, pi) of |F(cos t, sin t)|^(-2/d) dt.

    Each real factor is |L| |sin(t - phi)|, so between consecutive zero
    angles the integrand is an algebraic endpoint singularity times a
    smooth function and QUADPACK's weighted rule handles it.
    """
    f = F.factorization
    d = f.d
    zeros = _real_zero_angles(F)
    cm = f.matrix[~f.is_real]
    if any(2 * mult >= d for _, mult, _ in zeros):
        return VolumeEstimate(math.inf, math.inf, 0, "Quadrature1D", True)

    def complex_part(t):
        u = np.array([math.cos(t), math.sin(t)])
        return float(np.prod(np.abs(cm @ u))) if len(cm) else 1.0

    if not zeros:
        val, err = integrate.quad(lambda t: complex_part(t) ** (-2 / d), 0.0, math.pi,
                                  limit=400, epsabs=1e-12, epsrel=1e-12)
        return VolumeEstimate(val, err, 0, "Quadrature1D", False)

    total, err_total = 0.0, 0.0
    r = len(zeros)
    for j in range(r):
        a, ma, _ = zeros[j]
        b, mb, _ = zeros[(j + 1) % r]
        if j == r - 1:
            b += math.pi

        def smooth(t, a=a, b=b):
            prod = complex_part(t)
            ta, tb = t - a, b - t
            for phi, mult, nrm in zeros:
                at_a = abs(math.remainder(phi - a, math.pi)) < 1e-15
                at_b = abs(math.remainder(phi - b, math.pi)) < 1e-15
                if at_a and at_b:
                    # single zero: sin(t - a) = ta * tb * q(t) with q smooth
                    q = np.sinc(ta / math.pi) / tb if ta <= math.pi / 2 else np.sinc(tb / math.pi) / ta
                    s = q
                elif at_a:
                    s = np.sinc(ta / math.pi)
                elif at_b:
                    s = np.sinc(tb / math.pi)
                else:
                    s = abs(math.sin(t - phi))
                prod *= nrm * float(s) ** mult
            return prod ** (-2 / d)

        alpha = -2 * ma / d
        beta = -2 * mb / d
        if r == 1:
            beta = alpha
        val, err = integrate.quad(smooth, a, b, weight="alg", wvar=(alpha, beta),
                                  limit=400, epsabs=1e-12, epsrel=1e-12)
        total += val
        err_total += err
    return VolumeEstimate(total, err_total, 0, "Quadrature1D", cls == Classification.INFINITE)


# ---------------------------------------------------------------------------
# box volumes


def box_volume(F: DecomposableForm, m: float, B0: float, samples: int = 200_000,
               seed: int = 0, method: str = "auto") -> VolumeEstimate:
    """Volume of {x : |F(x)| <= m, |x_i| <= B0}.

    "mc" samples the box uniformly; "grid" (n = 2) integrates the exact
    length of each horizontal slice, obtained from the real roots of
    F(., x2) = +-m, with adaptive quadrature over x2.
    """
    if m < 0 or B0 <= 0:
        raise ValueError("need m >= 0 and B0 > 0")
    if method == "auto":
        method = "grid" if F.n == 2 else "mc"
    if method == "grid":
        if F.n != 2:
            raise FormError("grid method needs n = 2")
        return _box_grid2(F, m, B0)
    n = F.n
    vol = (2 * B0) ** n

    def draw(rng, k):
        X = (rng.random((k, n)) * 2 - 1) * B0
        return (_abs_F(F, X) <= m).astype(float)

    p, _, _ = _stratified_mean(draw, samples, seed)
    se = vol * math.sqrt(max(p * (1 - p), 0.0) / samples)
    return VolumeEstimate(vol * p, se, samples, "BoxMC", False, seed)


def _slice_coeffs(F: DecomposableForm, x2: float) -> np.ndarray:
    """Coefficients (highest degree first) of x1 -> F(x1, x2) in floating point."""
    d = F.d
    c = np.zeros(d + 1)
    for (e1, e2), coef in F.integer_form.terms:
        c[d - e1] += coef * x2 ** e2
    return c


def slice_length(F: DecomposableForm, m: float, x2: float, B0: float) -> float:
    """Length of {x1 in [-B0, B0] : |F(x1, x2)| <= m} for n = 2."""
    c = _slice_coeffs(F, x2)
    nz = np.flatnonzero(c)
    if len(nz) == 0 or nz[0] == len(c) - 1:
        const = c[-1] if len(nz) else 0.0
        return 2 * B0 if abs(const) <= m else 0.0
    pts = [-B0, B0]
    for s in (m, -m):
        cc = c.copy()
        cc[-1] -= s
        for r in np.roots(cc[nz[0]:]):
            if abs(r.imag) <= 1e-9 * max(1.0, abs(r)) and -B0 < r.real < B0:
                pts.append(r.real)
    pts.sort()
    length = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi <= lo:
            continue
        mid = 0.5 * (lo + hi)
        if abs(np.polyval(c, mid)) <= m:
            length += hi - lo
    return length


def _box_grid2(F: DecomposableForm, m: float, B0: float) -> VolumeEstimate:
    # kinks of the slice length sit where the slice polynomial has double roots;
    # the zero angles of real factors give most of them
    brk = [0.0]
    for phi, _, _ in _real_zero_angles(F):
        s, c = math.sin(phi), math.cos(phi)
        if abs(c) > 1e-12:
            x2 = B0 * s / c
            brk.append(max(-B0, min(B0, x2)))
    val, err = integrate.quad(lambda t: slice_length(F, m, t, B0), -B0, B0,
                              points=sorted(set(brk)), limit=500, epsabs=1e-9, epsrel=1e-10)
    return VolumeEstimate(val, err, 0, "BoxGrid1D", False)


def truncated_volume_sphere(F: DecomposableForm, m: float, B: float, samples: int = 200_000,
                            seed: int = 0) -> VolumeEstimate:
    """Volume of {|F| <= m, |x_i| <= B} by the radial formula (1/n) int min(R(u), B/|u|_inf)^n.

    Independent of the box samplers; used for homogeneity cross-checks.
    """
    n, d = F.n, F.d
    vn = unit_ball_volume(n)

    def draw(rng, k):
        U = sphere_points(n, k, rng)
        with np.errstate(divide="ignore"):
            R = (m / _abs_F(F, U)) ** (1 / d)
        lim = np.minimum(R, B / np.abs(U).max(axis=1))
        return vn * lim ** n

    mean, se, _ = _stratified_mean(draw, samples, seed)
    return VolumeEstimate(mean, se, samples, "SphereMC", False, seed)


# ---------------------------------------------------------------------------
# Euclidean shells


@dataclass(frozen=True)
class ShellSpec:
    B0: float
    l: int

    def __post_init__(self):
        if self.B0 < 1 or self.l < 0:
            raise ValueError("need B0 >= 1 and l >= 0")

    @property
    def B(self) -> float:
        return math.e ** self.l * self.B0

    @property
    def C(self) -> float:
        return math.e ** (self.l + 1) * self.B0


def shell_A(F: DecomposableForm, m: float, B0: float, l: int) -> float:
    """A_l = e^((na - d) l / a) A_0 with A_0 = m^(1/a) B0^((na - d)/a) H^c."""
    f = F.factorization
    a = compute_a(f)
    if a is None or a >= Fraction(f.d, f.n):
        raise FormError("shell quantities need a(F) < d/n")
    c = compute_c(f, a, disc_nonzero(f))
    af, n, d = float(a), f.n, f.d
    A0 = m ** (1 / af) * B0 ** ((n * af - d) / af) * height(f) ** float(c)
    return math.exp((n * af - d) * l / af) * A0


def shell_cap(F: DecomposableForm, m: float, B0: float, l: int) -> float:
    """Explicit upper bound for the volume of solutions with B_l <= ||x|| <= C_l.

    Every such solution satisfies the product inequality with A = kappa A_l for
    some tuple of J(F); each tuple's covering has at most max(cap, n!) cells,
    each of volume at most 2^n n! times the product bound.
    """
    from .geometry import lemma5_kappa

    f = F.factorization
    n, d = f.n, f.d
    a = compute_a(f)
    spec = ShellSpec(B0, l)
    A = lemma5_kappa(n, d, a) * shell_A(F, m, B0, l)
    nf = math.factorial(n)
    Q = math.log(spec.B * spec.C ** (n - 1) / (math.e ** (n - 1) * nf * n ** (n / 2) * A))
    if Q >= 0:
        count = n ** 3 * (math.log(spec.B * spec.C ** (n - 1) / (nf * n ** (n / 2) * A))) ** (n - 2)
    else:
        count = nf
    count = max(count, nf)
    prod = math.e ** n * nf * n ** (n / 2) * spec.C * A / spec.B
    return len(_J(f)) * count * 2 ** n * nf * prod


def shell_volumes(F: DecomposableForm, m: float, B0: float, l_max: int, samples: int = 200_000,
                  seed: int = 0) -> list[VolumeEstimate]:
    """Volumes V_{l+1} of solutions with e^l B0 <= ||x|| <= e^(l+1) B0, l = 0..l_max."""
    n, d = F.n, F.d
    vn = unit_ball_volume(n)
    out = []
    for l in range(l_max + 1):
        spec = ShellSpec(B0, l)

        def draw(rng, k, spec=spec):
            U = sphere_points(n, k, rng)
            with np.errstate(divide="ignore"):
                R = (m / _abs_F(F, U)) ** (1 / d)
            top = np.minimum(R, spec.C)
            return vn * np.clip(top ** n - spec.B ** n, 0.0, None)

        mean, se, _ = _stratified_mean(draw, samples, seed)
        out.append(VolumeEstimate(mean, se, samples, "SphereMC", False, seed))
    return out


# ---------------------------------------------------------------------------
# infinite volume: degenerate directions and integer witnesses


def _conj_partner(f, i: int, among: Sequence[int]) -> int | None:
    c = np.conj(f.matrix[i])
    return next((j for j in among if proportional(f.matrix[j], c, f.tol)), None)


def lemma10_conditions(F: DecomposableForm, idx: Sequence[int]) -> bool:
    f = F.factorization
    m = f.matrix
    k = len(idx)
    if k >= f.n or SpanTester(m[list(idx)], f.tol).rank != k:
        return False
    if _span_count(f, frozenset(idx)) * f.n < k * f.d:
        return False
    for j in range(k):
        c = np.conj(m[idx[j]])
        if not SpanTester(m[list(idx[: j + 1])], f.tol).contains(c):
            if j + 1 >= k or not proportional(m[idx[j + 1]], c, f.tol):
                return False
    return True


def degenerate_directions(F: DecomposableForm) -> tuple[int, tuple[int, ...]]:
    """k < n factor indices whose span holds at least kd/n factors, closed under the conjugate rule."""
    f = F.factorization
    m = f.matrix
    n, d = f.n, f.d
    a = compute_a(f)
    if a is not None and a < Fraction(d, n):
        raise FormError("form has finite volume")
    if not f.conjugate_closed:
        raise FormError("factorization must be closed under conjugation")
    everything = range(d)
    if a is None:
        k = SpanTester(m, f.tol).rank
        chosen = [0]
        while len(chosen) < k:
            span = SpanTester(m[chosen], f.tol)
            pick = None
            if not span.contains(np.conj(m[chosen[-1]])):
                pick = _conj_partner(f, chosen[-1], everything)
            if pick is None:
                pick = next(i for i in everything if not span.contains(m[i]))
            chosen.append(pick)
        idx = tuple(chosen)
    else:
        idx = None
        for t in enumerate_J(f):
            j0 = next((j for j in range(1, n) if _span_count(f, frozenset(t[:j])) * n >= j * d), None)
            if j0 is None:
                continue
            head = list(t[:j0])
            span = SpanTester(m[head], f.tol)
            if span.contains(np.conj(m[head[-1]])):
                idx = tuple(head)
            elif j0 == 1:
                idx = (head[0], _conj_partner(f, head[0], everything))
            else:
                prev = SpanTester(m[head[:-1]], f.tol)
                fresh = [i for i in everything if span.contains(m[i]) and not prev.contains(m[i])]
                alt = next((i for i in fresh if span.contains(np.conj(m[i]))), None)
                if alt is not None:
                    idx = tuple(head[:-1] + [alt])
                else:
                    idx = tuple(head + [_conj_partner(f, head[-1], everything)])
            break
        if idx is None:
            raise FormError("no degenerate tuple found")
    if not lemma10_conditions(F, idx):
        raise FormError("constructed indices violate the degeneracy conditions")
    return len(idx), idx


def realify_span(F: DecomposableForm, indices: Sequence[int]) -> np.ndarray:
    """Real vectors with the same complex span as the given factors."""
    f = F.factorization
    m = f.matrix
    K: list[np.ndarray] = []
    l = 0
    idx = list(indices)
    while l < len(idx):
        L = m[idx[l]]
        c = np.conj(L)
        if SpanTester(m[idx[: l + 1]], f.tol).contains(c):
            # conj(L) = (a + ib) L + z with z in the real span of K
            cols = np.column_stack([L] + [k.astype(complex) for k in K])
            coef, *_ = np.linalg.lstsq(cols, c, rcond=None)
            a_, b_ = coef[0].real, coef[0].imag
            scale = max(1.0, abs(coef[0]))
            if abs(b_) <= 1e-7 * scale and abs(a_ + 1) <= 1e-7 * scale:
                K.append(L.imag.copy())
            else:
                K.append(L.real.copy())
            l += 1
        else:
            if l + 1 >= len(idx) or not proportional(m[idx[l + 1]], c, f.tol):
                raise FormError("conjugate condition violated")
            K.append(L.real.copy())
            K.append(L.imag.copy())
            l += 2
    return np.array(K)


def _orthonormal_completion(Kr: np.ndarray, n: int) -> np.ndarray:
    q, _ = np.linalg.qr(np.hstack([Kr.T, np.eye(n)]))
    return q[:, :n].T  # rows; the first k span Kr


@dataclass
class InfinitudeWitness:
    k: int
    indices: tuple[int, ...]
    real_span: np.ndarray
    ortho_basis: np.ndarray
    points: list[tuple[int, ...]]
    bound: float
    success: bool
    max_norm: int
    steps: int = 0

    def to_json(self) -> dict:
        return {"k": self.k, "indices": list(self.indices),
                "real_span": self.real_span.tolist(), "ortho_basis": self.ortho_basis.tolist(),
                "bound": self.bound, "success": self.success, "max_norm": self.max_norm,
                "points": [list(p) for p in self.points]}


def infinitude_witness(F: DecomposableForm, count: int = 100, norm_target: int = 1000,
                       max_steps: int = 400, per_box_limit: int = 20_000,
                       radius: float = 3.0) -> InfinitudeWitness:
    """Integer points with |F(x)| <= n^d H(F) and growing sup-norm.

    Boxes |K'_j x| <= a (j <= k), <= b (j > k) with a^k b^(n-k) = 1 have
    volume 2^n, so each holds a nonzero integer point. Shrinking a pushes
    the points out along the degenerate subspace. Candidates are found by
    Fincke-Pohst enumeration in the enclosing ellipsoid and checked exactly.
    """
    n, d = F.n, F.d
    k, idx = degenerate_directions(F)
    Kr = realify_span(F, idx)
    if SpanTester(Kr, F.tol).rank != k:
        raise FormError("real span has the wrong rank")
    Q = _orthonormal_completion(Kr, n)
    bound = n ** d * height(F.factorization)
    limit = math.floor(bound * (1 + 1e-12))
    g = F.integer_form
    found: dict[int, tuple[int, ...]] = {}

    def accept(x) -> bool:
        x = tuple(int(v) for v in x)
        if not any(x):
            return False
        val = abs(evaluate_int(g, x))
        if val > limit:
            return False
        s = max(abs(v) for v in x)
        if s not in found or x < found[s]:
            found[s] = x
        return val == 0

    def done() -> bool:
        return len(found) >= count and max(found) >= norm_target

    steps = 0
    zero = None
    for t in range(max_steps):
        steps = t + 1
        a = 2.0 ** (-t / 4)
        b = a ** (-k / (n - k))
        scales = np.array([a] * k + [b] * (n - k))
        R = Q / scales[:, None]          # ||R x||^2 <= n on the box
        basis = R.T                      # rows: images of e_i
        for c in intlinalg.enumerate_short(basis, radius * math.sqrt(n), limit=per_box_limit):
            if accept(c) and zero is None:
                zero = tuple(int(v) for v in c)
        if zero is not None or done() or b > 1e12:
            break
    if zero is not None:
        g0 = math.gcd(*zero)
        z = tuple(v // g0 for v in zero)
        s = max(abs(v) for v in z)
        mults = list(range(1, count + 1)) + [max(1, math.ceil(norm_target / s))]
        for t in mults:
            accept(tuple(t * v for v in z))
    norms = sorted(found)
    pts = [found[s] for s in norms]
    ok = len(pts) >= count and bool(norms) and norms[-1] >= norm_target
    return InfinitudeWitness(k, idx, Kr, Q, pts, bound, ok, norms[-1] if norms else 0, steps)

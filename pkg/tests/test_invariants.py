import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import hadamard_ok, lp_vertex_min

from decoform.corpus import ENTRIES, random_form, x2_prod
from decoform.forms import FormError, make_form
from decoform.invariants import (Classification, FiniteTypeVerdict, b_values, classify_volume,
                                 compute_a, compute_c, count_I, disc_nonzero, enumerate_I,
                                 enumerate_I_prime, enumerate_J, finite_type_check,
                                 hadamard_ratios, in_J, invariant_report, is_exceptional, lp_min,
                                 rank_span, restrict_to_subspace, semi_discriminants)


# independent route: definitions evaluated with least squares residuals


def _in_span(rows, v, tol=1e-8):
    if len(rows) == 0:
        return False
    M = np.array(rows, dtype=complex).T
    coef, *_ = np.linalg.lstsq(M, v, rcond=None)
    return np.linalg.norm(M @ coef - v) <= tol * np.linalg.norm(v)


def _indep(rows):
    return all(not _in_span(rows[:k], rows[k]) for k in range(1, len(rows)))


def _prop(u, v):
    return _in_span([u], v)


def oracle_invariants(F):
    m = [np.array(r, dtype=complex) for r in F.factorization.factors]
    n, d = F.n, F.d
    Ip = [c for c in itertools.combinations(range(d), n) if _indep([m[i] for i in c])]
    b = [math.factorial(n) * sum(i in c for c in Ip) for i in range(d)]
    J = []
    for c in Ip:
        for t in itertools.permutations(c):
            ok = True
            for j in range(n - 1):
                cj = np.conj(m[t[j]])
                if not (_prop(m[t[j + 1]], cj) or _in_span([m[i] for i in t[: j + 1]], cj)):
                    ok = False
                    break
            if ok:
                J.append(t)
    a = None
    if J and n >= 2:
        a = max(Fraction(sum(_in_span([m[i] for i in t[:j]], v) for v in m), j)
                for t in J for j in range(1, n))
    return Ip, b, J, a


@pytest.mark.parametrize("entry", ENTRIES, ids=lambda e: e.name)
def test_corpus_expectations(entry):
    F = entry.builder()
    f = F.factorization
    a = compute_a(f)
    assert a == entry.a
    assert compute_c(f, a) == entry.c
    assert classify_volume(F).value == entry.classification


def test_thue_values():
    F = ENTRIES[0].builder()
    rep = invariant_report(F)
    assert rep.b_per_factor == (4, 4, 4) and rep.i_count == 6 and rep.disc_nonzero
    assert rep.a_value == 1 and rep.c_value == 1
    # S = prod over the three pairs of det^2 times (-1): the discriminant of x^3 - 2
    assert abs(rep.semi_disc - 108) < 1e-6


def test_xy_values():
    rep = invariant_report(ENTRIES[1].builder())
    assert rep.semi_disc == -1 and rep.c_value == 0
    assert rep.classification == Classification.INFINITE


def test_x2yz_b_values():
    b, bF = b_values(x2_prod(3).factorization)
    assert b == (6, 6, 12, 12) and bF == 12


def test_random_forms_match_definition_oracle():
    rng = np.random.default_rng(10)
    for _ in range(150):
        F = random_form(rng, n_max=3, d_max=5)
        f = F.factorization
        Ip, b, J, a = oracle_invariants(F)
        assert list(enumerate_I_prime(f)) == Ip
        assert list(b_values(f)[0]) == b
        assert sorted(enumerate_J(f)) == sorted(J)
        assert compute_a(f) == a


def test_I_counts_and_discriminant():
    rng = np.random.default_rng(11)
    for _ in range(100):
        F = random_form(rng)
        f = F.factorization
        k = len(list(enumerate_I_prime(f)))
        assert count_I(f) == math.factorial(f.n) * k == len(list(enumerate_I(f)))
        assert k <= math.comb(f.d, f.n)
        assert disc_nonzero(f) == (k == math.comb(f.d, f.n))
        a = compute_a(f)
        if a is not None:
            # a >= 1 with equality exactly for nonzero discriminant
            assert a >= 1
            assert (a == 1) == disc_nonzero(f)
        # J is empty only when I is
        assert bool(list(enumerate_J(f))) == bool(k) or f.n == 1


def test_finite_volume_ranges():
    rng = np.random.default_rng(12)
    seen = 0
    for _ in range(300):
        F = random_form(rng)
        f = F.factorization
        n, d = f.n, f.d
        if n < 2 or classify_volume(F) != Classification.FINITE:
            continue
        seen += 1
        a = compute_a(f)
        c = compute_c(f, a)
        assert 1 <= a <= Fraction(d, n) - Fraction(1, n * (n - 1))
        assert Fraction(d - n, d) <= c < math.comb(d, n) * (d - n + 1)
    assert seen > 20


def test_semi_discriminant_sign_and_scale():
    F = make_form([[1, 1], [1, -1]])        # X1^2 - X2^2
    sd = semi_discriminants(F.factorization)
    assert abs(sd.value - (-4)) < 1e-9
    assert math.isclose(sd.norm_mod, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_hadamard_ratios_at_most_one(seed):
    F = random_form(np.random.default_rng(seed))
    f = F.factorization
    for c, r in hadamard_ratios(f).items():
        assert 0 < r <= 1 + 1e-12
        assert hadamard_ok([f.factors[i] for i in c])


def test_hadamard_requires_tuples():
    F = make_form([[1, 0], [2, 0]])
    with pytest.raises(FormError):
        hadamard_ratios(F.factorization)
    assert compute_a(F.factorization) is None
    assert classify_volume(F) == Classification.INFINITE


def test_exceptional_detection():
    assert is_exceptional(make_form([[1, 1j], [1, -1j]] * 2))
    # negative definite powers are not: leading coefficient must be positive
    assert not is_exceptional(make_form([[1, 1j], [1, -1j], [1, 1j], [1, -1j], [1, 0], [0, 1]]))
    assert classify_volume(make_form([[1, 1j], [1, -1j]])) == Classification.EXCEPTIONAL


def test_n1_forms_are_finite():
    assert classify_volume(make_form([[3], [1]])) == Classification.FINITE


def test_rank_span():
    r, t = rank_span([[1, 0, 0], [0, 1, 0], [1, 1, 0]], 1e-9)
    assert r == 2 and t.contains(np.array([2.0, -1.0, 0.0])) and not t.contains(np.array([0, 0, 1.0]))


def test_in_J_chain_condition():
    F = ENTRIES[0].builder()                  # one real factor, one conjugate pair
    f = F.factorization
    assert in_J(f, (1, 2)) and in_J(f, (2, 1))
    assert not in_J(f, (1, 0))                # conjugate of L1 neither next nor spanned
    assert in_J(f, (0, 1))                    # L0 is real


def test_restriction():
    F = ENTRIES[0].builder()
    R = restrict_to_subspace(F, [[0, 2]])
    assert R.basis == ((0, 1),)
    assert R.form.integer_form.monomials == {(3,): -2}
    Z = restrict_to_subspace(ENTRIES[1].builder(), [[1, 0]])
    assert Z.identically_zero
    with pytest.raises(FormError):
        restrict_to_subspace(F, [[1, 1], [2, 2]])


def test_finite_type():
    thue = finite_type_check(ENTRIES[0].builder())
    assert thue.verdict == FiniteTypeVerdict.FINITE_TYPE
    xy = finite_type_check(ENTRIES[1].builder())
    assert xy.verdict == FiniteTypeVerdict.NOT_FINITE_TYPE
    # finite volume but a rational zero: X1 (X1^2 - 2 X2^2) has the line X1 = 0
    F = make_form([[1, 0], [1, -math.sqrt(2)], [1, math.sqrt(2)], [1, 1j], [1, -1j]])
    assert classify_volume(F) == Classification.FINITE
    assert finite_type_check(F).verdict == FiniteTypeVerdict.NOT_FINITE_TYPE
    nq = finite_type_check(ENTRIES[-1].builder())
    assert nq.verdict == FiniteTypeVerdict.TESTED_ONLY


def test_finite_type_finds_hidden_rational_subspace():
    # the last four factors only involve X1, X2, so F vanishes on the X3 axis
    F = make_form([[1, 1, -1], [1, 1j, 0], [1, -1j, 0], [1, 2 ** 0.5, 0], [1, -2 ** 0.5, 0]])
    res = finite_type_check(F)
    assert res.verdict == FiniteTypeVerdict.NOT_FINITE_TYPE


def test_lp_min_examples():
    assert lp_min([1, 2, 3], 2) == (12.0, [2.0, 2.0, 2.0])
    assert lp_vertex_min([1, 2, 3], 2) == 12
    with pytest.raises(ValueError):
        lp_min([2, 1], 1)
    with pytest.raises(ValueError):
        lp_min([1, 2], 0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=6),
       st.floats(0.01, 20))
def test_lp_min_property(b, A):
    b = sorted(b)
    val, x = lp_min(b, A)
    assert abs(val - float(lp_vertex_min(b, A))) <= 1e-9 * max(1, abs(val))

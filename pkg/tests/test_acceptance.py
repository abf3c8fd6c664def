"""End-to-end acceptance checks, one test per criterion.

Each test prints a single CRITERION line; the terminal summary repeats them.
"""

import itertools
import json
import math
import time

import numpy as np

from conftest import record
from oracles import (brute_count, eval_terms, lp_vertex_min, stars_and_bars, thue_area,
                     thue_count)

from decoform import cli
from decoform.corpus import quad_power, random_form, x2_prod
from decoform.counting import compare_count_volume, count_box, count_stabilized
from decoform.forms import compose_unimodular, height
from decoform.geometry import (build_covering, cell_lattice_points, cell_mc_volume,
                               cell_points_fn, cell_volume_bound, exponent_tuples, f_cap,
                               greedy_tuple, lemma4_floor, lemma5_certificate,
                               lemma8_recursive_bound, lemma9_count_cap, points_span, ConvexCell)
from decoform.invariants import (Classification, b_values, classify_volume, compute_a,
                                 enumerate_I_prime, hadamard_ratios, lp_min, semi_discriminants)
from decoform.measure import box_volume, infinitude_witness, truncated_volume_sphere, volume_VF


def random_unimodular(rng, n, steps=None):
    M = np.eye(n, dtype=np.int64)
    for _ in range(steps or 3 * n):
        if n == 1:
            break
        i, j = rng.choice(n, 2, replace=False)
        M[:, j] += int(rng.integers(-2, 3)) * M[:, i]
    if n >= 1 and rng.random() < 0.5:
        M[:, 0] *= -1
    return M.tolist()


# ---------------------------------------------------------------------------


def test_criterion_1_mahler_asymptotic(corpus):
    t0 = time.time()
    F = corpus["thue_cbrt2"]
    A = volume_VF(F, method="quad")
    ref = thue_area(2)
    mc = volume_VF(F, samples=400_000, seed=7, method="mc")
    quad_ok = abs(A.value - ref) <= 1e-6
    mc_ok = abs(mc.value - A.value) <= 3 * mc.std_error
    rows, ok = [], quad_ok and mc_ok
    for m in (10, 100, 1000, 10_000):
        rep = count_stabilized(F, m)
        X = rep.history[-1][0]
        exact = thue_count(2, m, X)
        vt = m ** (2 / 3) * A.value
        res = abs(rep.count - vt)
        ok = ok and rep.stabilized and exact == rep.count and res <= 8 * math.sqrt(m)
        rows.append((m, rep.count, round(res, 2)))
    ratio = rows[-1][1] / (10_000 ** (2 / 3) * A.value)
    ok = ok and 0.85 <= ratio <= 1.15
    dt = time.time() - t0
    ok = ok and dt <= 60
    record(1, ok, f"A={A.value:.9f} |A-ref|={abs(A.value - ref):.1e} rows={rows} "
                  f"ratio@1e4={ratio:.4f} t={dt:.1f}s")
    assert ok


def test_criterion_2_classification_and_witnesses(corpus):
    t0 = time.time()
    expected = {
        "thue_cbrt2": Classification.FINITE, "xy": Classification.INFINITE,
        "x2yz": Classification.INFINITE, "norm_quartic3": Classification.FINITE,
        "pell_quartic": Classification.INFINITE,
    }
    forms = {k: corpus[k] for k in expected}
    for k in (1, 2, 3):
        forms[f"quad_power{k}"] = quad_power(k)
        expected[f"quad_power{k}"] = Classification.EXCEPTIONAL
    forms["x2yzw"] = x2_prod(4)
    expected["x2yzw"] = Classification.INFINITE
    ok = True
    notes = []
    for name, F in forms.items():
        cls = classify_volume(F)
        ok = ok and cls == expected[name]
        if cls == Classification.INFINITE:
            w = infinitude_witness(F)
            terms = F.integer_form.monomials
            lim = math.floor(F.n ** F.d * height(F.factorization) * (1 + 1e-12))
            good = all(abs(eval_terms(terms, p)) <= lim for p in w.points)
            norms = [max(abs(v) for v in p) for p in w.points]
            incr = all(a < b for a, b in zip(norms, norms[1:]))
            ok = ok and good and incr and len(w.points) >= 100 and max(norms) >= 1000
            notes.append(f"{name}:{len(w.points)}pts/max{max(norms)}")
    dt = time.time() - t0
    ok = ok and dt <= 30
    record(2, ok, f"{len(forms)} forms classified; {' '.join(notes)} t={dt:.1f}s")
    assert ok


def _lemma3_failures(F):
    f = F.factorization
    H = height(f)
    _, bF = b_values(f)
    sd = semi_discriminants(f)
    logH = math.log(H)
    fails = 0
    if sd.log_abs_normalized < -bF * logH - 1e-9 * max(1.0, bF * logH):
        fails += 1
    lo = math.exp(-bF * logH / math.factorial(f.n))
    ratios = hadamard_ratios(f)
    m = f.matrix
    for combo in enumerate_I_prime(f):
        # second route: direct determinant over row norms
        direct = abs(np.linalg.det(m[list(combo)])) / np.prod(np.linalg.norm(m[list(combo)], axis=1))
        r = ratios[combo]
        if abs(r - direct) > 1e-9 * max(1.0, direct):
            fails += 1
        if not lo * (1 - 1e-9) <= r <= 1 + 1e-9:
            fails += 1
    return fails


def test_criterion_3_semi_discriminant_bounds(corpus):
    rng = np.random.default_rng(3)
    fails = sum(_lemma3_failures(F) for F in corpus.values())
    count = len(corpus)
    for _ in range(500):
        F = random_form(rng, n_max=3, d_max=6)
        fails += _lemma3_failures(F)
        count += 1
    record(3, fails == 0, f"{count} forms, failures={fails}")
    assert fails == 0


def test_criterion_4_lp_oracle():
    rng = np.random.default_rng(4)
    fails = 0
    for _ in range(1000):
        k = int(rng.integers(1, 7))
        b = sorted(rng.normal(size=k) * 10)
        A = float(rng.uniform(0.01, 10))
        val, x = lp_min(b, A)
        ref = lp_vertex_min(b, A)
        if abs(val - float(ref)) > 1e-12 * max(1.0, abs(float(ref))) + 1e-12:
            fails += 1
    record(4, fails == 0, f"1000 instances, failures={fails}")
    assert fails == 0


def random_cell(rng, n, max_prod=1e4, real=None):
    if real is None:
        real = rng.random() < 0.5
    G = rng.normal(size=(n, n)) + (0 if real else 1j * rng.normal(size=(n, n)))
    Q, _ = np.linalg.qr(G)
    logs = rng.uniform(-0.5, 1.0, size=n)
    logs *= min(1.0, math.log(max_prod) / max(logs.sum(), 1e-9))
    if logs.sum() > math.log(max_prod):
        logs -= (logs.sum() - math.log(max_prod)) / n
    return ConvexCell(Q.conj().T if not real else Q.T, tuple(float(np.exp(v)) for v in logs))


def test_criterion_5_lattice_counts_and_volumes():
    rng = np.random.default_rng(5)
    fails = spanning = 0
    for _ in range(500):
        n = int(rng.integers(1, 5))
        cell = random_cell(rng, n, 1e4 if n < 4 else 2e2)
        pts = cell_lattice_points(cell)
        if points_span(pts):
            spanning += 1
            if len(pts) > lemma9_count_cap(cell):
                fails += 1
        v, se = cell_mc_volume(cell, 20_000, rng)
        if v > cell_volume_bound(cell) * (1 + 1e-12) + 3 * se:
            fails += 1
    l8 = 0
    tries = 0
    while l8 < 500 and tries < 5000:
        tries += 1
        n = int(rng.integers(1, 4))
        cell = random_cell(rng, n, 300)
        lattice = None
        if rng.random() < 0.5:
            while True:
                lattice = rng.integers(-2, 3, size=(n, n))
                if round(abs(np.linalg.det(lattice))) >= 1:
                    break
        fn = cell_points_fn(cell, lattice)
        if not points_span(fn(1.0)):
            continue
        res = lemma8_recursive_bound(fn, n)
        l8 += 1
        if res.bound < res.exact_count:
            fails += 1
    ok = fails == 0 and l8 == 500
    record(5, ok, f"500 cells ({spanning} spanning), {l8} recursive-bound instances, failures={fails}")
    assert ok


def _sample_solutions(rng, K, A, B, C, count):
    """Rejection sampling of (14) in the window B <= |x| <= C, half of the draws near a factor's zero set."""
    n = K.shape[0]
    det = abs(np.linalg.det(K))
    out = []
    while len(out) < count:
        u = rng.normal(size=(4096, n))
        u /= np.linalg.norm(u, axis=1)[:, None]
        r = (rng.uniform(B ** n, C ** n, size=4096)) ** (1 / n)
        X = u * r[:, None]
        # pull half of the points towards a random hyperplane Re K_i = 0 to hit small products
        half = X[:2048]
        i = rng.integers(n)
        k = np.real(K[i]) if np.linalg.norm(np.real(K[i])) > 1e-9 else np.imag(K[i])
        k = k / np.linalg.norm(k)
        half -= np.outer(half @ k, k) * rng.uniform(0.9, 1.0, size=(2048, 1))
        nx = np.linalg.norm(X, axis=1)
        prod = np.prod(np.abs(X @ K.T), axis=1) / det
        keep = (prod <= A) & (nx >= B) & (nx <= C)
        out.extend(X[keep][: count - len(out)])
    return np.array(out)


def test_criterion_6_covering():
    rng = np.random.default_rng(6)
    fails = 0
    detail = []
    for sys_i in range(20):
        n = int(rng.integers(2, 5))
        K = rng.normal(size=(n, n)).astype(complex)
        if rng.random() < 0.5 and n >= 2:
            v = rng.normal(size=n) + 1j * rng.normal(size=n)
            K[0], K[1] = v, v.conj()
        B = 1.0
        C = float(np.exp(rng.uniform(1, 4)))
        D = float(np.exp(rng.uniform(0.5, 1.5)))
        A = float(np.exp(rng.uniform(-3, 1)))
        for variant in ("7", "7prime"):
            fam = build_covering(K, A, C, D, B if variant == "7" else None)
            lowB = B if variant == "7" else 0.0
            X = _sample_solutions(rng, K, A, lowB, C, 1000)
            covered = sum(fam.covers(x) for x in X)
            fails += len(X) - covered
            cap_ok = (len(fam.cells) < fam.cell_count_cap if fam.Q >= 0
                      else len(fam.cells) <= math.factorial(n))
            prod_ok = all(c.product < fam.bound_product for c in fam.cells)
            fails += (not cap_ok) + (not prod_ok)
        detail.append(n)
    # exponent tuple counts
    tuple_fails = 0
    for n in range(1, 6):
        for a in range(13):
            ts = list(exponent_tuples(n, a))
            if len(ts) != len(set(ts)) or len(ts) != stars_and_bars(n, a) or len(ts) > f_cap(n, a) + 1e-9:
                tuple_fails += 1
            if any(min(t) < 0 or sum(t) != a for t in ts):
                tuple_fails += 1
            if n >= 2:
                for i0 in range(n):
                    pt = list(exponent_tuples(n, a, i0))
                    if len(pt) != stars_and_bars(n - 1, a) or any(t[i0] for t in pt):
                        tuple_fails += 1
    ok = fails == 0 and tuple_fails == 0
    record(6, ok, f"20 systems x 2 variants x 1000 solutions, uncovered/cap failures={fails}, "
                  f"tuple failures={tuple_fails}")
    assert ok


def test_criterion_7_small_solutions(corpus):
    fails = 0
    total = 0
    for name, F in corpus.items():
        for B0 in (1, 5, 10):
            for m in (1, 10, 100):
                chk = compare_count_volume(F, m, B0, samples=100_000, seed=B0 * 1000 + m)
                total += 1
                if not chk.ok:
                    fails += 1
                if F.n <= 2 or B0 == 1:
                    # second route for the count
                    if chk.S0 != brute_count(F.integer_form.monomials, F.n, m, B0):
                        fails += 1
    record(7, fails == 0, f"{total} (form, B0, m) cases, failures={fails}")
    assert fails == 0


def test_criterion_8_selector_certificates(corpus):
    rng = np.random.default_rng(8)
    fails = checked = 0
    for F in corpus.values():
        if classify_volume(F) != Classification.FINITE or F.n < 2:
            continue
        for _ in range(10_000):
            u = rng.normal(size=F.n)
            x = u / np.linalg.norm(u) * 10 ** rng.uniform(0, 3)
            cert = lemma5_certificate(F, greedy_tuple(F, x), x)
            checked += 1
            if not cert.ok:
                fails += 1
    floor_fails = 0
    for _ in range(10_000):
        n = int(rng.integers(2, 5))
        K = rng.normal(size=(n, n)) + (1j * rng.normal(size=(n, n)) if rng.random() < 0.5 else 0)
        x = rng.normal(size=n) * 10 ** rng.uniform(-2, 3)
        lhs = float(np.max(np.abs(K @ x) / np.linalg.norm(K, axis=1)))
        fl = lemma4_floor(K, x)
        direct = np.linalg.norm(x) * abs(np.linalg.det(K)) / (n ** (n / 2) * np.prod(np.linalg.norm(K, axis=1)))
        if lhs < fl * (1 - 1e-9) or abs(fl - direct) > 1e-9 * max(direct, 1e-300):
            floor_fails += 1
    ok = fails == 0 and floor_fails == 0 and checked >= 20_000
    record(8, ok, f"{checked} certificates, failures={fails}; 10000 floor checks, failures={floor_fails}")
    assert ok


def test_criterion_9_invariance(corpus):
    rng = np.random.default_rng(9)
    fails = 0
    for name, F in corpus.items():
        f = F.factorization
        a, (b, _), cls = compute_a(f), b_values(f), classify_volume(F)
        terms = F.integer_form.monomials
        Xp = 2 if F.n <= 2 else 1
        m = 10
        for _ in range(50):
            T = random_unimodular(rng, F.n)
            G = compose_unimodular(F, T)
            g = G.factorization
            if compute_a(g) != a or b_values(g)[0] != b or classify_volume(G) != cls:
                fails += 1
            # count over the transported box vs a filtered count over its image
            Ta = np.array(T, dtype=np.int64)
            Ti = np.round(np.linalg.inv(Ta)).astype(np.int64)
            reach = np.abs(Ta).sum(axis=1) * Xp
            direct = 0
            for x in itertools.product(*[range(-r, r + 1) for r in reach]):
                y = Ti @ np.array(x, dtype=np.int64)
                if np.max(np.abs(y)) <= Xp and abs(eval_terms(terms, x)) <= m:
                    direct += 1
            if count_box(G, m, Xp).count != direct:
                fails += 1
    # homogeneity of the solution-set volume
    h_fails = 0
    for name, F in corpus.items():
        B = 2.0
        for m in (10.0, 1000.0):
            lhs = box_volume(F, m, B * m ** (1 / F.d), samples=200_000, seed=1)
            rhs = truncated_volume_sphere(F, 1.0, B, samples=200_000, seed=2)
            s = m ** (F.n / F.d)
            if abs(lhs.value - s * rhs.value) > 3 * math.hypot(lhs.std_error, s * rhs.std_error) + 1e-9:
                h_fails += 1
    ok = fails == 0 and h_fails == 0
    record(9, ok, f"{len(corpus)} forms x 50 maps, failures={fails}; homogeneity failures={h_fails}")
    assert ok


def test_criterion_10_determinism(tmp_path, corpus):
    from decoform.corpus import CORPUS_DIR
    cmds = [
        ["analyze", str(CORPUS_DIR / "thue_cbrt2.json")],
        ["count", str(CORPUS_DIR / "thue_cbrt2.json"), "--m", "100"],
        ["volume", str(CORPUS_DIR / "norm_quartic3.json"), "--samples", "20000"],
        ["witness", str(CORPUS_DIR / "pell_quartic.json")],
        ["scan", str(CORPUS_DIR / "thue_cbrt2.json"), "--m-list", "10,100", "--samples", "20000"],
    ]
    same = True
    for i, c in enumerate(cmds):
        outs = []
        for rep in range(2):
            d = tmp_path / f"{i}_{rep}"
            code = cli.main(c + ["--seed", "42", "--out", str(d)])
            assert code == 0
            outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
        same = same and outs[0] == outs[1] and outs[0]
        doc = json.loads(next(v for k, v in outs[0].items() if k.endswith(".json")))
        same = same and doc["seed"] == 42 and "version" in doc and "config" in doc
    v1 = volume_VF(corpus["norm_quartic3"], 50_000, 99)
    v2 = volume_VF(corpus["norm_quartic3"], 50_000, 99)
    same = same and v1 == v2
    record(10, bool(same), f"{len(cmds)} CLI commands run twice, byte-identical={bool(same)}")
    assert same

"""Command-line front end.

Exit codes: 0 success, 2 input validation, 3 budget exhaustion,
4 failed check in ``verify``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import load_corpus
from .counting import PreconditionError, asymptotic_scan, compare_count_volume, count_stabilized
from .forms import FormError, compose_unimodular, height, load_form
from .geometry import BudgetExceeded, greedy_tuple, lemma5_certificate
from .invariants import (Classification, FiniteTypeVerdict, b_values, compute_a, classify_volume,
                         finite_type_check, hadamard_ratios, invariant_report, semi_discriminants)
from .measure import infinitude_witness, volume_VF

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_INPUT, EXIT_BUDGET, EXIT_VERIFY = 0, 2, 3, 4


@dataclass
class RunConfig:
    seed: int = 0
    samples: int = 200_000
    tol: float | None = None
    budget_candidates: int = 50_000_000
    budget_doublings: int = 14
    budget_witness: int = 400
    out: str | None = None
    format: str = "json"

    def validate(self):
        if self.samples <= 0:
            raise ValueError("samples must be positive")
        if min(self.budget_candidates, self.budget_doublings, self.budget_witness) <= 0:
            raise ValueError("budget caps must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.format not in ("json", "csv"):
            raise ValueError("format must be json or csv")
        if self.tol is not None and self.tol <= 0:
            raise ValueError("tol must be positive")


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    text = p.read_bytes()
    if p.suffix == ".toml":
        data = tomllib.loads(text.decode())
    else:
        data = json.loads(text)
    names = {f.name for f in fields(RunConfig)}
    bad = set(data) - names
    if bad:
        raise ValueError(f"unknown config keys: {sorted(bad)}")
    return data


def build_config(args) -> RunConfig:
    data = load_config(args.config)
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            data[f.name] = v
    cfg = RunConfig(**data)
    cfg.validate()
    return cfg


# serialization


def jsonable(obj):
    if isinstance(obj, Fraction):
        return {"num": obj.numerator, "den": obj.denominator}
    if isinstance(obj, (Classification, FiniteTypeVerdict)):
        return obj.value
    if isinstance(obj, complex):
        return [jsonable(obj.real), jsonable(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if hasattr(obj, "to_json"):
        return jsonable(obj.to_json())
    return obj


def _load(path: str, cfg: RunConfig):
    F = load_form(path)
    if cfg.tol is not None:
        from .forms import make_form
        F = make_form(F.factorization.factors, F.label, cfg.tol,
                      F.integer_form.monomials)
    return F


def _emit(cfg: RunConfig, command: str, label: str, payload: dict, table: list[dict] | None = None):
    # the output location is not part of the run's configuration
    config = {k: v for k, v in asdict(cfg).items() if k != "out"}
    doc = {"tool": "decoform", "version": __version__, "command": command,
           "config": config, "seed": cfg.seed, "result": jsonable(payload)}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    csv_text = None
    if table is not None:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(table[0]) if table else ["empty"], lineterminator="\n")
        buf.write(f"# decoform {__version__} {command} seed={cfg.seed}\n")
        w.writeheader()
        for row in table:
            w.writerow({k: jsonable(v) for k, v in row.items()})
        csv_text = buf.getvalue()
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"{label or 'form'}.{command}"
        (out / f"{stem}.json").write_text(text)
        if csv_text is not None:
            (out / f"{stem}.csv").write_text(csv_text)
    sys.stdout.write(csv_text if (cfg.format == "csv" and csv_text is not None) else text)


def _report_dict(F) -> dict:
    r = invariant_report(F)
    d = {f.name: getattr(r, f.name) for f in fields(r)}
    d["integer_form"] = str(F.integer_form)
    d["n"], d["d"] = F.n, F.d
    return d


# subcommands


def cmd_analyze(args, cfg):
    F = _load(args.form, cfg)
    rep = _report_dict(F)
    ft = finite_type_check(F)
    rep["finite_type"] = ft.verdict
    rep["finite_type_witness"] = ft.witness_subspace
    table = [{"key": k, "value": json.dumps(jsonable(v))} for k, v in rep.items()]
    _emit(cfg, "analyze", F.label, rep, table)
    return EXIT_OK


def cmd_classify(args, cfg):
    F = _load(args.form, cfg)
    ft = finite_type_check(F)
    payload = {"classification": classify_volume(F), "finite_type": ft.verdict,
               "finite_type_witness": ft.witness_subspace, "a": compute_a(F.factorization)}
    _emit(cfg, "classify", F.label, payload,
          [{"key": k, "value": json.dumps(jsonable(v))} for k, v in payload.items()])
    return EXIT_OK


def cmd_count(args, cfg):
    if args.m < 1:
        raise ValueError("m must be at least 1")
    F = _load(args.form, cfg)
    rep = count_stabilized(F, args.m, args.X0, cfg.budget_doublings, cfg.budget_candidates)
    table = [{"shell": s, "count": c} for s, c in enumerate(rep.per_shell)]
    _emit(cfg, "count", F.label, rep.to_json(), table)
    return EXIT_OK


def cmd_volume(args, cfg):
    F = _load(args.form, cfg)
    primary = volume_VF(F, cfg.samples, cfg.seed)
    payload = {"primary": primary}
    if F.n == 2 and not primary.divergent_flag:
        mc = volume_VF(F, cfg.samples, cfg.seed, method="mc")
        diff = abs(mc.value - primary.value)
        payload["cross_check"] = mc
        payload["agree_3sigma"] = diff <= 3 * math.hypot(mc.std_error, primary.std_error)
    table = [{"method": v.method, "value": v.value, "std_error": v.std_error}
             for v in payload.values() if hasattr(v, "method")]
    _emit(cfg, "volume", F.label, payload, table)
    return EXIT_OK


def cmd_witness(args, cfg):
    F = _load(args.form, cfg)
    if classify_volume(F) != Classification.INFINITE:
        raise ValueError("witnesses exist only for InfiniteVolume forms")
    w = infinitude_witness(F, args.count, args.norm_target, cfg.budget_witness)
    _emit(cfg, "witness", F.label, w.to_json(), [{"i": i, "x": " ".join(map(str, p))}
                                                 for i, p in enumerate(w.points)])
    if not w.success:
        print(f"witness budget exhausted: {len(w.points)} points, max norm {w.max_norm}",
              file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def cmd_scan(args, cfg):
    F = _load(args.form, cfg)
    ms = [float(t) for t in args.m_list.split(",")]
    if min(ms) < 1:
        raise ValueError("m must be at least 1")
    res = asymptotic_scan(F, ms, cfg.samples, cfg.seed, args.X0, cfg.budget_doublings)
    table = [dict(r.to_json(), fittedExp=res.fitted_exponent) for r in res.rows]
    payload = {"rows": [r.to_json() for r in res.rows], "volume": res.volume,
               "fitted_exponent": res.fitted_exponent,
               "theoretical_exponent": res.theoretical_exponent}
    _emit(cfg, "scan", F.label, payload, table)
    return EXIT_OK


def _verify_form(F, entry, cfg) -> dict[str, bool | None]:
    """Pass/fail (None = not applicable) for one form."""
    f = F.factorization
    rng = np.random.default_rng(cfg.seed)
    row: dict[str, bool | None] = {}
    cls = classify_volume(F)
    row["classification"] = None if entry.classification is None else cls.value == entry.classification
    a = compute_a(f)
    row["a_value"] = None if entry.a is None else a == entry.a
    rep = invariant_report(F)
    row["c_value"] = None if entry.c is None else rep.c_value == entry.c
    # lower bounds for the semi-discriminant and Hadamard ratios
    if rep.i_count:
        H = height(f)
        _, bF = b_values(f)
        sd = semi_discriminants(f)
        ok = sd.log_abs_normalized >= -bF * math.log(H) - 1e-9 * max(1.0, bF * abs(math.log(H)))
        lo = H ** (-bF / math.factorial(F.n))
        ok = ok and all(lo * (1 - 1e-9) <= r <= 1 + 1e-9 for r in hadamard_ratios(f).values())
        row["semi_disc_bounds"] = ok
    else:
        row["semi_disc_bounds"] = None
    if cls == Classification.FINITE and F.n >= 2:
        ok = True
        for _ in range(200):
            x = rng.normal(size=F.n)
            ok = ok and lemma5_certificate(F, greedy_tuple(F, x), x).ok
        row["selector_certificate"] = ok
    else:
        row["selector_certificate"] = None
    ok = True
    for B0 in (1, 5):
        for m in (1, 10):
            ok = ok and compare_count_volume(F, m, B0, min(cfg.samples, 50_000), cfg.seed).ok
    row["small_solutions"] = ok
    if cls == Classification.INFINITE:
        w = infinitude_witness(F, 100, 1000, cfg.budget_witness)
        row["witness"] = w.success
    else:
        row["witness"] = None
    # unimodular invariance of a, b and the classification
    ok = True
    for _ in range(5):
        T = _random_unimodular(rng, F.n)
        G = compose_unimodular(F, T)
        g = G.factorization
        ok = ok and compute_a(g) == a and sorted(b_values(g)[0]) == sorted(rep.b_per_factor)
        ok = ok and classify_volume(G) == cls
    row["unimodular_invariance"] = ok
    return row


def _random_unimodular(rng, n: int) -> list[list[int]]:
    M = [[int(i == j) for j in range(n)] for i in range(n)]
    for _ in range(3 * n):
        i, j = rng.choice(n, 2, replace=False) if n > 1 else (0, 0)
        if i == j:
            break
        s = int(rng.integers(-2, 3))
        for r in range(n):
            M[r][j] += s * M[r][i]
    return M


def cmd_verify(args, cfg):
    entries = load_corpus(args.corpus)
    matrix = {}
    for e in entries:
        F = e.form
        if cfg.tol is not None:
            F = _load(str(e.path), cfg)
        matrix[e.path.name] = _verify_form(F, e, cfg)
    checks = sorted({k for r in matrix.values() for k in r})
    table = [dict({"form": name}, **{c: ("-" if r.get(c) is None else ("pass" if r[c] else "FAIL"))
                                     for c in checks}) for name, r in matrix.items()]
    failed = any(v is False for r in matrix.values() for v in r.values())
    _emit(cfg, "verify", Path(args.corpus).name or "corpus",
          {"matrix": matrix, "all_pass": not failed}, table)
    return EXIT_VERIFY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--samples", type=int)
    common.add_argument("--tol", type=float)
    common.add_argument("--out")
    common.add_argument("--format", choices=["json", "csv"])
    common.add_argument("--budget-candidates", dest="budget_candidates", type=int)
    common.add_argument("--budget-doublings", dest="budget_doublings", type=int)
    common.add_argument("--budget-witness", dest="budget_witness", type=int)
    common.add_argument("--config", help="TOML or JSON file; flags take precedence")

    p = argparse.ArgumentParser(prog="decoform", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("analyze", parents=[common], help="invariants of a form")
    s.add_argument("form")
    s.set_defaults(func=cmd_analyze)
    s = sub.add_parser("classify", parents=[common], help="volume classification and finite type")
    s.add_argument("form")
    s.set_defaults(func=cmd_classify)
    s = sub.add_parser("count", parents=[common], help="stabilized count of |F(x)| <= m")
    s.add_argument("form")
    s.add_argument("--m", type=float, required=True)
    s.add_argument("--X0", type=int, default=8)
    s.set_defaults(func=cmd_count)
    s = sub.add_parser("volume", parents=[common], help="volume of |F(x)| <= 1")
    s.add_argument("form")
    s.set_defaults(func=cmd_volume)
    s = sub.add_parser("witness", parents=[common], help="points certifying infinite volume")
    s.add_argument("form")
    s.add_argument("--count", type=int, default=100)
    s.add_argument("--norm-target", dest="norm_target", type=int, default=1000)
    s.set_defaults(func=cmd_witness)
    s = sub.add_parser("scan", parents=[common], help="counts against the volume term")
    s.add_argument("form")
    s.add_argument("--m-list", dest="m_list", default="10,100,1000,10000")
    s.add_argument("--X0", type=int, default=8)
    s.set_defaults(func=cmd_scan)
    s = sub.add_parser("verify", parents=[common], help="run the check suite over a corpus directory")
    s.add_argument("corpus")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
        return args.func(args, cfg)
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FormError, ValueError, FileNotFoundError, tomllib.TOMLDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BudgetExceeded as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())

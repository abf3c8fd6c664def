"""Reference forms shipped with the package, plus a random form generator."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from .forms import DecomposableForm, FormError, form_to_json, load_form, make_form
from .invariants import rank_span

CORPUS_DIR = Path(__file__).parent / "corpus"
MANIFEST = "manifest.json"

_W = complex(-0.5, math.sqrt(3) / 2)


def thue_cbrt2():
    t = 2 ** (1 / 3)
    return make_form([[1, -t], [1, -t * _W], [1, -t * _W.conjugate()]], "thue_cbrt2")


def xy():
    return make_form([[1, 0], [0, 1]], "xy")


def x2_prod(n: int):
    """X1^2 X2 ... Xn."""
    e = np.eye(n)
    return make_form([e[0], e[0]] + [e[i] for i in range(1, n)], f"x2_prod{n}")


def quad_power(k: int = 3):
    return make_form([[1, 1j], [1, -1j]] * k, f"quad_power{k}")


def pell_quartic():
    s = math.sqrt(2)
    return make_form([[1, -s], [1, -s], [1, s], [1, s]], "pell_quartic")


def norm_quartic3():
    """Norm of x + a y + a^2 z where a^4 = a + 1."""
    roots = np.roots([1, 0, 0, -1, -1])
    return make_form([[1, a, a * a] for a in roots], "norm_quartic3")


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    builder: Callable[[], DecomposableForm]
    classification: str
    a: Fraction | None
    c: Fraction | None


ENTRIES = (
    CorpusEntry("thue_cbrt2", thue_cbrt2, "FiniteVolume", Fraction(1), Fraction(1)),
    CorpusEntry("xy", xy, "InfiniteVolume", Fraction(1), Fraction(0)),
    CorpusEntry("x2yz", lambda: x2_prod(3), "InfiniteVolume", Fraction(2), Fraction(-1, 2)),
    CorpusEntry("x2yzw", lambda: x2_prod(4), "InfiniteVolume", Fraction(2), Fraction(-3, 2)),
    CorpusEntry("quad_power", quad_power, "ExceptionalDefiniteQuadratic", Fraction(3), Fraction(8, 3)),
    CorpusEntry("pell_quartic", pell_quartic, "InfiniteVolume", Fraction(2), Fraction(3, 2)),
    CorpusEntry("norm_quartic3", norm_quartic3, "FiniteVolume", Fraction(1), Fraction(2)),
)


def _frac_json(q: Fraction | None):
    return None if q is None else {"num": q.numerator, "den": q.denominator}


def write_corpus(directory: Path | str = CORPUS_DIR) -> list[Path]:
    """Regenerate the JSON form files and manifest (checked-in copies come from here)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out, manifest = [], []
    for e in ENTRIES:
        F = e.builder()
        path = directory / f"{e.name}.json"
        data = form_to_json(F)
        data["label"] = e.name
        path.write_text(json.dumps(data, indent=2) + "\n")
        manifest.append({"file": path.name, "classification": e.classification,
                         "a": _frac_json(e.a), "c": _frac_json(e.c)})
        out.append(path)
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return out


@dataclass(frozen=True)
class LoadedEntry:
    path: Path
    form: DecomposableForm
    classification: str | None
    a: Fraction | None
    c: Fraction | None


def _frac_from(obj):
    if obj is None:
        return None
    return Fraction(int(obj["num"]), int(obj["den"]))


def load_corpus(directory: Path | str = CORPUS_DIR) -> list[LoadedEntry]:
    """Load every form of a corpus directory; the manifest adds expectations when present."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FormError(f"corpus directory not found: {directory}")
    meta = {}
    mpath = directory / MANIFEST
    if mpath.exists():
        for row in json.loads(mpath.read_text()):
            if not (directory / row["file"]).exists():
                raise FormError(f"manifest references missing file {row['file']}")
            meta[row["file"]] = row
    out = []
    for p in sorted(directory.glob("*.json")):
        if p.name == MANIFEST:
            continue
        row = meta.get(p.name, {})
        out.append(LoadedEntry(p, load_form(p), row.get("classification"),
                               _frac_from(row.get("a")), _frac_from(row.get("c"))))
    return out


# random conjugate-closed forms with integer expansion

_NONSQUARES = (2, 3, 5, 6, 7)
_NONCUBES = (2, 3, 5)


def _rand_vec(rng: np.random.Generator, n: int, bound: int) -> np.ndarray:
    while True:
        v = rng.integers(-bound, bound + 1, size=n)
        if np.any(v):
            return v.astype(float)


def _block(rng: np.random.Generator, n: int, room: int, bound: int) -> list[np.ndarray]:
    kinds = ["lin"]
    if room >= 2:
        kinds += ["cplx", "real_pair"]
    if room >= 3:
        kinds.append("cube")
    kind = kinds[rng.integers(len(kinds))]
    u = _rand_vec(rng, n, bound)
    if kind == "lin":
        return [u]
    v = _rand_vec(rng, n, bound)
    if kind == "cplx":
        return [u + 1j * v, u - 1j * v]
    if kind == "real_pair":
        s = math.sqrt(_NONSQUARES[rng.integers(len(_NONSQUARES))])
        return [u + s * v, u - s * v]
    t = _NONCUBES[rng.integers(len(_NONCUBES))] ** (1 / 3)
    return [u - t * v, u - t * _W * v, u - t * _W.conjugate() * v]


def random_form(rng: np.random.Generator, n_max: int = 3, d_max: int = 6, bound: int = 2,
                full_rank: bool = True, max_tries: int = 1000) -> DecomposableForm:
    """Product of integer linear forms, u^2 + v^2, u^2 - k v^2 and u^3 - k v^3 blocks."""
    for _ in range(max_tries):
        n = int(rng.integers(1, n_max + 1))
        d = int(rng.integers(max(n, 1), d_max + 1))
        factors: list[np.ndarray] = []
        while len(factors) < d:
            factors += _block(rng, n, d - len(factors), bound)
        if full_rank and rank_span(factors, 1e-9)[0] < n:
            continue
        try:
            return make_form(factors, "random")
        except FormError:
            continue
    raise RuntimeError("could not draw a random form")

"""Seeded generators for toy statement corpora.

Provable statements are grown backwards from a proof sketch, so they can
need long proofs (chains of intro/apply).  Unprovable ones come from random
formulas and from refutable shapes ``X -> ⊥`` with ``X`` provable, whose
negation is provable (useful for disproof tests).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from stepforge.env import (
    Atom,
    Statement,
    decide,
    format_formula,
    oracle_search,
)
from stepforge.env.formula import FALSUM, And, Formula, Imp, Or

__all__ = [
    "random_formula",
    "provable_formula",
    "refutable_formula",
    "LabelledStatement",
    "labelled_corpus",
    "deep_corpus",
    "mixed_dataset",
]

ATOMS = "ABCD"


def _atom(rng: np.random.Generator, atoms: str) -> Formula:
    return Atom(atoms[int(rng.integers(len(atoms)))])


def random_formula(rng: np.random.Generator, depth: int, atoms: str = ATOMS) -> Formula:
    if depth <= 0 or rng.random() < 0.3:
        return FALSUM if rng.random() < 0.05 else _atom(rng, atoms)
    ctor = (Imp, And, Or)[int(rng.choice(3, p=[0.5, 0.25, 0.25]))]
    return ctor(random_formula(rng, depth - 1, atoms), random_formula(rng, depth - 1, atoms))


def _fork(rng: np.random.Generator, known: list[Formula], atoms: str) -> Formula:
    """Hypotheses giving an atom two routes: one compound premise or a chain of atom lemmas.

    The compound route (``apply``, ``split``, two closes) is the shorter one;
    the chain keeps every intermediate target a bare atom.
    """
    t = _atom(rng, atoms)
    k1, k2 = (known[int(rng.integers(len(known)))] for _ in range(2))
    hyps: list[Formula] = [Imp(And(k1, k2), t)]
    link = t
    for _ in range(int(rng.integers(3, 6))):
        a = _atom(rng, atoms)
        hyps.append(Imp(a, link))
        link = a
    hyps.append(Imp(k1, link))
    out: Formula = t
    for i in rng.permutation(len(hyps))[::-1]:
        out = Imp(hyps[int(i)], out)
    return out


def provable_formula(
    rng: np.random.Generator,
    depth: int,
    atoms: str = ATOMS,
    distractors: float = 0.0,
    forks: float = 0.0,
) -> Formula:
    """A formula with a proof by construction.

    With ``distractors > 0`` some steps introduce a useless hypothesis
    ``X -> atom`` whose premise is random; it opens dead-end ``apply`` moves
    without shortening any proof.  With ``forks > 0`` some leaves become an
    atom with a short and a long route (see :func:`_fork`).
    """

    def grow(known: list[Formula], d: int) -> Formula:
        if known and (d <= 0 or rng.random() < 0.2):
            if rng.random() < forks:
                return _fork(rng, known, atoms)
            return known[int(rng.integers(len(known)))]
        if d > 0 and rng.random() < distractors:
            junk = Imp(random_formula(rng, 2, atoms), _atom(rng, atoms))
            return Imp(junk, grow(known + [junk], d - 1))
        kind = int(rng.choice(4, p=[0.35, 0.35, 0.15, 0.15])) if d > 0 else 0
        if kind == 0:
            x = _atom(rng, atoms) if rng.random() < 0.8 else random_formula(rng, 1, atoms)
            return Imp(x, grow(known + [x], d - 1))
        if kind == 1:
            # an implication hypothesis whose premise is provable here;
            # its conclusion then becomes reachable through `apply`
            premise = grow(known, d - 2)
            concl = _atom(rng, atoms)
            h = Imp(premise, concl)
            return Imp(h, grow(known + [h, concl], d - 1))
        if kind == 2:
            return And(grow(known, d - 1), grow(known, d - 1))
        side = grow(known, d - 1)
        other = random_formula(rng, 1, atoms)
        return Or(side, other) if rng.random() < 0.5 else Or(other, side)

    return grow([], depth)


def refutable_formula(rng: np.random.Generator, depth: int, atoms: str = ATOMS) -> Formula:
    """``X -> ⊥`` for a provable ``X``; its negation is provable."""
    return Imp(provable_formula(rng, depth, atoms), FALSUM)


@dataclass(frozen=True)
class LabelledStatement:
    statement: Statement
    oracle_length: int | None
    provable: bool


def _statements(rng: np.random.Generator, depth: int) -> Iterator[Formula]:
    while True:
        r = rng.random()
        if r < 0.45:
            yield provable_formula(rng, depth)
        elif r < 0.6:
            yield refutable_formula(rng, max(depth - 2, 1))
        else:
            yield random_formula(rng, depth)


def labelled_corpus(
    n: int, seed: int, oracle_depth: int = 6, formula_depth: int = 4, prefix: str = "toy"
) -> list[LabelledStatement]:
    """``n`` distinct statements labelled by the BFS oracle at ``oracle_depth``.

    Statements provable only beyond ``oracle_depth`` are skipped, so "no
    oracle proof" always means "no proof at any length".
    """
    rng = np.random.default_rng(seed)
    seen: set[str] = set()
    out: list[LabelledStatement] = []
    for f in _statements(rng, formula_depth):
        text = format_formula(f)
        if text in seen:
            continue
        seen.add(text)
        st = Statement(f"{prefix}{len(out):04d}", text, None, "generated")
        proof = oracle_search(st, oracle_depth)
        if proof is not None:
            out.append(LabelledStatement(st, len(proof), True))
        elif not decide(st):
            out.append(LabelledStatement(st, None, False))
        if len(out) == n:
            return out
    raise AssertionError("unreachable")


def deep_corpus(
    n: int,
    seed: int,
    min_length: int = 4,
    oracle_depth: int = 10,
    formula_depth: int = 6,
    prefix: str = "deep",
    distractors: float = 0.0,
    forks: float = 0.0,
    atoms: str = ATOMS,
) -> list[LabelledStatement]:
    """Provable statements whose shortest proof has at least ``min_length`` tactics."""
    rng = np.random.default_rng(seed)
    seen: set[str] = set()
    out: list[LabelledStatement] = []
    while len(out) < n:
        f = provable_formula(rng, formula_depth, atoms, distractors, forks)
        text = format_formula(f)
        if text in seen:
            continue
        seen.add(text)
        st = Statement(f"{prefix}{len(out):04d}", text, None, "generated")
        proof = oracle_search(st, oracle_depth)
        if proof is not None and len(proof) >= min_length:
            out.append(LabelledStatement(st, len(proof), True))
    return out


def mixed_dataset(n: int, seed: int, formula_depth: int = 4, prefix: str = "ds") -> list[Statement]:
    """Unlabelled statements for expert-iteration runs (no oracle calls)."""
    rng = np.random.default_rng(seed)
    seen: set[str] = set()
    out: list[Statement] = []
    for f in _statements(rng, formula_depth):
        text = format_formula(f)
        if text in seen:
            continue
        seen.add(text)
        out.append(Statement(f"{prefix}{len(out):04d}", text, None, "generated"))
        if len(out) == n:
            return out
    raise AssertionError("unreachable")

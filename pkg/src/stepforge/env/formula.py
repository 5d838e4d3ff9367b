"""Propositional formulas for the toy prover: terms, parser and canonical printer.

Grammar (loosest binding first)::

    formula := disj ( "->" formula )?          right associative
    disj    := conj ( "∨" disj )?               right associative
    conj    := unary ( "∧" conj )?              right associative
    unary   := "¬" unary | atom | "⊥" | "(" formula ")"

ASCII spellings are accepted on input (``->``/``→``, ``/\\``/``&``/``∧``,
``\\/``/``|``/``∨``, ``~``/``¬``, ``False``/``_|_``/``⊥``).  Negation is
sugar for ``φ -> ⊥`` and is never produced by the printer.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

__all__ = [
    "Atom",
    "Falsum",
    "Imp",
    "And",
    "Or",
    "Formula",
    "ParseError",
    "parse_formula",
    "format_formula",
    "formula_size",
    "formula_depth",
    "subformulas",
]


class ParseError(ValueError):
    """Malformed formula text; ``position`` is the 0-based character offset."""

    def __init__(self, message: str, position: int, text: str = ""):
        super().__init__(f"{message} at position {position}")
        self.position = position
        self.text = text


@dataclass(frozen=True)
class Atom:
    name: str

    def __str__(self) -> str:
        return format_formula(self)


@dataclass(frozen=True)
class Falsum:
    def __str__(self) -> str:
        return "⊥"


@dataclass(frozen=True)
class Imp:
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return format_formula(self)


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return format_formula(self)


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return format_formula(self)


Formula = Union[Atom, Falsum, Imp, And, Or]

FALSUM = Falsum()

# binding strength used by the printer; atoms/falsum bind tightest
_PREC = {Imp: 1, Or: 2, And: 3}
_SYMBOL = {Imp: "->", Or: "∨", And: "∧"}

_MULTI = [
    ("->", "->"),
    ("/\\", "∧"),
    ("\\/", "∨"),
    ("_|_", "⊥"),
    ("False", "⊥"),
]
_SINGLE = {
    "→": "->",
    "∧": "∧",
    "&": "∧",
    "∨": "∨",
    "|": "∨",
    "¬": "¬",
    "~": "¬",
    "⊥": "⊥",
    "(": "(",
    ")": ")",
}


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens: list[tuple[str, int]] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        for spelling, kind in _MULTI:
            if text.startswith(spelling, i):
                tokens.append((kind, i))
                i += len(spelling)
                break
        else:
            if ch in _SINGLE:
                tokens.append((_SINGLE[ch], i))
                i += 1
            elif "A" <= ch <= "Z" and not (i + 1 < n and text[i + 1].isalnum()):
                tokens.append((ch, i))
                i += 1
            else:
                raise ParseError(f"unexpected character {ch!r}", i, text)
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def _peek(self) -> str | None:
        return self.tokens[self.pos][0] if self.pos < len(self.tokens) else None

    def _offset(self) -> int:
        if self.pos < len(self.tokens):
            return self.tokens[self.pos][1]
        return len(self.text)

    def _fail(self, message: str) -> ParseError:
        return ParseError(message, self._offset(), self.text)

    def parse(self) -> Formula:
        if not self.tokens:
            raise self._fail("empty formula")
        f = self._implication()
        if self.pos != len(self.tokens):
            raise self._fail(f"unexpected token {self._peek()!r}")
        return f

    def _implication(self) -> Formula:
        left = self._disjunction()
        if self._peek() == "->":
            self.pos += 1
            return Imp(left, self._implication())
        return left

    def _disjunction(self) -> Formula:
        left = self._conjunction()
        if self._peek() == "∨":
            self.pos += 1
            return Or(left, self._disjunction())
        return left

    def _conjunction(self) -> Formula:
        left = self._unary()
        if self._peek() == "∧":
            self.pos += 1
            return And(left, self._conjunction())
        return left

    def _unary(self) -> Formula:
        tok = self._peek()
        if tok is None:
            raise self._fail("unexpected end of input")
        if tok == "¬":
            self.pos += 1
            return Imp(self._unary(), FALSUM)
        if tok == "⊥":
            self.pos += 1
            return FALSUM
        if tok == "(":
            self.pos += 1
            inner = self._implication()
            if self._peek() != ")":
                raise self._fail("expected ')'")
            self.pos += 1
            return inner
        if len(tok) == 1 and "A" <= tok <= "Z":
            self.pos += 1
            return Atom(tok)
        raise self._fail(f"unexpected token {tok!r}")


@lru_cache(maxsize=65536)
def parse_formula(text: str) -> Formula:
    """Parse ``text`` into a formula; raises :class:`ParseError`."""
    return _Parser(text).parse()


def _fmt(f: Formula) -> str:
    kind = type(f)
    if kind is Atom:
        return f.name
    if kind is Falsum:
        return "⊥"
    prec = _PREC[kind]
    left = _fmt(f.left)
    right = _fmt(f.right)
    # right associative: equal precedence only needs parens on the left
    if type(f.left) in _PREC and _PREC[type(f.left)] <= prec:
        left = f"({left})"
    if type(f.right) in _PREC and _PREC[type(f.right)] < prec:
        right = f"({right})"
    return f"{left} {_SYMBOL[kind]} {right}"


@lru_cache(maxsize=65536)
def format_formula(f: Formula) -> str:
    """Canonical text for ``f``; ``parse_formula(format_formula(f)) == f``."""
    return _fmt(f)


def formula_size(f: Formula) -> int:
    """Number of nodes (atoms, falsum and connectives)."""
    if isinstance(f, (Atom, Falsum)):
        return 1
    return 1 + formula_size(f.left) + formula_size(f.right)


def formula_depth(f: Formula) -> int:
    if isinstance(f, (Atom, Falsum)):
        return 0
    return 1 + max(formula_depth(f.left), formula_depth(f.right))


def subformulas(f: Formula) -> set[Formula]:
    out = {f}
    if not isinstance(f, (Atom, Falsum)):
        out |= subformulas(f.left)
        out |= subformulas(f.right)
    return out

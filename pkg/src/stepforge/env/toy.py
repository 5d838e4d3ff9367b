"""Decidable propositional toy prover.

States are ordered goal lists; every tactic acts on the first goal.  The rule
set is a fragment of intuitionistic natural deduction (intro, split,
left/right, assumption/exact, apply), so a statement and its negation can
never both be proved.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from functools import cached_property

from stepforge.env.base import (
    NO_GOALS_PP,
    Advanced,
    ApplyResult,
    Failed,
    ProofPath,
    Solved,
    Statement,
)
from stepforge.env.formula import (
    FALSUM,
    And,
    Formula,
    Imp,
    Or,
    ParseError,
    format_formula,
    parse_formula,
)

__all__ = [
    "Sequent",
    "ProofState",
    "ToyEnv",
    "init_state",
    "apply_tactic",
    "enumerate_tactics",
    "negate",
    "oracle_search",
    "decide",
    "parse_state",
    "NO_GOALS",
    "MAX_ORACLE_DEPTH",
]

MAX_ORACLE_DEPTH = 12

_NAME = re.compile(r"[a-z_][A-Za-z0-9_']*\Z")


@dataclass(frozen=True)
class Sequent:
    hyps: tuple[tuple[str, Formula], ...]
    target: Formula

    @cached_property
    def pp(self) -> str:
        lines = [f"{name} : {format_formula(f)}" for name, f in self.hyps]
        lines.append(f"⊢ {format_formula(self.target)}")
        return "\n".join(lines)

    def hyp(self, name: str) -> Formula | None:
        for n, f in self.hyps:
            if n == name:
                return f
        return None

    def fresh_name(self) -> str:
        used = {n for n, _ in self.hyps}
        k = len(self.hyps) + 1
        while f"h{k}" in used:
            k += 1
        return f"h{k}"


@dataclass(frozen=True)
class ProofState:
    goals: tuple[Sequent, ...]

    @cached_property
    def pp(self) -> str:
        if not self.goals:
            return NO_GOALS_PP
        return "\n\n".join(g.pp for g in self.goals)

    @property
    def fingerprint(self) -> str:
        return self.pp

    @property
    def is_no_goals(self) -> bool:
        return not self.goals

    def __str__(self) -> str:
        return self.pp


NO_GOALS = ProofState(())


def parse_state(pp: str) -> ProofState:
    """Inverse of ``ProofState.pp``."""
    if pp.strip() == NO_GOALS_PP:
        return NO_GOALS
    goals = []
    for block in pp.split("\n\n"):
        lines = block.split("\n")
        if not lines[-1].startswith("⊢ "):
            raise ParseError("goal block must end with '⊢ <target>'", 0, block)
        hyps = []
        for line in lines[:-1]:
            name, sep, body = line.partition(" : ")
            if not sep or not _NAME.match(name):
                raise ParseError(f"bad hypothesis line {line!r}", 0, line)
            hyps.append((name, parse_formula(body)))
        goals.append(Sequent(tuple(hyps), parse_formula(lines[-1][2:])))
    return ProofState(tuple(goals))


def init_state(statement: Statement) -> ProofState:
    return ProofState((Sequent((), parse_formula(statement.goal_text)),))


def _replace_first(state: ProofState, new: tuple[Sequent, ...]) -> ApplyResult:
    goals = new + state.goals[1:]
    if not goals:
        return Solved()
    return Advanced(ProofState(goals))


_INAPPLICABLE = Failed("inapplicable")
_UNKNOWN = Failed("unknown tactic")


def apply_tactic(state: ProofState, tactic: str) -> ApplyResult:
    """Apply ``tactic`` to the first goal of ``state``."""
    if not state.goals:
        return _INAPPLICABLE
    goal = state.goals[0]
    target = goal.target
    parts = tactic.split()
    if not parts:
        return _UNKNOWN
    head, args = parts[0], parts[1:]

    if head == "intro" and len(args) <= 1:
        if not isinstance(target, Imp):
            return _INAPPLICABLE
        name = args[0] if args else goal.fresh_name()
        if not _NAME.match(name) or goal.hyp(name) is not None:
            return _INAPPLICABLE
        return _replace_first(state, (Sequent(goal.hyps + ((name, target.left),), target.right),))
    if head == "split" and not args:
        if not isinstance(target, And):
            return _INAPPLICABLE
        return _replace_first(
            state, (Sequent(goal.hyps, target.left), Sequent(goal.hyps, target.right))
        )
    if head in ("left", "right") and not args:
        if not isinstance(target, Or):
            return _INAPPLICABLE
        kept = target.left if head == "left" else target.right
        return _replace_first(state, (Sequent(goal.hyps, kept),))
    if head == "assumption" and not args:
        if any(f == target for _, f in goal.hyps):
            return _replace_first(state, ())
        return _INAPPLICABLE
    if head == "exact" and len(args) == 1:
        if goal.hyp(args[0]) == target:
            return _replace_first(state, ())
        return _INAPPLICABLE
    if head == "apply" and len(args) == 1:
        h = goal.hyp(args[0])
        if isinstance(h, Imp) and h.right == target:
            return _replace_first(state, (Sequent(goal.hyps, h.left),))
        return _INAPPLICABLE
    return _UNKNOWN


def enumerate_tactics(state: ProofState) -> list[str]:
    """All applicable tactics for the first goal, in the fixed rule order."""
    if not state.goals:
        return []
    goal = state.goals[0]
    target = goal.target
    out = []
    if isinstance(target, Imp):
        out.append(f"intro {goal.fresh_name()}")
    if isinstance(target, And):
        out.append("split")
    if isinstance(target, Or):
        out += ["left", "right"]
    matching = [name for name, f in goal.hyps if f == target]
    if matching:
        out.append("assumption")
        out += [f"exact {name}" for name in matching]
    out += [
        f"apply {name}" for name, f in goal.hyps if isinstance(f, Imp) and f.right == target
    ]
    return out


def negate(statement: Statement) -> Statement:
    """``φ`` becomes ``φ -> ⊥``; a stored negation text is passed through."""
    if statement.negation_text is not None:
        text = statement.negation_text
    else:
        text = format_formula(Imp(parse_formula(statement.goal_text), FALSUM))
    return Statement(statement.id + ".neg", text, None, statement.source_tag)


def oracle_search(statement: Statement, depth_limit: int) -> ProofPath | None:
    """Breadth-first enumeration of every applicable tactic; returns a shortest proof."""
    if depth_limit > MAX_ORACLE_DEPTH:
        raise ValueError(f"depth_limit must be <= {MAX_ORACLE_DEPTH}")
    root = init_state(statement)
    seen = {root.fingerprint}
    # parent pointers keep memory linear in visited states
    parent: dict[str, tuple[str | None, str | None, ProofState]] = {
        root.fingerprint: (None, None, root)
    }
    frontier = deque([(root, 0)])

    def unwind(fp: str) -> tuple[list[str], list[ProofState]]:
        tactics, states = [], []
        while fp is not None:
            prev, tac, st = parent[fp]
            states.append(st)
            if tac is not None:
                tactics.append(tac)
            fp = prev
        return tactics[::-1], states[::-1]

    while frontier:
        state, depth = frontier.popleft()
        if depth >= depth_limit:
            continue
        for tactic in enumerate_tactics(state):
            result = apply_tactic(state, tactic)
            if isinstance(result, Solved):
                tactics, states = unwind(state.fingerprint)
                return ProofPath(statement, tuple(tactics + [tactic]), tuple(states + [NO_GOALS]))
            if isinstance(result, Advanced):
                child = result.new_state
                if child.fingerprint not in seen:
                    seen.add(child.fingerprint)
                    parent[child.fingerprint] = (state.fingerprint, tactic, child)
                    frontier.append((child, depth + 1))
    return None


def decide(statement: Statement) -> bool:
    """Exact provability under the toy rule set, at any proof length.

    Hypotheses are treated as a set (names and duplicates never matter), so
    the search space is finite.  A minimal proof never repeats a
    (hypotheses, target) pair along a branch, so cutting such cycles is
    complete; failures found under a cycle cut are not cached.
    """
    target = parse_formula(statement.goal_text)
    proved: set[tuple[frozenset, Formula]] = set()
    refuted: set[tuple[frozenset, Formula]] = set()

    def prove(hyps: frozenset, goal: Formula, stack: set) -> tuple[bool, bool]:
        key = (hyps, goal)
        if key in proved:
            return True, False
        if key in refuted:
            return False, False
        if key in stack:
            return False, True
        stack.add(key)
        cut = False

        def sub(h: frozenset, g: Formula) -> bool:
            nonlocal cut
            ok, c = prove(h, g, stack)
            cut |= c
            return ok

        ok = goal in hyps
        if not ok and isinstance(goal, Imp):
            ok = sub(hyps | {goal.left}, goal.right)
        if not ok and isinstance(goal, And):
            ok = sub(hyps, goal.left) and sub(hyps, goal.right)
        if not ok and isinstance(goal, Or):
            ok = sub(hyps, goal.left) or sub(hyps, goal.right)
        if not ok:
            for h in hyps:
                if isinstance(h, Imp) and h.right == goal and sub(hyps, h.left):
                    ok = True
                    break
        stack.discard(key)
        if ok:
            proved.add(key)
            return True, False
        if not cut:
            refuted.add(key)
        return False, cut

    return prove(frozenset(), target, set())[0]


class ToyEnv:
    """Environment adapter over the module-level toy functions."""

    name = "toy"

    def init_state(self, statement: Statement) -> ProofState:
        return init_state(statement)

    def apply_tactic(self, state: ProofState, tactic: str) -> ApplyResult:
        return apply_tactic(state, tactic)

    def enumerate_tactics(self, state: ProofState) -> list[str]:
        return enumerate_tactics(state)

    def negate(self, statement: Statement) -> Statement:
        return negate(statement)

    def no_goals(self) -> ProofState:
        return NO_GOALS

    def parse_state(self, pp: str) -> ProofState:
        return parse_state(pp)

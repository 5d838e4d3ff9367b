"""Environment-independent records: statements, tactic results and proof paths."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence, Union, runtime_checkable

__all__ = [
    "Statement",
    "Advanced",
    "Solved",
    "Failed",
    "ApplyResult",
    "ProofPath",
    "Environment",
    "MissingNegation",
    "ReplayError",
    "replay",
    "NO_GOALS_PP",
]

NO_GOALS_PP = "no goals"


class MissingNegation(LookupError):
    """The environment cannot derive a negation and none was stored."""


class ReplayError(RuntimeError):
    """A tactic sequence failed to replay to ``no goals``."""


@dataclass(frozen=True)
class Statement:
    id: str
    goal_text: str
    negation_text: str | None = None
    source_tag: str = ""

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("statement id must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"id": self.id, "goal": self.goal_text}
        if self.negation_text is not None:
            d["negation"] = self.negation_text
        d["source"] = self.source_tag
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Statement":
        return cls(d["id"], d["goal"], d.get("negation"), d.get("source", ""))


@dataclass(frozen=True)
class Advanced:
    new_state: Any


@dataclass(frozen=True)
class Solved:
    pass


@dataclass(frozen=True)
class Failed:
    reason: str


ApplyResult = Union[Advanced, Solved, Failed]


@runtime_checkable
class Environment(Protocol):
    name: str

    def init_state(self, statement: Statement) -> Any: ...

    def apply_tactic(self, state: Any, tactic: str) -> ApplyResult: ...

    def negate(self, statement: Statement) -> Statement: ...

    def no_goals(self) -> Any: ...


@dataclass(frozen=True)
class ProofPath:
    """A verified tactic sequence with the states it visits (``states[-1]`` is no goals)."""

    statement: Statement
    tactics: tuple[str, ...]
    states: tuple[Any, ...] = field(repr=False)

    def __len__(self) -> int:
        return len(self.tactics)

    @property
    def proof_id(self) -> str:
        return self.statement.id


def replay(env: Environment, statement: Statement, tactics: Sequence[str]) -> ProofPath:
    """Re-run ``tactics`` from the root of ``statement``; raise :class:`ReplayError` unless solved."""
    state = env.init_state(statement)
    states = [state]
    for i, tactic in enumerate(tactics):
        result = env.apply_tactic(state, tactic)
        if isinstance(result, Failed):
            raise ReplayError(f"{statement.id}: step {i} {tactic!r} failed ({result.reason})")
        if isinstance(result, Solved):
            if i != len(tactics) - 1:
                raise ReplayError(f"{statement.id}: solved early at step {i}")
            states.append(env.no_goals())
            return ProofPath(statement, tuple(tactics), tuple(states))
        state = result.new_state
        states.append(state)
    raise ReplayError(f"{statement.id}: {len(tactics)} tactics leave open goals")

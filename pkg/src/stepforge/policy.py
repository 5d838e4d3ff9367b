"""Tactic proposal: prompt templates and three interchangeable backends.

* :class:`HeuristicPolicy` scores enumerated toy tactics with a fixed prior
  plus seeded Gumbel noise.
* :class:`LearnedPolicy` keeps counts per (state bucket, tactic head) and
  samples from a tempered softmax over them.
* :class:`RemotePolicy` talks to a generation server over HTTP.
"""

from __future__ import annotations

import json
import math
import threading
import urllib.error
import urllib.request
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from stepforge.env import (
    And,
    Falsum,
    Imp,
    Or,
    ProofPath,
    ProofState,
    ReplayError,
    enumerate_tactics,
    parse_state,
    replay,
)

__all__ = [
    "DEFAULT_TEMPERATURE",
    "PromptRecord",
    "TacticCandidate",
    "PolicyBackend",
    "HeuristicPolicy",
    "LearnedPolicy",
    "RemotePolicy",
    "BackendUnavailable",
    "EmptyProposal",
    "InvalidTrajectory",
    "render_prompt",
    "render_gptf_prompt",
    "sample_tactics",
    "update_from_trajectories",
    "tactic_head",
    "state_bucket",
    "TACTIC_HEADS",
]

DEFAULT_TEMPERATURE = 0.7

TACTIC_HEADS = ("intro", "split", "left", "right", "assumption", "exact", "apply")


class BackendUnavailable(RuntimeError):
    """A remote backend timed out, refused, or answered with a malformed body."""


class EmptyProposal(LookupError):
    """The backend produced no candidate for this state."""


class InvalidTrajectory(ValueError):
    pass


@dataclass(frozen=True)
class PromptRecord:
    decl_name: str
    proof_before: str
    state_before: str
    rendered: str


@dataclass(frozen=True)
class TacticCandidate:
    tactic: str
    logprob: float
    # "mean" (per-token average) or "total" (sequence sum)
    logprob_kind: str = "total"

    def __post_init__(self) -> None:
        if not math.isfinite(self.logprob) or self.logprob > 0:
            raise ValueError(f"logprob must be finite and <= 0, got {self.logprob}")


def _pp(state: ProofState | str) -> str:
    return state if isinstance(state, str) else state.pp


def render_prompt(decl: str, proof_before: Sequence[str], state: ProofState | str) -> PromptRecord:
    proof = "\n".join(proof_before)
    pp = _pp(state)
    rendered = (
        f"---\nNAME: {decl}\n\n"
        f"---\nPROOF_BEFORE: {proof}\n\n"
        f"---\nSTATE_BEFORE: {pp}\n\n"
        f"---\nTACTIC:"
    )
    return PromptRecord(decl, proof, pp, rendered)


def render_gptf_prompt(decl: str, state: ProofState | str) -> str:
    return f"DECL {decl}\nGOAL {_pp(state)}\nPROOFSTEP "


def _toy_view(state: Any) -> ProofState:
    """Local backends reason over toy states; other states are read back from their pp."""
    return state if isinstance(state, ProofState) else parse_state(state.pp)


def tactic_head(tactic: str) -> str:
    parts = tactic.split()
    return parts[0] if parts else ""


def state_bucket(state: ProofState) -> tuple[str, int, int]:
    """(top connective of the first target, hypothesis count <= 4, goal count <= 4)."""
    goal = state.goals[0]
    target = goal.target
    if isinstance(target, Imp):
        top = "imp"
    elif isinstance(target, And):
        top = "and"
    elif isinstance(target, Or):
        top = "or"
    elif isinstance(target, Falsum):
        top = "false"
    else:
        top = "atom"
    return top, min(len(goal.hyps), 4), min(len(state.goals), 4)


def _gumbel_topk(
    tactics: Sequence[str], logits: np.ndarray, n: int, rng: np.random.Generator, noise: float
) -> list[int]:
    """Indices of the top ``n`` perturbed logits (sampling without replacement)."""
    keys = logits + noise * rng.gumbel(size=len(tactics))
    # stable tie-break on enumeration order
    order = sorted(range(len(tactics)), key=lambda i: (-keys[i], i))
    return order[:n]


def _log_softmax(x: np.ndarray) -> np.ndarray:
    m = x.max()
    return x - (m + math.log(np.exp(x - m).sum()))


class PolicyBackend(Protocol):
    def propose(
        self,
        state: Any,
        context: PromptRecord,
        n: int,
        temperature: float,
        rng: np.random.Generator,
    ) -> list[TacticCandidate]: ...


DEFAULT_PRIOR: Mapping[str, float] = {
    "assumption": 2.0,
    "exact": 1.5,
    "intro": 1.0,
    "split": 0.5,
    "apply": 0.0,
    "left": -0.5,
    "right": -0.5,
}


@dataclass(frozen=True)
class HeuristicPolicy:
    """Fixed per-head prior over the toy enumeration, perturbed by Gumbel noise.

    ``noise=0`` gives a deterministic ranking; with ``n`` at least the
    branching factor every applicable tactic is proposed.
    """

    prior: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_PRIOR))
    noise: float = 1.0
    enumerate: Callable[[ProofState], list[str]] = enumerate_tactics

    def propose(self, state, context, n, temperature, rng):
        tactics = self.enumerate(_toy_view(state))
        if not tactics:
            return []
        base = np.array([self.prior.get(tactic_head(t), 0.0) for t in tactics])
        keys = base + self.noise * rng.gumbel(size=len(tactics))
        logp = _log_softmax(keys / temperature)
        order = sorted(range(len(tactics)), key=lambda i: (-keys[i], i))[:n]
        return [TacticCandidate(tactics[i], min(float(logp[i]), 0.0), "total") for i in order]


@dataclass(frozen=True)
class LearnedPolicy:
    """Count table over (state bucket, tactic head), Laplace-smoothed.

    The bucket's head distribution is a tempered softmax over all of
    ``TACTIC_HEADS``, ``p(head) ∝ (count + alpha) ** (1 / T)``.  A tactic's
    probability is its head's mass split evenly among the enumerated tactics
    sharing that head, so the applicable tactics never carry more than the
    whole mass and a forced move still costs log-likelihood.
    """

    counts: Mapping[tuple[tuple[str, int, int], str], int] = field(default_factory=dict)
    alpha: float = 1.0
    enumerate: Callable[[ProofState], list[str]] = enumerate_tactics

    def count(self, bucket: tuple[str, int, int], head: str) -> int:
        return self.counts.get((bucket, head), 0)

    def head_distribution(self, state: ProofState, temperature: float = 1.0) -> dict[str, float]:
        bucket = state_bucket(state)
        logits = np.array([math.log(self.count(bucket, h) + self.alpha) for h in TACTIC_HEADS])
        p = np.exp(_log_softmax(logits / temperature))
        return dict(zip(TACTIC_HEADS, p.tolist()))

    def logprobs(self, state: ProofState, temperature: float) -> tuple[list[str], np.ndarray]:
        state = _toy_view(state)
        tactics = self.enumerate(state)
        if not tactics:
            return [], np.zeros(0)
        heads = [tactic_head(t) for t in tactics]
        dist = self.head_distribution(state, temperature)
        share = Counter(heads)
        return tactics, np.array([math.log(dist[h] / share[h]) for h in heads])

    def propose(self, state, context, n, temperature, rng):
        tactics, logp = self.logprobs(state, temperature)
        if not tactics:
            return []
        order = _gumbel_topk(tactics, logp, n, rng, 1.0)
        return [TacticCandidate(tactics[i], min(float(logp[i]), 0.0), "total") for i in order]

    def updated(self, increments: Mapping[tuple[tuple[str, int, int], str], int]) -> "LearnedPolicy":
        merged = Counter(self.counts)
        merged.update(increments)
        return LearnedPolicy(dict(merged), self.alpha, self.enumerate)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "counts": [[list(b), h, c] for (b, h), c in sorted(self.counts.items())],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LearnedPolicy":
        counts = {(tuple(b), h): c for b, h, c in d["counts"]}
        return cls(counts, d.get("alpha", 1.0))


class RemotePolicy:
    """Client for ``POST {base}/generate``.

    The server reports total sequence logprobs; when it also reports a token
    count the candidate carries the per-token mean instead.
    """

    def __init__(self, base_url: str, timeout_s: float = 30.0, max_in_flight: int = 8):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def _post(self, body: dict) -> dict:
        req = urllib.request.Request(
            f"{self.base_url}/generate",
            data=json.dumps(body).encode(),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        with self._slots:
            try:
                with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                    if resp.status != 200:
                        raise BackendUnavailable(f"HTTP {resp.status}")
                    raw = resp.read()
            except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
                raise BackendUnavailable(str(exc)) from exc
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise BackendUnavailable("malformed body") from exc

    def propose(self, state, context, n, temperature, rng):
        reply = self._post({"prompt": context.rendered, "n": n, "temperature": temperature})
        try:
            out = []
            for c in reply["candidates"]:
                total = float(c["logprob"])
                tokens = c.get("tokens")
                if tokens:
                    out.append(TacticCandidate(str(c["text"]), total / int(tokens), "mean"))
                else:
                    out.append(TacticCandidate(str(c["text"]), total, "total"))
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendUnavailable(f"malformed body: {exc}") from exc
        return out


def sample_tactics(
    backend: PolicyBackend,
    state: Any,
    context: PromptRecord,
    n: int,
    temperature: float = DEFAULT_TEMPERATURE,
    rng: np.random.Generator | None = None,
) -> list[TacticCandidate]:
    """At most ``n`` candidates, deduplicated by tactic text (first occurrence wins)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    if rng is None:
        rng = np.random.default_rng(0)
    seen: set[str] = set()
    out = []
    for cand in backend.propose(state, context, n, temperature, rng):
        if cand.tactic not in seen:
            seen.add(cand.tactic)
            out.append(cand)
        if len(out) == n:
            break
    if not out:
        raise EmptyProposal(context.decl_name)
    return out


def trajectory_counts(proofs: Iterable[ProofPath], env=None) -> Counter:
    """Per-(bucket, head) occurrence counts over replayed proofs."""
    from stepforge.env import ToyEnv

    env = env or ToyEnv()
    counts: Counter = Counter()
    for proof in proofs:
        try:
            path = replay(env, proof.statement, proof.tactics)
        except ReplayError as exc:
            raise InvalidTrajectory(str(exc)) from exc
        for state, tactic in zip(path.states, path.tactics):
            counts[(state_bucket(state), tactic_head(tactic))] += 1
    return counts


def update_from_trajectories(backend: LearnedPolicy, proofs: Iterable[ProofPath]) -> LearnedPolicy:
    """New backend with one count added per step of every proof."""
    counts = trajectory_counts(proofs)
    if not counts:
        return backend
    return backend.updated(counts)

"""State critic trained from preference pairs.

Two pair families come out of search trees: path pairs (a deeper state on a
successful path beats a shallower one) and sibling pairs (an on-path state
beats a same-parent state whose subtree never closes).  The critic itself is
linear over a small clipped feature basis and is fitted with a pairwise
logistic loss by full-batch gradient descent.
"""

from __future__ import annotations

import json
import math
import urllib.error
import urllib.request
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Iterable, Sequence

import numpy as np

from stepforge.env import NO_GOALS_PP, And, Falsum, Imp, Or, ProofPath, ProofState, parse_state
from stepforge.env.formula import Formula, formula_depth, formula_size

__all__ = [
    "StateRef",
    "PreferencePair",
    "CriticParams",
    "TrainingReport",
    "RemoteCritic",
    "NotAProof",
    "PathNotInTree",
    "DegenerateData",
    "TrainingDiverged",
    "FEATURE_NAMES",
    "FEATURE_CAPS",
    "FEATURE_BASIS_VERSION",
    "STABLE_LEARNING_RATE",
    "NO_GOALS_SCORE",
    "state_features",
    "extract_path_pairs",
    "extract_sibling_pairs",
    "hygiene",
    "score_state",
    "score_states",
    "pairwise_loss",
    "pairwise_loss_grad",
    "train_critic",
    "pair_accuracy",
    "read_pairs",
    "write_pairs",
]

FEATURE_BASIS_VERSION = "v1"
FEATURE_NAMES = (
    "goals",
    "target_size",
    "max_target_depth",
    "implies",
    "and",
    "or",
    "falsum",
    "hypotheses",
)
FEATURE_CAPS = np.array([8, 64, 16, 16, 16, 16, 16, 16], dtype=float)

# every feature lies in [0, 1], so per-pair differences have squared norm <= 8
# and the loss gradient is 2-Lipschitz; plain GD is monotone below lr = 1
STABLE_LEARNING_RATE = 0.5

NO_GOALS_SCORE = math.inf


class NotAProof(ValueError):
    pass


class PathNotInTree(LookupError):
    pass


class DegenerateData(UserWarning):
    """All pairs have identical feature vectors; the loss is stuck at log 2."""


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class StateRef:
    fingerprint: str
    pp: str

    @classmethod
    def of(cls, state: Any) -> "StateRef":
        return cls(state.fingerprint, state.pp)

    @property
    def is_no_goals(self) -> bool:
        return self.pp == NO_GOALS_PP


@dataclass(frozen=True)
class PreferencePair:
    chosen: StateRef
    rejected: StateRef
    kind: str
    source_proof_id: str

    def key(self) -> tuple[str, str]:
        return self.chosen.fingerprint, self.rejected.fingerprint

    @property
    def has_no_goals(self) -> bool:
        return self.chosen.is_no_goals or self.rejected.is_no_goals

    def to_dict(self) -> dict[str, str]:
        return {
            "chosen": self.chosen.pp,
            "rejected": self.rejected.pp,
            "kind": self.kind,
            "proof_id": self.source_proof_id,
        }

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> "PreferencePair":
        # toy fingerprints are the pretty-printed state
        return cls(
            StateRef(d["chosen"], d["chosen"]),
            StateRef(d["rejected"], d["rejected"]),
            d["kind"],
            d["proof_id"],
        )


def write_pairs(path, pairs: Iterable[PreferencePair]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps(p.to_dict(), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_pairs(path) -> list[PreferencePair]:
    with open(path, encoding="utf-8") as fh:
        return [PreferencePair.from_dict(json.loads(line)) for line in fh if line.strip()]


# ---------------------------------------------------------------- extraction


def extract_path_pairs(path: ProofPath) -> list[PreferencePair]:
    """Every (deeper, shallower) pair of states on a successful path, ordered by (i, j)."""
    states = path.states
    if len(states) < 2 or not states[-1].is_no_goals:
        raise NotAProof(path.statement.id)
    refs = [StateRef.of(s) for s in states]
    pairs = []
    for i in range(len(refs)):
        for j in range(i + 1, len(refs)):
            if refs[i].fingerprint == refs[j].fingerprint:
                continue
            pairs.append(PreferencePair(refs[j], refs[i], "path", path.proof_id))
    return pairs


def extract_sibling_pairs(tree, path: ProofPath) -> list[PreferencePair]:
    """On-path state over each same-parent sibling whose subtree never reaches no goals.

    ``tree`` must provide ``node_id(fingerprint)``, ``parent_of(node_id)``,
    ``children_of(node_id)``, ``state_of(node_id)`` and ``reaches_no_goals(node_id)``.
    """
    ids = []
    for state in path.states:
        nid = tree.node_id(state.fingerprint)
        if nid is None:
            raise PathNotInTree(f"{path.statement.id}: state not in tree")
        ids.append(nid)
    for prev, cur in zip(ids, ids[1:]):
        if tree.parent_of(cur) != prev:
            raise PathNotInTree(f"{path.statement.id}: edge not in tree")
    on_path = set(ids)
    pairs = []
    for t in range(1, len(ids)):
        chosen = StateRef.of(path.states[t])
        for c in tree.children_of(ids[t - 1]):
            if c in on_path or tree.reaches_no_goals(c):
                continue
            pairs.append(PreferencePair(chosen, StateRef.of(tree.state_of(c)), "sibling", path.proof_id))
    return pairs


def hygiene(
    pairs: Sequence[PreferencePair], no_goals_keep_fraction: float = 0.10, seed: int = 0
) -> list[PreferencePair]:
    """Drop duplicate pairs, then keep ``ceil(fraction * n)`` of the ``n`` pairs touching no goals."""
    if not 0.0 <= no_goals_keep_fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    seen: set[tuple[str, str]] = set()
    unique = []
    for p in pairs:
        if p.key() not in seen:
            seen.add(p.key())
            unique.append(p)
    terminal = [i for i, p in enumerate(unique) if p.has_no_goals]
    # guard against 0.1 * 30 = 3.0000000000000004
    keep_n = math.ceil(no_goals_keep_fraction * len(terminal) - 1e-9)
    rng = np.random.default_rng(seed)
    kept = set(rng.choice(terminal, size=keep_n, replace=False).tolist()) if keep_n else set()
    drop = set(terminal) - kept
    return [p for i, p in enumerate(unique) if i not in drop]


# ------------------------------------------------------------------- scoring


def _count_connectives(f: Formula, acc: np.ndarray) -> None:
    stack = [f]
    while stack:
        g = stack.pop()
        if isinstance(g, Imp):
            acc[0] += 1
        elif isinstance(g, And):
            acc[1] += 1
        elif isinstance(g, Or):
            acc[2] += 1
        elif isinstance(g, Falsum):
            acc[3] += 1
            continue
        else:
            continue
        stack.append(g.left)
        stack.append(g.right)


@lru_cache(maxsize=1 << 16)
def _features_from_pp(pp: str) -> tuple[float, ...]:
    return tuple(state_features(parse_state(pp)))


def state_features(state: ProofState | str) -> np.ndarray:
    """Clipped, cap-normalised feature vector in ``[0, 1] ** 8``."""
    if isinstance(state, str):
        return np.array(_features_from_pp(state))
    raw = np.zeros(len(FEATURE_NAMES))
    raw[0] = len(state.goals)
    conn = np.zeros(4)
    for g in state.goals:
        raw[1] += formula_size(g.target)
        raw[2] = max(raw[2], formula_depth(g.target))
        _count_connectives(g.target, conn)
        raw[7] += len(g.hyps)
    raw[3:7] = conn
    return np.minimum(raw, FEATURE_CAPS) / FEATURE_CAPS


@dataclass(frozen=True)
class CriticParams:
    weights: tuple[float, ...] = (0.0,) * len(FEATURE_NAMES)
    bias: float = 0.0
    basis: str = FEATURE_BASIS_VERSION

    def __post_init__(self) -> None:
        if len(self.weights) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} weights")
        if not all(math.isfinite(w) for w in self.weights) or not math.isfinite(self.bias):
            raise ValueError("critic parameters must be finite")

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "CriticParams":
        return cls(tuple(float(x) for x in v[:-1]), float(v[-1]))

    def vector(self) -> np.ndarray:
        return np.array(self.weights + (self.bias,))

    def score(self, state: Any) -> float:
        return score_state(self, state)

    def score_many(self, states: Sequence[Any]) -> list[float]:
        return [score_state(self, s) for s in states]

    def to_dict(self) -> dict:
        return {"basis": self.basis, "features": list(FEATURE_NAMES), "weights": list(self.weights), "bias": self.bias}

    @classmethod
    def from_dict(cls, d: dict) -> "CriticParams":
        if d.get("basis", FEATURE_BASIS_VERSION) != FEATURE_BASIS_VERSION:
            raise ValueError(f"unsupported feature basis {d['basis']!r}")
        return cls(tuple(d["weights"]), d["bias"])


def score_state(critic: CriticParams, state: Any) -> float:
    """Linear value of ``state``; no goals scores ``+inf`` above every finite value."""
    pp = state if isinstance(state, str) else state.pp
    if pp == NO_GOALS_PP:
        return NO_GOALS_SCORE
    x = state_features(state)
    return float(np.dot(critic.weights, x) + critic.bias)


class RemoteCritic:
    """Client for ``POST {base}/score`` returning one score per state, in order."""

    def __init__(self, base_url: str, timeout_s: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s

    def score_many(self, states: Sequence[Any]) -> list[float]:
        from stepforge.policy import BackendUnavailable

        pps = [s if isinstance(s, str) else s.pp for s in states]
        req = urllib.request.Request(
            f"{self.base_url}/score",
            data=json.dumps({"states": pps}).encode(),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                body = json.loads(resp.read())
        except (urllib.error.URLError, TimeoutError, ConnectionError, json.JSONDecodeError) as exc:
            raise BackendUnavailable(str(exc)) from exc
        scores = body.get("scores") if isinstance(body, dict) else None
        if not isinstance(scores, list) or len(scores) != len(pps):
            raise BackendUnavailable("malformed score response")
        return [NO_GOALS_SCORE if pp == NO_GOALS_PP else float(s) for pp, s in zip(pps, scores)]

    def score(self, state: Any) -> float:
        return self.score_many([state])[0]


def score_states(critic: Any, states: Sequence[Any]) -> list[float]:
    if hasattr(critic, "score_many"):
        return critic.score_many(states)
    return [critic.score(s) for s in states]


# ------------------------------------------------------------------ training


def _design(pairs: Sequence[PreferencePair]) -> tuple[np.ndarray, np.ndarray]:
    xc = np.array([state_features(p.chosen.pp) for p in pairs])
    xr = np.array([state_features(p.rejected.pp) for p in pairs])
    return xc, xr


def pairwise_loss(theta: np.ndarray, xc: np.ndarray, xr: np.ndarray) -> float:
    """Mean ``-log sigmoid(V(chosen) - V(rejected))``; ``theta`` is weights then bias."""
    w, b = theta[:-1], theta[-1]
    margin = (xc @ w + b) - (xr @ w + b)
    return float(np.mean(np.logaddexp(0.0, -margin)))


def pairwise_loss_grad(theta: np.ndarray, xc: np.ndarray, xr: np.ndarray) -> np.ndarray:
    w, b = theta[:-1], theta[-1]
    margin = (xc @ w + b) - (xr @ w + b)
    coef = -0.5 * (1.0 - np.tanh(0.5 * margin))  # -sigmoid(-margin), overflow-free
    gw = (coef[:, None] * (xc - xr)).mean(axis=0)
    # the bias cancels inside every margin
    return np.append(gw, 0.0)


@dataclass
class TrainingReport:
    params: CriticParams
    losses: list[float] = field(default_factory=list)
    degenerate: bool = False
    seed: int = 0

    @property
    def final_loss(self) -> float:
        return self.losses[-1]


def train_critic(
    pairs: Sequence[PreferencePair],
    epochs: int = 500,
    learning_rate: float = 0.1,
    seed: int = 0,
) -> TrainingReport:
    """Full-batch gradient descent on the pairwise logistic loss."""
    if not pairs:
        raise ValueError("train_critic needs at least one pair")
    # canonical row order keeps the float sums, and so the result, permutation-free
    xc, xr = _design(sorted(pairs, key=lambda p: (p.chosen.pp, p.rejected.pp)))
    rng = np.random.default_rng(seed)
    theta = np.append(rng.normal(scale=0.01, size=xc.shape[1]), 0.0)
    degenerate = bool(np.all(xc == xr))
    if degenerate:
        warnings.warn("every pair has identical features; loss stays at log 2", DegenerateData)
    losses = [pairwise_loss(theta, xc, xr)]
    for _ in range(epochs):
        theta = theta - learning_rate * pairwise_loss_grad(theta, xc, xr)
        loss = pairwise_loss(theta, xc, xr)
        if learning_rate <= STABLE_LEARNING_RATE and loss > losses[-1] + 1e-12:
            raise TrainingDiverged(f"loss rose from {losses[-1]} to {loss}")
        losses.append(loss)
    return TrainingReport(CriticParams.from_vector(theta), losses, degenerate, seed)


def pair_accuracy(critic: Any, pairs: Sequence[PreferencePair]) -> float:
    """Share of pairs with ``V(chosen) > V(rejected)``; ties count as wrong."""
    if not pairs:
        raise ValueError("pair_accuracy needs at least one pair")
    chosen = score_states(critic, [p.chosen.pp for p in pairs])
    rejected = score_states(critic, [p.rejected.pp for p in pairs])
    return sum(c > r for c, r in zip(chosen, rejected)) / len(pairs)

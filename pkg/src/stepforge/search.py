"""Tactic-tree search with best-first (BF) and critic-guided (CG) selection.

A search budget ``P x S x K`` means ``P`` independent passes, up to ``S``
tactic candidates per expansion and at most ``K`` expansions per pass.  In
``bf+cg`` mode the first half of the passes run BF and the second half CG.
"""

from __future__ import annotations

import enum
import heapq
import json
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from stepforge.critic import score_states
from stepforge.env import (
    Advanced,
    Failed,
    ProtocolError,
    ProverTimeout,
    ReplayError,
    Solved,
    Statement,
    replay,
)
from stepforge.env.base import ProofPath
from stepforge.policy import (
    DEFAULT_TEMPERATURE,
    BackendUnavailable,
    EmptyProposal,
    render_prompt,
    sample_tactics,
)

__all__ = [
    "Mode",
    "NodeStatus",
    "TreeNode",
    "SearchTree",
    "SearchBudget",
    "AttemptOutcome",
    "ReplayMismatch",
    "bf_priority",
    "cg_priority",
    "parse_budget",
    "run_attempt",
    "run_passes",
    "shortest_outcome",
    "shortest_proof",
    "write_outcomes",
    "read_outcomes",
    "TERMINATIONS",
]

INFRASTRUCTURE_ERRORS = (BackendUnavailable, ProverTimeout, ProtocolError)

TERMINATIONS = ("proof", "budget_K", "budget_time", "frontier_empty", "infrastructure")


class Mode(str, enum.Enum):
    BF = "bf"
    CG = "cg"
    BF_PLUS_CG = "bf+cg"


class NodeStatus(str, enum.Enum):
    OPEN = "open"
    EXPANDED = "expanded"
    EXHAUSTED = "exhausted"
    TERMINAL = "terminal"


class ReplayMismatch(RuntimeError):
    """A proof reconstructed from the tree did not replay; this is an engine bug."""


@dataclass
class TreeNode:
    id: int
    state: Any
    parent: int | None
    incoming_tactic: str | None
    edge_logprob: float
    path_logprob_sum: float
    depth: int
    status: NodeStatus = NodeStatus.OPEN


@dataclass
class _StateView:
    """Stand-in state for trees read back from disk."""

    pp: str

    @property
    def fingerprint(self) -> str:
        return self.pp

    @property
    def is_no_goals(self) -> bool:
        from stepforge.env import NO_GOALS_PP

        return self.pp == NO_GOALS_PP


class SearchTree:
    """Search nodes keyed by state fingerprint (one node per distinct state)."""

    def __init__(self) -> None:
        self.nodes: list[TreeNode] = []
        self.by_fingerprint: dict[str, int] = {}
        self.children: dict[int, list[int]] = {}
        self.dead_edges: list[tuple[int, str, str]] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def add(self, state: Any, parent: TreeNode | None, tactic: str | None, logprob: float) -> TreeNode:
        nid = len(self.nodes)
        if parent is None:
            node = TreeNode(nid, state, None, None, 0.0, 0.0, 0)
        else:
            node = TreeNode(
                nid, state, parent.id, tactic, logprob, parent.path_logprob_sum + logprob, parent.depth + 1
            )
            self.children.setdefault(parent.id, []).append(nid)
        self.nodes.append(node)
        self.by_fingerprint[state.fingerprint] = nid
        self.children.setdefault(nid, [])
        return node

    def reparent(self, node: TreeNode, parent: TreeNode, tactic: str, logprob: float) -> None:
        if node.parent is not None:
            self.children[node.parent].remove(node.id)
        self.children[parent.id].append(node.id)
        node.parent = parent.id
        node.incoming_tactic = tactic
        node.edge_logprob = logprob
        node.path_logprob_sum = parent.path_logprob_sum + logprob
        node.depth = parent.depth + 1

    # interface used by critic.extract_sibling_pairs
    def node_id(self, fingerprint: str) -> int | None:
        return self.by_fingerprint.get(fingerprint)

    def parent_of(self, nid: int) -> int | None:
        return self.nodes[nid].parent

    def children_of(self, nid: int) -> list[int]:
        return list(self.children.get(nid, ()))

    def state_of(self, nid: int) -> Any:
        return self.nodes[nid].state

    def reaches_no_goals(self, nid: int) -> bool:
        stack = [nid]
        while stack:
            n = stack.pop()
            if self.nodes[n].state.is_no_goals:
                return True
            stack.extend(self.children.get(n, ()))
        return False

    def path_to(self, nid: int) -> tuple[list[str], list[Any]]:
        tactics, states = [], []
        node: TreeNode | None = self.nodes[nid]
        while node is not None:
            states.append(node.state)
            if node.incoming_tactic is not None:
                tactics.append(node.incoming_tactic)
            node = self.nodes[node.parent] if node.parent is not None else None
        return tactics[::-1], states[::-1]

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "id": n.id,
                    "pp": n.state.pp,
                    "parent": n.parent,
                    "tactic": n.incoming_tactic,
                    "edge_logprob": n.edge_logprob,
                    "depth": n.depth,
                    "status": n.status.value,
                }
                for n in self.nodes
            ]
        }

    @classmethod
    def from_dict(cls, d: dict, parse: Callable[[str], Any] | None = None) -> "SearchTree":
        tree = cls()
        for rec in d["nodes"]:
            state = parse(rec["pp"]) if parse else _StateView(rec["pp"])
            parent = tree.nodes[rec["parent"]] if rec["parent"] is not None else None
            node = tree.add(state, None, None, 0.0)
            if parent is not None:
                tree.children[parent.id].append(node.id)
                node.parent = parent.id
            node.incoming_tactic = rec["tactic"]
            node.edge_logprob = rec["edge_logprob"]
            node.depth = rec["depth"]
            node.path_logprob_sum = (parent.path_logprob_sum if parent else 0.0) + rec["edge_logprob"]
            node.status = NodeStatus(rec["status"])
        return tree


@dataclass(frozen=True)
class SearchBudget:
    passes: int = 1
    samples_per_expansion: int = 32
    max_expansions: int = 600
    wall_clock_limit_s: float = math.inf
    mode: Mode = Mode.BF

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.passes < 1 or self.samples_per_expansion < 1 or self.max_expansions < 1:
            raise ValueError("P, S and K must all be >= 1")
        if self.mode is Mode.BF_PLUS_CG and self.passes % 2:
            raise ValueError("bf+cg needs an even number of passes")

    def __str__(self) -> str:
        return f"{self.passes}x{self.samples_per_expansion}x{self.max_expansions}"

    def single_pass(self, mode: Mode) -> "SearchBudget":
        return SearchBudget(1, self.samples_per_expansion, self.max_expansions, self.wall_clock_limit_s, mode)


_BUDGET = re.compile(r"\s*(\d+)\s*[xX×]\s*(\d+)\s*[xX×]\s*(\d+)\s*\Z")


def parse_budget(text: str, mode: str | Mode = Mode.BF, time_limit_s: float = math.inf) -> SearchBudget:
    """``"256x32x600"`` -> ``SearchBudget(256, 32, 600)``."""
    m = _BUDGET.match(text)
    if not m:
        raise ValueError(f"budget must look like PxSxK, got {text!r}")
    p, s, k = (int(g) for g in m.groups())
    return SearchBudget(p, s, k, time_limit_s, Mode(mode))


@dataclass
class AttemptOutcome:
    statement_id: str
    pass_index: int
    mode: str
    proof: tuple[str, ...] | None
    expansions_used: int
    wall_time_s: float
    nodes_created: int
    terminated_by: str
    policy_calls: int = 0
    max_candidates: int = 0
    budget_S: int = 0
    budget_K: int = 0
    seed: int = 0
    error: str | None = None
    tree: SearchTree | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if (self.proof is not None) != (self.terminated_by == "proof"):
            raise ValueError("proof must be present exactly when terminated_by == 'proof'")

    @property
    def valid(self) -> bool:
        return self.proof is not None

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("tree")
        d["proof"] = list(self.proof) if self.proof is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AttemptOutcome":
        fields = {k: v for k, v in d.items() if k in cls.__dataclass_fields__ and k != "tree"}
        if fields.get("proof") is not None:
            fields["proof"] = tuple(fields["proof"])
        return cls(**fields)


def write_outcomes(path, outcomes: Iterable[AttemptOutcome]) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        for o in outcomes:
            fh.write(json.dumps(o.to_dict(), ensure_ascii=False) + "\n")


def read_outcomes(path) -> list[AttemptOutcome]:
    with open(path, encoding="utf-8") as fh:
        return [AttemptOutcome.from_dict(json.loads(line)) for line in fh if line.strip()]


def bf_priority(node: TreeNode) -> float:
    """Mean log-likelihood of the tactics leading to ``node``."""
    if node.depth == 0:
        raise ValueError("the root has no incoming tactics")
    return node.path_logprob_sum / node.depth


def cg_priority(critic: Any, node: TreeNode) -> float:
    return score_states(critic, [node.state])[0]


def run_attempt(
    statement: Statement,
    env: Any,
    policy: Any,
    critic: Any,
    budget: SearchBudget,
    seed: int,
    *,
    mode: Mode | str | None = None,
    pass_index: int = 0,
    temperature: float = DEFAULT_TEMPERATURE,
    keep_tree: bool = True,
    clock: Callable[[], float] = time.monotonic,
) -> AttemptOutcome:
    """One independent search pass over ``statement``."""
    mode = Mode(mode or budget.mode)
    if mode is Mode.BF_PLUS_CG:
        raise ValueError("a single attempt runs either bf or cg")
    if mode is Mode.CG and critic is None:
        raise ValueError("critic-guided search needs a critic")
    S, K = budget.samples_per_expansion, budget.max_expansions
    rng = np.random.default_rng(seed)
    start = clock()
    tree = SearchTree()
    heap: list[tuple[float, int, int, int]] = []
    version: dict[int, int] = {}
    expansions = policy_calls = max_candidates = 0

    def push(nodes: Sequence[TreeNode]) -> None:
        if not nodes:
            return
        if mode is Mode.BF:
            prio = [bf_priority(n) for n in nodes]
        else:
            prio = score_states(critic, [n.state for n in nodes])
        for n, p in zip(nodes, prio):
            version[n.id] = version.get(n.id, -1) + 1
            heapq.heappush(heap, (-p, n.depth, n.id, version[n.id]))

    def finish(terminated_by: str, proof=None, error=None) -> AttemptOutcome:
        return AttemptOutcome(
            statement.id,
            pass_index,
            mode.value,
            proof,
            expansions,
            clock() - start,
            len(tree),
            terminated_by,
            policy_calls,
            max_candidates,
            S,
            K,
            seed,
            error,
            tree if keep_tree else None,
        )

    try:
        root = tree.add(env.init_state(statement), None, None, 0.0)
        version[root.id] = 0
        heapq.heappush(heap, (-math.inf, 0, root.id, 0))
        while True:
            if expansions >= K:
                return finish("budget_K")
            if clock() - start > budget.wall_clock_limit_s:
                return finish("budget_time")
            node = None
            while heap:
                _, _, nid, ver = heapq.heappop(heap)
                cand = tree.nodes[nid]
                if ver == version[nid] and cand.status is NodeStatus.OPEN:
                    node = cand
                    break
            if node is None:
                return finish("frontier_empty")
            expansions += 1
            node.status = NodeStatus.EXPANDED
            before, _ = tree.path_to(node.id)
            prompt = render_prompt(statement.id, before, node.state)
            try:
                candidates = sample_tactics(policy, node.state, prompt, S, temperature, rng)
            except EmptyProposal:
                node.status = NodeStatus.EXHAUSTED
                continue
            finally:
                policy_calls += 1
            max_candidates = max(max_candidates, len(candidates))
            fresh: list[TreeNode] = []
            for cand in candidates:
                result = env.apply_tactic(node.state, cand.tactic)
                if isinstance(result, Failed):
                    tree.dead_edges.append((node.id, cand.tactic, result.reason))
                    continue
                if isinstance(result, Solved):
                    leaf = tree.add(env.no_goals(), node, cand.tactic, cand.logprob)
                    leaf.status = NodeStatus.TERMINAL
                    tactics, _ = tree.path_to(leaf.id)
                    try:
                        replay(env, statement, tactics)
                    except ReplayError as exc:
                        raise ReplayMismatch(str(exc)) from exc
                    return finish("proof", tuple(tactics))
                child_state = result.new_state
                new_sum = node.path_logprob_sum + cand.logprob
                existing = tree.node_id(child_state.fingerprint)
                if existing is None:
                    fresh.append(tree.add(child_state, node, cand.tactic, cand.logprob))
                    continue
                other = tree.nodes[existing]
                # keep the higher-likelihood arrival while the duplicate is still unexpanded
                if other.status is NodeStatus.OPEN and other.path_logprob_sum < new_sum and other.parent is not None:
                    tree.reparent(other, node, cand.tactic, cand.logprob)
                    fresh.append(other)
            if not tree.children[node.id]:
                node.status = NodeStatus.EXHAUSTED
            push(fresh)
    except INFRASTRUCTURE_ERRORS as exc:
        return finish("infrastructure", error=f"{type(exc).__name__}: {exc}")


def _pass_modes(budget: SearchBudget) -> list[Mode]:
    if budget.mode is Mode.BF_PLUS_CG:
        half = budget.passes // 2
        return [Mode.BF] * half + [Mode.CG] * (budget.passes - half)
    return [budget.mode] * budget.passes


def run_passes(
    statement: Statement,
    env: Any,
    policy: Any,
    critic: Any,
    budget: SearchBudget,
    base_seed: int = 0,
    *,
    temperature: float = DEFAULT_TEMPERATURE,
    workers: int = 1,
    seed_stride: int = 1,
    keep_tree: bool = True,
) -> list[AttemptOutcome]:
    """``P`` independent attempts, pass ``i`` seeded with ``base_seed + i * seed_stride``."""
    jobs = [
        (i, m, base_seed + i * seed_stride) for i, m in enumerate(_pass_modes(budget))
    ]

    def one(job: tuple[int, Mode, int]) -> AttemptOutcome:
        i, m, seed = job
        return run_attempt(
            statement,
            env,
            policy,
            critic,
            budget.single_pass(m),
            seed,
            mode=m,
            pass_index=i,
            temperature=temperature,
            keep_tree=keep_tree,
        )

    if workers <= 1:
        return [one(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, jobs))


def shortest_outcome(outcomes: Iterable[AttemptOutcome]) -> AttemptOutcome | None:
    best = None
    for o in outcomes:
        if o.proof is None:
            continue
        if best is None or (len(o.proof), o.pass_index) < (len(best.proof), best.pass_index):
            best = o
    return best


def shortest_proof(outcomes: Iterable[AttemptOutcome]) -> tuple[str, ...] | None:
    """Fewest-tactic proof among successful attempts; ties go to the earliest pass."""
    best = shortest_outcome(outcomes)
    return best.proof if best is not None else None


def proof_path(env: Any, outcome: AttemptOutcome, statement: Statement) -> ProofPath:
    return replay(env, statement, outcome.proof)

"""Expert-iteration driver.

Each round searches every still-unsolved statement under that round's budget,
tries the negation of each statement it could not prove, removes solved
statements (and their negations) from the pool, and hands the new proofs and
preference pairs to the learners.  Budgets grow round by round up to a cap.
"""

from __future__ import annotations

import json
import logging
import math
import threading
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from stepforge.critic import (
    PreferencePair,
    extract_path_pairs,
    extract_sibling_pairs,
    hygiene,
    score_states,
    train_critic,
)
from stepforge.env import (
    MissingNegation,
    ProofPath,
    Statement,
    format_formula,
    parse_formula,
    replay,
)
from stepforge.ledger import RunLedger
from stepforge.policy import DEFAULT_TEMPERATURE, LearnedPolicy, render_prompt, update_from_trajectories
from stepforge.search import AttemptOutcome, Mode, SearchBudget, run_passes, shortest_outcome

__all__ = [
    "MAX_EXPANSIONS_CAP",
    "MAX_TIME_CAP_S",
    "RoundConfig",
    "RoundReport",
    "ProblemPool",
    "ProofRecord",
    "ProofStore",
    "EnvironmentSoundnessError",
    "default_schedule",
    "validate_schedule",
    "schedule_budget",
    "schedule_from_records",
    "schedule_to_records",
    "run_round",
    "rank_unsolved",
    "reprove_shorter",
    "export_sft",
    "run_expert_iteration",
    "read_dataset",
    "write_dataset",
]

log = logging.getLogger(__name__)

MAX_EXPANSIONS_CAP = 2000
MAX_TIME_CAP_S = 3600.0


class EnvironmentSoundnessError(RuntimeError):
    """A statement and its negation both verified."""


@dataclass(frozen=True)
class RoundConfig:
    round_index: int
    budget: SearchBudget
    time_limit_s: float
    rank_filter: float | None = None


def default_schedule() -> list[RoundConfig]:
    """Rapid scan first (10 expansions, 50 s), escalating to 2000 expansions / 3600 s."""
    ladder = [(10, 50.0), (50, 120.0), (200, 600.0), (600, 1800.0), (2000, 3600.0)]
    out = []
    for i, (k, t) in enumerate(ladder):
        if i < 2:
            budget = SearchBudget(1, 32, k, t, Mode.BF)
        else:
            budget = SearchBudget(2, 32, k, t / 2, Mode.BF_PLUS_CG)
        out.append(RoundConfig(i, budget, t, 0.5 if i >= 2 else None))
    return out


def validate_schedule(schedule: Sequence[RoundConfig]) -> None:
    if not schedule:
        raise ValueError("schedule must be non-empty")
    prev_k, prev_t = 0, 0.0
    for cfg in schedule:
        k = cfg.budget.max_expansions
        if k > MAX_EXPANSIONS_CAP or cfg.time_limit_s > MAX_TIME_CAP_S:
            raise ValueError(f"round {cfg.round_index} exceeds the budget cap")
        if k < prev_k or cfg.time_limit_s < prev_t:
            raise ValueError("budgets must be non-decreasing across rounds")
        prev_k, prev_t = k, cfg.time_limit_s


def schedule_budget(round_index: int, schedule: Sequence[RoundConfig]) -> RoundConfig:
    """The config for ``round_index``, clamped to the last schedule entry."""
    validate_schedule(schedule)
    cfg = schedule[min(round_index, len(schedule) - 1)]
    if cfg.round_index != round_index:
        cfg = RoundConfig(round_index, cfg.budget, cfg.time_limit_s, cfg.rank_filter)
    return cfg


def schedule_from_records(records: Sequence[dict[str, Any]]) -> list[RoundConfig]:
    """Rounds from ``{"budget": "PxSxK", "mode", "time_limit_s", "rank_filter"}`` records.

    The round's time limit is per problem; each of its ``P`` passes gets an
    equal share as its wall-clock limit.
    """
    from stepforge.search import parse_budget

    out = []
    for i, rec in enumerate(records):
        t = float(rec.get("time_limit_s", MAX_TIME_CAP_S))
        b = parse_budget(rec["budget"], rec.get("mode", "bf"))
        budget = SearchBudget(b.passes, b.samples_per_expansion, b.max_expansions, t / b.passes, b.mode)
        out.append(RoundConfig(i, budget, t, rec.get("rank_filter")))
    validate_schedule(out)
    return out


def schedule_to_records(schedule: Sequence[RoundConfig]) -> list[dict[str, Any]]:
    return [
        {
            "budget": str(cfg.budget),
            "mode": cfg.budget.mode.value,
            "time_limit_s": cfg.time_limit_s,
            "rank_filter": cfg.rank_filter,
        }
        for cfg in schedule
    ]


def read_dataset(path: str | Path) -> list[Statement]:
    with open(path, encoding="utf-8") as fh:
        return [Statement.from_dict(json.loads(line)) for line in fh if line.strip()]


def write_dataset(path: str | Path, statements: Iterable[Statement]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for st in statements:
            fh.write(json.dumps(st.to_dict(), ensure_ascii=False) + "\n")


def _canonical(text: str) -> str:
    try:
        return format_formula(parse_formula(text))
    except ValueError:
        return text


class ProblemPool:
    """Statuses for a fixed statement set: unsolved, proved, disproved or pruned."""

    def __init__(self, statements: Iterable[Statement]):
        self.statements: dict[str, Statement] = {}
        for st in statements:
            if st.id in self.statements:
                raise ValueError(f"duplicate statement id {st.id!r}")
            self.statements[st.id] = st
        self.status = {sid: "unsolved" for sid in self.statements}
        self.attempt_log: dict[int, list[str]] = {}
        self._by_goal: dict[str, list[str]] = {}
        for st in self.statements.values():
            self._by_goal.setdefault(_canonical(st.goal_text), []).append(st.id)
        self._lock = threading.Lock()

    def copy(self) -> "ProblemPool":
        other = ProblemPool(self.statements.values())
        other.status = dict(self.status)
        other.attempt_log = {k: list(v) for k, v in self.attempt_log.items()}
        return other

    def unsolved(self) -> list[Statement]:
        return [self.statements[s] for s, st in self.status.items() if st == "unsolved"]

    def mark(self, sid: str, status: str, negation_goal: str | None = None) -> int:
        """Set ``sid``'s status and prune unsolved statements equal to its negation."""
        with self._lock:
            self.status[sid] = status
            pruned = 0
            if negation_goal is not None:
                for other in self._by_goal.get(_canonical(negation_goal), ()):
                    if self.status[other] == "unsolved":
                        self.status[other] = "pruned"
                        pruned += 1
            return pruned

    def solved_count(self) -> int:
        return sum(st in ("proved", "disproved") for st in self.status.values())


@dataclass
class ProofRecord:
    id: str
    direction: str
    tactics: tuple[str, ...]
    round: int
    mode: str = ""
    history: list[int] = field(default_factory=list)

    @property
    def length(self) -> int:
        return len(self.tactics)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "direction": self.direction,
            "tactics": list(self.tactics),
            "length": self.length,
            "round": self.round,
            "mode": self.mode,
            "history": list(self.history),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ProofRecord":
        return cls(d["id"], d["direction"], tuple(d["tactics"]), d["round"], d.get("mode", ""), list(d["history"]))


class ProofStore:
    """Best known proof (or disproof) per statement id."""

    def __init__(self, records: Iterable[ProofRecord] = ()):
        self.records: dict[str, ProofRecord] = {r.id: r for r in records}
        self._lock = threading.Lock()

    def copy(self) -> "ProofStore":
        return ProofStore(
            ProofRecord(r.id, r.direction, r.tactics, r.round, r.mode, list(r.history))
            for r in self.records.values()
        )

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(sorted(self.records.values(), key=lambda r: r.id))

    def offer(self, sid: str, direction: str, tactics: Sequence[str], round_index: int, mode: str = "") -> bool:
        """Store ``tactics`` if new or strictly shorter than the stored proof."""
        tactics = tuple(tactics)
        with self._lock:
            cur = self.records.get(sid)
            if cur is None:
                self.records[sid] = ProofRecord(sid, direction, tactics, round_index, mode, [len(tactics)])
                return True
            if cur.direction != direction:
                raise EnvironmentSoundnessError(f"{sid} verified both as proved and disproved")
            if len(tactics) < cur.length:
                cur.tactics, cur.round, cur.mode = tactics, round_index, mode
                cur.history.append(len(tactics))
                return True
            return False

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for r in self:
                fh.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ProofStore":
        with open(path, encoding="utf-8") as fh:
            return cls(ProofRecord.from_dict(json.loads(line)) for line in fh if line.strip())


@dataclass
class RoundReport:
    round_index: int
    attempted: int = 0
    proved: int = 0
    disproved: int = 0
    pruned: int = 0
    cumulative_solved: int = 0
    cpu_seconds_total: float = 0.0
    new_proofs: list[ProofPath] = field(default_factory=list, repr=False)
    pairs: list[PreferencePair] = field(default_factory=list, repr=False)
    # (problem id, direction, proof path, search tree) per successful attempt
    trees: list[tuple[str, str, ProofPath, Any]] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "round": self.round_index,
            "attempted": self.attempted,
            "proved": self.proved,
            "disproved": self.disproved,
            "pruned": self.pruned,
            "cumulative_solved": self.cumulative_solved,
            "cpu_seconds_total": self.cpu_seconds_total,
        }


def _seed_for(seed: int, round_index: int, sid: str) -> int:
    return (seed * 1_000_003 + zlib.crc32(f"{round_index}:{sid}".encode())) % (2**31 - 1)


def _pairs_from(
    outcomes: Sequence[AttemptOutcome], path_for: Callable[[AttemptOutcome], ProofPath]
) -> tuple[list[PreferencePair], list[tuple[ProofPath, Any]]]:
    pairs, trees = [], []
    for o in outcomes:
        if o.proof is None or o.tree is None:
            continue
        path = path_for(o)
        pairs += extract_path_pairs(path)
        pairs += extract_sibling_pairs(o.tree, path)
        trees.append((path, o.tree))
    return pairs, trees


def rank_unsolved(critic: Any, statements: Sequence[Statement], fraction: float = 0.5, env: Any = None) -> list[Statement]:
    """Top ``ceil(fraction * n)`` statements by critic score of their root state."""
    from stepforge.env import ToyEnv

    env = env or ToyEnv()
    if not statements:
        return []
    scores = score_states(critic, [env.init_state(s) for s in statements])
    ranked = sorted(zip(statements, scores), key=lambda x: (-x[1], x[0].id))
    keep = math.ceil(fraction * len(statements) - 1e-9)
    return [s for s, _ in ranked[:keep]]


def run_round(
    pool: ProblemPool,
    config: RoundConfig,
    env: Any,
    policy: Any,
    critic: Any,
    ledger: RunLedger,
    store: ProofStore,
    *,
    seed: int = 0,
    workers: int = 1,
    temperature: float = DEFAULT_TEMPERATURE,
    collect_pairs: bool = False,
) -> RoundReport:
    """Search every selected unsolved statement once (with a disproof fallback)."""
    r = config.round_index
    budget = config.budget
    if budget.mode is not Mode.BF and critic is None:
        budget = SearchBudget(budget.passes, budget.samples_per_expansion, budget.max_expansions,
                              budget.wall_clock_limit_s, Mode.BF)
    selected = pool.unsolved()
    if config.rank_filter is not None and critic is not None and r >= 2:
        selected = rank_unsolved(critic, selected, config.rank_filter, env)
    report = RoundReport(r, attempted=len(selected))
    pool.attempt_log[r] = [s.id for s in selected]
    before = dict(pool.status)
    report_lock = threading.Lock()

    def search(st: Statement) -> list[AttemptOutcome]:
        return run_passes(st, env, policy, critic, budget, _seed_for(seed, r, st.id),
                          temperature=temperature, keep_tree=collect_pairs)

    def work(st: Statement) -> None:
        outcomes = search(st)
        for o in outcomes:
            ledger.append(o, round_index=r, direction="proof", problem_id=st.id)
        cpu = sum(o.wall_time_s for o in outcomes) * ledger.cores_per_attempt
        best = shortest_outcome(outcomes)
        target, direction = st, "proof"
        if best is None:
            try:
                target = env.negate(st)
            except MissingNegation:
                target = None
            if target is not None:
                direction = "disproof"
                outcomes = search(target)
                for o in outcomes:
                    ledger.append(o, round_index=r, direction=direction, problem_id=st.id)
                cpu += sum(o.wall_time_s for o in outcomes) * ledger.cores_per_attempt
                best = shortest_outcome(outcomes)
        found = []
        pairs, trees = [], []
        if best is not None:
            path = replay(env, target, best.proof)
            store.offer(st.id, direction, best.proof, r, best.mode)
            neg_goal = None
            if direction == "proof":
                try:
                    neg_goal = env.negate(st).goal_text
                except MissingNegation:
                    pass
            pool.mark(st.id, "proved" if direction == "proof" else "disproved", neg_goal)
            found.append(path)
            if collect_pairs:
                pairs, trees = _pairs_from(outcomes, lambda o: replay(env, target, o.proof))
        with report_lock:
            report.cpu_seconds_total += cpu
            if best is not None:
                if direction == "proof":
                    report.proved += 1
                else:
                    report.disproved += 1
            report.new_proofs += found
            report.pairs += pairs
            report.trees += [(st.id, direction, path, tree) for path, tree in trees]

    if workers <= 1:
        for st in selected:
            work(st)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(work, selected))
    # concurrent completion order must not leak into the report
    order = {s.id: i for i, s in enumerate(selected)}
    report.new_proofs.sort(key=lambda p: order.get(p.statement.id.removesuffix(".neg"), 0))
    report.pairs.sort(key=lambda p: order.get(p.source_proof_id.removesuffix(".neg"), 0))
    report.trees.sort(key=lambda t: order.get(t[0], 0))
    # a selected statement is searched even if a sibling pruned it mid-round,
    # so pruning is counted from final statuses only
    report.pruned = sum(pool.status[s] == "pruned" and before[s] != "pruned" for s in before)
    report.cumulative_solved = pool.solved_count()
    log.info("round %d: %s", r, report.to_dict())
    return report


def _target(env: Any, st: Statement, direction: str) -> Statement:
    return env.negate(st) if direction == "disproof" else st


def reprove_shorter(
    store: ProofStore,
    statements: dict[str, Statement],
    budget: SearchBudget,
    env: Any,
    policy: Any,
    critic: Any = None,
    *,
    seed: int = 0,
    round_index: int = 0,
    ledger: RunLedger | None = None,
) -> ProofStore:
    """Search solved statements again; keep strictly shorter verified proofs."""
    for rec in list(store):
        target = _target(env, statements[rec.id], rec.direction)
        outcomes = run_passes(target, env, policy, critic, budget,
                              _seed_for(seed, round_index, "re:" + rec.id), keep_tree=False)
        if ledger is not None:
            for o in outcomes:
                ledger.append(o, round_index=round_index, direction=rec.direction, problem_id=rec.id)
        best = shortest_outcome(outcomes)
        if best is not None:
            replay(env, target, best.proof)
            store.offer(rec.id, rec.direction, best.proof, round_index, best.mode)
    return store


def export_sft(store: ProofStore, statements: dict[str, Statement], env: Any = None) -> list[dict[str, str]]:
    """One ``{"prompt", "completion"}`` record per proof step, in store order."""
    from stepforge.env import ToyEnv

    env = env or ToyEnv()
    records = []
    for rec in store:
        target = _target(env, statements[rec.id], rec.direction)
        path = replay(env, target, rec.tactics)
        for t, tactic in enumerate(path.tactics):
            prompt = render_prompt(target.id, path.tactics[:t], path.states[t])
            records.append({"prompt": prompt.rendered, "completion": tactic})
    return records


def run_expert_iteration(
    pool: ProblemPool,
    schedule: Sequence[RoundConfig],
    env: Any,
    policy: LearnedPolicy,
    *,
    rounds: int,
    ledger: RunLedger,
    store: ProofStore,
    critic: Any = None,
    seed: int = 0,
    workers: int = 1,
    critic_epochs: int = 300,
    critic_lr: float = 0.3,
    reprove_budget: SearchBudget | None = None,
    on_round: Callable[[RoundReport], None] | None = None,
) -> tuple[list[RoundReport], LearnedPolicy, Any]:
    """Alternate search rounds with policy and critic refits from everything found so far.

    ``on_round`` sees each report right after its round, before the refits.
    """
    reports = []
    all_pairs: list[PreferencePair] = []
    for r in range(rounds):
        cfg = schedule_budget(r, schedule)
        report = run_round(pool, cfg, env, policy, critic, ledger, store,
                           seed=seed, workers=workers, collect_pairs=True)
        reports.append(report)
        if on_round is not None:
            on_round(report)
        if isinstance(policy, LearnedPolicy):
            policy = update_from_trajectories(policy, report.new_proofs)
        all_pairs += report.pairs
        clean = hygiene(all_pairs, 0.10, seed)
        if clean:
            critic = train_critic(clean, critic_epochs, critic_lr, seed).params
        if reprove_budget is not None and len(store):
            reprove_shorter(store, pool.statements, reprove_budget, env, policy, critic,
                            seed=seed, round_index=r, ledger=ledger)
    return reports, policy, critic

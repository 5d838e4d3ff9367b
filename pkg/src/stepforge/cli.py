"""Command-line entry point.

A run directory holds ``dataset.jsonl``, ``ledger.jsonl``, ``store.jsonl``,
``pairs.jsonl``, ``trees.jsonl``, ``policy.json`` and ``critic.json``.
Tabular output goes to stdout as CSV; JSONL outputs go to stdout unless
``--out`` is given.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from stepforge import analytics
from stepforge.critic import (
    CriticParams,
    extract_path_pairs,
    extract_sibling_pairs,
    hygiene,
    pair_accuracy,
    read_pairs,
    train_critic,
    write_pairs,
)
from stepforge.env import ToyEnv, replay
from stepforge.iterate import (
    ProblemPool,
    ProofStore,
    default_schedule,
    export_sft,
    read_dataset,
    run_expert_iteration,
    schedule_from_records,
    write_dataset,
)
from stepforge.ledger import RunLedger
from stepforge.policy import DEFAULT_TEMPERATURE, HeuristicPolicy, LearnedPolicy
from stepforge.search import SearchTree, parse_budget, run_passes

SEED_ENV = "STEPFORGE_SEED"

log = logging.getLogger("stepforge")


def default_seed() -> int:
    return int(os.environ.get(SEED_ENV, "0"))


def _emit_jsonl(records, out: str | None) -> None:
    fh = open(out, "w", encoding="utf-8") if out else sys.stdout
    try:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    finally:
        if out:
            fh.close()


def _load_policy(source: str) -> Any:
    if source == "heuristic":
        return HeuristicPolicy()
    if source == "learned":
        return LearnedPolicy()
    return LearnedPolicy.from_dict(json.loads(Path(source).read_text()))


def _load_critic(path: str | None) -> CriticParams | None:
    return CriticParams.from_dict(json.loads(Path(path).read_text())) if path else None


def _ledger_path(args, run_dir: Path | None) -> Path | None:
    if args.ledger:
        return Path(args.ledger)
    return run_dir / "ledger.jsonl" if run_dir is not None else None


def cmd_search(args) -> int:
    statements = read_dataset(args.statement_file)
    budget = parse_budget(args.budget, args.mode, args.time_limit_s)
    critic = _load_critic(args.critic)
    if budget.mode.value != "bf" and critic is None:
        raise SystemExit("--mode cg and bf+cg need --critic")
    policy = _load_policy(args.policy)
    path = _ledger_path(args, None)
    ledger = RunLedger(path, command="search", budget=str(budget), mode=budget.mode.value, seed=args.seed)
    env = ToyEnv()
    records = []
    for i, st in enumerate(statements):
        outcomes = run_passes(st, env, policy, critic, budget, args.seed + i * budget.passes,
                              temperature=args.temperature, workers=args.workers, keep_tree=False)
        ledger.extend(outcomes)
        records += [o.to_dict() for o in outcomes]
    _emit_jsonl(records, args.out)
    return 0


def cmd_iterate(args) -> int:
    statements = read_dataset(args.dataset)
    run_dir = Path(args.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    if args.schedule:
        schedule = schedule_from_records(json.loads(Path(args.schedule).read_text()))
    else:
        schedule = default_schedule()
    write_dataset(run_dir / "dataset.jsonl", statements)
    ledger = RunLedger(_ledger_path(args, run_dir), command="iterate", seed=args.seed, rounds=args.rounds)
    store = ProofStore()
    policy = _load_policy(args.policy)
    pairs_fh = open(run_dir / "pairs.jsonl", "w", encoding="utf-8")
    trees_fh = open(run_dir / "trees.jsonl", "w", encoding="utf-8")

    def on_round(report) -> None:
        for p in report.pairs:
            pairs_fh.write(json.dumps(p.to_dict(), ensure_ascii=False) + "\n")
        for pid, direction, path, tree in report.trees:
            rec = {
                "problem_id": pid,
                "direction": direction,
                "round": report.round_index,
                "tactics": list(path.tactics),
                "tree": tree.to_dict(),
            }
            trees_fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
        # the files hold them now
        report.trees.clear()
        print(json.dumps(report.to_dict()), file=sys.stderr)

    try:
        _, policy, critic = run_expert_iteration(
            ProblemPool(statements), schedule, ToyEnv(), policy,
            rounds=args.rounds, ledger=ledger, store=store, seed=args.seed,
            workers=args.workers, on_round=on_round,
        )
    finally:
        pairs_fh.close()
        trees_fh.close()
    store.save(run_dir / "store.jsonl")
    if isinstance(policy, LearnedPolicy):
        (run_dir / "policy.json").write_text(json.dumps(policy.to_dict()))
    if critic is not None:
        (run_dir / "critic.json").write_text(json.dumps(critic.to_dict()))
    return 0


def cmd_extract_pairs(args) -> int:
    """Path and sibling pairs rebuilt from the saved trees, then cleaned."""
    run_dir = Path(args.run_dir)
    statements = {s.id: s for s in read_dataset(run_dir / "dataset.jsonl")}
    env = ToyEnv()
    pairs = []
    with open(run_dir / "trees.jsonl", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            st = statements[rec["problem_id"]]
            target = env.negate(st) if rec["direction"] == "disproof" else st
            path = replay(env, target, rec["tactics"])
            tree = SearchTree.from_dict(rec["tree"])
            pairs += extract_path_pairs(path)
            pairs += extract_sibling_pairs(tree, path)
    if not args.raw:
        pairs = hygiene(pairs, args.no_goals_fraction, args.seed)
    if args.out:
        write_pairs(args.out, pairs)
    else:
        _emit_jsonl((p.to_dict() for p in pairs), None)
    return 0


def cmd_train_critic(args) -> int:
    pairs = read_pairs(args.pairs)
    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(pairs))
    n_test = int(round(args.holdout * len(pairs)))
    test = [pairs[i] for i in order[:n_test]]
    train = [pairs[i] for i in order[n_test:]]
    report = train_critic(train, args.epochs, args.lr, args.seed)
    summary = {"train_pairs": len(train), "final_loss": report.final_loss,
               "train_accuracy": pair_accuracy(report.params, train)}
    if test:
        summary["holdout_pairs"] = len(test)
        summary["holdout_accuracy"] = pair_accuracy(report.params, test)
    print(json.dumps(summary), file=sys.stderr)
    text = json.dumps(report.params.to_dict())
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0


def cmd_export_sft(args) -> int:
    run_dir = Path(args.run_dir)
    statements = {s.id: s for s in read_dataset(run_dir / "dataset.jsonl")}
    store = ProofStore.load(run_dir / "store.jsonl")
    _emit_jsonl(export_sft(store, statements), args.out)
    return 0


def cmd_stats(args) -> int:
    run_dir = Path(args.run_dir)
    ledger = RunLedger.load(_ledger_path(args, run_dir))
    entries = ledger.entries
    store_path = run_dir / "store.jsonl"
    store = list(ProofStore.load(store_path)) if store_path.exists() else []
    dataset_path = run_dir / "dataset.jsonl"
    n = len(read_dataset(dataset_path)) if dataset_path.exists() else None
    out = sys.stdout
    if args.pass_at:
        ns = [int(x) for x in args.pass_at.split(",")]
        res = analytics.pass_at_n(entries, ns)
        out.write(analytics.to_csv([(k, v) for k, v in res.items()], ["n", "pass_at_n"]))
    elif args.hist:
        hist = analytics.length_histogram(store)
        out.write(analytics.to_csv(sorted(hist.items()), ["length", "count"]))
    elif args.fit:
        fit = analytics.loglinear_fit(analytics.length_histogram(store), args.min_count)
        out.write(analytics.to_csv([(fit.slope, fit.intercept, fit.r_squared, fit.n_points)],
                                   ["slope", "intercept", "r_squared", "n_points"]))
    elif args.cpu:
        per = analytics.cpu_per_proof_by_problem(entries)
        out.write(analytics.to_csv(sorted(per.items()), ["problem_id", "cpu_seconds_per_proof"]))
    else:
        rows = analytics.summary_table(entries, store, n)
        out.write(analytics.to_csv(
            [(r.label, r.count, r.percent, r.cpu_days, r.cpu_percent) for r in rows],
            ["status", "count", "percent", "cpu_days", "cpu_percent"],
        ))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stepforge", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--ledger", help="run ledger path (JSONL)")
        p.add_argument("--seed", type=int, default=default_seed(),
                       help=f"global seed (default: ${SEED_ENV} or 0)")

    p = sub.add_parser("search", help="search each statement of a JSONL file")
    p.add_argument("statement_file")
    p.add_argument("--budget", default="1x32x600", help="PxSxK")
    p.add_argument("--mode", default="bf", choices=["bf", "cg", "bf+cg"])
    p.add_argument("--time-limit-s", type=float, default=float("inf"), help="per attempt")
    p.add_argument("--temperature", type=float, default=DEFAULT_TEMPERATURE)
    p.add_argument("--policy", default="heuristic", help="heuristic, learned, or a policy.json")
    p.add_argument("--critic", help="critic.json (needed for cg)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="outcome JSONL path")
    common(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("iterate", help="run expert-iteration rounds over a dataset")
    p.add_argument("dataset")
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--schedule", help="JSON list of round records")
    p.add_argument("--run-dir", default="run")
    p.add_argument("--policy", default="learned")
    p.add_argument("--workers", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_iterate)

    p = sub.add_parser("extract-pairs", help="preference pairs from a run's trees")
    p.add_argument("run_dir")
    p.add_argument("--no-goals-fraction", type=float, default=0.10)
    p.add_argument("--raw", action="store_true", help="skip dedup and downsampling")
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_extract_pairs)

    p = sub.add_parser("train-critic", help="fit a critic on a pair file")
    p.add_argument("pairs")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_train_critic)

    p = sub.add_parser("export-sft", help="prompt/completion records from a run's proofs")
    p.add_argument("run_dir")
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_export_sft)

    p = sub.add_parser("stats", help="CSV statistics over a run")
    p.add_argument("run_dir")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--table", action="store_true", help="solved/unsolved summary (default)")
    g.add_argument("--hist", action="store_true", help="shortest-proof length histogram")
    g.add_argument("--fit", action="store_true", help="log-linear fit of the length histogram")
    g.add_argument("--cpu", action="store_true", help="CPU seconds per proof by problem")
    g.add_argument("--pass-at", help="comma-separated N values")
    p.add_argument("--min-count", type=float, default=1)
    common(p)
    p.set_defaults(func=cmd_stats)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BrokenPipeError:
        # downstream closed early (e.g. `| head`); not an error
        sys.stderr.close()
        return 0


if __name__ == "__main__":
    sys.exit(main())

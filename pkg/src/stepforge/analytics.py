"""Aggregate statistics over a run ledger and a proof store.

All reductions are sums and counts, so aggregating a ledger in chunks and
merging gives the same result as one pass over the whole ledger.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from stepforge.ledger import LedgerEntry

__all__ = [
    "FitResult",
    "InsufficientData",
    "SummaryRow",
    "REFERENCE_RUN",
    "cpu_per_proof",
    "cpu_per_proof_by_problem",
    "length_histogram",
    "loglinear_fit",
    "pass_at_n",
    "summary_table",
    "mode_length_means",
    "to_csv",
]

SECONDS_PER_DAY = 86400.0

# headline numbers from the original large-scale run; documentation only
REFERENCE_RUN = {
    "bf_mean_length": 1.66,
    "cg_mean_length": 4.44,
    "solved": 14075,
    "solved_fraction": 0.170,
    "solved_cpu_days": 331,
    "solved_cpu_share": 0.015,
    "total_cpu_days": 21364,
    "critic_pair_accuracy": 0.780,
    "critic_eval_pairs": 6510,
}


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def cpu_per_proof(entries: Sequence[LedgerEntry]) -> float | None:
    """Total CPU seconds over all attempts divided by the number of valid attempts."""
    if not entries:
        raise ValueError("need at least one ledger entry")
    valid = sum(e.valid for e in entries)
    if valid == 0:
        return None
    return sum(e.cpu_seconds for e in entries) / valid


def cpu_per_proof_by_problem(entries: Iterable[LedgerEntry]) -> dict[str, float]:
    """Per-problem CPU cost of a proof; unsolved problems are left out."""
    groups: dict[str, list[LedgerEntry]] = defaultdict(list)
    for e in entries:
        groups[e.problem_id].append(e)
    out = {}
    for pid, es in groups.items():
        c = cpu_per_proof(es)
        if c is not None:
            out[pid] = c
    return out


def length_histogram(store: Iterable) -> dict[int, int]:
    """Count of problems per shortest-proof length (one contribution per problem)."""
    hist: Counter = Counter()
    for rec in store:
        lengths = list(rec.history) + [rec.length]
        hist[min(lengths)] += 1
    return dict(sorted(hist.items()))


def loglinear_fit(histogram: Mapping[float, float], min_count: float = 1) -> FitResult:
    """Least-squares line through ``(value, ln count)`` over buckets with ``count >= min_count``."""
    pts = [(float(k), float(v)) for k, v in sorted(histogram.items()) if v >= min_count and v > 0]
    if len(pts) < 2:
        raise InsufficientData(f"need >= 2 populated buckets, got {len(pts)}")
    x = np.array([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    n = len(x)
    sx, sy = x.sum(), y.sum()
    sxx, sxy = (x * x).sum(), (x * y).sum()
    denom = n * sxx - sx * sx
    if denom == 0:
        raise InsufficientData("all buckets share one value")
    slope = (n * sxy - sx * sy) / denom
    intercept = (sy - slope * sx) / n
    resid = y - (slope * x + intercept)
    ss_tot = ((y - y.mean()) ** 2).sum()
    ss_res = (resid**2).sum()
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return FitResult(float(slope), float(intercept), float(min(max(r2, 0.0), 1.0)), n)


def pass_at_n(entries: Iterable[LedgerEntry], ns: Sequence[int]) -> dict[int, float]:
    """Share of problems with a valid attempt among their first ``N`` attempts.

    Attempts are grouped by problem, so a disproof counts for the problem it
    settles, and ordered by (round, proof before disproof, pass index).
    """
    groups: dict[str, list[LedgerEntry]] = defaultdict(list)
    for e in entries:
        groups[e.problem_id].append(e)
    if not groups:
        return {n: 0.0 for n in ns}
    first_valid = []
    short = 0
    for es in groups.values():
        es = sorted(es, key=lambda e: (e.round_index, e.direction != "proof", e.pass_index))
        if len(es) < max(ns):
            short += 1
        hit = next((i + 1 for i, e in enumerate(es) if e.valid), math.inf)
        first_valid.append(hit)
    if short:
        warnings.warn(f"{short} problems have fewer than {max(ns)} attempts; pass@N truncates to available attempts")
    total = len(first_valid)
    return {n: sum(h <= n for h in first_valid) / total for n in ns}


@dataclass(frozen=True)
class SummaryRow:
    label: str
    count: int
    percent: float
    cpu_days: float
    cpu_percent: float


def summary_table(entries: Iterable[LedgerEntry], store: Iterable, dataset_size: int | None = None) -> list[SummaryRow]:
    """Proved / disproved / total solved / unsolved counts with their CPU-day shares.

    CPU time is attributed to each problem's final status; the solved and
    unsolved CPU rows add up to the ledger total.
    """
    entries = list(entries)
    status = {rec.id: rec.direction for rec in store}
    problems = {e.problem_id for e in entries} | set(status)
    n = dataset_size if dataset_size is not None else len(problems)
    cpu: Counter = Counter()
    for e in entries:
        cpu[status.get(e.problem_id, "unsolved")] += e.cpu_seconds
    total_cpu = sum(cpu.values())
    proved = sum(d == "proof" for d in status.values())
    disproved = sum(d == "disproof" for d in status.values())
    solved = proved + disproved

    def pct(x: float, of: float) -> float:
        return 100.0 * x / of if of else 0.0

    solved_cpu = cpu["proof"] + cpu["disproof"]
    rows = [
        SummaryRow("proved", proved, pct(proved, n), cpu["proof"] / SECONDS_PER_DAY, pct(cpu["proof"], total_cpu)),
        SummaryRow("disproved", disproved, pct(disproved, n), cpu["disproof"] / SECONDS_PER_DAY, pct(cpu["disproof"], total_cpu)),
        SummaryRow("solved", solved, pct(solved, n), solved_cpu / SECONDS_PER_DAY, pct(solved_cpu, total_cpu)),
        SummaryRow("unsolved", n - solved, pct(n - solved, n), cpu["unsolved"] / SECONDS_PER_DAY, pct(cpu["unsolved"], total_cpu)),
    ]
    return rows


def mode_length_means(entries: Iterable[LedgerEntry]) -> tuple[float | None, float | None]:
    """Mean shortest-proof length per search mode, (bf, cg)."""
    shortest: dict[tuple[str, str], int] = {}
    for e in entries:
        if not e.valid:
            continue
        key = (e.statement_id, e.mode)
        shortest[key] = min(shortest.get(key, math.inf), len(e.proof))
    means = []
    for mode in ("bf", "cg"):
        vals = [v for (_, m), v in shortest.items() if m == mode]
        means.append(sum(vals) / len(vals) if vals else None)
    return means[0], means[1]


def to_csv(rows: Iterable[Sequence], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()

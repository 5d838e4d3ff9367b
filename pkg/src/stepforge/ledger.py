"""Append-only JSONL run ledger: one header record, then one record per attempt."""

from __future__ import annotations

import json
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable

from stepforge.search import AttemptOutcome

__all__ = ["LedgerEntry", "RunLedger", "GPU_CPU_RATIO_REFERENCE"]

# recorded as metadata only; desk runs have no GPUs
GPU_CPU_RATIO_REFERENCE = "1:11"


@dataclass(frozen=True)
class LedgerEntry:
    statement_id: str
    problem_id: str
    direction: str
    round_index: int
    pass_index: int
    mode: str
    valid: bool
    proof: tuple[str, ...] | None
    expansions_used: int
    wall_time_s: float
    cpu_seconds: float
    nodes_created: int
    terminated_by: str
    policy_calls: int
    max_candidates: int
    budget_S: int
    budget_K: int
    seed: int

    def __post_init__(self) -> None:
        if self.cpu_seconds < 0:
            raise ValueError("cpu_seconds must be >= 0")
        if self.valid != (self.proof is not None):
            raise ValueError("valid must match proof presence")

    @property
    def proof_length(self) -> int | None:
        return len(self.proof) if self.proof is not None else None

    @classmethod
    def from_outcome(
        cls,
        outcome: AttemptOutcome,
        *,
        round_index: int = 0,
        direction: str = "proof",
        problem_id: str | None = None,
        cores_per_attempt: float = 1.0,
    ) -> "LedgerEntry":
        return cls(
            outcome.statement_id,
            problem_id or outcome.statement_id,
            direction,
            round_index,
            outcome.pass_index,
            outcome.mode,
            outcome.valid,
            outcome.proof,
            outcome.expansions_used,
            outcome.wall_time_s,
            outcome.wall_time_s * cores_per_attempt,
            outcome.nodes_created,
            outcome.terminated_by,
            outcome.policy_calls,
            outcome.max_candidates,
            outcome.budget_S,
            outcome.budget_K,
            outcome.seed,
        )

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["proof"] = list(self.proof) if self.proof is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LedgerEntry":
        d = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if d.get("proof") is not None:
            d["proof"] = tuple(d["proof"])
        return cls(**d)


class RunLedger:
    """Thread-safe attempt log, optionally mirrored to a JSONL file.

    Writes are serialized through one lock; this is the only point where
    concurrent attempts synchronize.
    """

    def __init__(self, path: str | Path | None = None, cores_per_attempt: float = 1.0, **metadata: Any):
        self.path = Path(path) if path is not None else None
        self.cores_per_attempt = cores_per_attempt
        self.header = {
            "type": "header",
            "cores_per_attempt": cores_per_attempt,
            "gpu_cpu_ratio_reference": GPU_CPU_RATIO_REFERENCE,
            "created_unix": time.time(),
            **metadata,
        }
        self._entries: list[LedgerEntry] = []
        self._lock = threading.Lock()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if not self.path.exists() or self.path.stat().st_size == 0:
                self._write(self.header)

    def _write(self, record: dict) -> None:
        assert self.path is not None
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    def append_entry(self, entry: LedgerEntry) -> LedgerEntry:
        with self._lock:
            self._entries.append(entry)
            if self.path is not None:
                self._write({"type": "attempt", **entry.to_dict()})
        return entry

    def append(
        self,
        outcome: AttemptOutcome,
        *,
        round_index: int = 0,
        direction: str = "proof",
        problem_id: str | None = None,
    ) -> LedgerEntry:
        return self.append_entry(
            LedgerEntry.from_outcome(
                outcome,
                round_index=round_index,
                direction=direction,
                problem_id=problem_id,
                cores_per_attempt=self.cores_per_attempt,
            )
        )

    def extend(self, outcomes: Iterable[AttemptOutcome], **kwargs: Any) -> None:
        for o in outcomes:
            self.append(o, **kwargs)

    @property
    def entries(self) -> list[LedgerEntry]:
        with self._lock:
            return list(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    @classmethod
    def load(cls, path: str | Path) -> "RunLedger":
        """Read a ledger back; the result is in-memory only (no further file writes)."""
        ledger = cls(None)
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                kind = rec.pop("type", "attempt")
                if kind == "header":
                    ledger.header = {"type": "header", **rec}
                    ledger.cores_per_attempt = rec.get("cores_per_attempt", 1.0)
                else:
                    ledger._entries.append(LedgerEntry.from_dict(rec))
        return ledger

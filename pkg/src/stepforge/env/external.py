"""Newline-delimited JSON adapter for provers running as a child process.

Requests and responses, one JSON object per line::

    {"cmd": "init", "goal": <str>}                     -> {"ok": true, "state_id": <int>, "pp": <str>}
    {"cmd": "apply", "state_id": <int>, "tactic": <str>} -> {"ok": true, "state_id": <int>, "pp": <str>}
                                                        |  {"ok": true, "solved": true}
                                                        |  {"ok": false, "reason": <str>}
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading
from dataclasses import dataclass
from typing import Sequence

from stepforge.env.base import (
    NO_GOALS_PP,
    Advanced,
    ApplyResult,
    Failed,
    MissingNegation,
    Solved,
    Statement,
)

__all__ = ["ExternalState", "ExternalEnv", "ProverTimeout", "ProtocolError"]

DEFAULT_TIMEOUT_S = 30.0


class ProverTimeout(TimeoutError):
    pass


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExternalState:
    state_id: int
    pp: str

    @property
    def fingerprint(self) -> str:
        return self.pp

    @property
    def is_no_goals(self) -> bool:
        return self.state_id < 0

    def __str__(self) -> str:
        return self.pp


EXTERNAL_NO_GOALS = ExternalState(-1, NO_GOALS_PP)


class ExternalEnv:
    """Drives a prover REPL over its stdin/stdout.

    One request is in flight at a time; a lock serializes callers.
    """

    name = "external"

    def __init__(self, argv: Sequence[str], timeout_s: float = DEFAULT_TIMEOUT_S):
        self.timeout_s = timeout_s
        self._proc = subprocess.Popen(
            list(argv),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._lock = threading.Lock()

    def _pump(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def request(self, payload: dict, timeout_s: float | None = None) -> dict:
        timeout = self.timeout_s if timeout_s is None else timeout_s
        with self._lock:
            assert self._proc.stdin is not None
            try:
                self._proc.stdin.write(json.dumps(payload, ensure_ascii=False) + "\n")
                self._proc.stdin.flush()
            except BrokenPipeError as exc:
                raise ProtocolError("prover process exited") from exc
            try:
                line = self._lines.get(timeout=timeout)
            except queue.Empty:
                raise ProverTimeout(f"no response within {timeout} s") from None
        if line is None:
            raise ProtocolError("prover process closed its output")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed response {line!r}") from exc
        if not isinstance(reply, dict) or "ok" not in reply:
            raise ProtocolError(f"malformed response {line!r}")
        return reply

    def init_state(self, statement: Statement) -> ExternalState:
        reply = self.request({"cmd": "init", "goal": statement.goal_text})
        if not reply["ok"]:
            raise ProtocolError(f"init failed: {reply.get('reason', '')}")
        return ExternalState(int(reply["state_id"]), reply["pp"])

    def apply_tactic(self, state: ExternalState, tactic: str) -> ApplyResult:
        reply = self.request({"cmd": "apply", "state_id": state.state_id, "tactic": tactic})
        if not reply["ok"]:
            return Failed(str(reply.get("reason", "")))
        if reply.get("solved"):
            return Solved()
        return Advanced(ExternalState(int(reply["state_id"]), reply["pp"]))

    def negate(self, statement: Statement) -> Statement:
        if statement.negation_text is None:
            raise MissingNegation(statement.id)
        return Statement(statement.id + ".neg", statement.negation_text, None, statement.source_tag)

    def no_goals(self) -> ExternalState:
        return EXTERNAL_NO_GOALS

    def close(self) -> None:
        if self._proc.poll() is None:
            assert self._proc.stdin is not None
            self._proc.stdin.close()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self) -> "ExternalEnv":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

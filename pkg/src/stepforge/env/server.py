"""Toy prover behind the external wire protocol.

Run as ``python -m stepforge.env.server``; reads requests on stdin and writes
one response line per request.  Used to exercise :class:`ExternalEnv`.
"""

from __future__ import annotations

import json
import sys
from typing import TextIO

from stepforge.env.base import Advanced, Failed, Statement
from stepforge.env.formula import ParseError
from stepforge.env.toy import ProofState, apply_tactic, init_state


class ToyServer:
    def __init__(self) -> None:
        self.states: list[ProofState] = []

    def _register(self, state: ProofState) -> dict:
        self.states.append(state)
        return {"ok": True, "state_id": len(self.states) - 1, "pp": state.pp}

    def handle(self, msg: dict) -> dict:
        cmd = msg.get("cmd")
        if cmd == "init":
            try:
                return self._register(init_state(Statement("_", msg["goal"])))
            except ParseError as exc:
                return {"ok": False, "reason": str(exc)}
        if cmd == "apply":
            sid = msg.get("state_id")
            if not isinstance(sid, int) or not 0 <= sid < len(self.states):
                return {"ok": False, "reason": "unknown state_id"}
            result = apply_tactic(self.states[sid], str(msg.get("tactic", "")))
            if isinstance(result, Failed):
                return {"ok": False, "reason": result.reason}
            if isinstance(result, Advanced):
                return self._register(result.new_state)
            return {"ok": True, "solved": True}
        return {"ok": False, "reason": f"unknown cmd {cmd!r}"}


def serve(stdin: TextIO = sys.stdin, stdout: TextIO = sys.stdout) -> None:
    server = ToyServer()
    for line in stdin:
        if not line.strip():
            continue
        try:
            reply = server.handle(json.loads(line))
        except (json.JSONDecodeError, AttributeError):
            reply = {"ok": False, "reason": "malformed request"}
        stdout.write(json.dumps(reply, ensure_ascii=False) + "\n")
        stdout.flush()


if __name__ == "__main__":
    serve()

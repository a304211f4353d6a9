"""Interactive-prover backends over a line-delimited JSON wire protocol.

Requests carry ``{command, session_id, step, timeout_s}`` and responses
``{status, state_id, message, is_done}``; ``command`` is one of ``init``
(step holds the theory text), ``apply``, or ``close``.  Two conventions make
tactic cascades possible without state addressing:

* a failed ``apply`` never advances the session, so the next attempt runs
  against the same state;
* Sledgehammer is the pseudo-step ``HAMMER_STEP``; on success the response
  ``message`` carries the reconstructed tactic string (that string, not the
  pseudo-step, is what lands in the proof).

Transport faults raise TransportError and are never confused with
prover-reported proof errors.
"""

from __future__ import annotations

import itertools
import json
import socket
import socketserver
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

from .errors import (
    ReplayMismatch,
    SessionClosed,
    TheoryLoadError,
    TransportError,
)
from .isar import ProofScript, strip_terminal_marker

__all__ = [
    "CheckReport",
    "HAMMER_STEP",
    "MockOutcome",
    "MockProver",
    "ProverConfig",
    "ProverServer",
    "RecordingProver",
    "ReplayProver",
    "StepResult",
    "WireProver",
    "check_script",
    "normalize_step",
]

ENV_PROVER_ADDR = "PROOFSEEK_PROVER_ADDR"

HAMMER_STEP = "⟨hammer⟩"

OK = "ok"
ERROR = "error"
TIMEOUT = "timeout"

DEFAULT_THEORY_HEADER = 'theory Scratch\n  imports Main\nbegin'


@dataclass(frozen=True)
class ProverConfig:
    endpoint: str = ""
    pool_size: int = 4
    step_timeout_s: float = 10.0
    hammer_timeout_s: float = 40.0
    init_timeout_s: float = 120.0
    theory_header: str = DEFAULT_THEORY_HEADER

    def __post_init__(self) -> None:
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if min(self.step_timeout_s, self.hammer_timeout_s, self.init_timeout_s) <= 0:
            raise ValueError("timeouts must be > 0")


@dataclass(frozen=True)
class StepResult:
    status: str
    new_state_id: Optional[str] = None
    message: str = ""
    is_done: bool = False

    def __post_init__(self) -> None:
        if (self.status == OK) != (self.new_state_id is not None):
            raise ValueError("new_state_id present iff status is ok")

    @property
    def ok(self) -> bool:
        return self.status == OK


def normalize_step(text: str) -> str:
    return " ".join(text.split())


class ProverBackend:
    """Base: session bookkeeping hooks plus a request log for assertions."""

    def __init__(self, config: Optional[ProverConfig] = None):
        self.config = config or ProverConfig()
        self._lock = threading.Lock()
        self.request_log: list[dict] = []

    def _log(self, command: str, session_id: Optional[str], step: str,
             timeout_s: Optional[float]) -> None:
        self.request_log.append({
            "command": command,
            "session_id": session_id,
            "step": step,
            "timeout_s": timeout_s,
        })

    def init_session(self, theory_text: str) -> str:
        raise NotImplementedError

    def apply(self, session_id: str, step_text: str,
              timeout_s: Optional[float] = None) -> StepResult:
        raise NotImplementedError

    def close(self, session_id: str) -> None:
        raise NotImplementedError

    def applies(self, command: str = "apply") -> list[dict]:
        """Logged requests of one command kind (test helper)."""
        return [r for r in self.request_log if r["command"] == command]


# ---------------------------------------------------------------------------
# mock

@dataclass(frozen=True)
class MockOutcome:
    status: str = OK
    is_done: Optional[bool] = None  # None → structural auto-detection
    message: str = ""
    delay_s: float = 0.0

    @staticmethod
    def of(value: Union[str, "MockOutcome"]) -> "MockOutcome":
        if isinstance(value, MockOutcome):
            return value
        return MockOutcome(status=value)


@dataclass
class _SessionState:
    counter: int = 0
    depth: int = 0
    open: bool = True


class MockProver(ProverBackend):
    """Deterministic in-process prover driven by a step-text table.

    ``table`` maps whitespace-normalized step text to an outcome ("ok",
    "error", "timeout", or a MockOutcome); unlisted steps get ``default``.
    ``hammer`` configures the Sledgehammer pseudo-step: None fails, a tactic
    string succeeds with that string in the message, a list is consumed one
    entry per invocation.  ``is_done`` is taken from the outcome when given,
    otherwise inferred structurally (closing ``qed`` at depth zero, or a
    top-level terminal ``by``).  Simulated ``delay_s`` greater than the
    request timeout yields a timeout without sleeping.
    """

    def __init__(
        self,
        table: Optional[dict[str, Union[str, MockOutcome]]] = None,
        default: Union[str, MockOutcome] = ERROR,
        hammer: Union[None, str, MockOutcome, Sequence[Union[None, str, MockOutcome]]] = None,
        reject_theory: Union[bool, str, Callable[[str], Optional[str]]] = False,
        config: Optional[ProverConfig] = None,
    ):
        super().__init__(config)
        self.table = {normalize_step(k): MockOutcome.of(v)
                      for k, v in (table or {}).items()}
        self.default = MockOutcome.of(default)
        if hammer is None or isinstance(hammer, (str, MockOutcome)):
            self._hammer_seq: list[Union[None, str, MockOutcome]] = [hammer]
        else:
            self._hammer_seq = list(hammer)
        self._hammer_pos = 0
        self.reject_theory = reject_theory
        self._sessions: dict[str, _SessionState] = {}
        self._ids = itertools.count(1)
        self.theories: dict[str, str] = {}

    # -- protocol ----------------------------------------------------------

    def init_session(self, theory_text: str) -> str:
        with self._lock:
            self._log("init", None, theory_text, self.config.init_timeout_s)
            reason = self._rejection(theory_text)
            if reason is not None:
                raise TheoryLoadError(reason)
            sid = f"s-{next(self._ids)}"
            self._sessions[sid] = _SessionState()
            self.theories[sid] = theory_text
            return sid

    def apply(self, session_id: str, step_text: str,
              timeout_s: Optional[float] = None) -> StepResult:
        timeout_s = self.config.step_timeout_s if timeout_s is None else timeout_s
        with self._lock:
            self._log("apply", session_id, step_text, timeout_s)
            state = self._sessions.get(session_id)
            if state is None or not state.open:
                raise SessionClosed(f"session {session_id} is not open")
            if step_text == HAMMER_STEP:
                outcome = self._next_hammer()
            else:
                outcome = self.table.get(normalize_step(step_text), self.default)
            if outcome.delay_s > timeout_s:
                return StepResult(TIMEOUT, None,
                                  f"step exceeded {timeout_s}s", False)
            if outcome.status != OK:
                return StepResult(outcome.status, None,
                                  outcome.message or "step failed", False)
            head = step_text.split()[0] if step_text.split() else ""
            if head == "proof":
                state.depth += 1
            elif head in ("qed", "oops"):
                state.depth = max(0, state.depth - 1)
            state.counter += 1
            done = outcome.is_done
            if done is None:
                done = state.depth == 0 and (
                    head in ("qed", "oops", "done") or head == "by")
            return StepResult(OK, f"{session_id}/{state.counter}",
                              outcome.message, bool(done))

    def close(self, session_id: str) -> None:
        with self._lock:
            self._log("close", session_id, "", None)
            state = self._sessions.get(session_id)
            if state is not None:
                state.open = False

    # -- internals ----------------------------------------------------------

    def _rejection(self, theory_text: str) -> Optional[str]:
        if callable(self.reject_theory):
            return self.reject_theory(theory_text)
        if self.reject_theory:
            return (self.reject_theory if isinstance(self.reject_theory, str)
                    else "theory rejected by mock")
        return None

    def _next_hammer(self) -> MockOutcome:
        entry = self._hammer_seq[min(self._hammer_pos, len(self._hammer_seq) - 1)]
        self._hammer_pos += 1
        if entry is None:
            return MockOutcome(ERROR, message="no proof found")
        if isinstance(entry, str):
            return MockOutcome(OK, is_done=False, message=entry)
        return entry


# ---------------------------------------------------------------------------
# replay

class ReplayProver(ProverBackend):
    """Plays back a recorded request/response trace, verifying each request."""

    def __init__(self, trace: Union[str, Path, Sequence[dict]],
                 config: Optional[ProverConfig] = None):
        super().__init__(config)
        if isinstance(trace, (str, Path)):
            trace = [json.loads(line)
                     for line in Path(trace).read_text(encoding="utf-8").splitlines()
                     if line.strip()]
        self.trace = list(trace)
        self._pos = 0

    def _next(self, command: str, step: str) -> dict:
        if self._pos >= len(self.trace):
            raise ReplayMismatch(f"trace exhausted at request {self._pos}")
        entry = self.trace[self._pos]
        self._pos += 1
        want = entry["request"]
        if want["command"] != command or \
                normalize_step(want.get("step", "")) != normalize_step(step):
            raise ReplayMismatch(
                f"request {self._pos - 1} diverged: expected "
                f"{want['command']}/{want.get('step', '')!r}, got {command}/{step!r}")
        return entry["response"]

    def init_session(self, theory_text: str) -> str:
        with self._lock:
            self._log("init", None, theory_text, self.config.init_timeout_s)
            response = self._next("init", theory_text)
            if response["status"] != OK:
                raise TheoryLoadError(response.get("message", "rejected"))
            return response["state_id"].split("/")[0]

    def apply(self, session_id: str, step_text: str,
              timeout_s: Optional[float] = None) -> StepResult:
        with self._lock:
            self._log("apply", session_id, step_text,
                      self.config.step_timeout_s if timeout_s is None else timeout_s)
            response = self._next("apply", step_text)
            return StepResult(response["status"], response.get("state_id"),
                              response.get("message", ""),
                              bool(response.get("is_done", False)))

    def close(self, session_id: str) -> None:
        with self._lock:
            self._log("close", session_id, "", None)
            if self._pos < len(self.trace) and \
                    self.trace[self._pos]["request"]["command"] == "close":
                self._pos += 1


class RecordingProver(ProverBackend):
    """Wraps a backend and captures a replayable request/response trace."""

    def __init__(self, inner: ProverBackend):
        super().__init__(inner.config)
        self.inner = inner
        self.trace: list[dict] = []

    def _record(self, request: dict, response: dict) -> None:
        self.trace.append({"request": request, "response": response})

    def init_session(self, theory_text: str) -> str:
        request = {"command": "init", "session_id": None, "step": theory_text,
                   "timeout_s": self.config.init_timeout_s}
        try:
            sid = self.inner.init_session(theory_text)
        except TheoryLoadError as exc:
            self._record(request, {"status": ERROR, "state_id": None,
                                   "message": str(exc), "is_done": False})
            raise
        self._record(request, {"status": OK, "state_id": f"{sid}/0",
                               "message": "", "is_done": False})
        return sid

    def apply(self, session_id: str, step_text: str,
              timeout_s: Optional[float] = None) -> StepResult:
        result = self.inner.apply(session_id, step_text, timeout_s)
        self._record(
            {"command": "apply", "session_id": session_id, "step": step_text,
             "timeout_s": timeout_s},
            {"status": result.status, "state_id": result.new_state_id,
             "message": result.message, "is_done": result.is_done},
        )
        return result

    def close(self, session_id: str) -> None:
        self.inner.close(session_id)
        self._record({"command": "close", "session_id": session_id, "step": "",
                      "timeout_s": None},
                     {"status": OK, "state_id": None, "message": "",
                      "is_done": False})

    def dump(self, path: Union[str, Path]) -> None:
        Path(path).write_text(
            "\n".join(json.dumps(entry) for entry in self.trace) + "\n",
            encoding="utf-8")


# ---------------------------------------------------------------------------
# wire client and reference server

class WireProver(ProverBackend):
    """Socket client for the line-delimited JSON protocol."""

    def __init__(self, config: ProverConfig):
        super().__init__(config)
        if not config.endpoint:
            raise TransportError("prover endpoint not configured")
        self._sock: Optional[socket.socket] = None
        self._reader = None

    def _connect(self) -> None:
        host, _, port = self.config.endpoint.rpartition(":")
        try:
            self._sock = socket.create_connection(
                (host or "127.0.0.1", int(port)), timeout=self.config.init_timeout_s)
            self._reader = self._sock.makefile("r", encoding="utf-8")
        except (OSError, ValueError) as exc:
            raise TransportError(f"cannot reach prover at "
                                 f"{self.config.endpoint}: {exc}") from exc

    def _rpc(self, request: dict, timeout_s: float) -> dict:
        with self._lock:
            if self._sock is None:
                self._connect()
            self._log(request["command"], request.get("session_id"),
                      request.get("step", ""), request.get("timeout_s"))
            try:
                self._sock.settimeout(timeout_s + 10.0)
                self._sock.sendall((json.dumps(request) + "\n").encode("utf-8"))
                line = self._reader.readline()
            except OSError as exc:
                raise TransportError(f"prover connection failed: {exc}") from exc
            if not line:
                raise TransportError("prover closed the connection")
            try:
                return json.loads(line)
            except json.JSONDecodeError as exc:
                raise TransportError(f"malformed prover response: {exc}") from exc

    def init_session(self, theory_text: str) -> str:
        response = self._rpc(
            {"command": "init", "session_id": None, "step": theory_text,
             "timeout_s": self.config.init_timeout_s},
            self.config.init_timeout_s)
        if response["status"] != OK:
            raise TheoryLoadError(response.get("message", "theory rejected"))
        return response["state_id"].split("/")[0]

    def apply(self, session_id: str, step_text: str,
              timeout_s: Optional[float] = None) -> StepResult:
        timeout_s = self.config.step_timeout_s if timeout_s is None else timeout_s
        response = self._rpc(
            {"command": "apply", "session_id": session_id, "step": step_text,
             "timeout_s": timeout_s},
            timeout_s)
        if response.get("error_kind") == "session":
            raise SessionClosed(response.get("message", session_id))
        return StepResult(response["status"], response.get("state_id"),
                          response.get("message", ""),
                          bool(response.get("is_done", False)))

    def close(self, session_id: str) -> None:
        try:
            self._rpc({"command": "close", "session_id": session_id, "step": "",
                       "timeout_s": None}, self.config.step_timeout_s)
        except TransportError:
            pass

    def shutdown(self) -> None:
        with self._lock:
            if self._sock is not None:
                self._sock.close()
                self._sock = None


class ProverServer:
    """Serves any ProverBackend over the wire protocol (reference server).

    Intended for adapters and tests; each connection gets its own thread.
    """

    def __init__(self, backend: ProverBackend, host: str = "127.0.0.1",
                 port: int = 0):
        self.backend = backend
        outer = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self) -> None:
                for raw in self.rfile:
                    line = raw.decode("utf-8").strip()
                    if not line:
                        continue
                    response = outer._dispatch(line)
                    self.wfile.write((json.dumps(response) + "\n").encode("utf-8"))

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server((host, port), Handler)
        self.address = "{}:{}".format(*self._server.server_address)
        self._thread: Optional[threading.Thread] = None

    def _dispatch(self, line: str) -> dict:
        try:
            request = json.loads(line)
            command = request["command"]
            if command == "init":
                sid = self.backend.init_session(request.get("step", ""))
                return {"status": OK, "state_id": f"{sid}/0", "message": "",
                        "is_done": False}
            if command == "apply":
                result = self.backend.apply(request["session_id"],
                                            request.get("step", ""),
                                            request.get("timeout_s"))
                return {"status": result.status, "state_id": result.new_state_id,
                        "message": result.message, "is_done": result.is_done}
            if command == "close":
                self.backend.close(request["session_id"])
                return {"status": OK, "state_id": None, "message": "",
                        "is_done": False}
            return {"status": ERROR, "state_id": None,
                    "message": f"unknown command {command!r}",
                    "is_done": False, "error_kind": "protocol"}
        except TheoryLoadError as exc:
            return {"status": ERROR, "state_id": None, "message": str(exc),
                    "is_done": False, "error_kind": "theory"}
        except SessionClosed as exc:
            return {"status": ERROR, "state_id": None, "message": str(exc),
                    "is_done": False, "error_kind": "session"}
        except Exception as exc:  # protocol server must not die mid-connection
            return {"status": ERROR, "state_id": None, "message": str(exc),
                    "is_done": False, "error_kind": "internal"}

    def start(self) -> "ProverServer":
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()


# ---------------------------------------------------------------------------
# whole-script checking

@dataclass(frozen=True)
class CheckReport:
    success: bool
    failing_index: Optional[int]
    results: tuple[StepResult, ...]


def check_script(prover: ProverBackend, statement: str,
                 script: ProofScript) -> CheckReport:
    """Apply a script's steps in order against a fresh session.

    Steps are applied literally (placeholders included — this is a checker,
    not a repair engine).  Success means the prover reported a terminal
    accepted state; an empty script fails at index 0 since goals remain.
    """
    if not script.steps:
        return CheckReport(False, 0, ())
    theory = prover.config.theory_header + "\n\n" + strip_terminal_marker(statement)
    session = prover.init_session(theory)
    results: list[StepResult] = []
    try:
        for index, step in enumerate(script.steps):
            result = prover.apply(session, step.text,
                                  prover.config.step_timeout_s)
            results.append(result)
            if not result.ok:
                return CheckReport(False, index, tuple(results))
            if result.is_done:
                return CheckReport(True, None, tuple(results))
        return CheckReport(False, None, tuple(results))
    finally:
        prover.close(session)

"""Language-model backends: a chat-completion HTTP client plus the
deterministic replay and mock implementations every test runs against.

All backends share one surface: ``complete(params, prompt, n) -> list[str]``.
Requests are logged (purpose, sampling parameters, n) so tests can assert
budget and sampling contracts by inspection.  Replay fixtures are JSONL
records ``{"digest": ..., "completions": [...]}`` keyed by a stable digest of
(purpose, prompt text); identical prompts always replay identical outputs.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from .errors import BudgetExceeded, MissingFixture, TransportError

__all__ = [
    "ChatModelClient",
    "MockModel",
    "ModelParams",
    "PromptRecord",
    "PURPOSES",
    "RecordingModel",
    "ReplayModel",
    "load_replay_fixtures",
    "prompt_digest",
]

ENV_MODEL_URL = "PROOFSEEK_MODEL_URL"
ENV_MODEL_KEY = "PROOFSEEK_MODEL_KEY"

PURPOSES = (
    "whole_proof",
    "erp",
    "stage_description",
    "stage_informal_proof",
    "stage_formal_statement",
)


@dataclass(frozen=True)
class ModelParams:
    temperature: float = 0.6
    top_p: float = 0.95
    max_samples: int = 10
    max_tokens: int = 2048
    stop: tuple[str, ...] = ()
    model: str = "default"

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_samples < 1:
            raise ValueError("max_samples must be >= 1")


@dataclass(frozen=True)
class PromptRecord:
    messages: tuple[dict, ...]
    purpose: str
    few_shot_count: int = 0

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("prompt needs at least one message")
        if self.purpose not in PURPOSES:
            raise ValueError(f"unknown prompt purpose {self.purpose!r}")

    @property
    def text(self) -> str:
        return "\n".join(f"{m.get('role', '?')}: {m.get('content', '')}"
                         for m in self.messages)


def prompt_digest(prompt: PromptRecord) -> str:
    """Stable key for replay fixtures: sha256 over purpose and prompt text."""
    payload = prompt.purpose + "\x00" + prompt.text
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


class ModelBackend:
    """Base: request logging plus sample-budget enforcement."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.request_log: list[dict] = []

    def complete(self, params: ModelParams, prompt: PromptRecord,
                 n: int = 1) -> list[str]:
        if n > params.max_samples:
            raise BudgetExceeded(
                f"requested {n} samples, max_samples is {params.max_samples}")
        with self._lock:
            self.request_log.append({
                "purpose": prompt.purpose,
                "n": n,
                "temperature": params.temperature,
                "top_p": params.top_p,
                "few_shot_count": prompt.few_shot_count,
                "digest": prompt_digest(prompt),
            })
            return self._complete(params, prompt, n)

    def _complete(self, params: ModelParams, prompt: PromptRecord,
                  n: int) -> list[str]:
        raise NotImplementedError


class ChatModelClient(ModelBackend):
    """OpenAI-compatible chat-completion client.

    Endpoint and key come from PROOFSEEK_MODEL_URL / PROOFSEEK_MODEL_KEY
    unless given explicitly.  Network faults raise TransportError, never a
    proof-level failure.
    """

    def __init__(self, url: Optional[str] = None, api_key: Optional[str] = None,
                 timeout_s: float = 120.0):
        super().__init__()
        self.url = url or os.environ.get(ENV_MODEL_URL, "")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_MODEL_KEY, "")
        self.timeout_s = timeout_s
        if not self.url:
            raise TransportError(f"no model endpoint ({ENV_MODEL_URL} unset)")

    def _complete(self, params: ModelParams, prompt: PromptRecord,
                  n: int) -> list[str]:
        body = {
            "model": params.model,
            "messages": list(prompt.messages),
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
            "n": n,
        }
        if params.stop:
            body["stop"] = list(params.stop)
        request = urllib.request.Request(
            self.url,
            data=json.dumps(body).encode("utf-8"),
            headers={
                "Content-Type": "application/json",
                **({"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}),
            },
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout_s) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise TransportError(f"model endpoint failed: {exc}") from exc
        try:
            return [choice["message"]["content"] for choice in payload["choices"]]
        except (KeyError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc


def load_replay_fixtures(path: Union[str, Path]) -> dict[str, list[str]]:
    fixtures: dict[str, list[str]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        fixtures[record["digest"]] = list(record["completions"])
    return fixtures


class ReplayModel(ModelBackend):
    """Serves stored completions keyed by prompt digest; pure by design."""

    def __init__(self, fixtures: Union[str, Path, dict[str, list[str]]]):
        super().__init__()
        if isinstance(fixtures, (str, Path)):
            fixtures = load_replay_fixtures(fixtures)
        self.fixtures = dict(fixtures)

    def _complete(self, params: ModelParams, prompt: PromptRecord,
                  n: int) -> list[str]:
        digest = prompt_digest(prompt)
        if digest not in self.fixtures:
            raise MissingFixture(
                f"no replay fixture for purpose={prompt.purpose} digest={digest}")
        return list(self.fixtures[digest][:n])


class MockModel(ModelBackend):
    """Scripted backend: per-purpose queues of completion batches.

    ``script`` maps purpose to a list of batches; each ``complete`` call for
    that purpose consumes the next batch (the last batch is sticky, so a
    single entry behaves like a constant function).
    """

    def __init__(self, script: dict[str, Sequence[Sequence[str]]]):
        super().__init__()
        self._script = {k: [list(batch) for batch in v] for k, v in script.items()}
        self._cursor: dict[str, int] = {k: 0 for k in self._script}

    def _complete(self, params: ModelParams, prompt: PromptRecord,
                  n: int) -> list[str]:
        batches = self._script.get(prompt.purpose)
        if not batches:
            raise MissingFixture(f"mock has no script for purpose={prompt.purpose}")
        pos = min(self._cursor[prompt.purpose], len(batches) - 1)
        self._cursor[prompt.purpose] += 1
        return list(batches[pos][:n])


class RecordingModel(ModelBackend):
    """Wraps a backend and records (digest, completions) replay fixtures."""

    def __init__(self, inner: ModelBackend):
        super().__init__()
        self.inner = inner
        self.fixtures: dict[str, list[str]] = {}

    def _complete(self, params: ModelParams, prompt: PromptRecord,
                  n: int) -> list[str]:
        out = self.inner.complete(params, prompt, n)
        self.fixtures[prompt_digest(prompt)] = list(out)
        return out

    def dump(self, path: Union[str, Path]) -> None:
        lines = [json.dumps({"digest": d, "completions": c})
                 for d, c in sorted(self.fixtures.items())]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

"""Language-model backends: a scripted one for hermetic runs and an HTTP client."""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from .errors import BackendUnavailable, ScriptExhausted


class LlmBackend(Protocol):
    name: str
    kind: str
    concurrency_limit: int

    def complete(self, prompt: str) -> str: ...


class ScriptedBackend:
    """Replays a fixed list of replies, one per call.

    A reply that is an exception instance is raised instead of returned,
    which lets tests simulate timeouts.  Every prompt received is kept in
    ``prompts``.
    """

    kind = "scripted"
    concurrency_limit = 1

    def __init__(self, replies: Sequence, name: str = "scripted"):
        self.name = name
        self._replies = list(replies)
        self._next = 0
        self.prompts: list[str] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(data, dict):
            data = data["replies"]
        if not isinstance(data, list) or not all(isinstance(r, str) for r in data):
            raise ValueError(f"{path}: script must be a list of strings")
        return cls(data, name=Path(path).stem)

    @property
    def remaining(self) -> int:
        return len(self._replies) - self._next

    def complete(self, prompt: str) -> str:
        self.prompts.append(prompt)
        if self._next >= len(self._replies):
            raise ScriptExhausted(f"script exhausted after {len(self._replies)} replies")
        reply = self._replies[self._next]
        self._next += 1
        if isinstance(reply, BaseException):
            raise reply
        return reply


class RemoteBackend:
    """OpenAI-compatible ``/chat/completions`` client (vLLM, TGI, llama.cpp server...)."""

    kind = "remote"

    def __init__(
        self,
        endpoint: str | None = None,
        model: str = "llama3-70b",
        name: str = "remote",
        api_key: str | None = None,
        concurrency_limit: int = 4,
        timeout: float = 120.0,
        temperature: float = 0.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.name = name
        self.endpoint = endpoint or os.environ.get("BIORAG_LLM_ENDPOINT")
        self.model = model
        self.api_key = api_key
        self.temperature = temperature
        self.concurrency_limit = concurrency_limit
        self._slots = threading.BoundedSemaphore(concurrency_limit)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def complete(self, prompt: str) -> str:
        if not self.endpoint:
            raise BackendUnavailable("no LLM endpoint configured (BIORAG_LLM_ENDPOINT)")
        url = self.endpoint.rstrip("/")
        if not url.endswith("/chat/completions"):
            url += "/chat/completions"
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        with self._slots:
            try:
                resp = self._client.post(url, json=payload, headers=headers)
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"] or ""
            except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendUnavailable(f"LLM backend failed: {exc}") from exc

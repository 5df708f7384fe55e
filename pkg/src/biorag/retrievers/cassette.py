"""Record/replay store for external retriever calls.

A cassette is line-delimited JSON, one ``{"key": ..., "items": [...]}`` per
line.  Keys are ``<retriever>|<max_results>|<query>`` with the query
lowercased and whitespace-collapsed.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from ..errors import CassetteMiss, ParseError
from .models import EvidenceItem, RetrieverId

REPLAY = "replay"
RECORD = "record"
LIVE = "live"
MODES = (REPLAY, RECORD, LIVE)


def request_key(retriever: RetrieverId, query: str, max_results: int) -> str:
    return f"{retriever.value}|{max_results}|{' '.join(query.lower().split())}"


class Cassette:
    def __init__(self, path: str | Path | None = None, entries: dict[str, list[EvidenceItem]] | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, list[EvidenceItem]] = dict(entries or {})
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    items = [EvidenceItem.from_dict(i) for i in obj["items"]]
                    key = obj["key"]
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise ParseError(lineno, f"bad cassette entry: {exc}") from exc
                self._entries.setdefault(key, items)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def lookup(self, key: str) -> list[EvidenceItem]:
        try:
            return list(self._entries[key])
        except KeyError:
            raise CassetteMiss(key) from None

    def record(self, key: str, items: list[EvidenceItem]) -> None:
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = list(items)
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    line = {"key": key, "items": [i.to_dict() for i in items]}
                    fh.write(json.dumps(line, ensure_ascii=False) + "\n")

"""Abstract ingestion: cleaning, quality filtering and line-delimited JSON I/O.

Cleaning is driven by an ordered rule file (``data/cleaning_rules.json`` by
default).  Quality rules:

* ``EMPTY``     -- cleaned abstract is empty
* ``TOO_SHORT`` -- cleaned abstract shorter than ``min_length`` characters
* ``NON_ALPHA`` -- alphabetic characters make up less than ``min_alpha_ratio``
  of the non-whitespace characters
* ``DUP_ID``    -- the id was already seen earlier in the stream

Records that cannot be decoded are counted under ``MALFORMED``.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional

from .errors import IngestAborted

logger = logging.getLogger(__name__)

EMPTY = "EMPTY"
TOO_SHORT = "TOO_SHORT"
NON_ALPHA = "NON_ALPHA"
DUP_ID = "DUP_ID"
MALFORMED = "MALFORMED"

_WS = re.compile(r"\s+")


@dataclass(frozen=True)
class RawRecord:
    id: str
    title: str
    abstract: str
    mesh: list[str] = field(default_factory=list)
    year: int = 0

    @classmethod
    def from_dict(cls, obj: dict) -> "RawRecord":
        if not isinstance(obj, dict):
            raise ValueError("record is not a JSON object")
        rid = obj.get("id")
        if not isinstance(rid, str) or not rid.strip():
            raise ValueError("record id missing or empty")
        mesh = obj.get("mesh") or []
        if not isinstance(mesh, list) or not all(isinstance(m, str) for m in mesh):
            raise ValueError("mesh must be a list of strings")
        year = obj.get("year") or 0
        if isinstance(year, bool) or not isinstance(year, int):
            raise ValueError("year must be an integer")
        return cls(
            id=rid,
            title=str(obj.get("title") or ""),
            abstract=str(obj.get("abstract") or ""),
            mesh=list(mesh),
            year=year,
        )


@dataclass(frozen=True)
class CleanDocument:
    id: str
    title: str
    abstract: str
    mesh: tuple[str, ...] = ()
    year: int = 0

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "abstract": self.abstract,
            "mesh": list(self.mesh),
            "year": self.year,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "CleanDocument":
        return cls(
            id=obj["id"],
            title=obj.get("title", ""),
            abstract=obj.get("abstract", ""),
            mesh=tuple(obj.get("mesh") or ()),
            year=int(obj.get("year") or 0),
        )


@dataclass
class IngestStats:
    input_count: int = 0
    accepted_count: int = 0
    rejected_count: int = 0
    rejection_reasons: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "input_count": self.input_count,
            "accepted_count": self.accepted_count,
            "rejected_count": self.rejected_count,
            "rejection_reasons": dict(sorted(self.rejection_reasons.items())),
        }


@dataclass(frozen=True)
class Rule:
    id: str
    pattern: re.Pattern
    replacement: str


@dataclass(frozen=True)
class RuleSet:
    version: str
    rules: tuple[Rule, ...]
    min_length: int = 200
    min_alpha_ratio: float = 0.6

    @classmethod
    def from_dict(cls, obj: dict) -> "RuleSet":
        rules = []
        for spec in obj["rules"]:
            flags = 0
            for name in spec.get("flags", []):
                flags |= getattr(re, name)
            rules.append(Rule(spec["id"], re.compile(spec["pattern"], flags), spec["replacement"]))
        quality = obj.get("quality", {})
        return cls(
            version=str(obj.get("version", "1")),
            rules=tuple(rules),
            min_length=int(quality.get("min_length", 200)),
            min_alpha_ratio=float(quality.get("min_alpha_ratio", 0.6)),
        )

    @classmethod
    def load(cls, path: str | Path | None = None) -> "RuleSet":
        if path is None:
            text = resources.files("biorag").joinpath("data/cleaning_rules.json").read_text("utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        return cls.from_dict(json.loads(text))


_default_rules: Optional[RuleSet] = None


def default_rules() -> RuleSet:
    global _default_rules
    if _default_rules is None:
        _default_rules = RuleSet.load()
    return _default_rules


def _one_pass(text: str, rules: RuleSet) -> str:
    for rule in rules.rules:
        text = rule.pattern.sub(rule.replacement, text)
    return _WS.sub(" ", text).strip()


def clean_text(raw: str, rules: RuleSet | None = None) -> str:
    """Strip hyperlinks, markup and control characters, then normalize whitespace.

    Rules are re-applied until a fixpoint so that removals which expose new
    matches (``<<b>i>``) are handled; every changing pass except pure
    whitespace normalization shortens the text, so the loop terminates.
    """
    rules = rules or default_rules()
    text = raw
    while True:
        cleaned = _one_pass(text, rules)
        if cleaned == text:
            return cleaned
        text = cleaned


def alpha_ratio(text: str) -> float:
    visible = [c for c in text if not c.isspace()]
    if not visible:
        return 0.0
    return sum(c.isalpha() for c in visible) / len(visible)


def quality_filter(
    doc: CleanDocument,
    rules: RuleSet | None = None,
    seen_ids: set[str] | None = None,
) -> tuple[bool, Optional[str]]:
    """Return ``(True, None)`` to accept or ``(False, reason)`` to reject."""
    rules = rules or default_rules()
    if seen_ids is not None and doc.id in seen_ids:
        return False, DUP_ID
    if not doc.abstract:
        return False, EMPTY
    if len(doc.abstract) < rules.min_length:
        return False, TOO_SHORT
    if alpha_ratio(doc.abstract) < rules.min_alpha_ratio:
        return False, NON_ALPHA
    return True, None


def canonical_mesh(terms: Iterable[str], vocab=None) -> tuple[str, ...]:
    """Trim, map to vocabulary casing when a vocabulary is given, dedupe."""
    out: list[str] = []
    seen: set[str] = set()
    for term in terms:
        term = _WS.sub(" ", term).strip()
        if not term:
            continue
        if vocab is not None:
            term = vocab.canonical(term) or term
        key = term.casefold()
        if key in seen:
            continue
        seen.add(key)
        out.append(term)
    return tuple(out)


def clean_record(rec: RawRecord, rules: RuleSet | None = None, vocab=None) -> CleanDocument:
    rules = rules or default_rules()
    return CleanDocument(
        id=rec.id.strip(),
        title=clean_text(rec.title, rules),
        abstract=clean_text(rec.abstract, rules),
        mesh=canonical_mesh(rec.mesh, vocab),
        year=rec.year,
    )


class _Malformed:
    __slots__ = ("reason",)

    def __init__(self, reason: str):
        self.reason = reason


def iter_raw_records(stream: IO[str]) -> Iterator[RawRecord | _Malformed]:
    """Yield records from a JSONL stream; undecodable lines yield a marker."""
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            yield RawRecord.from_dict(json.loads(line))
        except (json.JSONDecodeError, ValueError, TypeError) as exc:
            logger.warning("line %d rejected as malformed: %s", lineno, exc)
            yield _Malformed(str(exc))


def ingest_corpus(
    records: Iterable[RawRecord | dict],
    rules: RuleSet | None = None,
    vocab=None,
) -> tuple[list[CleanDocument], IngestStats]:
    """Clean and filter a record stream, preserving input order of accepted records.

    Items may be ``RawRecord`` instances or raw dicts.  A failure while
    reading the stream itself raises ``IngestAborted`` carrying the partial
    stats.
    """
    rules = rules or default_rules()
    stats = IngestStats()
    reasons: Counter[str] = Counter()
    seen: set[str] = set()
    accepted: list[CleanDocument] = []

    iterator = iter(records)
    while True:
        try:
            item = next(iterator)
        except StopIteration:
            break
        except OSError as exc:
            stats.rejection_reasons = dict(reasons)
            raise IngestAborted(stats, exc) from exc

        stats.input_count += 1
        if isinstance(item, dict):
            try:
                item = RawRecord.from_dict(item)
            except (ValueError, TypeError) as exc:
                item = _Malformed(str(exc))
        if isinstance(item, _Malformed):
            reasons[MALFORMED] += 1
            stats.rejected_count += 1
            continue

        doc = clean_record(item, rules, vocab)
        ok, reason = quality_filter(doc, rules, seen)
        seen.add(doc.id)
        if ok:
            accepted.append(doc)
            stats.accepted_count += 1
        else:
            reasons[reason] += 1
            stats.rejected_count += 1

    stats.rejection_reasons = dict(reasons)
    return accepted, stats


def read_corpus(path: str | Path) -> Iterator[CleanDocument]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield CleanDocument.from_dict(json.loads(line))


def write_corpus(docs: Iterable[CleanDocument], sink: IO[str]) -> int:
    n = 0
    for doc in docs:
        sink.write(json.dumps(doc.to_dict(), ensure_ascii=False) + "\n")
        n += 1
    return n


def ingest_file(
    input_path: str | Path,
    output_path: str | Path,
    rules_path: str | Path | None = None,
    stats_path: str | Path | None = None,
) -> IngestStats:
    rules = RuleSet.load(rules_path)
    with open(input_path, encoding="utf-8") as src:
        docs, stats = ingest_corpus(iter_raw_records(src), rules)
    with open(output_path, "w", encoding="utf-8") as sink:
        write_corpus(docs, sink)
    if stats_path is not None:
        Path(stats_path).write_text(json.dumps(stats.to_dict(), indent=2) + "\n", encoding="utf-8")
    logger.info("ingested %d/%d records", stats.accepted_count, stats.input_count)
    return stats

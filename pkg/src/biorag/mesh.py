"""MeSH vocabulary, question-to-MeSH predictors and the scalar filter compiler."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from enum import Enum
from typing import IO, Iterable, Optional

import httpx

from .errors import BackendUnavailable, EmptyInput, ParseError

logger = logging.getLogger(__name__)

ANY_OF = "any-of"
MATCH_ALL = "match-all"


@dataclass(frozen=True)
class MeshTerm:
    label: str
    tree_numbers: tuple[str, ...] = ()


class MeshVocabulary:
    """Immutable label -> term mapping with case-insensitive canonicalization."""

    def __init__(self, terms: Iterable[MeshTerm] = (), version: str = "unversioned"):
        self.version = version
        self._terms: dict[str, MeshTerm] = {}
        for term in terms:
            self._terms[term.label] = term
        self._folded = {label.casefold(): label for label in self._terms}

    def __contains__(self, label: str) -> bool:
        return label in self._terms

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms.values())

    @property
    def labels(self) -> list[str]:
        return list(self._terms)

    def get(self, label: str) -> MeshTerm:
        return self._terms[label]

    def canonical(self, label: str) -> Optional[str]:
        return self._folded.get(label.strip().casefold())

    def descendants(self, label: str) -> list[str]:
        """Labels whose tree numbers sit strictly below any of ``label``'s."""
        term = self._terms.get(label)
        if term is None:
            return []
        prefixes = tuple(t + "." for t in term.tree_numbers)
        if not prefixes:
            return []
        return sorted(
            other.label
            for other in self._terms.values()
            if other.label != label and any(tn.startswith(prefixes) for tn in other.tree_numbers)
        )


def load_mesh_vocabulary(source: IO[str], version: str = "unversioned") -> MeshVocabulary:
    """Parse ``label<TAB>tree;tree`` lines. Repeated labels merge their tree numbers."""
    merged: dict[str, set[str]] = {}
    for lineno, line in enumerate(source, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        if "\t" not in line:
            raise ParseError(lineno, "missing TAB separator")
        label, trees = line.split("\t", 1)
        label = label.strip()
        if not label:
            raise ParseError(lineno, "empty label")
        if "\t" in trees:
            raise ParseError(lineno, "too many fields")
        numbers = {t.strip() for t in trees.split(";") if t.strip()}
        merged.setdefault(label, set()).update(numbers)
    return MeshVocabulary(
        (MeshTerm(label, tuple(sorted(nums))) for label, nums in merged.items()),
        version=version,
    )


class PredictorKind(str, Enum):
    SCRIPTED = "scripted"
    LEXICAL = "lexical-baseline"
    REMOTE = "remote"


@dataclass(frozen=True)
class MeshPredictorSpec:
    name: str
    kind: PredictorKind


def _restrict(labels: Iterable[str], vocab: MeshVocabulary, predictor: str) -> list[str]:
    out: list[str] = []
    for label in labels:
        if label not in vocab:
            logger.warning("%s predicted out-of-vocabulary MeSH %r; dropped", predictor, label)
            continue
        if label not in out:
            out.append(label)
    return out


class ScriptedPredictor:
    """Looks up canned predictions keyed by the exact (trimmed) question."""

    def __init__(self, table: dict[str, list[str]], name: str = "scripted"):
        self.spec = MeshPredictorSpec(name, PredictorKind.SCRIPTED)
        self._table = {" ".join(q.split()): list(v) for q, v in table.items()}

    @classmethod
    def from_stream(cls, stream: IO[str], name: str = "scripted") -> "ScriptedPredictor":
        table: dict[str, list[str]] = {}
        for lineno, line in enumerate(stream, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                table[obj["question"]] = list(obj["mesh"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(lineno, str(exc)) from exc
        return cls(table, name)

    def predict(self, question: str, vocab: MeshVocabulary) -> list[str]:
        return _restrict(self._table.get(" ".join(question.split()), []), vocab, self.spec.name)


class LexicalPredictor:
    """Every vocabulary label occurring case-insensitively in the question.

    Ordered by label length descending, then alphabetically.
    """

    def __init__(self, name: str = "lexical"):
        self.spec = MeshPredictorSpec(name, PredictorKind.LEXICAL)

    def predict(self, question: str, vocab: MeshVocabulary) -> list[str]:
        folded = question.casefold()
        hits = [label for label in vocab.labels if label.casefold() in folded]
        return sorted(set(hits), key=lambda s: (-len(s), s))


class RemotePredictor:
    """POSTs ``{"question": ...}`` and expects ``{"mesh": [...]}`` back."""

    def __init__(
        self,
        endpoint: str | None = None,
        name: str = "remote",
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.spec = MeshPredictorSpec(name, PredictorKind.REMOTE)
        self.endpoint = endpoint or os.environ.get("BIORAG_MESH_ENDPOINT")
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def predict(self, question: str, vocab: MeshVocabulary) -> list[str]:
        if not self.endpoint:
            raise BackendUnavailable("no MeSH predictor endpoint configured")
        try:
            resp = self._client.post(self.endpoint, json={"question": question})
            resp.raise_for_status()
            labels = resp.json()["mesh"]
        except (httpx.HTTPError, ValueError, KeyError, TypeError) as exc:
            raise BackendUnavailable(f"MeSH predictor failed: {exc}") from exc
        return _restrict(labels, vocab, self.spec.name)


def predict_mesh(predictor, question: str, vocab: MeshVocabulary) -> list[str]:
    if not question or not question.strip():
        raise EmptyInput("question is empty")
    return predictor.predict(question, vocab)


@dataclass(frozen=True)
class MeshFilter:
    terms: tuple[str, ...]
    mode: str

    def __post_init__(self):
        if (self.mode == MATCH_ALL) != (len(self.terms) == 0):
            raise ValueError("mode must be match-all exactly when terms are empty")
        if self.mode not in (ANY_OF, MATCH_ALL):
            raise ValueError(f"unknown filter mode {self.mode!r}")

    @property
    def is_match_all(self) -> bool:
        return self.mode == MATCH_ALL

    def expression(self) -> str:
        if self.is_match_all:
            return "match-all"
        return " or ".join(f"eq({json.dumps('MeSH')}, {json.dumps(t, ensure_ascii=False)})" for t in self.terms)

    def describe(self) -> str:
        """The filter as a self-query clause, matching the figure's layout."""
        filtered = "[]" if self.is_match_all else f"[{self.expression()}]"
        return '{"filtered by": %s, "ordered by": embedding similarity}' % filtered

    def to_dict(self) -> dict:
        return {"mode": self.mode, "terms": list(self.terms)}


MATCH_ALL_FILTER = MeshFilter((), MATCH_ALL)


def build_filter(labels: Iterable[str]) -> MeshFilter:
    terms: list[str] = []
    for label in labels:
        if label not in terms:
            terms.append(label)
    if not terms:
        return MATCH_ALL_FILTER
    return MeshFilter(tuple(terms), ANY_OF)


def expand_hierarchy(labels: Iterable[str], vocab: MeshVocabulary) -> list[str]:
    """Add vocabulary descendants of each label (off by default in the engine)."""
    out: list[str] = []
    for label in labels:
        for item in [label, *vocab.descendants(label)]:
            if item not in out:
                out.append(item)
    return out


def filter_matches(flt: MeshFilter, doc) -> bool:
    if flt.is_match_all:
        return True
    wanted = set(flt.terms)
    return any(term in wanted for term in doc.mesh)

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from importlib import resources
from typing import Optional

from ..mesh import MeshFilter

SNIPPET_CAP = 1200


class RetrieverId(str, Enum):
    GENE = "Gene"
    DBSNP = "DbSnp"
    GENOME = "Genome"
    PROTEIN = "Protein"
    WEB_SEARCH = "WebSearch"
    PUBMED_LOCAL = "PubMedLocal"

    @classmethod
    def parse(cls, value: str) -> "RetrieverId":
        for member in cls:
            if value in (member.value, member.name) or value.casefold() == member.value.casefold():
                return member
        raise ValueError(f"unknown retriever {value!r}")


ENTITY_DATABASES = (RetrieverId.GENE, RetrieverId.DBSNP, RetrieverId.GENOME, RetrieverId.PROTEIN)

# Result caps per source family: entity databases, web search, local corpus.
DEFAULT_MAX_RESULTS = {
    RetrieverId.GENE: 10,
    RetrieverId.DBSNP: 10,
    RetrieverId.GENOME: 10,
    RetrieverId.PROTEIN: 10,
    RetrieverId.WEB_SEARCH: 10,
    RetrieverId.PUBMED_LOCAL: 4,
}


@dataclass(frozen=True)
class RetrieverManual:
    id: RetrieverId
    name: str
    manual_text: str
    input_requirements: str

    def render(self) -> str:
        return f"Manual #{self.name}: {self.manual_text}"


_MANUAL_FILES = (
    (RetrieverId.GENE, "Gene", "gene.txt"),
    (RetrieverId.DBSNP, "dbSNP", "dbsnp.txt"),
    (RetrieverId.GENOME, "Genome", "genome.txt"),
    (RetrieverId.PROTEIN, "Protein", "protein.txt"),
    (RetrieverId.WEB_SEARCH, "Web Search", "web_search.txt"),
    (RetrieverId.PUBMED_LOCAL, "PubMed", "pubmed.txt"),
)


def _last_sentence(text: str) -> str:
    body = text.rstrip()
    cut = body.rstrip(".").rfind(". ")
    return (body[cut + 2:] if cut >= 0 else body).strip()


def list_manuals() -> list[RetrieverManual]:
    root = resources.files("biorag").joinpath("manuals")
    out = []
    for rid, name, filename in _MANUAL_FILES:
        text = root.joinpath(filename).read_text("utf-8")
        out.append(RetrieverManual(rid, name, text, _last_sentence(text)))
    return out


def manual_for(rid: RetrieverId) -> RetrieverManual:
    for manual in list_manuals():
        if manual.id is rid:
            return manual
    raise KeyError(rid)


@dataclass(frozen=True)
class RetrievalRequest:
    retriever: RetrieverId
    query: str
    filter: Optional[MeshFilter] = None
    max_results: int = 0

    def __post_init__(self):
        if self.max_results == 0:
            object.__setattr__(self, "max_results", DEFAULT_MAX_RESULTS[self.retriever])
        if self.max_results < 1:
            raise ValueError("max_results must be a positive integer")
        if self.filter is not None and self.retriever is not RetrieverId.PUBMED_LOCAL:
            raise ValueError("MeSH filters apply to the local corpus only")

    def to_dict(self) -> dict:
        return {
            "retriever": self.retriever.value,
            "query": self.query,
            "filter": self.filter.to_dict() if self.filter else None,
            "max_results": self.max_results,
        }


@dataclass(frozen=True)
class EvidenceItem:
    source: RetrieverId
    title: str
    snippet: str
    locator: str
    score: Optional[float] = None

    def __post_init__(self):
        if not self.snippet:
            raise ValueError("evidence snippet must be nonempty")
        if not self.locator:
            raise ValueError("evidence locator must be nonempty")

    def to_dict(self) -> dict:
        return {
            "source": self.source.value,
            "title": self.title,
            "snippet": self.snippet,
            "locator": self.locator,
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "EvidenceItem":
        score = obj.get("score")
        return cls(
            source=RetrieverId.parse(obj["source"]),
            title=obj.get("title", ""),
            snippet=obj["snippet"],
            locator=obj["locator"],
            score=None if score is None else float(score),
        )

    def digest_line(self) -> str:
        return f"— [{self.source.value}:{self.locator}] {self.title}: {self.snippet}"


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


@dataclass(frozen=True)
class EvidenceSet:
    request: RetrievalRequest
    items: tuple[EvidenceItem, ...]
    fetched_at: datetime = field(default_factory=utcnow)
    replayed: bool = False
    fallback_used: bool = False
    error: Optional[str] = None

    def __post_init__(self):
        if len(self.items) > self.request.max_results:
            raise ValueError("evidence set exceeds max_results")

    def to_dict(self) -> dict:
        return {
            "request": self.request.to_dict(),
            "items": [item.to_dict() for item in self.items],
            "fetched_at": self.fetched_at.isoformat(),
            "replayed": self.replayed,
            "fallback_used": self.fallback_used,
            "error": self.error,
        }


def cap_snippet(title: str, paragraph: str, cap: int = SNIPPET_CAP) -> str:
    """Title plus first paragraph of the description, at most ``cap`` characters."""
    first = paragraph.strip().split("\n\n", 1)[0].strip()
    text = f"{title}. {first}" if title and first else (title or first)
    text = " ".join(text.split())
    return text[:cap]

"""Information sources: four NCBI entity databases, web search, the local abstract corpus."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Protocol

from ..embedding import Embedder
from ..errors import BioRagError, CassetteMiss, EmptyInput, NotConfigured, RetrieverFailure
from ..index import VectorIndex
from ..mesh import MATCH_ALL_FILTER, MeshFilter
from .cassette import LIVE, MODES, RECORD, REPLAY, Cassette, request_key
from .entrez import EntrezClient
from .models import (
    DEFAULT_MAX_RESULTS,
    ENTITY_DATABASES,
    SNIPPET_CAP,
    EvidenceItem,
    EvidenceSet,
    RetrievalRequest,
    RetrieverId,
    RetrieverManual,
    cap_snippet,
    list_manuals,
    manual_for,
    utcnow,
)
from .ratelimit import TokenBucket, limiter_for
from .websearch import PROVIDERS, WebSearchClient

__all__ = [
    "Cassette", "ClientSet", "DEFAULT_MAX_RESULTS", "ENTITY_DATABASES", "EntrezClient",
    "EvidenceItem", "EvidenceSet", "LIVE", "LocalCorpus", "MODES", "PROVIDERS", "RECORD", "REPLAY",
    "RecordReplay", "RetrievalRequest", "RetrieverId", "RetrieverManual", "TokenBucket",
    "WebSearchClient", "entity_lookup", "execute", "limiter_for", "list_manuals", "manual_for",
    "request_key", "web_search",
]


class EntityClient(Protocol):
    replaying: bool

    def lookup(self, db: RetrieverId, term: str, max_results: int) -> list[EvidenceItem]: ...


class SearchClient(Protocol):
    replaying: bool

    def search(self, query: str, max_results: int) -> list[EvidenceItem]: ...


class RecordReplay:
    """Wraps live entity and web clients with a cassette.

    In ``replay`` mode the live clients are never touched and a missing
    entry is a ``RetrieverFailure`` caused by ``CassetteMiss``.  In
    ``record`` mode live results are appended to the cassette.
    """

    def __init__(self, cassette: Cassette, mode: str = REPLAY, entity=None, web=None):
        if mode not in MODES:
            raise ValueError(f"unknown cassette mode {mode!r}")
        self.cassette = cassette
        self.mode = mode
        self.entity = entity
        self.web = web

    @property
    def replaying(self) -> bool:
        return self.mode == REPLAY

    def _fetch(self, rid: RetrieverId, query: str, max_results: int, call: Callable[[], list]) -> list:
        key = request_key(rid, query, max_results)
        if self.mode == REPLAY:
            try:
                return self.cassette.lookup(key)
            except CassetteMiss as miss:
                raise RetrieverFailure(rid, miss) from miss
        items = call()
        if self.mode == RECORD:
            self.cassette.record(key, items)
        return items

    def lookup(self, db: RetrieverId, term: str, max_results: int) -> list[EvidenceItem]:
        def live():
            if self.entity is None:
                raise RetrieverFailure(db, NotConfigured("no live entity client"))
            return self.entity.lookup(db, term, max_results)

        return self._fetch(db, term, max_results, live)

    def search(self, query: str, max_results: int) -> list[EvidenceItem]:
        def live():
            if self.web is None:
                raise RetrieverFailure(RetrieverId.WEB_SEARCH, NotConfigured("no web search provider configured"))
            return self.web.search(query, max_results)

        return self._fetch(RetrieverId.WEB_SEARCH, query, max_results, live)


class LocalCorpus:
    """The local abstract index plus the embedder used for queries."""

    replaying = False

    def __init__(self, index: VectorIndex, embedder: Embedder):
        if embedder.spec != index.spec:
            raise ValueError(f"index was built with {index.spec}, query embedder is {embedder.spec}")
        self.index = index
        self.embedder = embedder

    def search(self, query: str, flt: MeshFilter, k: int) -> tuple[list[EvidenceItem], bool]:
        hits = self.index.search(self.embedder.embed(query), flt, k)
        items = []
        for hit in hits:
            doc = self.index.get(hit.doc_id)
            snippet = cap_snippet("", doc.abstract) or doc.title or doc.id
            items.append(EvidenceItem(RetrieverId.PUBMED_LOCAL, doc.title, snippet, doc.id, hit.score))
        return items, any(h.fallback_used for h in hits)


@dataclass
class ClientSet:
    entity: Optional[EntityClient] = None
    web: Optional[SearchClient] = None
    local: Optional[LocalCorpus] = None


def _check(text: str, max_results: int) -> None:
    if not text or not text.strip():
        raise EmptyInput("query is empty")
    if isinstance(max_results, bool) or not isinstance(max_results, int) or max_results < 1:
        raise ValueError("max_results must be a positive integer")


def entity_lookup(db: RetrieverId, term: str, max_results: int, client: EntityClient) -> list[EvidenceItem]:
    if db not in ENTITY_DATABASES:
        raise ValueError(f"{db} is not an entity database")
    _check(term, max_results)
    if client is None:
        raise RetrieverFailure(db, NotConfigured("no entity client configured"))
    return list(client.lookup(db, term.strip(), max_results))[:max_results]


def web_search(query: str, max_results: int, client: SearchClient) -> list[EvidenceItem]:
    _check(query, max_results)
    if client is None:
        raise RetrieverFailure(RetrieverId.WEB_SEARCH, NotConfigured("no web search provider configured"))
    return list(client.search(query.strip(), max_results))[:max_results]


def execute(req: RetrievalRequest, deps: ClientSet, clock=utcnow) -> EvidenceSet:
    """Run one retrieval request against the matching client."""
    rid = req.retriever
    fallback = False
    try:
        match rid:
            case RetrieverId.GENE | RetrieverId.DBSNP | RetrieverId.GENOME | RetrieverId.PROTEIN:
                items = entity_lookup(rid, req.query, req.max_results, deps.entity)
                replayed = bool(getattr(deps.entity, "replaying", False))
            case RetrieverId.WEB_SEARCH:
                items = web_search(req.query, req.max_results, deps.web)
                replayed = bool(getattr(deps.web, "replaying", False))
            case RetrieverId.PUBMED_LOCAL:
                if deps.local is None:
                    raise RetrieverFailure(rid, NotConfigured("no local index loaded"))
                _check(req.query, req.max_results)
                items, fallback = deps.local.search(req.query, req.filter or MATCH_ALL_FILTER, req.max_results)
                replayed = False
    except RetrieverFailure:
        raise
    except BioRagError as exc:
        raise RetrieverFailure(rid, exc) from exc
    return EvidenceSet(
        request=req,
        items=tuple(items[: req.max_results]),
        fetched_at=clock(),
        replayed=replayed,
        fallback_used=fallback,
    )

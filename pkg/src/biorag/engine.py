from __future__ import annotations

import logging
from dataclasses import replace
from typing import Callable, Optional

from .backends import RemoteBackend, ScriptedBackend
from .config import Config
from .embedding import get_embedder
from .index import load_index_file
from .mesh import LexicalPredictor, MeshTerm, MeshVocabulary, RemotePredictor, ScriptedPredictor, load_mesh_vocabulary
from .orchestrator import AblationFlags, FinalAnswer, SessionConfig, SessionDeps, run_session
from .retrievers import (
    LIVE,
    RECORD,
    REPLAY,
    Cassette,
    ClientSet,
    EntrezClient,
    LocalCorpus,
    RecordReplay,
    RetrieverId,
    WebSearchClient,
)
from .retrievers.entrez import EUTILS_BASE
from .retrievers.ratelimit import limiter_for

logger = logging.getLogger(__name__)


class Engine:
    """A configured pipeline: backend factory, retriever clients, MeSH model, index."""

    def __init__(
        self,
        session: SessionConfig,
        backend_factory: Callable[[], object],
        deps: SessionDeps,
        clock=None,
    ):
        self.session = session
        self.backend_factory = backend_factory
        self.deps = deps
        self.clock = clock

    @property
    def ready(self) -> bool:
        local_needed = RetrieverId.PUBMED_LOCAL not in self.session.ablation.disable_retriever
        return self.deps.clients.local is not None or not local_needed

    def ask(
        self,
        question: str,
        max_iterations: Optional[int] = None,
        ablation: Optional[AblationFlags] = None,
    ) -> FinalAnswer:
        session = self.session
        if max_iterations is not None:
            session = replace(session, max_iterations=max_iterations)
        if ablation is not None:
            session = replace(session, ablation=ablation)
        kwargs = {"clock": self.clock} if self.clock is not None else {}
        return run_session(question, session, self.backend_factory(), self.deps, **kwargs)

    @classmethod
    def from_config(cls, config: Config) -> "Engine":
        return cls(config.session(), _backend_factory(config), _deps(config))


def _backend_factory(config: Config) -> Callable[[], object]:
    spec = config.section("backend") or {}
    kind = spec.get("kind", "remote")
    if kind == "scripted":
        script = config.path("backend", "script")
        if script is None:
            raise ValueError("backend.script is required for a scripted backend")
        return lambda: ScriptedBackend.from_file(script)
    if kind == "remote":
        shared = RemoteBackend(
            endpoint=spec.get("endpoint"),
            model=spec.get("model", "llama3-70b"),
            api_key=spec.get("api_key"),
            concurrency_limit=int(spec.get("concurrency_limit", 4)),
            timeout=float(spec.get("timeout", 120.0)),
        )
        return lambda: shared
    raise ValueError(f"unknown backend kind {kind!r}")


def _predictor(config: Config):
    spec = config.section("mesh", "predictor") or {}
    kind = spec.get("kind", "lexical-baseline")
    if kind == "scripted":
        with open(config.path("mesh", "predictor", "path"), encoding="utf-8") as fh:
            return ScriptedPredictor.from_stream(fh)
    if kind == "lexical-baseline":
        return LexicalPredictor()
    if kind == "remote":
        return RemotePredictor(endpoint=spec.get("endpoint"))
    raise ValueError(f"unknown MeSH predictor kind {kind!r}")


def _deps(config: Config) -> SessionDeps:
    retr = config.section("retrievers") or {}
    mode = retr.get("mode", LIVE)
    search = retr.get("search") or {}
    rate = float(retr.get("rate_limit", 3.0))

    def live_entity():
        return EntrezClient(api_key=retr.get("ncbi_api_key"), limiter=limiter_for(EUTILS_BASE, rate))

    def live_web():
        return WebSearchClient(
            provider=search.get("provider"),
            endpoint=search.get("endpoint"),
            api_key=search.get("api_key"),
        )

    if mode == LIVE:
        entity, web = live_entity(), live_web()
    elif mode in (REPLAY, RECORD):
        cassette = Cassette(config.path("retrievers", "cassette"))
        if mode == REPLAY:
            wrapper = RecordReplay(cassette, REPLAY)
        else:
            wrapper = RecordReplay(cassette, RECORD, entity=live_entity(), web=live_web())
        entity = web = wrapper
    else:
        raise ValueError(f"unknown retriever mode {mode!r}")

    local = None
    index_path = config.path("index")
    if index_path is not None and index_path.exists():
        index = load_index_file(index_path)
        emb = config.section("embedder") or {}
        name = emb.get("name", index.spec.name)
        if name != index.spec.name or int(emb.get("dimension", index.spec.dimension)) != index.spec.dimension:
            raise ValueError(f"configured embedder {name!r} does not match index embedder {index.spec}")
        kwargs = {"endpoint": emb["endpoint"]} if emb.get("endpoint") else {}
        local = LocalCorpus(index, get_embedder(index.spec, **kwargs))
    elif index_path is not None:
        logger.warning("index %s not found; local corpus unavailable", index_path)

    vocab = None
    vocab_path = config.path("mesh", "vocabulary")
    if vocab_path is not None:
        with open(vocab_path, encoding="utf-8") as fh:
            vocab = load_mesh_vocabulary(fh, version=vocab_path.name)
    elif local is not None:
        # without a vocabulary file, every label seen in the corpus is admissible
        labels = sorted({m for doc in local.index.docs for m in doc.mesh})
        vocab = MeshVocabulary((MeshTerm(label) for label in labels), version="corpus")

    return SessionDeps(
        clients=ClientSet(entity=entity, web=web, local=local),
        vocab=vocab,
        predictor=_predictor(config),
    )

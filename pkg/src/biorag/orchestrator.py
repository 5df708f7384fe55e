"""The self-evaluated retrieve/assess/generate loop.

One iteration is Select -> Rewrite -> Execute -> Evaluate.  A sufficient
evaluation ends the loop; otherwise the next iteration picks a retriever
again with the already-tried (retriever, query) pairs in view.  After
``max_iterations`` insufficient evaluations the answer is generated from
whatever was gathered and flagged ``exhausted``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime
from typing import Callable, Optional

from .errors import (
    BioRagError,
    EmptyInput,
    GenerationFailed,
    NoRetrieversEnabled,
    RetrieverFailure,
    SelectionFailed,
)
from .mesh import MATCH_ALL_FILTER, MeshFilter, MeshVocabulary, build_filter, expand_hierarchy, predict_mesh
from .prompts import NO_EVIDENCE_MARKER, PromptId, load_template, render_prompt
from .retrievers import (
    DEFAULT_MAX_RESULTS,
    ClientSet,
    EvidenceSet,
    RetrievalRequest,
    RetrieverId,
    RetrieverManual,
    execute,
    list_manuals,
    utcnow,
)

logger = logging.getLogger(__name__)

SELECT = "Select"
REWRITE = "Rewrite"
EXECUTE = "Execute"
EVALUATE = "Evaluate"
GENERATE = "Generate"
PHASES = (SELECT, REWRITE, EXECUTE, EVALUATE, GENERATE)

DEFAULT_MAX_ITERATIONS = 15
DEFAULT_EVIDENCE_BUDGET = 8000


@dataclass(frozen=True)
class AblationFlags:
    disable_retriever: frozenset[RetrieverId] = frozenset()
    disable_mesh_filter: bool = False
    disable_rewrite: bool = False
    disable_self_eval: bool = False

    @classmethod
    def preset(cls, name: str) -> "AblationFlags":
        """Named component removals: D1 Gene, D2 web search, D3 local corpus,
        C1 MeSH filter, C2 query rewrite, C3 self-evaluation."""
        presets = {
            "D1": cls(disable_retriever=frozenset({RetrieverId.GENE})),
            "D2": cls(disable_retriever=frozenset({RetrieverId.WEB_SEARCH})),
            "D3": cls(disable_retriever=frozenset({RetrieverId.PUBMED_LOCAL})),
            "C1": cls(disable_mesh_filter=True),
            "C2": cls(disable_rewrite=True),
            "C3": cls(disable_self_eval=True),
        }
        return presets[name.upper()]

    @classmethod
    def from_presets(cls, names) -> "AblationFlags":
        flags = [cls.preset(n) for n in names]
        return cls(
            disable_retriever=frozenset().union(*(f.disable_retriever for f in flags)),
            disable_mesh_filter=any(f.disable_mesh_filter for f in flags),
            disable_rewrite=any(f.disable_rewrite for f in flags),
            disable_self_eval=any(f.disable_self_eval for f in flags),
        )

    @classmethod
    def from_dict(cls, obj: dict | None) -> "AblationFlags":
        obj = obj or {}
        return cls(
            disable_retriever=frozenset(RetrieverId.parse(r) for r in obj.get("disable_retriever", ())),
            disable_mesh_filter=bool(obj.get("disable_mesh_filter", False)),
            disable_rewrite=bool(obj.get("disable_rewrite", False)),
            disable_self_eval=bool(obj.get("disable_self_eval", False)),
        )

    def to_dict(self) -> dict:
        return {
            "disable_retriever": sorted(r.value for r in self.disable_retriever),
            "disable_mesh_filter": self.disable_mesh_filter,
            "disable_rewrite": self.disable_rewrite,
            "disable_self_eval": self.disable_self_eval,
        }


@dataclass
class SessionConfig:
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    evidence_budget: int = DEFAULT_EVIDENCE_BUDGET
    max_results: dict[RetrieverId, int] = field(default_factory=lambda: dict(DEFAULT_MAX_RESULTS))
    ablation: AblationFlags = field(default_factory=AblationFlags)
    hierarchy_expansion: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


@dataclass
class SessionDeps:
    clients: ClientSet = field(default_factory=ClientSet)
    vocab: Optional[MeshVocabulary] = None
    predictor: object = None


@dataclass
class AgentState:
    question: str
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    ablation: AblationFlags = field(default_factory=AblationFlags)
    iteration: int = 0
    tried: list[tuple[RetrieverId, str]] = field(default_factory=list)
    evidence: list[EvidenceSet] = field(default_factory=list)
    evidence_budget: int = DEFAULT_EVIDENCE_BUDGET
    # warnings raised by a step, drained into that step's trace entry
    warnings: list[str] = field(default_factory=list)
    last_detail: dict = field(default_factory=dict)

    def drain_warnings(self) -> tuple[str, ...]:
        out = tuple(self.warnings)
        self.warnings.clear()
        return out


@dataclass(frozen=True)
class TraceStep:
    iteration: int
    phase: str
    input_digest: str
    output_digest: str
    timestamp: datetime
    detail: dict = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    def digest_line(self) -> str:
        detail = json.dumps(self.detail, sort_keys=True, ensure_ascii=False)
        return f"{self.iteration}|{self.phase}|{self.input_digest}|{self.output_digest}|{detail}|{'; '.join(self.warnings)}"

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "phase": self.phase,
            "input_digest": self.input_digest,
            "output_digest": self.output_digest,
            "timestamp": self.timestamp.isoformat(),
            "detail": self.detail,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class FinalAnswer:
    text: str
    iterations_used: int
    exhausted: bool
    trace: tuple[TraceStep, ...]
    error: Optional[str] = None

    def trace_digest(self) -> str:
        h = hashlib.sha256()
        for step in self.trace:
            h.update(step.digest_line().encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()


def digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def evidence_digest(state: AgentState) -> str:
    """All evidence lines, oldest evicted first until within the character budget."""
    lines = [item.digest_line() for ev in state.evidence for item in ev.items]
    total = sum(len(line) for line in lines) + max(0, len(lines) - 1)
    while lines and total > state.evidence_budget:
        dropped = lines.pop(0)
        total -= len(dropped) + (1 if lines else 0)
    if not lines:
        return NO_EVIDENCE_MARKER
    return "\n".join(lines)


def enabled_manuals(state: AgentState, manuals: list[RetrieverManual] | None = None) -> list[RetrieverManual]:
    manuals = manuals if manuals is not None else list_manuals()
    return [m for m in manuals if m.id not in state.ablation.disable_retriever]


_ALIASES = {
    RetrieverId.GENE: ("gene database", "gene"),
    RetrieverId.DBSNP: ("dbsnp", "snp"),
    RetrieverId.GENOME: ("genome database", "genome"),
    RetrieverId.PROTEIN: ("protein database", "protein"),
    RetrieverId.WEB_SEARCH: ("web search", "websearch", "web"),
    RetrieverId.PUBMED_LOCAL: ("pubmed local", "pubmed", "pubmedlocal", "local vector database"),
}


def parse_retriever(reply: str, manuals: list[RetrieverManual]) -> Optional[RetrieverId]:
    """Earliest manual name (or alias) mentioned in the reply, case-insensitively."""
    folded = reply.casefold()
    best: Optional[tuple[int, int, RetrieverId]] = None
    for manual in manuals:
        names = {manual.name.casefold(), manual.id.value.casefold(), *_ALIASES[manual.id]}
        for name in names:
            m = re.search(rf"(?<![a-z0-9]){re.escape(name)}(?![a-z0-9])", folded)
            if m is None:
                continue
            cand = (m.start(), -len(name), manual.id)
            if best is None or cand[:2] < best[:2]:
                best = cand
    return best[2] if best else None


def _p1(state: AgentState, manuals: list[RetrieverManual]) -> str:
    prompt = render_prompt(
        load_template(PromptId.P1),
        {"Question": state.question, "Retrieval": "\n".join(m.render() for m in manuals)},
    )
    if state.tried:
        tried = "\n".join(f"- {rid.value}: {query}" for rid, query in state.tried)
        prompt += f"\n\nAlready tried (RETRIEVAL METHOD: query):\n{tried}"
    return prompt


def select_retriever(state: AgentState, backend, manuals: list[RetrieverManual] | None = None) -> RetrieverId:
    enabled = enabled_manuals(state, manuals)
    if not enabled:
        raise NoRetrieversEnabled("every retriever is disabled")
    all_manuals = manuals if manuals is not None else list_manuals()
    allowed = {m.id for m in enabled}
    prompt = _p1(state, enabled)
    replies = []
    for attempt in range(2):
        try:
            reply = backend.complete(prompt)
        except BioRagError as exc:
            raise SelectionFailed(f"backend failed during selection: {exc}") from exc
        replies.append(reply)
        rid = parse_retriever(reply, all_manuals)
        if rid is not None and rid in allowed:
            state.last_detail = {"retriever": rid.value, "replies": len(replies), "prompt": prompt}
            return rid
        note = "disabled" if rid is not None else "unrecognized"
        state.warnings.append(f"selection reply {reply!r} {note}; re-prompting" if attempt == 0 else
                              f"selection reply {reply!r} {note}")
        names = ", ".join(m.name for m in enabled)
        prompt = (
            _p1(state, enabled)
            + f"\n\nYour previous reply did not name an available RETRIEVAL METHOD. Reply with exactly one of: {names}."
        )
    raise SelectionFailed(f"could not parse a retriever from replies {replies!r}")


def rewrite_query(state: AgentState, retriever: RetrieverId, backend, manuals: list[RetrieverManual] | None = None) -> str:
    if state.ablation.disable_rewrite:
        state.last_detail = {"rewrite": "disabled"}
        return state.question
    manual = next(m for m in (manuals or list_manuals()) if m.id is retriever)
    prompt = render_prompt(
        load_template(PromptId.P2),
        {
            "Question": state.question,
            "Retrieval": f"{manual.render()}\nInput Requirements: {manual.input_requirements}",
        },
    )
    state.last_detail = {"prompt": prompt}
    try:
        reply = backend.complete(prompt).strip()
    except BioRagError as exc:
        state.warnings.append(f"rewrite backend failed ({exc}); using original question")
        return state.question
    if not reply:
        state.warnings.append("empty rewrite; using original question")
        return state.question
    return reply


def _local_filter(state: AgentState, deps: SessionDeps, config: SessionConfig) -> MeshFilter:
    if state.ablation.disable_mesh_filter:
        return MATCH_ALL_FILTER
    if deps.predictor is None or deps.vocab is None:
        state.warnings.append("no MeSH predictor configured; searching unfiltered")
        return MATCH_ALL_FILTER
    try:
        labels = predict_mesh(deps.predictor, state.question, deps.vocab)
    except BioRagError as exc:
        state.warnings.append(f"MeSH prediction failed ({exc}); searching unfiltered")
        return MATCH_ALL_FILTER
    if config.hierarchy_expansion:
        labels = expand_hierarchy(labels, deps.vocab)
    return build_filter(labels)


def execute_retrieval(
    state: AgentState,
    retriever: RetrieverId,
    rewritten: str,
    deps: SessionDeps,
    config: SessionConfig | None = None,
    clock: Callable[[], datetime] = utcnow,
) -> EvidenceSet:
    if not rewritten or not rewritten.strip():
        raise EmptyInput("rewritten query is empty")
    config = config or SessionConfig()
    flt = _local_filter(state, deps, config) if retriever is RetrieverId.PUBMED_LOCAL else None
    req = RetrievalRequest(retriever, rewritten, flt, config.max_results[retriever])
    # rendered for the audit trail; execution itself is deterministic
    p3 = render_prompt(
        load_template(PromptId.P3),
        {"Query": rewritten, "Retrieval": retriever.value + (f" {flt.describe()}" if flt else "")},
    )
    try:
        evidence = execute(req, deps.clients, clock=clock)
    except RetrieverFailure as exc:
        state.warnings.append(f"retriever failure: {exc}")
        evidence = EvidenceSet(req, (), clock(), error=str(exc))
    state.evidence.append(evidence)
    state.tried.append((retriever, rewritten))
    state.last_detail = {
        "retriever": retriever.value,
        "query": rewritten,
        "max_results": req.max_results,
        "filter": flt.expression() if flt else None,
        "items": len(evidence.items),
        "locators": [item.locator for item in evidence.items],
        "replayed": evidence.replayed,
        "fallback_used": evidence.fallback_used,
        "error": evidence.error,
        "prompt": p3,
    }
    return evidence


_WORD = re.compile(r"[A-Za-z]+")


def parse_verdict(reply: str) -> Optional[bool]:
    m = _WORD.search(reply)
    if m is None:
        return None
    word = m.group(0).lower()
    if word == "yes":
        return True
    if word == "no":
        return False
    return None


def self_evaluate(state: AgentState, backend) -> bool:
    if state.ablation.disable_self_eval:
        state.last_detail = {"self_eval": "disabled"}
        return True
    prompt = render_prompt(
        load_template(PromptId.P4),
        {"Question": state.question, "Results": evidence_digest(state)},
    )
    state.last_detail = {"prompt": prompt}
    try:
        reply = backend.complete(prompt)
    except BioRagError as exc:
        state.warnings.append(f"evaluation backend failed ({exc}); treating as NO")
        return False
    verdict = parse_verdict(reply)
    state.last_detail["reply"] = reply
    if verdict is None:
        state.warnings.append(f"unparseable evaluation {reply!r}; treating as NO")
        return False
    return verdict


def generate_answer(state: AgentState, backend) -> str:
    prompt = render_prompt(
        load_template(PromptId.P5),
        {"Question": state.question, "Results": evidence_digest(state)},
    )
    state.last_detail = {"prompt": prompt}
    try:
        return backend.complete(prompt)
    except Exception as exc:  # backends may raise transport or timeout errors of any type
        raise GenerationFailed(f"answer generation failed: {exc}") from exc


class _Trace:
    def __init__(self, clock: Callable[[], datetime]):
        self.steps: list[TraceStep] = []
        self._clock = clock

    def add(self, state: AgentState, phase: str, inp: str, out: str) -> None:
        detail = dict(state.last_detail)
        prompt = detail.pop("prompt", None)
        state.last_detail = {}
        self.steps.append(
            TraceStep(
                iteration=state.iteration,
                phase=phase,
                input_digest=digest(prompt if prompt is not None else inp),
                output_digest=digest(out),
                timestamp=self._clock(),
                detail=detail,
                warnings=state.drain_warnings(),
            )
        )


def run_session(
    question: str,
    config: SessionConfig | None,
    backend,
    deps: SessionDeps | None = None,
    clock: Callable[[], datetime] = utcnow,
) -> FinalAnswer:
    if not question or not question.strip():
        raise EmptyInput("question is empty")
    config = config or SessionConfig()
    deps = deps or SessionDeps()
    state = AgentState(
        question=question.strip(),
        max_iterations=config.max_iterations,
        ablation=config.ablation,
        evidence_budget=config.evidence_budget,
    )
    trace = _Trace(clock)
    manuals = list_manuals()

    while state.iteration < state.max_iterations:
        state.iteration += 1
        try:
            rid = select_retriever(state, backend, manuals)
        except (SelectionFailed, NoRetrieversEnabled) as exc:
            state.last_detail = {"error": str(exc)}
            trace.add(state, SELECT, state.question, "")
            return FinalAnswer(
                text=f"ERROR: {exc}",
                iterations_used=state.iteration - 1,
                exhausted=False,
                trace=tuple(trace.steps),
                error=type(exc).__name__,
            )
        trace.add(state, SELECT, state.question, rid.value)

        query = rewrite_query(state, rid, backend, manuals)
        trace.add(state, REWRITE, state.question, query)

        evidence = execute_retrieval(state, rid, query, deps, config, clock=clock)
        ev = evidence.to_dict()
        ev.pop("fetched_at")
        trace.add(state, EXECUTE, json.dumps(evidence.request.to_dict(), sort_keys=True),
                  json.dumps(ev, sort_keys=True))

        sufficient = self_evaluate(state, backend)
        trace.add(state, EVALUATE, evidence_digest(state), "YES" if sufficient else "NO")
        if sufficient:
            break

    exhausted = not sufficient
    if exhausted:
        logger.info("no sufficient evidence after %d iterations; answering anyway", state.iteration)
    text = generate_answer(state, backend)
    trace.add(state, GENERATE, evidence_digest(state), text)
    return FinalAnswer(
        text=text,
        iterations_used=state.iteration,
        exhausted=exhausted,
        trace=tuple(trace.steps),
    )

"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class BioRagError(Exception):
    """Base class for every error raised by this package."""


class EmptyInput(BioRagError, ValueError):
    pass


class ParseError(BioRagError, ValueError):
    def __init__(self, line: int, message: str = "malformed line"):
        super().__init__(f"line {line}: {message}")
        self.line = line


class BackendUnavailable(BioRagError):
    pass


class DimensionMismatch(BioRagError, ValueError):
    pass


class DuplicateId(BioRagError, ValueError):
    def __init__(self, doc_id: str):
        super().__init__(f"duplicate document id: {doc_id!r}")
        self.doc_id = doc_id


class FormatError(BioRagError):
    pass


class UnsupportedVersion(FormatError):
    pass


class CorruptIndex(FormatError):
    pass


class RetrieverFailure(BioRagError):
    def __init__(self, retriever, cause):
        name = getattr(retriever, "value", retriever)
        super().__init__(f"{name}: {cause}")
        self.retriever = retriever
        self.cause = cause


class RateLimited(BioRagError):
    def __init__(self, endpoint: str, retry_after: float):
        super().__init__(f"rate limit exceeded for {endpoint}; retry after {retry_after:.2f}s")
        self.endpoint = endpoint
        self.retry_after = retry_after


class CassetteMiss(BioRagError, LookupError):
    def __init__(self, key: str):
        super().__init__(f"no cassette entry for key {key!r}")
        self.key = key


class NotConfigured(BioRagError):
    pass


class MissingSlot(BioRagError, KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"missing prompt slot: {self.name}"


class SelectionFailed(BioRagError):
    pass


class NoRetrieversEnabled(BioRagError):
    pass


class GenerationFailed(BioRagError):
    pass


class ScriptExhausted(BackendUnavailable):
    """A scripted backend was called more times than it has replies."""


class EmptyDataset(BioRagError, ValueError):
    pass


class IngestAborted(BioRagError):
    """Input stream failed mid-run; ``stats`` holds what was counted so far."""

    def __init__(self, stats, cause: BaseException):
        super().__init__(f"ingest aborted after {stats.input_count} records: {cause}")
        self.stats = stats
        self.cause = cause


class EmbedFailure(BioRagError):
    def __init__(self, doc_id: str, cause: BaseException):
        super().__init__(f"embedding failed for document {doc_id!r}: {cause}")
        self.doc_id = doc_id
        self.cause = cause

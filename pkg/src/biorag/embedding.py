"""Text embedding contract, the hashed bag-of-tokens reference embedder, cosine similarity.

The reference embedder tokenizes lowercased text into maximal alphanumeric
runs, hashes each token's UTF-8 bytes with 64-bit FNV-1a, counts tokens per
bucket ``hash % 256`` and L2-normalizes the counts.  Counts are integers, so
the norm is computed exactly before the single square root; the output is
bitwise reproducible on any IEEE-754 platform.
"""

from __future__ import annotations

import math
import os
import re
import threading
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx

from .errors import BackendUnavailable, DimensionMismatch, EmptyInput

REFERENCE_DIM = 256
FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1
_TOKEN = re.compile(r"[^\W_]+")
NORM_TOLERANCE = 1e-6


def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class EmbedderSpec:
    name: str
    dimension: int
    version: str = "1"

    def __post_init__(self):
        if self.dimension <= 0:
            raise ValueError("dimension must be positive")

    def to_dict(self) -> dict:
        return {"name": self.name, "dimension": self.dimension, "version": self.version}

    @classmethod
    def from_dict(cls, obj: dict) -> "EmbedderSpec":
        return cls(name=obj["name"], dimension=int(obj["dimension"]), version=str(obj.get("version", "1")))


REF256 = EmbedderSpec(name="ref256", dimension=REFERENCE_DIM, version="fnv1a64-1")


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    @property
    def dimension(self) -> int:
        return len(self.values)

    def norm(self) -> float:
        return math.sqrt(math.fsum(v * v for v in self.values))

    def __len__(self) -> int:
        return len(self.values)


def unit_vector(values: Sequence[float]) -> EmbeddingVector:
    """Scale ``values`` to unit L2 norm. A zero vector raises ``EmptyInput``."""
    norm = math.sqrt(math.fsum(float(v) * float(v) for v in values))
    if norm == 0.0 or not math.isfinite(norm):
        raise EmptyInput("cannot normalize a zero or non-finite vector")
    return EmbeddingVector(tuple(float(v) / norm for v in values))


def reference_embed(text: str) -> EmbeddingVector:
    if not text or not text.strip():
        raise EmptyInput("text is empty")
    tokens = tokenize(text)
    if not tokens:
        raise EmptyInput("text has no alphanumeric tokens")
    counts = [0] * REFERENCE_DIM
    for tok in tokens:
        counts[fnv1a_64(tok.encode("utf-8")) % REFERENCE_DIM] += 1
    norm = math.sqrt(sum(c * c for c in counts))
    return EmbeddingVector(tuple(c / norm for c in counts))


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Dot product of two unit vectors, exactly rounded (so symmetric)."""
    if a.dimension != b.dimension:
        raise DimensionMismatch(f"{a.dimension} != {b.dimension}")
    value = math.fsum(x * y for x, y in zip(a.values, b.values))
    return max(-1.0, min(1.0, value))


class Embedder(Protocol):
    spec: EmbedderSpec

    def embed(self, text: str) -> EmbeddingVector: ...


class ReferenceEmbedder:
    spec = REF256

    def embed(self, text: str) -> EmbeddingVector:
        return reference_embed(text)


class RemoteEmbedder:
    """Client for an embedding service speaking ``{"text"} -> {"vector", "dim"}``.

    Concurrent calls are bounded by ``concurrency_limit``.
    """

    def __init__(
        self,
        spec: EmbedderSpec,
        endpoint: str | None = None,
        concurrency_limit: int = 4,
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.spec = spec
        self.endpoint = endpoint or os.environ.get("BIORAG_EMBED_ENDPOINT")
        self._slots = threading.BoundedSemaphore(concurrency_limit)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def embed(self, text: str) -> EmbeddingVector:
        if not text or not text.strip():
            raise EmptyInput("text is empty")
        if not self.endpoint:
            raise BackendUnavailable("no embedding endpoint configured (BIORAG_EMBED_ENDPOINT)")
        with self._slots:
            try:
                resp = self._client.post(self.endpoint, json={"text": text})
                resp.raise_for_status()
                body = resp.json()
            except (httpx.HTTPError, ValueError) as exc:
                raise BackendUnavailable(f"embedding backend failed: {exc}") from exc
        vector = body.get("vector")
        if not isinstance(vector, list) or body.get("dim", len(vector)) != len(vector):
            raise BackendUnavailable("malformed embedding response")
        if len(vector) != self.spec.dimension:
            raise DimensionMismatch(f"backend returned {len(vector)} dims, expected {self.spec.dimension}")
        return unit_vector(vector)


def get_embedder(spec: EmbedderSpec, **kwargs) -> Embedder:
    if spec.name == REF256.name:
        if spec.dimension != REFERENCE_DIM:
            raise DimensionMismatch("the reference embedder is fixed at 256 dimensions")
        return ReferenceEmbedder()
    return RemoteEmbedder(spec, **kwargs)


def embed(spec: EmbedderSpec, text: str, **kwargs) -> EmbeddingVector:
    vec = get_embedder(spec, **kwargs).embed(text)
    if vec.dimension != spec.dimension:
        raise DimensionMismatch(f"{vec.dimension} != {spec.dimension}")
    return vec

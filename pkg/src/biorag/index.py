"""Exhaustive cosine index with MeSH pre-filtering and a versioned binary format.

File layout (all integers little-endian)::

    b"BIORAG-IDX v1\\n"
    u32 length, UTF-8 JSON embedder spec {"name", "dimension", "version"}
    u32 record count
    per record:
        u32 length, UTF-8 JSON document {"id", "title", "abstract", "mesh", "year"}
        dimension x float64 vector components

Scores are exactly rounded dot products (``math.fsum`` over the products of
the query's nonzero components), so results do not depend on BLAS summation
order and ties are real ties.
"""

from __future__ import annotations

import heapq
import json
import math
import struct
from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np

from .corpus import CleanDocument
from .embedding import Embedder, EmbedderSpec, EmbeddingVector, get_embedder
from .errors import (
    BioRagError,
    CorruptIndex,
    DimensionMismatch,
    DuplicateId,
    EmbedFailure,
    FormatError,
    UnsupportedVersion,
)
from .mesh import MATCH_ALL_FILTER, MeshFilter

MAGIC_PREFIX = b"BIORAG-IDX v"
FORMAT_VERSION = b"1"
MAGIC = MAGIC_PREFIX + FORMAT_VERSION + b"\n"
_U32 = struct.Struct("<I")


@dataclass(frozen=True)
class SearchHit:
    doc_id: str
    score: float
    rank: int
    fallback_used: bool = False


def index_text(doc: CleanDocument) -> str:
    return f"{doc.title} {doc.abstract}"


class VectorIndex:
    def __init__(self, spec: EmbedderSpec, docs: list[CleanDocument], matrix: np.ndarray):
        if matrix.shape != (len(docs), spec.dimension):
            raise ValueError("matrix shape does not match documents and embedder dimension")
        self.spec = spec
        self.docs = docs
        self.matrix = matrix
        self._pos = {doc.id: i for i, doc in enumerate(docs)}
        self._by_label: dict[str, list[int]] = {}
        for i, doc in enumerate(docs):
            for label in set(doc.mesh):
                self._by_label.setdefault(label, []).append(i)

    def __len__(self) -> int:
        return len(self.docs)

    def get(self, doc_id: str) -> CleanDocument:
        return self.docs[self._pos[doc_id]]

    def vector(self, doc_id: str) -> EmbeddingVector:
        return EmbeddingVector(tuple(self.matrix[self._pos[doc_id]].tolist()))

    def _candidates(self, flt: MeshFilter) -> list[int]:
        if flt.is_match_all:
            return list(range(len(self.docs)))
        rows: set[int] = set()
        for term in flt.terms:
            rows.update(self._by_label.get(term, ()))
        return sorted(rows)

    def _score(self, rows: list[int], query: EmbeddingVector) -> list[float]:
        q = np.asarray(query.values, dtype=np.float64)
        nz = np.flatnonzero(q)
        if not rows:
            return []
        products = self.matrix[np.ix_(rows, nz)] * q[nz]
        return [math.fsum(row) for row in products.tolist()]

    def search(
        self,
        query: EmbeddingVector,
        flt: MeshFilter = MATCH_ALL_FILTER,
        k: int = 10,
    ) -> list[SearchHit]:
        if k < 1:
            raise ValueError("k must be >= 1")
        if query.dimension != self.spec.dimension:
            raise DimensionMismatch(f"query has {query.dimension} dims, index has {self.spec.dimension}")
        rows = self._candidates(flt)
        fallback = False
        if not rows and not flt.is_match_all:
            rows = list(range(len(self.docs)))
            fallback = True
        scores = self._score(rows, query)
        top = heapq.nsmallest(
            k,
            zip(scores, rows),
            key=lambda pair: (-pair[0], self.docs[pair[1]].id),
        )
        return [
            SearchHit(self.docs[row].id, score, rank, fallback)
            for rank, (score, row) in enumerate(top, start=1)
        ]

    # persistence

    def save(self, sink: IO[bytes]) -> None:
        sink.write(MAGIC)
        spec = json.dumps(self.spec.to_dict(), sort_keys=True).encode("utf-8")
        sink.write(_U32.pack(len(spec)))
        sink.write(spec)
        sink.write(_U32.pack(len(self.docs)))
        for i, doc in enumerate(self.docs):
            payload = json.dumps(doc.to_dict(), ensure_ascii=False, sort_keys=True).encode("utf-8")
            sink.write(_U32.pack(len(payload)))
            sink.write(payload)
            sink.write(self.matrix[i].astype("<f8").tobytes())

    @classmethod
    def load(cls, source: IO[bytes]) -> "VectorIndex":
        header = source.readline(len(MAGIC) + 16)
        if not header.startswith(MAGIC_PREFIX):
            if header and MAGIC.startswith(header):
                raise CorruptIndex("truncated header")
            raise FormatError("not a BIORAG index (bad magic)")
        version = header[len(MAGIC_PREFIX):].rstrip(b"\n")
        if not version:
            raise CorruptIndex("truncated header")
        if version != FORMAT_VERSION:
            raise UnsupportedVersion(f"index format version {version.decode('ascii', 'replace')!r}")
        if not header.endswith(b"\n"):
            raise CorruptIndex("truncated header")

        def read_exact(n: int) -> bytes:
            data = source.read(n)
            if len(data) != n:
                raise CorruptIndex(f"expected {n} bytes, got {len(data)}")
            return data

        try:
            spec = EmbedderSpec.from_dict(json.loads(read_exact(_U32.unpack(read_exact(4))[0])))
            (count,) = _U32.unpack(read_exact(4))
            docs: list[CleanDocument] = []
            matrix = np.empty((count, spec.dimension), dtype=np.float64)
            for i in range(count):
                (size,) = _U32.unpack(read_exact(4))
                docs.append(CleanDocument.from_dict(json.loads(read_exact(size))))
                matrix[i] = np.frombuffer(read_exact(8 * spec.dimension), dtype="<f8")
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptIndex(str(exc)) from exc
        if source.read(1):
            raise CorruptIndex("trailing bytes after last record")
        if len({d.id for d in docs}) != len(docs):
            raise CorruptIndex("duplicate document ids")
        return cls(spec, docs, matrix)


def build_index(
    docs: Iterable[CleanDocument],
    embedder: EmbedderSpec | Embedder,
    text_of=index_text,
) -> VectorIndex:
    if isinstance(embedder, EmbedderSpec):
        embedder = get_embedder(embedder)
    spec = embedder.spec
    kept: list[CleanDocument] = []
    rows: list[tuple[float, ...]] = []
    seen: set[str] = set()
    for doc in docs:
        if doc.id in seen:
            raise DuplicateId(doc.id)
        seen.add(doc.id)
        try:
            vec = embedder.embed(text_of(doc))
        except BioRagError as exc:
            raise EmbedFailure(doc.id, exc) from exc
        if vec.dimension != spec.dimension:
            raise EmbedFailure(doc.id, DimensionMismatch(f"{vec.dimension} != {spec.dimension}"))
        kept.append(doc)
        rows.append(vec.values)
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), spec.dimension)
    return VectorIndex(spec, kept, matrix)


def search(index: VectorIndex, query: EmbeddingVector, flt: MeshFilter, k: int) -> list[SearchHit]:
    return index.search(query, flt, k)


def save_index(index: VectorIndex, sink: IO[bytes]) -> None:
    index.save(sink)


def load_index(source: IO[bytes]) -> VectorIndex:
    return VectorIndex.load(source)


def load_index_file(path) -> VectorIndex:
    with open(path, "rb") as fh:
        return VectorIndex.load(fh)


def save_index_file(index: VectorIndex, path) -> None:
    with open(path, "wb") as fh:
        index.save(fh)


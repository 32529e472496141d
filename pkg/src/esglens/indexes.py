"""Per-report search indexes: BM25 keyword index and dense vector index.

Keyword scoring is classic BM25 (k1=1.2, b=0.75) over the same tokenizer
the catalog uses. The vector side is exhaustive cosine, which is exact and
plenty fast at report scale. Vectors are cast to float32 at build time so
search results are identical before and after a persistence round-trip.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import threading
from dataclasses import dataclass, field

import numpy as np

from esglens.errors import GatewayError, IndexStoreError
from esglens.gateway import EmbeddingVector, ModelGateway
from esglens.ingest import Segment
from esglens.jsonio import canonical_dumps
from esglens.textutil import tokenize

__all__ = [
    "BM25_B",
    "BM25_K1",
    "DEFAULT_KEYWORD_TOP_K",
    "EmbeddingCache",
    "KeywordIndex",
    "VectorIndex",
    "build_keyword_index",
    "build_vector_index",
    "load_keyword_index",
    "load_vector_index",
    "save_keyword_index",
    "save_vector_index",
    "search_keyword",
    "search_semantic",
]

BM25_K1 = 1.2
BM25_B = 0.75
DEFAULT_KEYWORD_TOP_K = 20

KEYWORD_INDEX_SCHEMA = "euleresg/keyword-index/v1"

_VECTORS_MAGIC = b"EVEC"
_VECTORS_VERSION = 1


@dataclass(frozen=True)
class KeywordIndex:
    report_id: str
    postings: dict[str, tuple[tuple[str, int], ...]]
    doc_lengths: dict[str, int]
    avg_doc_length: float
    n_segments: int


@dataclass(frozen=True)
class VectorIndex:
    report_id: str
    model_id: str
    segment_ids: tuple[str, ...]
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def vector_for(self, segment_id: str) -> EmbeddingVector:
        try:
            row = self.segment_ids.index(segment_id)
        except ValueError:
            raise IndexStoreError(f"vector index has no segment {segment_id!r}")
        values = tuple(float(x) for x in self.matrix[row])
        return EmbeddingVector(model_id=self.model_id, dim=self.dim, values=values)


class EmbeddingCache:
    """Vectors keyed by (model_id, text hash); re-ingestion reuses them."""

    def __init__(self) -> None:
        self._entries: dict[tuple[str, str], tuple[float, ...]] = {}
        self._lock = threading.Lock()

    @staticmethod
    def _key(model_id: str, text: str) -> tuple[str, str]:
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return (model_id, digest)

    def get(self, model_id: str, text: str) -> tuple[float, ...] | None:
        with self._lock:
            return self._entries.get(self._key(model_id, text))

    def put(self, model_id: str, text: str, values: tuple[float, ...]) -> None:
        with self._lock:
            self._entries[self._key(model_id, text)] = values

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


def build_keyword_index(segments: list[Segment]) -> KeywordIndex:
    if not segments:
        raise IndexStoreError("cannot build a keyword index from zero segments")
    postings_acc: dict[str, dict[str, int]] = {}
    doc_lengths: dict[str, int] = {}
    for seg in segments:
        tokens = tokenize(seg.text)
        doc_lengths[seg.segment_id] = len(tokens)
        for token in tokens:
            postings_acc.setdefault(token, {}).setdefault(seg.segment_id, 0)
            postings_acc[token][seg.segment_id] += 1
    postings = {
        term: tuple(sorted(by_seg.items()))
        for term, by_seg in sorted(postings_acc.items())
    }
    n = len(segments)
    avg = sum(doc_lengths.values()) / n
    return KeywordIndex(
        report_id=segments[0].segment_id.rsplit(":", 1)[0],
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=avg,
        n_segments=n,
    )


def search_keyword(
    index: KeywordIndex,
    query_terms: list[str],
    top_k: int = DEFAULT_KEYWORD_TOP_K,
) -> list[tuple[str, float]]:
    """BM25 over the query terms; zero scores omitted, ties by segment id."""
    scores: dict[str, float] = {}
    n = index.n_segments
    for term in query_terms:
        rows = index.postings.get(term)
        if not rows:
            continue
        df = len(rows)
        idf = math.log((n - df + 0.5) / (df + 0.5) + 1.0)
        for segment_id, tf in rows:
            dl = index.doc_lengths[segment_id]
            denom = tf + BM25_K1 * (
                1.0 - BM25_B + BM25_B * dl / index.avg_doc_length
            )
            scores[segment_id] = scores.get(segment_id, 0.0) + idf * tf * (
                BM25_K1 + 1.0
            ) / denom
    ranked = sorted(
        ((sid, score) for sid, score in scores.items() if score > 0.0),
        key=lambda item: (-item[1], item[0]),
    )
    return ranked[:top_k]


def build_vector_index(
    segments: list[Segment],
    gateway: ModelGateway,
    cache: EmbeddingCache | None = None,
) -> VectorIndex:
    """Embed segments in order, reusing cached vectors where possible."""
    if not segments:
        raise IndexStoreError("cannot build a vector index from zero segments")
    model_id = gateway.embed_model_id
    texts = [seg.text for seg in segments]
    resolved: list[tuple[float, ...] | None] = [None] * len(texts)
    missing: list[int] = []
    for i, text in enumerate(texts):
        cached = cache.get(model_id, text) if cache is not None else None
        if cached is not None:
            resolved[i] = cached
        else:
            missing.append(i)
    if missing:
        try:
            vectors = gateway.embed_texts([texts[i] for i in missing])
        except GatewayError as exc:
            done = len(texts) - len(missing)
            raise GatewayError(
                f"embedding failed after {done} of {len(texts)} segments: {exc}",
                status_code=exc.status_code,
            ) from exc
        for i, vec in zip(missing, vectors):
            resolved[i] = vec.values
            if cache is not None:
                cache.put(model_id, texts[i], vec.values)
    dims = {len(values) for values in resolved if values is not None}
    if len(dims) != 1:
        raise IndexStoreError(f"inconsistent embedding dims {sorted(dims)}")
    matrix = np.array(resolved, dtype=np.float32)
    matrix.setflags(write=False)
    return VectorIndex(
        report_id=segments[0].segment_id.rsplit(":", 1)[0],
        model_id=model_id,
        segment_ids=tuple(seg.segment_id for seg in segments),
        matrix=matrix,
    )


def search_semantic(
    index: VectorIndex,
    query_vector: EmbeddingVector,
    k: int,
) -> list[tuple[str, float]]:
    """Exhaustive cosine top-k; zero vectors score 0; ties by segment id."""
    if query_vector.dim != index.dim:
        raise IndexStoreError(
            f"query dim {query_vector.dim} does not match index dim {index.dim}"
        )
    query = np.asarray(query_vector.values, dtype=np.float64)
    query_norm = float(np.linalg.norm(query))
    matrix = index.matrix.astype(np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    if query_norm == 0.0:
        cosines = np.zeros(len(norms))
    else:
        safe = np.where(norms == 0.0, 1.0, norms)
        cosines = (matrix @ query) / (safe * query_norm)
        cosines = np.where(norms == 0.0, 0.0, cosines)
    ranked = sorted(
        zip(index.segment_ids, (float(c) for c in cosines)),
        key=lambda item: (-item[1], item[0]),
    )
    return ranked[: max(k, 0)]


def save_keyword_index(index: KeywordIndex, path: str) -> None:
    obj = {
        "schema": KEYWORD_INDEX_SCHEMA,
        "report_id": index.report_id,
        "postings": {
            term: [[sid, tf] for sid, tf in rows]
            for term, rows in index.postings.items()
        },
        "doc_lengths": index.doc_lengths,
        "avg_doc_length": index.avg_doc_length,
        "n_segments": index.n_segments,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_dumps(obj))
        fh.write("\n")


def load_keyword_index(path: str) -> KeywordIndex:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("schema") != KEYWORD_INDEX_SCHEMA:
        raise IndexStoreError(
            f"keyword index {path} has schema {obj.get('schema')!r}, "
            f"expected {KEYWORD_INDEX_SCHEMA!r}"
        )
    postings = {
        term: tuple((sid, int(tf)) for sid, tf in rows)
        for term, rows in obj["postings"].items()
    }
    return KeywordIndex(
        report_id=obj["report_id"],
        postings=postings,
        doc_lengths={k: int(v) for k, v in obj["doc_lengths"].items()},
        avg_doc_length=float(obj["avg_doc_length"]),
        n_segments=int(obj["n_segments"]),
    )


def save_vector_index(index: VectorIndex, path: str) -> None:
    meta = {
        "model_id": index.model_id,
        "report_id": index.report_id,
        "segment_ids": list(index.segment_ids),
    }
    n, dim = index.matrix.shape
    with open(path, "wb") as fh:
        fh.write(_VECTORS_MAGIC)
        fh.write(struct.pack("<III", _VECTORS_VERSION, dim, n))
        fh.write(index.matrix.astype("<f4").tobytes(order="C"))
        fh.write(canonical_dumps(meta).encode("utf-8"))


def load_vector_index(path: str) -> VectorIndex:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _VECTORS_MAGIC:
        raise IndexStoreError(f"vector file {path} has a bad magic header")
    version, dim, n = struct.unpack("<III", blob[4:16])
    if version != _VECTORS_VERSION:
        raise IndexStoreError(f"vector file {path} has version {version}")
    body_end = 16 + n * dim * 4
    if len(blob) < body_end:
        raise IndexStoreError(f"vector file {path} is truncated")
    matrix = np.frombuffer(blob[16:body_end], dtype="<f4").reshape(n, dim).copy()
    matrix.setflags(write=False)
    try:
        meta = json.loads(blob[body_end:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IndexStoreError(f"vector file {path} has a bad id table: {exc}")
    ids = meta.get("segment_ids")
    if not isinstance(ids, list) or len(ids) != n:
        raise IndexStoreError(f"vector file {path} id table does not match header")
    return VectorIndex(
        report_id=meta.get("report_id", ""),
        model_id=meta.get("model_id", ""),
        segment_ids=tuple(ids),
        matrix=matrix,
    )

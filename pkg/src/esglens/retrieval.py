"""Dual-channel evidence retrieval with score fusion.

The keyword channel runs BM25 over metric terminology and min-max
normalizes the returned pool; the semantic channel embeds the metric's
expansion text, takes cosine top-k, and reranks those candidates. Fusion
weights the semantic side higher (w, default 0.7) and keeps the top five.
"""

from __future__ import annotations

from dataclasses import dataclass

from esglens.catalog import ExpandedMetric, MetricSpec
from esglens.errors import ConfigError
from esglens.gateway import ModelGateway
from esglens.indexes import KeywordIndex, VectorIndex, search_keyword, search_semantic
from esglens.ingest import Segment
from esglens.textutil import tokenize

__all__ = [
    "FusedCandidate",
    "RetrievalCandidate",
    "RetrievalConfig",
    "TRACE_SCHEMA",
    "fuse_and_select",
    "keyword_query_terms",
    "retrieval_trace_obj",
    "retrieve_keyword_channel",
    "retrieve_keyword_channel_terms",
    "retrieve_semantic_channel",
    "retrieve_semantic_channel_text",
]

TRACE_SCHEMA = "euleresg/trace/v1"


@dataclass(frozen=True)
class RetrievalConfig:
    keyword_top_k: int = 20
    semantic_top_k: int = 20
    rerank_weight: float = 0.7
    final_top_n: int = 5

    def __post_init__(self) -> None:
        if not 0.0 <= self.rerank_weight <= 1.0:
            raise ConfigError("rerank_weight must be within [0, 1]")
        if self.final_top_n < 1:
            raise ConfigError("final_top_n must be at least 1")
        if self.keyword_top_k < 1 or self.semantic_top_k < 1:
            raise ConfigError("channel top_k values must be at least 1")


@dataclass(frozen=True)
class RetrievalCandidate:
    segment_id: str
    channel: str
    raw_score: float
    normalized_score: float


@dataclass(frozen=True)
class FusedCandidate:
    segment_id: str
    keyword_norm: float | None
    semantic_norm: float | None
    fused_score: float
    channels_hit: int


def keyword_query_terms(metric: MetricSpec) -> list[str]:
    """Tokenized metric name plus tokenized keywords, deduplicated in order."""
    terms: list[str] = []
    seen: set[str] = set()
    for token in tokenize(metric.name):
        if token not in seen:
            seen.add(token)
            terms.append(token)
    for keyword in metric.keywords:
        for token in tokenize(keyword):
            if token not in seen:
                seen.add(token)
                terms.append(token)
    return terms


def retrieve_keyword_channel_terms(
    terms: list[str], index: KeywordIndex, cfg: RetrievalConfig
) -> list[RetrievalCandidate]:
    hits = search_keyword(index, terms, cfg.keyword_top_k)
    if not hits:
        return []
    raw_scores = [score for _, score in hits]
    lo, hi = min(raw_scores), max(raw_scores)
    candidates = []
    for segment_id, raw in hits:
        # Degenerate pool (single hit or all-equal scores) normalizes to 1.0.
        norm = 1.0 if hi == lo else (raw - lo) / (hi - lo)
        candidates.append(
            RetrievalCandidate(
                segment_id=segment_id,
                channel="keyword",
                raw_score=raw,
                normalized_score=norm,
            )
        )
    return candidates


def retrieve_keyword_channel(
    metric: MetricSpec, index: KeywordIndex, cfg: RetrievalConfig
) -> list[RetrievalCandidate]:
    return retrieve_keyword_channel_terms(keyword_query_terms(metric), index, cfg)


def retrieve_semantic_channel_text(
    query: str,
    vindex: VectorIndex,
    gateway: ModelGateway,
    segments: list[Segment],
    cfg: RetrievalConfig,
) -> list[RetrievalCandidate]:
    """Cosine shortlist reranked against the query text.

    The rerank score is the normalized score (the gateway bounds it in
    [0,1]); the first-stage cosine is kept as the raw score.
    """
    query_vector = gateway.embed_texts([query])[0]
    shortlist = search_semantic(vindex, query_vector, cfg.semantic_top_k)
    if not shortlist:
        return []
    text_by_id = {seg.segment_id: seg.text for seg in segments}
    documents = [text_by_id[segment_id] for segment_id, _ in shortlist]
    scores = gateway.rerank(query, documents)
    candidates = [
        RetrievalCandidate(
            segment_id=segment_id,
            channel="semantic",
            raw_score=cosine,
            normalized_score=score,
        )
        for (segment_id, cosine), score in zip(shortlist, scores)
    ]
    candidates.sort(key=lambda c: (-c.normalized_score, c.segment_id))
    return candidates


def retrieve_semantic_channel(
    expanded: ExpandedMetric,
    vindex: VectorIndex,
    gateway: ModelGateway,
    segments: list[Segment],
    cfg: RetrievalConfig,
) -> list[RetrievalCandidate]:
    return retrieve_semantic_channel_text(
        expanded.expansion_text, vindex, gateway, segments, cfg
    )


def fuse_and_select(
    kw: list[RetrievalCandidate],
    sem: list[RetrievalCandidate],
    cfg: RetrievalConfig,
) -> list[FusedCandidate]:
    """Combine channel scores per segment and keep the final_top_n best.

    A segment found by one channel keeps only that channel's weight, so a
    segment corroborated by both channels outranks a single-channel one
    with the same normalized score.
    """
    kw_norm = {c.segment_id: c.normalized_score for c in kw}
    sem_norm = {c.segment_id: c.normalized_score for c in sem}
    w = cfg.rerank_weight
    fused: list[FusedCandidate] = []
    for segment_id in kw_norm.keys() | sem_norm.keys():
        k = kw_norm.get(segment_id)
        s = sem_norm.get(segment_id)
        if k is not None and s is not None:
            score = w * s + (1.0 - w) * k
            hits = 2
        elif s is not None:
            score = w * s
            hits = 1
        else:
            score = (1.0 - w) * k
            hits = 1
        fused.append(
            FusedCandidate(
                segment_id=segment_id,
                keyword_norm=k,
                semantic_norm=s,
                fused_score=score,
                channels_hit=hits,
            )
        )
    fused.sort(key=lambda f: (-f.fused_score, -f.channels_hit, f.segment_id))
    return fused[: cfg.final_top_n]


def retrieval_trace_obj(
    metric_code: str,
    kw: list[RetrievalCandidate],
    sem: list[RetrievalCandidate],
    fused: list[FusedCandidate],
) -> dict:
    """Per-metric retrieval trace for the dashboard and debugging."""

    def channel_rows(candidates: list[RetrievalCandidate]) -> list[dict]:
        return [
            {
                "segment_id": c.segment_id,
                "raw_score": c.raw_score,
                "normalized_score": c.normalized_score,
            }
            for c in candidates
        ]

    return {
        "schema": TRACE_SCHEMA,
        "metric_code": metric_code,
        "keyword": channel_rows(kw),
        "semantic": channel_rows(sem),
        "fused": [
            {
                "segment_id": f.segment_id,
                "keyword_norm": f.keyword_norm,
                "semantic_norm": f.semantic_norm,
                "fused_score": f.fused_score,
                "channels_hit": f.channels_hit,
            }
            for f in fused
        ],
    }

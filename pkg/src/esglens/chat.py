"""Retrieval-grounded report chatbot.

Two routes: a message containing a catalog metric code is answered from
the catalog (plus the metric's assessment when results exist); anything
else runs dual-channel retrieval with the message as both the keyword
source and the semantic query. With zero hits the bot says so and cites
nothing rather than inventing an answer.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from esglens import prompts
from esglens.analysis import assessment_from_json_obj
from esglens.catalog import Catalog, MetricSpec
from esglens.errors import GatewayError
from esglens.gateway import ModelGateway
from esglens.indexes import KeywordIndex, VectorIndex
from esglens.ingest import Segment
from esglens.retrieval import (
    RetrievalConfig,
    fuse_and_select,
    retrieve_keyword_channel_terms,
    retrieve_semantic_channel_text,
)
from esglens.textutil import tokenize

__all__ = [
    "ChatSessionStore",
    "ChatTurn",
    "Citation",
    "METRIC_CODE_RE",
    "NO_CONTENT_ANSWER",
    "chat_answer",
]

METRIC_CODE_RE = re.compile(r"[A-Z]{2,3}-[A-Z]{2}-\d{3}[a-z]\.\d")
NO_CONTENT_ANSWER = "No relevant content found in the report."
SESSION_TURN_LIMIT = 50


@dataclass(frozen=True)
class Citation:
    segment_id: str
    page_start: int
    page_end: int

    def to_json_obj(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "page_start": self.page_start,
            "page_end": self.page_end,
        }


@dataclass(frozen=True)
class ChatTurn:
    session_id: str
    role: str
    text: str
    citations: tuple[Citation, ...]

    def to_json_obj(self) -> dict:
        return {
            "session_id": self.session_id,
            "role": self.role,
            "text": self.text,
            "citations": [c.to_json_obj() for c in self.citations],
        }


class ChatSessionStore:
    """In-memory transcripts, capped at the most recent 50 turns each."""

    def __init__(self, turn_limit: int = SESSION_TURN_LIMIT) -> None:
        self._turns: dict[str, list[ChatTurn]] = {}
        self._limit = turn_limit

    def append(self, turn: ChatTurn) -> None:
        history = self._turns.setdefault(turn.session_id, [])
        history.append(turn)
        if len(history) > self._limit:
            del history[: len(history) - self._limit]

    def history(self, session_id: str) -> list[ChatTurn]:
        return list(self._turns.get(session_id, []))


def _assessment_for_code(results: dict | None, code: str) -> dict | None:
    if not results:
        return None
    for section in results.get("sub_industries", []):
        for row in section.get("assessments", []):
            if row.get("metric_code") == code:
                return row
    return None


def _describe_metric(metric: MetricSpec) -> str:
    parts = [f"{metric.code} ({metric.name}): {metric.description}"]
    if metric.disclosure_type == "quantitative":
        parts.append(f"Quantitative metric, expected unit {metric.unit}.")
    else:
        parts.append("Qualitative metric.")
    return " ".join(parts)


def _code_route_answer(
    metric: MetricSpec, results: dict | None, session_id: str
) -> ChatTurn:
    text = _describe_metric(metric)
    citations: tuple[Citation, ...] = ()
    row = _assessment_for_code(results, metric.code)
    if row is not None:
        assessment = assessment_from_json_obj(row)
        status_text = assessment.status.replace("_", " ")
        sentence = f"In this report the metric is {status_text}."
        if assessment.extracted is not None:
            e = assessment.extracted
            sentence = (
                f"In this report the metric is {status_text} with value "
                f"{e.value_normalized:g} {e.unit_canonical}".rstrip() + "."
            )
        pages = sorted({(ref.page_start, ref.page_end) for ref in assessment.evidence})
        if pages:
            page_list = ", ".join(
                str(a) if a == b else f"{a}-{b}" for a, b in pages
            )
            sentence += f" See pages {page_list}."
        text = f"{text} {sentence}"
        citations = tuple(
            Citation(ref.segment_id, ref.page_start, ref.page_end)
            for ref in assessment.evidence
        )
    return ChatTurn(session_id=session_id, role="assistant", text=text, citations=citations)


def chat_answer(
    message: str,
    *,
    catalog: Catalog,
    segments: list[Segment],
    keyword_index: KeywordIndex,
    vector_index: VectorIndex,
    gateway: ModelGateway,
    retrieval_cfg: RetrievalConfig | None = None,
    results: dict | None = None,
    session_id: str = "",
) -> ChatTurn:
    retrieval_cfg = retrieval_cfg or RetrievalConfig()

    code_match = METRIC_CODE_RE.search(message)
    if code_match:
        metric = catalog.find_metric(code_match.group(0))
        if metric is not None:
            return _code_route_answer(metric, results, session_id)

    kw = retrieve_keyword_channel_terms(tokenize(message), keyword_index, retrieval_cfg)
    try:
        sem = retrieve_semantic_channel_text(
            message, vector_index, gateway, segments, retrieval_cfg
        )
    except GatewayError:
        sem = []
    fused = fuse_and_select(kw, sem, retrieval_cfg)
    if not fused:
        return ChatTurn(
            session_id=session_id, role="assistant", text=NO_CONTENT_ANSWER, citations=()
        )
    segments_by_id = {seg.segment_id: seg for seg in segments}
    evidence = [
        prompts.EvidenceBlock(
            segment_id=cand.segment_id,
            page_start=segments_by_id[cand.segment_id].page_start,
            page_end=segments_by_id[cand.segment_id].page_end,
            text=segments_by_id[cand.segment_id].text,
        )
        for cand in fused
    ]
    system, user = prompts.build_chat_prompt(message, evidence)
    exchange = gateway.complete_chat(system, user)
    citations = tuple(
        Citation(block.segment_id, block.page_start, block.page_end)
        for block in evidence
    )
    return ChatTurn(
        session_id=session_id,
        role="assistant",
        text=exchange.response_text,
        citations=citations,
    )

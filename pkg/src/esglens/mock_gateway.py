"""Deterministic mock model backend.

Embeddings use signed feature hashing (FNV-1a 64, dim 256), rerank is a
cosine transform, and chat is routed by the #TASK marker line to small
rule-based responders. Every operation is a pure function of its string
inputs, which is what makes end-to-end golden tests byte-stable.
"""

from __future__ import annotations

import json
import math
import random
import re
import threading
from dataclasses import dataclass

from esglens.errors import GatewayError
from esglens.gateway import ChatExchange, EmbeddingVector, ModelGateway
from esglens.textutil import truncate_at_whitespace
from esglens.units import is_recognized_unit

__all__ = [
    "FaultInjectingGateway",
    "MOCK_EMBED_DIM",
    "MOCK_EMBED_MODEL_ID",
    "MockModelGateway",
    "fnv1a64",
    "mock_cosine",
    "mock_embedding",
]

MOCK_EMBED_DIM = 256
MOCK_EMBED_MODEL_ID = "mock-embed-256"
MOCK_CHAT_MODEL_ID = "mock-chat"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

_TOKEN_RE = re.compile(r"[0-9a-z]+")
_EVIDENCE_HEADER_RE = re.compile(r"^\[EVIDENCE (\d+) \| pages (\d+)-(\d+)\]$")
_NUMBER_TOKEN_RE = re.compile(
    r"^[\(\[]?[$€£]?(?P<num>\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?)(?P<suffix>[^\d]*)$"
)

NO_EVIDENCE_LINE = "NO EVIDENCE RETRIEVED"
PROXIMITY_WINDOW = 6
_PUNCT_STRIP = ".,;:()[]\"'"


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _embed_tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def mock_embedding(text: str) -> tuple[float, ...]:
    """Signed feature hash of the text's tokens, L2-normalized.

    Empty text (no tokens) stays the zero vector.
    """
    accum = [0.0] * MOCK_EMBED_DIM
    for token in _embed_tokens(text):
        h = fnv1a64(token.encode("utf-8"))
        index = h % MOCK_EMBED_DIM
        sign = 1.0 if (h >> 62) & 1 == 0 else -1.0
        accum[index] += sign
    norm = math.sqrt(sum(x * x for x in accum))
    if norm == 0.0:
        return tuple(accum)
    return tuple(x / norm for x in accum)


def mock_cosine(a: tuple[float, ...], b: tuple[float, ...]) -> float:
    if not any(a) or not any(b):
        return 0.0
    return sum(x * y for x, y in zip(a, b))


@dataclass(frozen=True)
class _EvidenceBlockText:
    index: int
    page_start: int
    page_end: int
    text: str


def _parse_prompt_fields(lines: list[str]) -> dict[str, str]:
    fields: dict[str, str] = {}
    for line in lines:
        if not line:
            break
        label, sep, value = line.partition(": ")
        if sep:
            fields[label] = value
    return fields


def _parse_evidence_blocks(user: str) -> list[_EvidenceBlockText]:
    blocks: list[_EvidenceBlockText] = []
    current: _EvidenceBlockText | None = None
    buffer: list[str] = []

    def flush() -> None:
        nonlocal current
        if current is not None:
            while buffer and not buffer[-1]:
                buffer.pop()
            blocks.append(
                _EvidenceBlockText(
                    index=current.index,
                    page_start=current.page_start,
                    page_end=current.page_end,
                    text="\n".join(buffer),
                )
            )
        buffer.clear()
        current = None

    for line in user.split("\n"):
        match = _EVIDENCE_HEADER_RE.match(line)
        if match:
            flush()
            current = _EvidenceBlockText(
                index=int(match.group(1)),
                page_start=int(match.group(2)),
                page_end=int(match.group(3)),
                text="",
            )
        elif current is not None:
            buffer.append(line)
    flush()
    return blocks


def _norm_word(token: str) -> str:
    return "".join(ch for ch in token.lower() if ch.isalnum())


def _keyword_positions(ws_tokens: list[str], keyword: str) -> set[int]:
    """Whitespace-token indices covered by any occurrence of the keyword."""
    parts = _embed_tokens(keyword)
    if not parts:
        return set()
    normed = [_norm_word(tok) for tok in ws_tokens]
    covered: set[int] = set()
    for start in range(len(normed) - len(parts) + 1):
        if all(normed[start + k] == parts[k] for k in range(len(parts))):
            covered.update(range(start, start + len(parts)))
    return covered


def _number_at(token: str) -> tuple[str, str] | None:
    """(number text, attached suffix) when the token starts with a number."""
    match = _NUMBER_TOKEN_RE.match(token)
    if not match:
        return None
    suffix = match.group("suffix").strip(_PUNCT_STRIP)
    return match.group("num"), suffix


def _unit_phrase_after(ws_tokens: list[str], j: int, attached_suffix: str) -> str | None:
    if attached_suffix and is_recognized_unit(attached_suffix):
        return attached_suffix
    if attached_suffix:
        return None
    for length in (3, 2, 1):
        words = ws_tokens[j + 1 : j + 1 + length]
        if len(words) != length:
            continue
        cleaned = [w.strip(_PUNCT_STRIP) for w in words]
        if any(not w for w in cleaned):
            continue
        phrase = " ".join(cleaned)
        if is_recognized_unit(phrase):
            return phrase
    return None


def _scan_block_for_value(
    text: str, keywords: list[str]
) -> tuple[str, str] | None:
    """First number with a recognizable unit near any keyword occurrence."""
    ws_tokens = text.split()
    covered: set[int] = set()
    for keyword in keywords:
        covered |= _keyword_positions(ws_tokens, keyword)
    if not covered:
        return None
    for j, token in enumerate(ws_tokens):
        parsed = _number_at(token)
        if parsed is None:
            continue
        if min(abs(j - p) for p in covered) > PROXIMITY_WINDOW:
            continue
        number_text, suffix = parsed
        unit = _unit_phrase_after(ws_tokens, j, suffix)
        if unit is not None:
            return number_text, unit
    return None


def _block_has_keyword(text: str, keywords: list[str]) -> bool:
    ws_tokens = text.split()
    return any(_keyword_positions(ws_tokens, kw) for kw in keywords)


def _analysis_response(user: str) -> str:
    lines = user.split("\n")
    fields = _parse_prompt_fields(lines)
    keywords = [k for k in fields.get("KEYWORDS", "").split(", ") if k]
    disclosure_type = fields.get("TYPE", "quantitative")
    blocks = _parse_evidence_blocks(user)

    hit_indices = [b.index for b in blocks if _block_has_keyword(b.text, keywords)]
    for block in blocks:
        found = _scan_block_for_value(block.text, keywords)
        if found is not None:
            number_text, unit = found
            verdict = {
                "status": "disclosed",
                "value": number_text,
                "unit": unit,
                "evidence_indices": [block.index],
                "rationale": (
                    f"Found value {number_text} {unit} near a metric keyword "
                    f"in evidence {block.index}."
                ),
            }
            return json.dumps(verdict, ensure_ascii=False, sort_keys=True)
    if hit_indices:
        status = "disclosed" if disclosure_type == "qualitative" else "partially_disclosed"
        detail = (
            "Metric keywords are discussed"
            if disclosure_type == "qualitative"
            else "Metric keywords appear without a qualifying value"
        )
        verdict = {
            "status": status,
            "evidence_indices": hit_indices,
            "rationale": f"{detail} in evidence {', '.join(str(i) for i in hit_indices)}.",
        }
        return json.dumps(verdict, ensure_ascii=False, sort_keys=True)
    verdict = {
        "status": "not_disclosed",
        "evidence_indices": [],
        "rationale": "No metric keywords found in the retrieved evidence.",
    }
    return json.dumps(verdict, ensure_ascii=False, sort_keys=True)


def _expansion_response(user: str) -> str:
    fields = _parse_prompt_fields(user.split("\n"))
    keywords = [k for k in fields.get("KEYWORDS", "").split(", ") if k]
    parts = [fields.get("NAME", ""), fields.get("DESCRIPTION", "")]
    parts.extend(keywords)
    text = " ".join(p for p in parts if p)
    return truncate_at_whitespace(text, 2000)


def _chat_response(user: str) -> str:
    blocks = _parse_evidence_blocks(user)
    if not blocks:
        return "No relevant content found in the report."
    top = blocks[0]
    return (
        f'Based on the report (pages {top.page_start}-{top.page_end}): "{top.text}"'
    )


class MockModelGateway:
    """Fully deterministic backend used by golden and property tests."""

    @property
    def embed_model_id(self) -> str:
        return MOCK_EMBED_MODEL_ID

    def embed_texts(self, texts: list[str]) -> list[EmbeddingVector]:
        if not texts:
            raise GatewayError("embed_texts requires at least one text")
        return [
            EmbeddingVector(
                model_id=MOCK_EMBED_MODEL_ID,
                dim=MOCK_EMBED_DIM,
                values=mock_embedding(text),
            )
            for text in texts
        ]

    def rerank(self, query: str, documents: list[str]) -> list[float]:
        if not documents:
            raise GatewayError("rerank requires at least one document")
        query_vec = mock_embedding(query)
        return [
            (1.0 + mock_cosine(query_vec, mock_embedding(doc))) / 2.0
            for doc in documents
        ]

    def complete_chat(self, system: str, user: str) -> ChatExchange:
        if not system or not user:
            raise GatewayError("complete_chat requires nonempty prompts")
        markers = {line.strip() for line in system.split("\n")}
        if "#TASK:analysis" in markers:
            text = _analysis_response(user)
        elif "#TASK:expansion" in markers:
            text = _expansion_response(user)
        elif "#TASK:chat" in markers:
            text = _chat_response(user)
        else:
            raise GatewayError("unroutable mock prompt")
        return ChatExchange(system=system, user=user, response_text=text, latency_ms=0)


class FaultInjectingGateway:
    """Wraps a gateway and fails a seeded fraction of calls.

    Used to exercise the degradation paths: the pipeline must stay total
    (one assessment per metric) no matter which calls blow up.
    """

    def __init__(
        self,
        inner: ModelGateway,
        *,
        seed: int,
        failure_rate: float = 0.3,
    ) -> None:
        if not 0.0 <= failure_rate <= 1.0:
            raise ValueError("failure_rate must be within [0, 1]")
        self._inner = inner
        self._rng = random.Random(seed)
        self._rate = failure_rate
        self._lock = threading.Lock()
        self.calls = 0
        self.faults = 0

    @property
    def embed_model_id(self) -> str:
        return self._inner.embed_model_id

    def _maybe_fail(self, op: str) -> None:
        with self._lock:
            self.calls += 1
            fail = self._rng.random() < self._rate
            if fail:
                self.faults += 1
        if fail:
            raise GatewayError(f"injected fault in {op}")

    def embed_texts(self, texts: list[str]) -> list[EmbeddingVector]:
        self._maybe_fail("embed_texts")
        return self._inner.embed_texts(texts)

    def rerank(self, query: str, documents: list[str]) -> list[float]:
        self._maybe_fail("rerank")
        return self._inner.rerank(query, documents)

    def complete_chat(self, system: str, user: str) -> ChatExchange:
        self._maybe_fail("complete_chat")
        return self._inner.complete_chat(system, user)

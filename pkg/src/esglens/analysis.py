"""Disclosure classification: evidence in, structured verdict out.

Each metric gets exactly one three-class assessment. Model output is
parsed defensively (code fences stripped, first balanced JSON object,
status synonyms coerced); a parse failure retries the chat call once and
then degrades to not_disclosed rather than aborting the report.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone

from esglens import prompts
from esglens.catalog import (
    Catalog,
    ExpandedMetric,
    MetricSpec,
    expand_metric_definition_flagged,
)
from esglens.errors import GatewayError, UnitError, VerdictParseError
from esglens.gateway import ModelGateway
from esglens.indexes import KeywordIndex, VectorIndex
from esglens.ingest import ReportDocument, Segment
from esglens.retrieval import (
    FusedCandidate,
    RetrievalConfig,
    fuse_and_select,
    retrieval_trace_obj,
    retrieve_keyword_channel,
    retrieve_semantic_channel,
)
from esglens.units import normalize_unit_value

__all__ = [
    "AnalysisConfig",
    "DETERMINISTIC_TIMESTAMP",
    "DisclosureAssessment",
    "EvidenceRef",
    "ExtractedValue",
    "ParsedVerdict",
    "RESULTS_SCHEMA",
    "STATUSES",
    "STATUS_DISCLOSED",
    "STATUS_NOT_DISCLOSED",
    "STATUS_PARTIAL",
    "analyze_metric",
    "analyze_report",
    "assessment_from_json_obj",
    "parse_structured_verdict",
]

logger = logging.getLogger(__name__)

RESULTS_SCHEMA = "euleresg/results/v1"
DETERMINISTIC_TIMESTAMP = "1970-01-01T00:00:00Z"

STATUS_DISCLOSED = "disclosed"
STATUS_PARTIAL = "partially_disclosed"
STATUS_NOT_DISCLOSED = "not_disclosed"
STATUSES = (STATUS_DISCLOSED, STATUS_PARTIAL, STATUS_NOT_DISCLOSED)

_STATUS_SYNONYMS = {
    "disclosed": STATUS_DISCLOSED,
    "fully_disclosed": STATUS_DISCLOSED,
    "discussed": STATUS_DISCLOSED,
    "fully_discussed": STATUS_DISCLOSED,
    "partially_disclosed": STATUS_PARTIAL,
    "partially_discussed": STATUS_PARTIAL,
    "partly_disclosed": STATUS_PARTIAL,
    "partial": STATUS_PARTIAL,
    "not_disclosed": STATUS_NOT_DISCLOSED,
    "not_discussed": STATUS_NOT_DISCLOSED,
    "undisclosed": STATUS_NOT_DISCLOSED,
}


@dataclass(frozen=True)
class ExtractedValue:
    raw_text: str
    value: float
    unit_raw: str
    value_normalized: float
    unit_canonical: str

    def to_json_obj(self) -> dict:
        return {
            "raw_text": self.raw_text,
            "value": self.value,
            "unit_raw": self.unit_raw,
            "value_normalized": self.value_normalized,
            "unit_canonical": self.unit_canonical,
        }


@dataclass(frozen=True)
class EvidenceRef:
    segment_id: str
    page_start: int
    page_end: int
    fused_score: float

    def to_json_obj(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "page_start": self.page_start,
            "page_end": self.page_end,
            "fused_score": self.fused_score,
        }


@dataclass(frozen=True)
class DisclosureAssessment:
    metric_code: str
    status: str
    extracted: ExtractedValue | None
    evidence: tuple[EvidenceRef, ...]
    rationale: str
    degraded: bool
    latency_ms: int

    def to_json_obj(self) -> dict:
        return {
            "metric_code": self.metric_code,
            "status": self.status,
            "extracted": self.extracted.to_json_obj() if self.extracted else None,
            "evidence": [ref.to_json_obj() for ref in self.evidence],
            "rationale": self.rationale,
            "degraded": self.degraded,
            "latency_ms": self.latency_ms,
        }


def assessment_from_json_obj(obj: dict) -> DisclosureAssessment:
    extracted = None
    if obj.get("extracted") is not None:
        e = obj["extracted"]
        extracted = ExtractedValue(
            raw_text=e["raw_text"],
            value=float(e["value"]),
            unit_raw=e["unit_raw"],
            value_normalized=float(e["value_normalized"]),
            unit_canonical=e["unit_canonical"],
        )
    evidence = tuple(
        EvidenceRef(
            segment_id=ref["segment_id"],
            page_start=int(ref["page_start"]),
            page_end=int(ref["page_end"]),
            fused_score=float(ref["fused_score"]),
        )
        for ref in obj.get("evidence", [])
    )
    return DisclosureAssessment(
        metric_code=obj["metric_code"],
        status=obj["status"],
        extracted=extracted,
        evidence=evidence,
        rationale=obj.get("rationale", ""),
        degraded=bool(obj.get("degraded", False)),
        latency_ms=int(obj.get("latency_ms", 0)),
    )


@dataclass(frozen=True)
class ParsedVerdict:
    status: str
    extracted: ExtractedValue | None
    rationale: str
    evidence_indices: tuple[int, ...]


@dataclass(frozen=True)
class AnalysisConfig:
    parallelism: int = 4
    deterministic_clock: bool = False


def _strip_code_fences(text: str) -> str:
    return "\n".join(
        line for line in text.split("\n") if not line.lstrip().startswith("```")
    )


def _candidate_objects(text: str):
    """Yield balanced {...} spans, tolerating braces inside JSON strings."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
            elif ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    yield text[start : i + 1]
                    break
        start = text.find("{", start + 1)


def _coerce_status(raw) -> str:
    if not isinstance(raw, str):
        raise VerdictParseError(f"status {raw!r} is not a string")
    key = raw.strip().lower().replace(" ", "_").replace("-", "_")
    status = _STATUS_SYNONYMS.get(key)
    if status is None:
        raise VerdictParseError(f"unrecognized status {raw!r}")
    return status


def _coerce_value(raw) -> tuple[str, float] | None:
    if raw is None:
        return None
    if isinstance(raw, bool):
        return None
    if isinstance(raw, (int, float)):
        return str(raw), float(raw)
    if isinstance(raw, str):
        text = raw.strip()
        try:
            return text, float(text.replace(",", ""))
        except ValueError:
            return None
    return None


def parse_structured_verdict(response_text: str, metric: MetricSpec) -> ParsedVerdict:
    """Extract and coerce the model's JSON verdict.

    Quantitative metrics claiming "disclosed" without a parsable value are
    downgraded to partially_disclosed; qualitative metrics never carry an
    extracted value.
    """
    cleaned = _strip_code_fences(response_text)
    obj = None
    for candidate in _candidate_objects(cleaned):
        try:
            parsed = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(parsed, dict):
            obj = parsed
            break
    if obj is None:
        raise VerdictParseError("response contains no JSON object")
    if "status" not in obj:
        raise VerdictParseError("verdict is missing the status field")
    if "rationale" not in obj or not isinstance(obj["rationale"], str):
        raise VerdictParseError("verdict is missing the rationale field")
    status = _coerce_status(obj["status"])
    rationale = obj["rationale"]
    indices: list[int] = []
    raw_indices = obj.get("evidence_indices", [])
    if isinstance(raw_indices, list):
        for item in raw_indices:
            if isinstance(item, int) and not isinstance(item, bool):
                indices.append(item)

    extracted: ExtractedValue | None = None
    if metric.disclosure_type == "quantitative" and status == STATUS_DISCLOSED:
        value_pair = _coerce_value(obj.get("value"))
        if value_pair is not None:
            raw_text, value = value_pair
            unit_raw = obj.get("unit") if isinstance(obj.get("unit"), str) else ""
            try:
                value_normalized, unit_canonical = normalize_unit_value(value, unit_raw)
            except UnitError:
                value_pair = None
            else:
                extracted = ExtractedValue(
                    raw_text=raw_text,
                    value=value,
                    unit_raw=unit_raw,
                    value_normalized=value_normalized,
                    unit_canonical=unit_canonical,
                )
        if extracted is None:
            status = STATUS_PARTIAL
    return ParsedVerdict(
        status=status,
        extracted=extracted,
        rationale=rationale,
        evidence_indices=tuple(indices),
    )


def _evidence_for_prompt(
    fused: list[FusedCandidate], segments_by_id: dict[str, Segment]
) -> list[prompts.EvidenceBlock]:
    blocks = []
    for cand in fused:
        seg = segments_by_id[cand.segment_id]
        blocks.append(
            prompts.EvidenceBlock(
                segment_id=seg.segment_id,
                page_start=seg.page_start,
                page_end=seg.page_end,
                text=seg.text,
            )
        )
    return blocks


def _evidence_refs(
    fused: list[FusedCandidate], segments_by_id: dict[str, Segment]
) -> tuple[EvidenceRef, ...]:
    return tuple(
        EvidenceRef(
            segment_id=cand.segment_id,
            page_start=segments_by_id[cand.segment_id].page_start,
            page_end=segments_by_id[cand.segment_id].page_end,
            fused_score=cand.fused_score,
        )
        for cand in fused
    )


def _degraded_assessment(
    metric: MetricSpec,
    evidence: tuple[EvidenceRef, ...],
    reason: str,
) -> DisclosureAssessment:
    return DisclosureAssessment(
        metric_code=metric.code,
        status=STATUS_NOT_DISCLOSED,
        extracted=None,
        evidence=evidence,
        rationale=f"Analysis degraded: {reason}",
        degraded=True,
        latency_ms=0,
    )


def analyze_metric_traced(
    expanded: ExpandedMetric,
    segments: list[Segment],
    keyword_index: KeywordIndex,
    vector_index: VectorIndex,
    gateway: ModelGateway,
    retrieval_cfg: RetrievalConfig,
    *,
    expansion_degraded: bool = False,
) -> tuple[DisclosureAssessment, dict]:
    """One metric end to end, also returning its retrieval trace."""
    metric = expanded.metric
    segments_by_id = {seg.segment_id: seg for seg in segments}
    degraded = expansion_degraded

    kw = retrieve_keyword_channel(metric, keyword_index, retrieval_cfg)
    try:
        sem = retrieve_semantic_channel(
            expanded, vector_index, gateway, segments, retrieval_cfg
        )
    except GatewayError as exc:
        logger.warning(
            "semantic channel failed for metric %s (%s); keyword-only", metric.code, exc
        )
        sem = []
        degraded = True
    fused = fuse_and_select(kw, sem, retrieval_cfg)
    trace = retrieval_trace_obj(metric.code, kw, sem, fused)
    evidence = _evidence_refs(fused, segments_by_id)

    system, user = prompts.build_analysis_prompt(
        metric, _evidence_for_prompt(fused, segments_by_id)
    )
    verdict: ParsedVerdict | None = None
    latency_ms = 0
    last_parse_error = "unparseable response"
    for _ in range(2):
        try:
            exchange = gateway.complete_chat(system, user)
        except GatewayError as exc:
            assessment = _degraded_assessment(metric, evidence, str(exc))
            return assessment, trace
        latency_ms = exchange.latency_ms
        try:
            verdict = parse_structured_verdict(exchange.response_text, metric)
            break
        except VerdictParseError as exc:
            last_parse_error = str(exc)
            verdict = None
    if verdict is None:
        assessment = _degraded_assessment(metric, evidence, last_parse_error)
        return assessment, trace
    assessment = DisclosureAssessment(
        metric_code=metric.code,
        status=verdict.status,
        extracted=verdict.extracted,
        evidence=evidence,
        rationale=verdict.rationale,
        degraded=degraded,
        latency_ms=latency_ms,
    )
    return assessment, trace


def analyze_metric(
    expanded: ExpandedMetric,
    segments: list[Segment],
    keyword_index: KeywordIndex,
    vector_index: VectorIndex,
    gateway: ModelGateway,
    retrieval_cfg: RetrievalConfig,
    *,
    expansion_degraded: bool = False,
) -> DisclosureAssessment:
    assessment, _ = analyze_metric_traced(
        expanded,
        segments,
        keyword_index,
        vector_index,
        gateway,
        retrieval_cfg,
        expansion_degraded=expansion_degraded,
    )
    return assessment


@dataclass(frozen=True)
class ReportAnalysis:
    results: dict
    traces: list[dict]


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def analyze_report(
    doc: ReportDocument,
    segments: list[Segment],
    keyword_index: KeywordIndex,
    vector_index: VectorIndex,
    catalog: Catalog,
    slugs: list[str],
    gateway: ModelGateway,
    retrieval_cfg: RetrievalConfig | None = None,
    analysis_cfg: AnalysisConfig | None = None,
) -> ReportAnalysis:
    """Assess every metric of the requested sub-industries.

    Metrics fan out over a bounded thread pool; assembly sorts by
    (slug, catalog order) so the output is independent of completion
    order. A per-metric failure degrades that metric only.
    """
    retrieval_cfg = retrieval_cfg or RetrievalConfig()
    analysis_cfg = analysis_cfg or AnalysisConfig()
    ordered_slugs = sorted(set(slugs))
    jobs: list[tuple[str, int, MetricSpec]] = []
    for slug in ordered_slugs:
        for position, metric in enumerate(catalog.metrics_for(slug)):
            jobs.append((slug, position, metric))

    started = time.monotonic()

    def run_one(metric: MetricSpec) -> tuple[DisclosureAssessment, dict]:
        try:
            expanded, expansion_degraded = expand_metric_definition_flagged(
                metric, gateway
            )
            return analyze_metric_traced(
                expanded,
                segments,
                keyword_index,
                vector_index,
                gateway,
                retrieval_cfg,
                expansion_degraded=expansion_degraded,
            )
        except Exception as exc:
            logger.error("metric %s failed unexpectedly: %s", metric.code, exc)
            assessment = _degraded_assessment(metric, (), str(exc))
            return assessment, retrieval_trace_obj(metric.code, [], [], [])

    workers = max(1, analysis_cfg.parallelism)
    outcomes: dict[tuple[str, int], tuple[DisclosureAssessment, dict]] = {}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {
            pool.submit(run_one, metric): (slug, position)
            for slug, position, metric in jobs
        }
        for future, key in futures.items():
            outcomes[key] = future.result()

    runtime_ms = 0 if analysis_cfg.deterministic_clock else int(
        (time.monotonic() - started) * 1000
    )
    generated_at = (
        DETERMINISTIC_TIMESTAMP if analysis_cfg.deterministic_clock else _utc_now_iso()
    )

    sub_industries = []
    traces: list[dict] = []
    for slug in ordered_slugs:
        rows = []
        for position, metric in enumerate(catalog.metrics_for(slug)):
            assessment, trace = outcomes[(slug, position)]
            rows.append(assessment.to_json_obj())
            traces.append(trace)
        sub_industries.append({"slug": slug, "assessments": rows})
    results = {
        "schema": RESULTS_SCHEMA,
        "report_id": doc.report_id,
        "company": doc.company,
        "framework": catalog.framework.id,
        "generated_at": generated_at,
        "sub_industries": sub_industries,
        "runtime_ms": runtime_ms,
    }
    return ReportAnalysis(results=results, traces=traces)

"""Exact-match evaluation against hand-labeled ground truth.

A pair is one (company, sub-industry) table. Pair accuracy is the share
of catalog metrics whose status and, when numeric, normalized value both
match. Aggregation runs in decimal arithmetic from the floats' shortest
repr, so 2-decimal half-up rendering never falls into binary rounding
traps (a mean of exactly 0.9475 must render "0.95").
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Callable, TypeVar

from esglens.analysis import (
    STATUSES,
    DisclosureAssessment,
    assessment_from_json_obj,
)
from esglens.catalog import Catalog
from esglens.errors import EvaluationError
from esglens.units import normalize_unit_value

__all__ = [
    "EVAL_SCHEMA",
    "EvaluationReport",
    "GroundTruthEntry",
    "PairResult",
    "aggregate",
    "compute_pair_accuracy",
    "evaluation_report_obj",
    "load_ground_truth",
    "match_assessment",
    "measure_runtime",
    "pairs_from_results",
    "render_2dp",
    "render_table",
]

EVAL_SCHEMA = "euleresg/eval/v1"
VALUE_RELATIVE_TOLERANCE = 1e-6

_GROUND_TRUTH_HEADER = [
    "company",
    "slug",
    "metric_code",
    "expected_status",
    "expected_value",
    "expected_unit",
]

T = TypeVar("T")


@dataclass(frozen=True)
class GroundTruthEntry:
    company: str
    slug: str
    metric_code: str
    expected_status: str
    expected_value: float | None
    expected_unit: str | None


@dataclass(frozen=True)
class PairResult:
    company: str
    industry: str
    slug: str
    accuracy: float
    n_metrics: int


@dataclass(frozen=True)
class EvaluationReport:
    pairs: tuple[PairResult, ...]
    company_averages: dict[str, float]
    overall_average: float
    runtimes: dict[str, float]
    model_label: str


def load_ground_truth(path: str) -> list[GroundTruthEntry]:
    entries: list[GroundTruthEntry] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EvaluationError(f"ground truth file {path} is empty")
        if header != _GROUND_TRUTH_HEADER:
            raise EvaluationError(
                f"ground truth header must be {','.join(_GROUND_TRUTH_HEADER)}"
            )
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell for cell in row):
                continue
            if len(row) != len(_GROUND_TRUTH_HEADER):
                raise EvaluationError(f"ground truth row {row_no} has wrong arity")
            company, slug, code, status, value_text, unit_text = (
                cell.strip() for cell in row
            )
            if status not in STATUSES:
                raise EvaluationError(
                    f"ground truth row {row_no} has unknown status {status!r}"
                )
            value: float | None = None
            if value_text:
                try:
                    value = float(value_text.replace(",", ""))
                except ValueError:
                    raise EvaluationError(
                        f"ground truth row {row_no} has bad value {value_text!r}"
                    )
                if not unit_text:
                    raise EvaluationError(
                        f"ground truth row {row_no} has a value but no unit"
                    )
            entries.append(
                GroundTruthEntry(
                    company=company,
                    slug=slug,
                    metric_code=code,
                    expected_status=status,
                    expected_value=value,
                    expected_unit=unit_text or None,
                )
            )
    return entries


def match_assessment(a: DisclosureAssessment, g: GroundTruthEntry) -> bool:
    """Exact-match semantics: status, then normalized value when expected."""
    if a.metric_code != g.metric_code:
        raise EvaluationError(
            f"assessment for {a.metric_code} compared against {g.metric_code}"
        )
    if a.status != g.expected_status:
        return False
    if g.expected_value is None:
        return True
    if a.extracted is None:
        return False
    va, ua = normalize_unit_value(a.extracted.value, a.extracted.unit_raw)
    vg, ug = normalize_unit_value(g.expected_value, g.expected_unit or "")
    if ua != ug:
        return False
    return abs(va - vg) <= VALUE_RELATIVE_TOLERANCE * max(1.0, abs(vg))


def compute_pair_accuracy(
    assessments: list[DisclosureAssessment],
    entries: list[GroundTruthEntry],
    catalog_codes: list[str],
) -> float:
    """Matches over total for one pair; a missing assessment is a mismatch."""
    if not entries:
        raise EvaluationError("pair has no ground truth entries")
    known = set(catalog_codes)
    by_code = {a.metric_code: a for a in assessments}
    matches = 0
    for entry in entries:
        if entry.metric_code not in known:
            raise EvaluationError(
                f"ground truth metric {entry.metric_code} is not in the catalog"
            )
        assessment = by_code.get(entry.metric_code)
        if assessment is not None and match_assessment(assessment, entry):
            matches += 1
    return matches / len(entries)


def _decimal_mean(values: list[float]) -> float:
    total = sum((Decimal(repr(v)) for v in values), Decimal(0))
    return float(total / Decimal(len(values)))


def render_2dp(value: float) -> str:
    """Two decimals, half-up, via the float's shortest decimal repr."""
    return str(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def aggregate(
    pairs: list[PairResult],
    runtimes: dict[str, float] | None = None,
    model_label: str = "",
) -> EvaluationReport:
    """Company averages and the overall average over all pairs."""
    if not pairs:
        raise EvaluationError("cannot aggregate zero pairs")
    by_company: dict[str, list[float]] = {}
    for pair in pairs:
        by_company.setdefault(pair.company, []).append(pair.accuracy)
    company_averages = {
        company: _decimal_mean(values) for company, values in by_company.items()
    }
    overall = _decimal_mean([pair.accuracy for pair in pairs])
    return EvaluationReport(
        pairs=tuple(pairs),
        company_averages=company_averages,
        overall_average=overall,
        runtimes=dict(runtimes or {}),
        model_label=model_label,
    )


def measure_runtime(run: Callable[[], T]) -> tuple[T, float]:
    """Wall-clock seconds around one end-to-end run."""
    started = time.monotonic()
    result = run()
    return result, time.monotonic() - started


def pairs_from_results(
    results_objs: list[dict],
    entries: list[GroundTruthEntry],
    catalog: Catalog,
) -> list[PairResult]:
    """Score each (company, slug) ground-truth group against its results."""
    assessments_by_key: dict[tuple[str, str], list[DisclosureAssessment]] = {}
    for results in results_objs:
        company = results.get("company", "")
        for section in results.get("sub_industries", []):
            rows = [assessment_from_json_obj(obj) for obj in section["assessments"]]
            assessments_by_key[(company, section["slug"])] = rows

    grouped: dict[tuple[str, str], list[GroundTruthEntry]] = {}
    order: list[tuple[str, str]] = []
    for entry in entries:
        key = (entry.company, entry.slug)
        if key not in grouped:
            grouped[key] = []
            order.append(key)
        grouped[key].append(entry)

    pairs: list[PairResult] = []
    for company, slug in order:
        group = grouped[(company, slug)]
        codes = [m.code for m in catalog.metrics_for(slug)]
        assessments = assessments_by_key.get((company, slug), [])
        accuracy = compute_pair_accuracy(assessments, group, codes)
        pairs.append(
            PairResult(
                company=company,
                industry=catalog.sub_industry(slug).industry,
                slug=slug,
                accuracy=accuracy,
                n_metrics=len(group),
            )
        )
    return pairs


def evaluation_report_obj(report: EvaluationReport) -> dict:
    return {
        "schema": EVAL_SCHEMA,
        "model_label": report.model_label,
        "pairs": [
            {
                "company": p.company,
                "industry": p.industry,
                "slug": p.slug,
                "accuracy": p.accuracy,
                "n_metrics": p.n_metrics,
            }
            for p in report.pairs
        ],
        "company_averages": report.company_averages,
        "overall_average": report.overall_average,
        "runtimes": report.runtimes,
    }


def _company_order(report: EvaluationReport) -> list[str]:
    seen: list[str] = []
    for pair in report.pairs:
        if pair.company not in seen:
            seen.append(pair.company)
    return seen


def _runtime_cell(report: EvaluationReport) -> str:
    if not report.runtimes:
        return ""
    return render_2dp(_decimal_mean(list(report.runtimes.values())))


def render_table(report: EvaluationReport, fmt: str = "plain") -> str:
    """Render pair rows, per-company Average rows, Overall Acc, Runtime."""
    label = report.model_label or "Accuracy"
    rows: list[tuple[str, str, str, str]] = []
    for company in _company_order(report):
        for pair in report.pairs:
            if pair.company == company:
                rows.append(
                    (company, pair.industry, pair.slug, render_2dp(pair.accuracy))
                )
        rows.append((company, "Average", "", render_2dp(report.company_averages[company])))
    rows.append(("Overall Acc", "", "", render_2dp(report.overall_average)))
    rows.append(("Runtime (s)", "", "", _runtime_cell(report)))

    if fmt == "csv":
        lines = ["company,industry,slug," + (label.replace(",", " ") or "value")]
        for company, industry, slug, value in rows:
            lines.append(f"{company},{industry},{slug},{value}")
        return "\n".join(lines) + "\n"
    if fmt == "markdown":
        lines = [
            f"| Company | Industry | Sub-industry | {label} |",
            "| --- | --- | --- | --- |",
        ]
        for company, industry, slug, value in rows:
            lines.append(f"| {company} | {industry} | {slug} | {value} |")
        return "\n".join(lines) + "\n"
    if fmt == "plain":
        header = ("Company", "Industry", "Sub-industry", label)
        widths = [
            max(len(header[i]), *(len(row[i]) for row in rows)) for i in range(4)
        ]
        lines = ["  ".join(header[i].ljust(widths[i]) for i in range(4)).rstrip()]
        for row in rows:
            lines.append("  ".join(row[i].ljust(widths[i]) for i in range(4)).rstrip())
        return "\n".join(lines) + "\n"
    raise EvaluationError(f"unknown render format {fmt!r}")

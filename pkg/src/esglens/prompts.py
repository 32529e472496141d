"""Prompt assembly for the three chat tasks: analysis, expansion, chat.

System templates are frozen files under data/prompts/ and are golden-tested
byte-for-byte; user prompts are built field-by-field so the deterministic
mock backend can parse them back.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from esglens.catalog import MetricSpec
from esglens.textutil import collapse_ws

NO_EVIDENCE_LINE = "NO EVIDENCE RETRIEVED"


@dataclass(frozen=True)
class EvidenceBlock:
    """One retrieved segment as presented to the model."""

    segment_id: str
    page_start: int
    page_end: int
    text: str


@lru_cache(maxsize=None)
def system_template(task: str) -> str:
    name = f"{task}_system.txt"
    return resources.files("esglens.data.prompts").joinpath(name).read_text("utf-8")


def _evidence_section(evidence: list[EvidenceBlock]) -> str:
    if not evidence:
        return NO_EVIDENCE_LINE
    blocks = []
    for i, ev in enumerate(evidence, start=1):
        header = f"[EVIDENCE {i} | pages {ev.page_start}-{ev.page_end}]"
        blocks.append(f"{header}\n{ev.text}")
    return "\n\n".join(blocks)


def _metric_header(m: MetricSpec) -> str:
    return "\n".join(
        [
            f"METRIC CODE: {m.code}",
            f"NAME: {collapse_ws(m.name)}",
            f"TYPE: {m.disclosure_type}",
            f"UNIT: {m.unit or '(none)'}",
            f"KEYWORDS: {', '.join(collapse_ws(k) for k in m.keywords)}",
            f"DESCRIPTION: {collapse_ws(m.description)}",
        ]
    )


def build_analysis_prompt(m: MetricSpec, evidence: list[EvidenceBlock]) -> tuple[str, str]:
    """(system, user) for a disclosure classification call."""
    user = f"{_metric_header(m)}\n\n{_evidence_section(evidence)}\n"
    return system_template("analysis"), user


def build_expansion_prompt(m: MetricSpec) -> tuple[str, str]:
    """(system, user) for a metric-definition expansion call."""
    user = "\n".join(
        [
            f"METRIC CODE: {m.code}",
            f"NAME: {collapse_ws(m.name)}",
            f"DESCRIPTION: {collapse_ws(m.description)}",
            f"KEYWORDS: {', '.join(collapse_ws(k) for k in m.keywords)}",
        ]
    )
    return system_template("expansion"), user + "\n"


def build_chat_prompt(message: str, evidence: list[EvidenceBlock]) -> tuple[str, str]:
    """(system, user) for a report chatbot call."""
    user = f"QUESTION: {collapse_ws(message)}\n\n{_evidence_section(evidence)}\n"
    return system_template("chat"), user

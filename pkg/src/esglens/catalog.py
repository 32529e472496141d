"""Metric catalog: loading, validation, refinement, semantic expansion.

A catalog file is the system of record for one framework (SASB-style):
sub-industries, each carrying an ordered metric table. Metrics are either
quantitative (a measurable value with a unit is expected) or qualitative
(narrative discussion is expected).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING

from esglens.errors import CatalogError, UnknownSlugError
from esglens.textutil import collapse_ws, slugify, tokenize, truncate_at_whitespace

if TYPE_CHECKING:
    from esglens.gateway import ModelGateway

logger = logging.getLogger(__name__)

EXPANSION_CHAR_LIMIT = 2000

DISCLOSURE_TYPES = ("quantitative", "qualitative")

_FRAMEWORK_FIELDS = {"id", "name", "version"}
_SUB_INDUSTRY_FIELDS = {"industry", "sub_industry", "slug", "metrics"}
_METRIC_FIELDS = {
    "code",
    "name",
    "topic",
    "disclosure_type",
    "unit",
    "description",
    "keywords",
    "expanded_definition",
}


@dataclass(frozen=True)
class Framework:
    id: str
    name: str
    version: str


@dataclass(frozen=True)
class SubIndustry:
    framework_id: str
    industry: str
    sub_industry: str
    slug: str


@dataclass(frozen=True)
class MetricSpec:
    """One framework metric; the unit of analysis."""

    code: str
    name: str
    sub_industry_slug: str
    topic: str
    disclosure_type: str
    unit: str
    description: str
    keywords: tuple[str, ...]
    expanded_definition: str = ""


@dataclass(frozen=True)
class ExpandedMetric:
    """A metric plus the free-text definition used as the semantic query."""

    metric: MetricSpec
    expansion_text: str
    expansion_source: str  # "curated" | "llm_generated"


@dataclass
class Catalog:
    framework: Framework
    sub_industries: list[SubIndustry]
    _metrics_by_slug: dict[str, list[MetricSpec]] = field(default_factory=dict)

    @property
    def slugs(self) -> list[str]:
        return [s.slug for s in self.sub_industries]

    def sub_industry(self, slug: str) -> SubIndustry:
        for s in self.sub_industries:
            if s.slug == slug:
                return s
        raise UnknownSlugError(slug, self.slugs)

    def metrics_for(self, slug: str) -> list[MetricSpec]:
        """Metric list for one sub-industry, in catalog file order."""
        if slug not in self._metrics_by_slug:
            raise UnknownSlugError(slug, self.slugs)
        return list(self._metrics_by_slug[slug])

    def all_metrics(self) -> list[MetricSpec]:
        out: list[MetricSpec] = []
        for s in self.sub_industries:
            out.extend(self._metrics_by_slug[s.slug])
        return out

    def find_metric(self, code: str) -> MetricSpec | None:
        for m in self.all_metrics():
            if m.code == code:
                return m
        return None

    def to_json_obj(self) -> dict:
        return {
            "framework": {
                "id": self.framework.id,
                "name": self.framework.name,
                "version": self.framework.version,
            },
            "sub_industries": [
                {
                    "industry": s.industry,
                    "sub_industry": s.sub_industry,
                    "slug": s.slug,
                    "metrics": [
                        {
                            "code": m.code,
                            "name": m.name,
                            "topic": m.topic,
                            "disclosure_type": m.disclosure_type,
                            "unit": m.unit,
                            "description": m.description,
                            "keywords": list(m.keywords),
                            "expanded_definition": m.expanded_definition,
                        }
                        for m in self._metrics_by_slug[s.slug]
                    ],
                }
                for s in self.sub_industries
            ],
        }


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise CatalogError(f"{where}: missing required field {key!r}")
    return obj[key]


def _reject_unknown(obj: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise CatalogError(f"{where}: unknown field(s) {', '.join(unknown)}")


def _parse_metric(obj: dict, slug: str, pos: int) -> MetricSpec:
    where = f"sub_industry {slug!r}, metric #{pos}"
    if not isinstance(obj, dict):
        raise CatalogError(f"{where}: metric record must be an object")
    _reject_unknown(obj, _METRIC_FIELDS, where)
    code = _require(obj, "code", where)
    if not isinstance(code, str) or not code:
        raise CatalogError(f"{where}: code must be a nonempty string")
    where = f"sub_industry {slug!r}, metric {code!r}"
    dtype = _require(obj, "disclosure_type", where)
    if dtype not in DISCLOSURE_TYPES:
        raise CatalogError(
            f"{where}: disclosure_type must be one of {DISCLOSURE_TYPES}, got {dtype!r}"
        )
    unit = obj.get("unit", "")
    if dtype == "quantitative" and not unit:
        raise CatalogError(f"{where}: quantitative metric must declare a unit")
    keywords = obj.get("keywords", [])
    if not isinstance(keywords, list) or any(not isinstance(k, str) for k in keywords):
        raise CatalogError(f"{where}: keywords must be a list of strings")
    return MetricSpec(
        code=code,
        name=_require(obj, "name", where),
        sub_industry_slug=slug,
        topic=obj.get("topic", ""),
        disclosure_type=dtype,
        unit=unit,
        description=obj.get("description", ""),
        keywords=tuple(keywords),
        expanded_definition=obj.get("expanded_definition", ""),
    )


def parse_catalog_obj(data: dict) -> Catalog:
    if not isinstance(data, dict):
        raise CatalogError("catalog: top level must be an object")
    _reject_unknown(data, {"framework", "sub_industries"}, "catalog")
    fw_obj = _require(data, "framework", "catalog")
    _reject_unknown(fw_obj, _FRAMEWORK_FIELDS, "catalog.framework")
    framework = Framework(
        id=_require(fw_obj, "id", "catalog.framework"),
        name=_require(fw_obj, "name", "catalog.framework"),
        version=_require(fw_obj, "version", "catalog.framework"),
    )
    if not framework.id:
        raise CatalogError("catalog.framework: id must be nonempty")

    subs_obj = _require(data, "sub_industries", "catalog")
    if not isinstance(subs_obj, list):
        raise CatalogError("catalog: sub_industries must be a list")

    subs: list[SubIndustry] = []
    metrics_by_slug: dict[str, list[MetricSpec]] = {}
    for i, s in enumerate(subs_obj):
        where = f"sub_industries[{i}]"
        if not isinstance(s, dict):
            raise CatalogError(f"{where}: must be an object")
        _reject_unknown(s, _SUB_INDUSTRY_FIELDS, where)
        slug = _require(s, "slug", where)
        name = _require(s, "sub_industry", where)
        if slugify(name) != slug:
            raise CatalogError(
                f"{where}: slug {slug!r} is not derivable from sub_industry "
                f"{name!r} (expected {slugify(name)!r})"
            )
        if slug in metrics_by_slug:
            raise CatalogError(f"{where}: duplicate slug {slug!r}")
        sub = SubIndustry(
            framework_id=framework.id,
            industry=_require(s, "industry", where),
            sub_industry=name,
            slug=slug,
        )
        metric_objs = _require(s, "metrics", where)
        if not isinstance(metric_objs, list):
            raise CatalogError(f"{where}: metrics must be a list")
        seen_codes: set[str] = set()
        metrics: list[MetricSpec] = []
        for j, mo in enumerate(metric_objs):
            m = _parse_metric(mo, slug, j)
            if m.code in seen_codes:
                raise CatalogError(
                    f"sub_industry {slug!r}: duplicate metric code {m.code!r}"
                )
            seen_codes.add(m.code)
            metrics.append(m)
        subs.append(sub)
        metrics_by_slug[slug] = metrics

    return Catalog(framework=framework, sub_industries=subs, _metrics_by_slug=metrics_by_slug)


def load_catalog(path: str | Path) -> Catalog:
    """Load and validate a catalog file. Order of records is file order."""
    path = Path(path)
    try:
        raw = path.read_text("utf-8")
    except OSError as exc:
        raise CatalogError(f"cannot read catalog file {path}: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CatalogError(
            f"catalog {path} is not valid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return parse_catalog_obj(data)


def refine_metric(m: MetricSpec) -> MetricSpec:
    """Fill missing keywords/description deterministically. Idempotent.

    Empty keywords become the stopword-filtered tokens of name + code;
    empty description falls back to the name, then to the code.
    """
    description = m.description or m.name or m.code
    if m.keywords:
        keywords = m.keywords
    else:
        seen: dict[str, None] = {}
        for tok in tokenize(m.name) + tokenize(m.code):
            seen.setdefault(tok)
        keywords = tuple(seen)
    if keywords == m.keywords and description == m.description:
        return m
    return replace(m, keywords=keywords, description=description)


def deterministic_expansion(m: MetricSpec) -> str:
    """Fallback/mock expansion: name + description + keywords, one line."""
    parts = [collapse_ws(m.name), collapse_ws(m.description)]
    parts.extend(collapse_ws(k) for k in m.keywords)
    text = " ".join(p for p in parts if p)
    return truncate_at_whitespace(text, EXPANSION_CHAR_LIMIT)


def expand_metric_definition_flagged(
    m: MetricSpec, gateway: "ModelGateway"
) -> tuple[ExpandedMetric, bool]:
    """Like expand_metric_definition, also reporting whether the gateway
    call failed and the deterministic fallback was substituted."""
    from esglens import prompts
    from esglens.errors import GatewayError

    if m.expanded_definition:
        text = truncate_at_whitespace(m.expanded_definition, EXPANSION_CHAR_LIMIT)
        return (
            ExpandedMetric(metric=m, expansion_text=text, expansion_source="curated"),
            False,
        )
    system, user = prompts.build_expansion_prompt(m)
    try:
        exchange = gateway.complete_chat(system, user)
    except GatewayError as exc:
        logger.warning(
            "expansion call failed for metric %s (%s); using deterministic fallback",
            m.code,
            exc,
        )
        return (
            ExpandedMetric(
                metric=m,
                expansion_text=deterministic_expansion(m),
                expansion_source="curated",
            ),
            True,
        )
    text = truncate_at_whitespace(exchange.response_text.strip(), EXPANSION_CHAR_LIMIT)
    if not text:
        logger.warning("empty expansion for metric %s; using deterministic fallback", m.code)
        return (
            ExpandedMetric(
                metric=m,
                expansion_text=deterministic_expansion(m),
                expansion_source="curated",
            ),
            True,
        )
    return (
        ExpandedMetric(metric=m, expansion_text=text, expansion_source="llm_generated"),
        False,
    )


def expand_metric_definition(m: MetricSpec, gateway: "ModelGateway") -> ExpandedMetric:
    """Produce the free-text definition used as the semantic retrieval query.

    A curated `expanded_definition` wins. Otherwise one chat call generates
    it; if the gateway fails, the deterministic concatenation of
    name/description/keywords is used instead and a warning is logged.
    """
    expanded, _ = expand_metric_definition_flagged(m, gateway)
    return expanded

import json

import pytest

from esglens.catalog import (
    deterministic_expansion,
    expand_metric_definition,
    expand_metric_definition_flagged,
    load_catalog,
    parse_catalog_obj,
    refine_metric,
)
from esglens.errors import CatalogError, GatewayError, UnknownSlugError
from tests.conftest import FIXTURES


def test_fixture_catalog_shape(catalog):
    assert len(catalog.sub_industries) == 3
    assert len(catalog.all_metrics()) == 20
    assert catalog.slugs == [
        "commercial-banks",
        "software-it-services",
        "household-personal-products",
    ]


def test_metrics_for_preserves_file_order(catalog):
    codes = [m.code for m in catalog.metrics_for("commercial-banks")]
    assert codes[0] == "FN-CB-230a.1"
    assert codes == sorted(codes, key=codes.index)
    assert len(codes) == 7


def test_unknown_slug_raises(catalog):
    with pytest.raises(UnknownSlugError) as err:
        catalog.metrics_for("no-such-slug")
    assert "no-such-slug" in str(err.value)


def test_quantitative_metrics_always_have_units(catalog):
    for m in catalog.all_metrics():
        if m.disclosure_type == "quantitative":
            assert m.unit, m.code


def test_find_metric(catalog):
    m = catalog.find_metric("TC-SI-130a.1")
    assert m is not None and m.name == "Total energy consumed"
    assert catalog.find_metric("XX-YY-000z.9") is None


def test_to_json_obj_round_trips(catalog):
    again = parse_catalog_obj(catalog.to_json_obj())
    assert again.to_json_obj() == catalog.to_json_obj()


def _minimal_catalog_obj():
    return {
        "framework": {"id": "f", "name": "F", "version": "1"},
        "sub_industries": [
            {
                "industry": "I",
                "sub_industry": "Some Group",
                "slug": "some-group",
                "metrics": [
                    {
                        "code": "AA-BB-000a.1",
                        "name": "Widget count",
                        "disclosure_type": "quantitative",
                        "unit": "count",
                    }
                ],
            }
        ],
    }


def test_parse_rejects_underivable_slug():
    obj = _minimal_catalog_obj()
    obj["sub_industries"][0]["slug"] = "wrong-slug"
    with pytest.raises(CatalogError, match="not derivable"):
        parse_catalog_obj(obj)


def test_parse_rejects_duplicate_codes():
    obj = _minimal_catalog_obj()
    metric = dict(obj["sub_industries"][0]["metrics"][0])
    obj["sub_industries"][0]["metrics"].append(metric)
    with pytest.raises(CatalogError, match="duplicate metric code"):
        parse_catalog_obj(obj)


def test_parse_rejects_unknown_fields():
    obj = _minimal_catalog_obj()
    obj["sub_industries"][0]["metrics"][0]["surprise"] = 1
    with pytest.raises(CatalogError, match="unknown field"):
        parse_catalog_obj(obj)


def test_parse_rejects_quantitative_without_unit():
    obj = _minimal_catalog_obj()
    obj["sub_industries"][0]["metrics"][0]["unit"] = ""
    with pytest.raises(CatalogError, match="must declare a unit"):
        parse_catalog_obj(obj)


def test_load_catalog_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(CatalogError, match="not valid JSON"):
        load_catalog(path)


def test_refine_metric_fills_keywords_and_is_idempotent(catalog):
    bare = refine_metric(
        catalog.find_metric("TC-SI-130a.1").__class__(
            code="AA-BB-000a.1",
            name="Total widget output",
            sub_industry_slug="some-group",
            topic="",
            disclosure_type="quantitative",
            unit="count",
            description="",
            keywords=(),
        )
    )
    assert bare.keywords == ("total", "widget", "output", "aa", "bb", "000a", "1")
    assert bare.description == "Total widget output"
    assert refine_metric(bare) is bare


def test_deterministic_expansion_concatenates(catalog):
    m = catalog.find_metric("TC-SI-130a.1")
    text = deterministic_expansion(m)
    assert text.startswith("Total energy consumed ")
    assert "total energy" in text
    assert len(text) <= 2000


def test_expansion_curated_definition_wins(catalog, mock_gateway):
    m = catalog.find_metric("FN-CB-240a.4")
    assert m.expanded_definition
    expanded = expand_metric_definition(m, mock_gateway)
    assert expanded.expansion_source == "curated"
    assert expanded.expansion_text == m.expanded_definition


def test_expansion_via_mock_gateway_matches_deterministic(catalog, mock_gateway):
    m = catalog.find_metric("TC-SI-130a.1")
    expanded = expand_metric_definition(m, mock_gateway)
    assert expanded.expansion_source == "llm_generated"
    assert expanded.expansion_text == deterministic_expansion(m)


class _FailingGateway:
    @property
    def embed_model_id(self):
        return "none"

    def embed_texts(self, texts):
        raise GatewayError("down")

    def rerank(self, query, documents):
        raise GatewayError("down")

    def complete_chat(self, system, user):
        raise GatewayError("down")


def test_expansion_falls_back_and_flags_degradation(catalog):
    m = catalog.find_metric("TC-SI-130a.1")
    expanded, degraded = expand_metric_definition_flagged(m, _FailingGateway())
    assert degraded is True
    assert expanded.expansion_source == "curated"
    assert expanded.expansion_text == deterministic_expansion(m)


def test_fixture_file_is_valid_json():
    json.loads((FIXTURES / "catalog.json").read_text("utf-8"))

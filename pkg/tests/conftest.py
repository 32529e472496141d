"""Shared fixtures: the synthetic catalog/report pair and mock-backed indexes."""

from pathlib import Path

import pytest

from esglens.catalog import load_catalog
from esglens.indexes import build_keyword_index, build_vector_index
from esglens.ingest import extract_pages, segment_document
from esglens.mock_gateway import MockModelGateway

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

EPOCH = "1970-01-01T00:00:00Z"


@pytest.fixture(scope="session")
def catalog():
    return load_catalog(FIXTURES / "catalog.json")


@pytest.fixture(scope="session")
def report_bytes():
    return (FIXTURES / "report_meridian.pagestream.json").read_bytes()


@pytest.fixture(scope="session")
def report_doc(report_bytes):
    return extract_pages(report_bytes, "pagestream", ingested_at=EPOCH)


@pytest.fixture(scope="session")
def segments(report_doc):
    return segment_document(report_doc)


@pytest.fixture(scope="session")
def mock_gateway():
    return MockModelGateway()


@pytest.fixture(scope="session")
def keyword_index(segments):
    return build_keyword_index(segments)


@pytest.fixture(scope="session")
def vector_index(segments, mock_gateway):
    return build_vector_index(segments, mock_gateway)

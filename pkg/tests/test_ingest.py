import json

import pytest

from esglens.errors import IngestError
from esglens.ingest import (
    Page,
    RawBlock,
    ReportDocument,
    dump_segments,
    extract_pages,
    load_segments,
    merge_cross_page_structures,
    segment_document,
)
from tests.conftest import EPOCH


def _pagestream(pages):
    return json.dumps({"company": "ACME", "title": "T", "pages": pages}).encode()


def test_fixture_report_has_three_pages(report_doc):
    assert [p.number for p in report_doc.pages] == [1, 2, 3]
    assert report_doc.company == "Meridian Group"
    assert report_doc.source_format == "pagestream"


def test_report_id_is_stable_content_hash(report_bytes):
    a = extract_pages(report_bytes, "pagestream", ingested_at=EPOCH)
    b = extract_pages(report_bytes, "pagestream", ingested_at="2030-01-01T00:00:00Z")
    assert a.report_id == b.report_id
    assert len(a.report_id) == 16
    changed = extract_pages(report_bytes + b" ", "pagestream", ingested_at=EPOCH)
    assert changed.report_id != a.report_id


def test_pagestream_schema_violations():
    with pytest.raises(IngestError, match="not valid JSON"):
        extract_pages(b"{oops", "pagestream")
    with pytest.raises(IngestError, match="missing field 'pages'"):
        extract_pages(json.dumps({"company": "", "title": ""}).encode(), "pagestream")
    with pytest.raises(IngestError, match="no pages"):
        extract_pages(_pagestream([]), "pagestream")
    with pytest.raises(IngestError, match="must increase from 1"):
        extract_pages(
            _pagestream([{"number": 2, "blocks": []}]),
            "pagestream",
        )
    with pytest.raises(IngestError, match="kind"):
        extract_pages(
            _pagestream([{"number": 1, "blocks": [{"kind": "poem", "text": "x"}]}]),
            "pagestream",
        )
    with pytest.raises(IngestError, match="continues"):
        extract_pages(
            _pagestream(
                [{"number": 1, "blocks": [{"kind": "paragraph", "text": "x", "continues": 1}]}]
            ),
            "pagestream",
        )


def test_unknown_format_rejected():
    with pytest.raises(IngestError, match="unknown report format"):
        extract_pages(b"x", "parchment")


def test_page_lookup(report_doc):
    assert report_doc.page(2).number == 2
    with pytest.raises(IngestError):
        report_doc.page(9)


def test_cross_page_merge_via_continues_flag(segments):
    spans = [s for s in segments if s.page_start != s.page_end]
    assert len(spans) == 1
    merged = spans[0]
    assert (merged.page_start, merged.page_end) == (1, 2)
    assert "credit analysis procedures, and sector guidelines" in merged.text


def test_fixture_segment_count_and_kinds(segments):
    assert len(segments) == 20
    kinds = {s.kind for s in segments}
    assert kinds == {"heading", "paragraph", "table"}
    tables = [s for s in segments if s.kind == "table"]
    assert len(tables) == 1
    assert "Recycled packaging content | 38 percent" in tables[0].text


def test_segments_ordered_and_offsets_sane(segments):
    keys = [(s.page_start, s.char_start) for s in segments]
    assert keys == sorted(keys)
    for s in segments:
        assert s.char_start < s.char_end
        assert s.page_start <= s.page_end
        assert len(s.text) >= 3


def test_segment_ids_are_dense_and_prefixed(report_doc, segments):
    for i, s in enumerate(segments):
        assert s.segment_id == f"{report_doc.report_id}:{i}"


def test_short_blocks_are_dropped():
    doc = extract_pages(
        _pagestream(
            [
                {
                    "number": 1,
                    "blocks": [
                        {"kind": "paragraph", "text": "ok"},
                        {"kind": "paragraph", "text": "long enough to keep"},
                    ],
                }
            ]
        ),
        "pagestream",
    )
    segs = segment_document(doc)
    assert [s.text for s in segs] == ["long enough to keep"]


def test_dump_and_load_segments_round_trip(tmp_path, report_doc, segments):
    path = tmp_path / "segments.jsonl"
    dump_segments(str(path), report_doc.report_id, segments)
    again = load_segments(str(path))
    assert again == list(segments)


def test_load_segments_count_mismatch(tmp_path, report_doc, segments):
    path = tmp_path / "segments.jsonl"
    dump_segments(str(path), report_doc.report_id, segments)
    lines = path.read_text("utf-8").splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
    with pytest.raises(IngestError, match="count"):
        load_segments(str(path))


def _pdf_doc(pages):
    return ReportDocument(
        report_id="r" * 16,
        company="",
        title="",
        pages=tuple(
            Page(number=i + 1, blocks=tuple(RawBlock(kind=k, text=t) for k, t in blocks))
            for i, blocks in enumerate(pages)
        ),
        source_format="pdf",
        ingested_at=EPOCH,
    )


def test_pdf_sentence_merge_heuristic():
    doc = _pdf_doc(
        [
            [("paragraph", "The programme continued to expand across the northern")],
            [("paragraph", "region, reaching twelve additional sites this year.")],
        ]
    )
    merged = merge_cross_page_structures(doc)
    assert len(merged) == 1
    assert merged[0].page_start == 1 and merged[0].page_end == 2


def test_pdf_no_merge_when_sentence_closed():
    doc = _pdf_doc(
        [
            [("paragraph", "The programme concluded this year.")],
            [("paragraph", "separately, a new initiative began.")],
        ]
    )
    assert len(merge_cross_page_structures(doc)) == 2


def test_pdf_table_merge_on_shared_leading_row():
    header = "Site | Withdrawal | Discharge"
    doc = _pdf_doc(
        [
            [("table", f"{header}\nA | 10 | 4")],
            [("table", f"{header}\nB | 12 | 5")],
        ]
    )
    merged = merge_cross_page_structures(doc)
    assert len(merged) == 1
    assert merged[0].kind == "table"
    assert (merged[0].page_start, merged[0].page_end) == (1, 2)

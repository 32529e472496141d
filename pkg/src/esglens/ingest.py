"""Report ingestion: pages in, ordered addressable segments out.

Two input paths produce the same page model.  The pagestream JSON format
is first-class and carries explicit block structure, so the whole pipeline
runs without a PDF library; PDF decoding sits behind a small adapter
protocol.  Cross-page merging then stitches paragraphs and tables that a
page boundary split, and segmentation normalizes whitespace and assigns
stable ids and char offsets.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Protocol

from esglens.errors import IngestError
from esglens.jsonio import canonical_dumps
from esglens.textutil import collapse_ws, normalize_table_text

__all__ = [
    "BLOCK_KINDS",
    "MIN_SEGMENT_CHARS",
    "SEGMENTS_SCHEMA",
    "MergedBlock",
    "Page",
    "PdfTextExtractor",
    "PypdfExtractor",
    "RawBlock",
    "ReportDocument",
    "Segment",
    "dump_segments",
    "extract_pages",
    "load_segments",
    "merge_cross_page_structures",
    "segment_document",
]

SEGMENTS_SCHEMA = "euleresg/segments/v1"
BLOCK_KINDS = ("paragraph", "table", "heading")
MIN_SEGMENT_CHARS = 3


@dataclass(frozen=True)
class RawBlock:
    kind: str
    text: str
    continues: bool = False


@dataclass(frozen=True)
class Page:
    number: int
    blocks: tuple[RawBlock, ...]

    @property
    def text(self) -> str:
        return "\n".join(block.text for block in self.blocks)


@dataclass(frozen=True)
class ReportDocument:
    report_id: str
    company: str
    title: str
    pages: tuple[Page, ...]
    source_format: str
    ingested_at: str

    def page(self, number: int) -> Page:
        for page in self.pages:
            if page.number == number:
                return page
        raise IngestError(f"report {self.report_id} has no page {number}")


@dataclass(frozen=True)
class Segment:
    segment_id: str
    kind: str
    text: str
    page_start: int
    page_end: int
    char_start: int
    char_end: int

    def to_json_obj(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "kind": self.kind,
            "text": self.text,
            "page_start": self.page_start,
            "page_end": self.page_end,
            "char_start": self.char_start,
            "char_end": self.char_end,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Segment":
        try:
            return cls(
                segment_id=obj["segment_id"],
                kind=obj["kind"],
                text=obj["text"],
                page_start=obj["page_start"],
                page_end=obj["page_end"],
                char_start=obj["char_start"],
                char_end=obj["char_end"],
            )
        except KeyError as exc:
            raise IngestError(f"segment record missing field {exc.args[0]!r}") from exc


class PdfTextExtractor(Protocol):
    """Adapter turning PDF bytes into per-page (kind, text) blocks."""

    def extract(self, data: bytes) -> list[list[tuple[str, str]]]: ...


class PypdfExtractor:
    """Default PDF adapter; imports pypdf lazily so it stays optional."""

    def extract(self, data: bytes) -> list[list[tuple[str, str]]]:
        try:
            import io

            from pypdf import PdfReader
        except ImportError as exc:
            raise IngestError(
                "PDF support requires the optional pypdf dependency"
            ) from exc
        try:
            reader = PdfReader(io.BytesIO(data))
        except Exception as exc:
            raise IngestError(f"unreadable PDF: {exc}") from exc
        pages: list[list[tuple[str, str]]] = []
        for index, page in enumerate(reader.pages):
            try:
                text = page.extract_text() or ""
            except Exception as exc:
                raise IngestError(f"unreadable PDF at page {index + 1}: {exc}") from exc
            blocks = [
                ("paragraph", chunk)
                for chunk in text.split("\n\n")
                if chunk.strip()
            ]
            pages.append(blocks)
        return pages


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _require_type(value, types, field: str):
    if not isinstance(value, types):
        raise IngestError(f"pagestream field {field!r} has the wrong type")
    return value


def _parse_pagestream(data: bytes) -> tuple[str, str, tuple[Page, ...]]:
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IngestError(f"pagestream is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise IngestError("pagestream root must be an object")
    for field in ("company", "title", "pages"):
        if field not in obj:
            raise IngestError(f"pagestream is missing field {field!r}")
    company = _require_type(obj["company"], str, "company")
    title = _require_type(obj["title"], str, "title")
    pages_obj = _require_type(obj["pages"], list, "pages")
    if not pages_obj:
        raise IngestError("report has no pages")
    pages: list[Page] = []
    previous_number = 0
    for i, page_obj in enumerate(pages_obj):
        where = f"pages[{i}]"
        if not isinstance(page_obj, dict):
            raise IngestError(f"pagestream field {where!r} must be an object")
        if "number" not in page_obj:
            raise IngestError(f"pagestream is missing field {where + '.number'!r}")
        number = page_obj["number"]
        if isinstance(number, bool) or not isinstance(number, int):
            raise IngestError(f"pagestream field {where + '.number'!r} has the wrong type")
        if number <= previous_number or (not pages and number != 1):
            raise IngestError(
                f"pagestream field {where + '.number'!r} must increase from 1"
            )
        previous_number = number
        if "blocks" not in page_obj:
            raise IngestError(f"pagestream is missing field {where + '.blocks'!r}")
        blocks_obj = _require_type(page_obj["blocks"], list, f"{where}.blocks")
        blocks: list[RawBlock] = []
        for j, block_obj in enumerate(blocks_obj):
            bwhere = f"{where}.blocks[{j}]"
            if not isinstance(block_obj, dict):
                raise IngestError(f"pagestream field {bwhere!r} must be an object")
            for field in ("kind", "text"):
                if field not in block_obj:
                    raise IngestError(
                        f"pagestream is missing field {bwhere + '.' + field!r}"
                    )
            kind = _require_type(block_obj["kind"], str, f"{bwhere}.kind")
            if kind not in BLOCK_KINDS:
                raise IngestError(
                    f"pagestream field {bwhere + '.kind'!r} must be one of "
                    f"{', '.join(BLOCK_KINDS)}"
                )
            text = _require_type(block_obj["text"], str, f"{bwhere}.text")
            continues = block_obj.get("continues", False)
            if not isinstance(continues, bool):
                raise IngestError(
                    f"pagestream field {bwhere + '.continues'!r} has the wrong type"
                )
            blocks.append(RawBlock(kind=kind, text=text, continues=continues))
        pages.append(Page(number=number, blocks=tuple(blocks)))
    return company, title, tuple(pages)


def extract_pages(
    data: bytes,
    source_format: str = "pagestream",
    *,
    pdf_extractor: PdfTextExtractor | None = None,
    company: str = "",
    title: str = "",
    ingested_at: str | None = None,
) -> ReportDocument:
    """Build a ReportDocument from raw report bytes.

    The report id is a content hash, so identical bytes always map to the
    same report regardless of when or how often they are ingested.
    """
    report_id = hashlib.sha256(data).hexdigest()[:16]
    stamp = ingested_at if ingested_at is not None else _utc_now_iso()
    if source_format == "pagestream":
        company_in, title_in, pages = _parse_pagestream(data)
        return ReportDocument(
            report_id=report_id,
            company=company or company_in,
            title=title or title_in,
            pages=pages,
            source_format="pagestream",
            ingested_at=stamp,
        )
    if source_format == "pdf":
        extractor = pdf_extractor if pdf_extractor is not None else PypdfExtractor()
        raw_pages = extractor.extract(data)
        if not raw_pages:
            raise IngestError("report has no pages")
        pages = tuple(
            Page(
                number=i + 1,
                blocks=tuple(RawBlock(kind=kind, text=text) for kind, text in blocks),
            )
            for i, blocks in enumerate(raw_pages)
        )
        return ReportDocument(
            report_id=report_id,
            company=company,
            title=title,
            pages=pages,
            source_format="pdf",
            ingested_at=stamp,
        )
    raise IngestError(f"unknown report format {source_format!r}")


@dataclass(frozen=True)
class _BlockPart:
    page_number: int
    text: str
    char_start: int
    char_end: int


@dataclass(frozen=True)
class MergedBlock:
    kind: str
    parts: tuple[_BlockPart, ...]
    tail_continues: bool

    @property
    def page_start(self) -> int:
        return self.parts[0].page_number

    @property
    def page_end(self) -> int:
        return self.parts[-1].page_number

    @property
    def text(self) -> str:
        return " ".join(part.text for part in self.parts)


def _page_parts(page: Page) -> list[tuple[RawBlock, _BlockPart]]:
    parts = []
    offset = 0
    for block in page.blocks:
        start = offset
        end = start + len(block.text)
        # Page text joins blocks with single newlines, hence the +1.
        offset = end + 1
        parts.append(
            (block, _BlockPart(page.number, block.text, start, end))
        )
    return parts


def _sentence_open(text: str) -> bool:
    stripped = text.rstrip()
    return bool(stripped) and stripped[-1] not in ".!?"


def _table_signature(text: str) -> str:
    first_row = text.strip().split("\n", 1)[0]
    return collapse_ws(first_row)


def _should_merge(tail: MergedBlock, head: RawBlock, source_format: str) -> bool:
    if source_format == "pagestream":
        return tail.tail_continues
    if tail.kind == "paragraph" and head.kind == "paragraph":
        head_text = head.text.lstrip()
        return (
            _sentence_open(tail.parts[-1].text)
            and bool(head_text)
            and head_text[0].islower()
        )
    if tail.kind == "table" and head.kind == "table":
        sig_tail = _table_signature(tail.parts[0].text)
        return bool(sig_tail) and sig_tail == _table_signature(head.text)
    return False


def merge_cross_page_structures(doc: ReportDocument) -> list[MergedBlock]:
    """Stitch page-final blocks to the next page's opening block.

    Pagestream input merges on the explicit continues flag of the earlier
    block; PDF input merges on a heuristic (sentence left open and the next
    page starting lowercase, or two tables sharing a leading row signature).
    Merged parts keep their per-page offsets so segments stay addressable.
    """
    merged: list[MergedBlock] = []
    pending: MergedBlock | None = None
    for page in doc.pages:
        entries = _page_parts(page)
        if not entries:
            if pending is not None:
                merged.append(pending)
                pending = None
            continue
        if pending is not None and _should_merge(
            pending, entries[0][0], doc.source_format
        ):
            head_block, head_part = entries[0]
            pending = MergedBlock(
                kind=pending.kind,
                parts=pending.parts + (head_part,),
                tail_continues=head_block.continues,
            )
            entries = entries[1:]
        if entries:
            if pending is not None:
                merged.append(pending)
            for block, part in entries[:-1]:
                merged.append(
                    MergedBlock(kind=block.kind, parts=(part,), tail_continues=False)
                )
            last_block, last_part = entries[-1]
            pending = MergedBlock(
                kind=last_block.kind,
                parts=(last_part,),
                tail_continues=last_block.continues,
            )
    if pending is not None:
        merged.append(pending)
    return merged


def _normalize_block_text(kind: str, text: str) -> str:
    if kind == "table":
        return normalize_table_text(text)
    return collapse_ws(text)


def segment_document(doc: ReportDocument) -> list[Segment]:
    """Merge, normalize, and number the report's blocks.

    Sequence numbers are assigned after short blocks are dropped, so ids
    are dense.  Offsets always point into the first page's raw text.
    """
    segments: list[Segment] = []
    seq = 0
    for block in merge_cross_page_structures(doc):
        text = _normalize_block_text(block.kind, block.text)
        if len(text) < MIN_SEGMENT_CHARS:
            continue
        first = block.parts[0]
        segments.append(
            Segment(
                segment_id=f"{doc.report_id}:{seq}",
                kind=block.kind,
                text=text,
                page_start=block.page_start,
                page_end=block.page_end,
                char_start=first.char_start,
                char_end=first.char_end,
            )
        )
        seq += 1
    return segments


def dump_segments(report_id: str, segments: Iterable[Segment], path: str) -> None:
    rows = [seg.to_json_obj() for seg in segments]
    header = {"schema": SEGMENTS_SCHEMA, "report_id": report_id, "count": len(rows)}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_dumps(header))
        fh.write("\n")
        for row in rows:
            fh.write(canonical_dumps(row))
            fh.write("\n")


def load_segments(path: str) -> tuple[str, list[Segment]]:
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh.read().split("\n") if line]
    if not lines:
        raise IngestError(f"segment file {path} is empty")
    header = json.loads(lines[0])
    if header.get("schema") != SEGMENTS_SCHEMA:
        raise IngestError(
            f"segment file {path} has schema {header.get('schema')!r}, "
            f"expected {SEGMENTS_SCHEMA!r}"
        )
    segments = [Segment.from_json_obj(json.loads(line)) for line in lines[1:]]
    if len(segments) != header.get("count"):
        raise IngestError(f"segment file {path} count mismatch")
    return header.get("report_id", ""), segments

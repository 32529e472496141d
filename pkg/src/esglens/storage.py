"""Directory-tree persistence for reports, indexes, results, and jobs.

Layout under one root:
    reports/{report_id}/report.json
    indexes/{report_id}/segments.jsonl
    indexes/{report_id}/keyword_index.json
    indexes/{report_id}/vectors.bin
    results/{job_id}/results.json
    results/{job_id}/traces.json
    jobs.json

Everything is schema-versioned JSON except the packed vector file.
"""

from __future__ import annotations

import json
import os
import threading

from esglens.errors import StorageError
from esglens.indexes import (
    KeywordIndex,
    VectorIndex,
    load_keyword_index,
    load_vector_index,
    save_keyword_index,
    save_vector_index,
)
from esglens.ingest import (
    Page,
    RawBlock,
    ReportDocument,
    Segment,
    dump_segments,
    load_segments,
)
from esglens.jsonio import canonical_dumps, write_json_file

__all__ = ["JOBS_SCHEMA", "REPORT_SCHEMA", "Storage", "report_from_json_obj", "report_to_json_obj"]

REPORT_SCHEMA = "euleresg/report/v1"
JOBS_SCHEMA = "euleresg/jobs/v1"


def report_to_json_obj(doc: ReportDocument) -> dict:
    return {
        "schema": REPORT_SCHEMA,
        "report_id": doc.report_id,
        "company": doc.company,
        "title": doc.title,
        "source_format": doc.source_format,
        "ingested_at": doc.ingested_at,
        "pages": [
            {
                "number": page.number,
                "blocks": [
                    {"kind": b.kind, "text": b.text, "continues": b.continues}
                    for b in page.blocks
                ],
            }
            for page in doc.pages
        ],
    }


def report_from_json_obj(obj: dict) -> ReportDocument:
    if obj.get("schema") != REPORT_SCHEMA:
        raise StorageError(
            f"report record has schema {obj.get('schema')!r}, expected {REPORT_SCHEMA!r}"
        )
    pages = tuple(
        Page(
            number=page["number"],
            blocks=tuple(
                RawBlock(
                    kind=b["kind"],
                    text=b["text"],
                    continues=b.get("continues", False),
                )
                for b in page["blocks"]
            ),
        )
        for page in obj["pages"]
    )
    return ReportDocument(
        report_id=obj["report_id"],
        company=obj.get("company", ""),
        title=obj.get("title", ""),
        pages=pages,
        source_format=obj.get("source_format", "pagestream"),
        ingested_at=obj.get("ingested_at", ""),
    )


class Storage:
    """Single-root file persistence; writes are guarded by one lock."""

    def __init__(self, root: str) -> None:
        self.root = os.path.abspath(root)
        self._lock = threading.Lock()
        os.makedirs(self.root, exist_ok=True)

    def _report_dir(self, report_id: str) -> str:
        return os.path.join(self.root, "reports", report_id)

    def _index_dir(self, report_id: str) -> str:
        return os.path.join(self.root, "indexes", report_id)

    def _results_dir(self, job_id: str) -> str:
        return os.path.join(self.root, "results", job_id)

    def _jobs_path(self) -> str:
        return os.path.join(self.root, "jobs.json")

    # -- reports

    def has_report(self, report_id: str) -> bool:
        return os.path.isfile(os.path.join(self._report_dir(report_id), "report.json"))

    def save_report(self, doc: ReportDocument) -> None:
        with self._lock:
            write_json_file(
                os.path.join(self._report_dir(doc.report_id), "report.json"),
                report_to_json_obj(doc),
            )

    def load_report(self, report_id: str) -> ReportDocument:
        path = os.path.join(self._report_dir(report_id), "report.json")
        try:
            with open(path, encoding="utf-8") as fh:
                return report_from_json_obj(json.load(fh))
        except FileNotFoundError:
            raise StorageError(f"unknown report {report_id!r}")

    def list_reports(self) -> list[dict]:
        reports_root = os.path.join(self.root, "reports")
        if not os.path.isdir(reports_root):
            return []
        rows = []
        for report_id in sorted(os.listdir(reports_root)):
            if self.has_report(report_id):
                doc = self.load_report(report_id)
                rows.append(
                    {
                        "report_id": doc.report_id,
                        "company": doc.company,
                        "title": doc.title,
                        "n_pages": len(doc.pages),
                        "ingested_at": doc.ingested_at,
                    }
                )
        return rows

    # -- indexes

    def has_indexes(self, report_id: str) -> bool:
        index_dir = self._index_dir(report_id)
        return all(
            os.path.isfile(os.path.join(index_dir, name))
            for name in ("segments.jsonl", "keyword_index.json", "vectors.bin")
        )

    def save_indexes(
        self,
        report_id: str,
        segments: list[Segment],
        keyword_index: KeywordIndex,
        vector_index: VectorIndex,
    ) -> None:
        index_dir = self._index_dir(report_id)
        with self._lock:
            os.makedirs(index_dir, exist_ok=True)
            dump_segments(report_id, segments, os.path.join(index_dir, "segments.jsonl"))
            save_keyword_index(keyword_index, os.path.join(index_dir, "keyword_index.json"))
            save_vector_index(vector_index, os.path.join(index_dir, "vectors.bin"))

    def load_report_segments(self, report_id: str) -> list[Segment]:
        path = os.path.join(self._index_dir(report_id), "segments.jsonl")
        try:
            _, segments = load_segments(path)
        except FileNotFoundError:
            raise StorageError(f"no segments stored for report {report_id!r}")
        return segments

    def load_report_keyword_index(self, report_id: str) -> KeywordIndex:
        path = os.path.join(self._index_dir(report_id), "keyword_index.json")
        try:
            return load_keyword_index(path)
        except FileNotFoundError:
            raise StorageError(f"no keyword index stored for report {report_id!r}")

    def load_report_vector_index(self, report_id: str) -> VectorIndex:
        path = os.path.join(self._index_dir(report_id), "vectors.bin")
        try:
            return load_vector_index(path)
        except FileNotFoundError:
            raise StorageError(f"no vector index stored for report {report_id!r}")

    # -- results

    def save_results(self, job_id: str, results: dict, traces: list[dict]) -> str:
        results_dir = self._results_dir(job_id)
        with self._lock:
            write_json_file(os.path.join(results_dir, "results.json"), results)
            write_json_file(os.path.join(results_dir, "traces.json"), traces)
        return os.path.join(results_dir, "results.json")

    def load_results(self, job_id: str) -> dict:
        path = os.path.join(self._results_dir(job_id), "results.json")
        try:
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)
        except FileNotFoundError:
            raise StorageError(f"no results stored for job {job_id!r}")

    def load_traces(self, job_id: str) -> list[dict]:
        path = os.path.join(self._results_dir(job_id), "traces.json")
        try:
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)
        except FileNotFoundError:
            raise StorageError(f"no traces stored for job {job_id!r}")

    # -- jobs

    def save_jobs(self, jobs: dict) -> None:
        with self._lock:
            write_json_file(self._jobs_path(), {"schema": JOBS_SCHEMA, "jobs": jobs})

    def load_jobs(self) -> dict:
        try:
            with open(self._jobs_path(), encoding="utf-8") as fh:
                obj = json.load(fh)
        except FileNotFoundError:
            return {}
        if obj.get("schema") != JOBS_SCHEMA:
            raise StorageError(
                f"jobs file has schema {obj.get('schema')!r}, expected {JOBS_SCHEMA!r}"
            )
        return obj.get("jobs", {})

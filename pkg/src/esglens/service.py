"""HTTP service: report upload, analysis jobs, results, pages, chat.

Jobs run on an in-process worker pool (one at a time by default, so
runtime measurements stay meaningful) and follow the state machine
queued -> running -> done|failed. Every error body is {"code","message"}.
"""

from __future__ import annotations

import os
import secrets
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field
from starlette.exceptions import HTTPException as StarletteHTTPException

from esglens.analysis import AnalysisConfig, analyze_report
from esglens.catalog import Catalog
from esglens.chat import ChatSessionStore, ChatTurn, chat_answer
from esglens.errors import (
    ConfigError,
    EsgLensError,
    GatewayError,
    IngestError,
    StorageError,
    UnknownSlugError,
)
from esglens.gateway import ModelGateway
from esglens.indexes import EmbeddingCache, build_keyword_index, build_vector_index
from esglens.ingest import ReportDocument, extract_pages, segment_document
from esglens.retrieval import RetrievalConfig
from esglens.storage import Storage

__all__ = ["AnalysisJob", "JobStore", "create_app"]

_STATUS_CODES = {
    400: "bad_request",
    404: "not_found",
    405: "method_not_allowed",
    409: "conflict",
    422: "validation_error",
    500: "internal_error",
    502: "gateway_error",
}

_RETRIEVAL_OVERRIDE_KEYS = {
    "keyword_top_k",
    "semantic_top_k",
    "rerank_weight",
    "final_top_n",
}


@dataclass
class AnalysisJob:
    job_id: str
    report_id: str
    slugs: list[str]
    status: str
    created_at: str
    finished_at: str | None = None
    error: str | None = None

    def to_json_obj(self) -> dict:
        return {
            "job_id": self.job_id,
            "report_id": self.report_id,
            "slugs": self.slugs,
            "status": self.status,
            "created_at": self.created_at,
            "finished_at": self.finished_at,
            "error": self.error,
        }


class JobStore:
    """In-memory job registry persisted to jobs.json on every transition."""

    def __init__(self, storage: Storage, *, deterministic_clock: bool = False) -> None:
        self._storage = storage
        self._deterministic = deterministic_clock
        self._lock = threading.Lock()
        self._jobs: dict[str, AnalysisJob] = {}
        for job_id, obj in storage.load_jobs().items():
            self._jobs[job_id] = AnalysisJob(
                job_id=job_id,
                report_id=obj.get("report_id", ""),
                slugs=list(obj.get("slugs", [])),
                status=obj.get("status", "failed"),
                created_at=obj.get("created_at", ""),
                finished_at=obj.get("finished_at"),
                error=obj.get("error"),
            )

    def _now(self) -> str:
        if self._deterministic:
            return "1970-01-01T00:00:00Z"
        return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")

    def _persist(self) -> None:
        self._storage.save_jobs(
            {job_id: job.to_json_obj() for job_id, job in self._jobs.items()}
        )

    def create(self, report_id: str, slugs: list[str]) -> AnalysisJob:
        with self._lock:
            job_id = secrets.token_hex(8)
            while job_id in self._jobs:
                job_id = secrets.token_hex(8)
            job = AnalysisJob(
                job_id=job_id,
                report_id=report_id,
                slugs=slugs,
                status="queued",
                created_at=self._now(),
            )
            self._jobs[job_id] = job
            self._persist()
            return replace(job)

    def get(self, job_id: str) -> AnalysisJob | None:
        with self._lock:
            job = self._jobs.get(job_id)
            return replace(job) if job else None

    def _transition(self, job_id: str, status: str, error: str | None = None) -> None:
        with self._lock:
            job = self._jobs[job_id]
            job.status = status
            if status in ("done", "failed"):
                job.finished_at = self._now()
            if error is not None:
                job.error = error
            self._persist()

    def set_running(self, job_id: str) -> None:
        self._transition(job_id, "running")

    def set_done(self, job_id: str) -> None:
        self._transition(job_id, "done")

    def set_failed(self, job_id: str, error: str) -> None:
        self._transition(job_id, "failed", error)


class AnalysisRequest(BaseModel):
    report_id: str
    slugs: list[str] = Field(min_length=1)
    config: dict = Field(default_factory=dict)


class ChatRequest(BaseModel):
    report_id: str
    message: str
    session_id: str = ""
    job_id: str | None = None


def _apply_config_overrides(
    retrieval_cfg: RetrievalConfig,
    analysis_cfg: AnalysisConfig,
    overrides: dict,
) -> tuple[RetrievalConfig, AnalysisConfig]:
    unknown = set(overrides) - _RETRIEVAL_OVERRIDE_KEYS - {"parallelism"}
    if unknown:
        raise HTTPException(
            status_code=422,
            detail=f"unknown config overrides: {', '.join(sorted(unknown))}",
        )
    retrieval_updates = {
        key: overrides[key] for key in _RETRIEVAL_OVERRIDE_KEYS if key in overrides
    }
    try:
        if retrieval_updates:
            retrieval_cfg = replace(retrieval_cfg, **retrieval_updates)
        if "parallelism" in overrides:
            analysis_cfg = replace(
                analysis_cfg, parallelism=int(overrides["parallelism"])
            )
    except (ConfigError, TypeError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=f"bad config override: {exc}")
    return retrieval_cfg, analysis_cfg


def create_app(
    storage: Storage,
    catalog: Catalog,
    gateway: ModelGateway,
    retrieval_cfg: RetrievalConfig | None = None,
    analysis_cfg: AnalysisConfig | None = None,
    *,
    job_workers: int = 1,
    frontend_dir: str | None = None,
) -> FastAPI:
    retrieval_cfg = retrieval_cfg or RetrievalConfig()
    analysis_cfg = analysis_cfg or AnalysisConfig()
    app = FastAPI(title="esglens", docs_url=None, redoc_url=None)
    jobs = JobStore(storage, deterministic_clock=analysis_cfg.deterministic_clock)
    worker_pool = ThreadPoolExecutor(max_workers=max(1, job_workers))
    embedding_cache = EmbeddingCache()
    sessions = ChatSessionStore()
    job_configs: dict[str, tuple[RetrievalConfig, AnalysisConfig]] = {}

    app.state.storage = storage
    app.state.catalog = catalog
    app.state.gateway = gateway
    app.state.jobs = jobs

    @app.exception_handler(StarletteHTTPException)
    async def on_http_error(request: Request, exc: StarletteHTTPException):
        code = _STATUS_CODES.get(exc.status_code, "error")
        return JSONResponse(
            status_code=exc.status_code,
            content={"code": code, "message": str(exc.detail)},
        )

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content={"code": "validation_error", "message": str(exc.errors())},
        )

    @app.exception_handler(EsgLensError)
    async def on_domain_error(request: Request, exc: EsgLensError):
        return JSONResponse(
            status_code=500,
            content={"code": "internal_error", "message": str(exc)},
        )

    def _ingest_bytes(data: bytes, source_format: str) -> ReportDocument:
        ingested_at = (
            "1970-01-01T00:00:00Z" if analysis_cfg.deterministic_clock else None
        )
        try:
            doc = extract_pages(data, source_format, ingested_at=ingested_at)
        except IngestError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if not storage.has_report(doc.report_id):
            segments = segment_document(doc)
            keyword_index = build_keyword_index(segments)
            try:
                vector_index = build_vector_index(segments, gateway, embedding_cache)
            except GatewayError as exc:
                raise HTTPException(status_code=502, detail=str(exc))
            storage.save_report(doc)
            storage.save_indexes(doc.report_id, segments, keyword_index, vector_index)
        return doc

    @app.post("/reports")
    async def upload_report(request: Request):
        content_type = request.headers.get("content-type", "")
        source_format = request.query_params.get("format", "")
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            upload = form.get("file")
            if upload is None or isinstance(upload, str):
                raise HTTPException(
                    status_code=400, detail="multipart upload needs a 'file' part"
                )
            data = await upload.read()
            if not source_format:
                source_format = str(form.get("format", ""))
            if not source_format:
                filename = (upload.filename or "").lower()
                source_format = "pdf" if filename.endswith(".pdf") else "pagestream"
        else:
            data = await request.body()
            source_format = source_format or "pagestream"
        doc = _ingest_bytes(data, source_format)
        return {"report_id": doc.report_id}

    @app.get("/reports")
    def list_reports():
        return {"reports": storage.list_reports()}

    def _load_report_or_404(report_id: str) -> ReportDocument:
        try:
            return storage.load_report(report_id)
        except StorageError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.get("/reports/{report_id}")
    def report_info(report_id: str):
        doc = _load_report_or_404(report_id)
        return {
            "report_id": doc.report_id,
            "company": doc.company,
            "title": doc.title,
            "n_pages": len(doc.pages),
            "ingested_at": doc.ingested_at,
        }

    @app.get("/reports/{report_id}/pages/{page_number}")
    def report_page(report_id: str, page_number: int):
        doc = _load_report_or_404(report_id)
        page = next((p for p in doc.pages if p.number == page_number), None)
        if page is None:
            raise HTTPException(
                status_code=404,
                detail=f"report {report_id} has no page {page_number}",
            )
        segments = storage.load_report_segments(report_id)
        on_page = [
            seg.to_json_obj()
            for seg in segments
            if seg.page_start <= page_number <= seg.page_end
        ]
        return {
            "report_id": report_id,
            "page": page_number,
            "n_pages": len(doc.pages),
            "text": page.text,
            "segments": on_page,
        }

    @app.get("/catalog")
    def get_catalog():
        return catalog.to_json_obj()

    def _run_job(job_id: str) -> None:
        job = jobs.get(job_id)
        if job is None:
            return
        jobs.set_running(job_id)
        try:
            doc = storage.load_report(job.report_id)
            segments = storage.load_report_segments(job.report_id)
            keyword_index = storage.load_report_keyword_index(job.report_id)
            vector_index = storage.load_report_vector_index(job.report_id)
            job_retrieval, job_analysis = job_configs.get(
                job_id, (retrieval_cfg, analysis_cfg)
            )
            outcome = analyze_report(
                doc,
                segments,
                keyword_index,
                vector_index,
                catalog,
                job.slugs,
                gateway,
                job_retrieval,
                job_analysis,
            )
            storage.save_results(job_id, outcome.results, outcome.traces)
            jobs.set_done(job_id)
        except Exception as exc:
            jobs.set_failed(job_id, str(exc))
        finally:
            job_configs.pop(job_id, None)

    @app.post("/analyses")
    def start_analysis(body: AnalysisRequest):
        if not storage.has_report(body.report_id):
            raise HTTPException(
                status_code=404, detail=f"unknown report {body.report_id!r}"
            )
        for slug in body.slugs:
            try:
                catalog.metrics_for(slug)
            except UnknownSlugError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
        job_retrieval, job_analysis = _apply_config_overrides(
            retrieval_cfg, analysis_cfg, body.config
        )
        job = jobs.create(body.report_id, list(body.slugs))
        job_configs[job.job_id] = (job_retrieval, job_analysis)
        worker_pool.submit(_run_job, job.job_id)
        return {"job_id": job.job_id}

    def _load_job_or_404(job_id: str) -> AnalysisJob:
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id!r}")
        return job

    @app.get("/analyses/{job_id}")
    def job_status(job_id: str):
        return _load_job_or_404(job_id).to_json_obj()

    def _results_for_done_job(job_id: str) -> dict:
        job = _load_job_or_404(job_id)
        if job.status != "done":
            raise HTTPException(
                status_code=409,
                detail=f"job {job_id} is {job.status}, results are not available",
            )
        return storage.load_results(job_id)

    @app.get("/analyses/{job_id}/results")
    def job_results(job_id: str):
        return _results_for_done_job(job_id)

    @app.get("/analyses/{job_id}/summary")
    def job_summary(job_id: str):
        results = _results_for_done_job(job_id)
        sections = []
        totals = {"disclosed": 0, "partially_disclosed": 0, "not_disclosed": 0}
        for section in results.get("sub_industries", []):
            counts = {"disclosed": 0, "partially_disclosed": 0, "not_disclosed": 0}
            for row in section.get("assessments", []):
                counts[row["status"]] = counts.get(row["status"], 0) + 1
                totals[row["status"]] = totals.get(row["status"], 0) + 1
            sections.append(
                {
                    "slug": section["slug"],
                    "counts": counts,
                    "total": len(section.get("assessments", [])),
                }
            )
        return {
            "job_id": job_id,
            "report_id": results.get("report_id", ""),
            "sub_industries": sections,
            "counts": totals,
            "total": sum(totals.values()),
        }

    @app.post("/chat")
    def chat(body: ChatRequest):
        if not storage.has_report(body.report_id):
            raise HTTPException(
                status_code=404, detail=f"unknown report {body.report_id!r}"
            )
        results = None
        if body.job_id:
            results = _results_for_done_job(body.job_id)
        segments = storage.load_report_segments(body.report_id)
        keyword_index = storage.load_report_keyword_index(body.report_id)
        vector_index = storage.load_report_vector_index(body.report_id)
        session_id = body.session_id or secrets.token_hex(8)
        try:
            turn = chat_answer(
                body.message,
                catalog=catalog,
                segments=segments,
                keyword_index=keyword_index,
                vector_index=vector_index,
                gateway=gateway,
                retrieval_cfg=retrieval_cfg,
                results=results,
                session_id=session_id,
            )
        except GatewayError as exc:
            raise HTTPException(status_code=502, detail=str(exc))
        sessions.append(
            ChatTurn(
                session_id=session_id, role="user", text=body.message, citations=()
            )
        )
        sessions.append(turn)
        return turn.to_json_obj()

    if frontend_dir and os.path.isdir(frontend_dir):
        app.mount("/ui", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app

"""Command line interface: ingest, analyze, evaluate, serve, chat."""

from __future__ import annotations

import secrets
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import click

from esglens.analysis import AnalysisConfig, analyze_report
from esglens.catalog import Catalog, load_catalog
from esglens.chat import chat_answer
from esglens.config import AppConfig, load_config
from esglens.errors import EsgLensError
from esglens.evaluation import (
    aggregate,
    evaluation_report_obj,
    load_ground_truth,
    pairs_from_results,
    render_table,
)
from esglens.gateway import HttpModelGateway, ModelGateway
from esglens.indexes import build_keyword_index, build_vector_index
from esglens.ingest import extract_pages, segment_document
from esglens.jsonio import read_json_file, write_json_file
from esglens.mock_gateway import MockModelGateway
from esglens.storage import Storage

__all__ = ["main"]


@dataclass
class CliContext:
    config: AppConfig
    mock_models: bool

    def storage(self) -> Storage:
        return Storage(self.config.storage_root)

    def catalog(self) -> Catalog:
        if not self.config.catalog_path:
            raise click.ClickException(
                "no catalog configured; pass --catalog or set catalog_path"
            )
        return load_catalog(self.config.catalog_path)

    def gateway(self) -> ModelGateway:
        if self.mock_models:
            return MockModelGateway()
        return HttpModelGateway(
            self.config.chat, self.config.embed, self.config.rerank
        )

    def analysis_cfg(self) -> AnalysisConfig:
        return AnalysisConfig(
            parallelism=self.config.parallelism,
            deterministic_clock=self.mock_models,
        )


@click.group(name="esglens")
@click.option("--mock-models", is_flag=True, help="Use the deterministic mock gateway.")
@click.option("--config", "config_path", default=None, type=click.Path(), help="Config file (key=value lines).")
@click.option("--catalog", "catalog_path", default=None, type=click.Path(), help="Metric catalog JSON path.")
@click.option("--storage-root", default=None, type=click.Path(), help="Directory for reports, indexes, results.")
@click.pass_context
def main(ctx, mock_models, config_path, catalog_path, storage_root):
    """Analyze corporate reports against a framework metric catalog."""
    try:
        cfg = load_config(config_path)
    except EsgLensError as exc:
        raise click.ClickException(str(exc))
    if catalog_path:
        cfg = replace(cfg, catalog_path=catalog_path)
    if storage_root:
        cfg = replace(cfg, storage_root=storage_root)
    ctx.obj = CliContext(config=cfg, mock_models=mock_models)


@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "source_format", default="pagestream", type=click.Choice(["pagestream", "pdf"]))
@click.option("--company", default="", help="Company name to record on the report.")
@click.option("--title", default="", help="Report title to record.")
@click.pass_obj
def ingest(obj: CliContext, file, source_format, company, title):
    """Ingest a report file and build its indexes; prints the report id."""
    data = Path(file).read_bytes()
    ingested_at = "1970-01-01T00:00:00Z" if obj.mock_models else None
    try:
        doc = extract_pages(
            data, source_format, company=company, title=title, ingested_at=ingested_at
        )
        storage = obj.storage()
        if not storage.has_report(doc.report_id):
            segments = segment_document(doc)
            keyword_index = build_keyword_index(segments)
            vector_index = build_vector_index(segments, obj.gateway())
            storage.save_report(doc)
            storage.save_indexes(doc.report_id, segments, keyword_index, vector_index)
        click.echo(doc.report_id)
    except EsgLensError as exc:
        raise click.ClickException(str(exc))


@main.command()
@click.argument("report_id")
@click.option("--slugs", required=True, help="Comma-separated sub-industry slugs.")
@click.option("--out", "out_path", default=None, type=click.Path(), help="Extra copy of the results JSON.")
@click.pass_obj
def analyze(obj: CliContext, report_id, slugs, out_path):
    """Run disclosure analysis for a report; prints results path and runtime."""
    slug_list = [s.strip() for s in slugs.split(",") if s.strip()]
    if not slug_list:
        raise click.ClickException("--slugs must name at least one sub-industry")
    try:
        storage = obj.storage()
        doc = storage.load_report(report_id)
        segments = storage.load_report_segments(report_id)
        keyword_index = storage.load_report_keyword_index(report_id)
        vector_index = storage.load_report_vector_index(report_id)
        catalog = obj.catalog()
        started = time.monotonic()
        outcome = analyze_report(
            doc,
            segments,
            keyword_index,
            vector_index,
            catalog,
            slug_list,
            obj.gateway(),
            obj.config.retrieval,
            obj.analysis_cfg(),
        )
        elapsed = time.monotonic() - started
        job_id = secrets.token_hex(8)
        results_path = storage.save_results(job_id, outcome.results, outcome.traces)
        if out_path:
            write_json_file(out_path, outcome.results)
            results_path = out_path
        click.echo(results_path)
        click.echo(f"runtime_s={elapsed:.2f}")
    except EsgLensError as exc:
        raise click.ClickException(str(exc))


def _collect_results_files(path: Path) -> list[Path]:
    if path.is_dir():
        found = sorted(p for p in path.rglob("results.json"))
        if not found:
            found = sorted(p for p in path.glob("*.json"))
        if not found:
            raise click.ClickException(f"no results JSON found under {path}")
        return found
    return [path]


@main.command()
@click.argument("results", type=click.Path(exists=True))
@click.argument("ground_truth", type=click.Path(exists=True, dir_okay=False))
@click.option("--fmt", default="plain", type=click.Choice(["plain", "markdown", "csv"]))
@click.option("--label", default="Accuracy", help="Column label for the score.")
@click.option("--out", "out_path", default="eval.json", type=click.Path(), help="Where to write the evaluation JSON.")
@click.pass_obj
def evaluate(obj: CliContext, results, ground_truth, fmt, label, out_path):
    """Score results files against a ground-truth CSV; prints the table."""
    try:
        catalog = obj.catalog()
        entries = load_ground_truth(ground_truth)
        results_objs = [
            read_json_file(str(p)) for p in _collect_results_files(Path(results))
        ]
        pairs = pairs_from_results(results_objs, entries, catalog)
        runtimes: dict[str, float] = {}
        for obj in results_objs:
            runtime_ms = float(obj.get("runtime_ms", 0))
            if runtime_ms:
                key = obj.get("company") or obj.get("report_id", "run")
                runtimes[key] = runtime_ms / 1000.0
        report = aggregate(pairs, runtimes or None, model_label=label)
        write_json_file(out_path, evaluation_report_obj(report))
        click.echo(render_table(report, fmt=fmt))
    except EsgLensError as exc:
        raise click.ClickException(str(exc))


@main.command()
@click.option("--addr", default="127.0.0.1:8000", help="host:port to bind.")
@click.option("--frontend", "frontend_dir", default="frontend/dist", type=click.Path(), help="Static dashboard directory mounted at /ui when present.")
@click.pass_obj
def serve(obj: CliContext, addr, frontend_dir):
    """Run the HTTP service."""
    import uvicorn

    from esglens.service import create_app

    host, _, port_text = addr.rpartition(":")
    if not host or not port_text.isdigit():
        raise click.ClickException(f"--addr must be host:port, got {addr!r}")
    try:
        app = create_app(
            obj.storage(),
            obj.catalog(),
            obj.gateway(),
            obj.config.retrieval,
            obj.analysis_cfg(),
            frontend_dir=frontend_dir,
        )
    except EsgLensError as exc:
        raise click.ClickException(str(exc))
    uvicorn.run(app, host=host, port=int(port_text), log_level="warning")


@main.command()
@click.argument("report_id")
@click.option("--results", "results_path", default=None, type=click.Path(exists=True, dir_okay=False), help="Results JSON to ground metric-code answers.")
@click.pass_obj
def chat(obj: CliContext, report_id, results_path):
    """Interactive question loop over one ingested report."""
    try:
        storage = obj.storage()
        segments = storage.load_report_segments(report_id)
        keyword_index = storage.load_report_keyword_index(report_id)
        vector_index = storage.load_report_vector_index(report_id)
        catalog = obj.catalog()
        gateway = obj.gateway()
        results = read_json_file(results_path) if results_path else None
    except EsgLensError as exc:
        raise click.ClickException(str(exc))
    session_id = secrets.token_hex(8)
    click.echo("Ask about the report (blank line or 'exit' to leave).")
    while True:
        try:
            line = click.prompt("you", default="", show_default=False)
        except (EOFError, click.Abort):
            break
        message = line.strip()
        if not message or message.lower() in ("exit", "quit"):
            break
        try:
            turn = chat_answer(
                message,
                catalog=catalog,
                segments=segments,
                keyword_index=keyword_index,
                vector_index=vector_index,
                gateway=gateway,
                retrieval_cfg=obj.config.retrieval,
                results=results,
                session_id=session_id,
            )
        except EsgLensError as exc:
            click.echo(f"error: {exc}", err=True)
            continue
        click.echo(turn.text)
        for cite in turn.citations:
            if cite.page_start == cite.page_end:
                pages = str(cite.page_start)
            else:
                pages = f"{cite.page_start}-{cite.page_end}"
            click.echo(f"  [pages {pages}] {cite.segment_id}")


if __name__ == "__main__":
    sys.exit(main())

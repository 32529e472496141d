"""Framework-aware ESG report disclosure analysis.

The pipeline: load a metric catalog, ingest a report into addressable
segments, index them (BM25 + dense vectors), retrieve evidence per metric
over both channels, classify disclosure status with a chat model, and score
the results against ground truth.
"""

__version__ = "0.1.0"

from esglens.catalog import Catalog, MetricSpec, load_catalog
from esglens.ingest import ReportDocument, Segment, extract_pages, segment_document
from esglens.retrieval import RetrievalConfig

__all__ = [
    "Catalog",
    "MetricSpec",
    "load_catalog",
    "ReportDocument",
    "Segment",
    "extract_pages",
    "segment_document",
    "RetrievalConfig",
    "__version__",
]

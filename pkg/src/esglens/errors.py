"""Exception types shared across the package."""


class EsgLensError(Exception):
    """Base class for all package errors."""


class CatalogError(EsgLensError):
    """Catalog file malformed or violates a metric invariant."""


class UnknownSlugError(CatalogError):
    """Requested sub-industry slug is not in the loaded catalog."""

    def __init__(self, slug: str, available: list[str]):
        self.slug = slug
        self.available = list(available)
        super().__init__(
            f"unknown sub-industry {slug!r}; available: {', '.join(available) or '(none)'}"
        )


class IngestError(EsgLensError):
    """Report bytes could not be turned into pages/segments."""


class GatewayError(EsgLensError):
    """Model backend failed after exhausting its retry budget."""

    def __init__(self, message: str, status_code: int | None = None):
        self.status_code = status_code
        super().__init__(message)


class IndexStoreError(EsgLensError):
    """Index build, search, or persistence failure."""


class VerdictParseError(EsgLensError):
    """Chat response did not contain a usable structured verdict."""


class UnitError(EsgLensError):
    """Value/unit pair cannot be normalized (non-finite value)."""


class EvaluationError(EsgLensError):
    """Ground truth inconsistent with catalog or results."""


class ConfigError(EsgLensError):
    """Config file or settings invalid."""


class StorageError(EsgLensError):
    """On-disk report/index/result store problem."""

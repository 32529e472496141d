"""Application configuration from a key=value file.

One key per line, `#` comments and blank lines ignored. Unknown keys are
rejected so typos fail loudly. API keys never appear in the file; each
model endpoint names an environment variable instead.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from esglens.errors import ConfigError
from esglens.gateway import ModelEndpointConfig
from esglens.retrieval import RetrievalConfig

__all__ = ["AppConfig", "load_config", "parse_config_text"]

_MODEL_FIELDS = ("base_url", "model_name", "api_key_env", "timeout", "max_retries")

KNOWN_KEYS = frozenset(
    [f"model.{kind}.{field}" for kind in ("chat", "embed", "rerank") for field in _MODEL_FIELDS]
    + [
        "retrieval.keyword_top_k",
        "retrieval.semantic_top_k",
        "retrieval.rerank_weight",
        "retrieval.final_top_n",
        "analysis.parallelism",
        "storage.root",
        "catalog.path",
    ]
)


@dataclass(frozen=True)
class AppConfig:
    chat: ModelEndpointConfig
    embed: ModelEndpointConfig
    rerank: ModelEndpointConfig
    retrieval: RetrievalConfig
    parallelism: int
    storage_root: str
    catalog_path: str


def _default_endpoint(kind: str) -> ModelEndpointConfig:
    return ModelEndpointConfig(
        kind=kind,
        base_url="http://localhost:8080/v1",
        model_name=f"default-{kind}",
        api_key_env="",
        timeout=30.0,
        max_retries=2,
    )


def default_config() -> AppConfig:
    return AppConfig(
        chat=_default_endpoint("chat"),
        embed=_default_endpoint("embed"),
        rerank=_default_endpoint("rerank"),
        retrieval=RetrievalConfig(),
        parallelism=4,
        storage_root="esglens-data",
        catalog_path="",
    )


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for line_no, raw_line in enumerate(text.split("\n"), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"config line {line_no} is not key=value: {line!r}")
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown config key {key!r} on line {line_no}")
        values[key] = value.strip()
    return values


def _parse_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"config key {key} needs an integer, got {value!r}")


def _parse_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"config key {key} needs a number, got {value!r}")


def _apply_endpoint(
    cfg: ModelEndpointConfig, kind: str, values: dict[str, str]
) -> ModelEndpointConfig:
    prefix = f"model.{kind}."
    updates: dict = {}
    for field in _MODEL_FIELDS:
        key = prefix + field
        if key not in values:
            continue
        raw = values[key]
        if field == "timeout":
            updates[field] = _parse_float(key, raw)
        elif field == "max_retries":
            updates[field] = _parse_int(key, raw)
        else:
            updates[field] = raw
    return replace(cfg, **updates) if updates else cfg


def load_config(path: str | None = None) -> AppConfig:
    """Defaults overlaid with the file's values, when a path is given."""
    cfg = default_config()
    if path is None:
        return cfg
    try:
        with open(path, encoding="utf-8") as fh:
            values = parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    retrieval_updates: dict = {}
    if "retrieval.keyword_top_k" in values:
        retrieval_updates["keyword_top_k"] = _parse_int(
            "retrieval.keyword_top_k", values["retrieval.keyword_top_k"]
        )
    if "retrieval.semantic_top_k" in values:
        retrieval_updates["semantic_top_k"] = _parse_int(
            "retrieval.semantic_top_k", values["retrieval.semantic_top_k"]
        )
    if "retrieval.rerank_weight" in values:
        retrieval_updates["rerank_weight"] = _parse_float(
            "retrieval.rerank_weight", values["retrieval.rerank_weight"]
        )
    if "retrieval.final_top_n" in values:
        retrieval_updates["final_top_n"] = _parse_int(
            "retrieval.final_top_n", values["retrieval.final_top_n"]
        )
    return AppConfig(
        chat=_apply_endpoint(cfg.chat, "chat", values),
        embed=_apply_endpoint(cfg.embed, "embed", values),
        rerank=_apply_endpoint(cfg.rerank, "rerank", values),
        retrieval=replace(cfg.retrieval, **retrieval_updates)
        if retrieval_updates
        else cfg.retrieval,
        parallelism=_parse_int("analysis.parallelism", values["analysis.parallelism"])
        if "analysis.parallelism" in values
        else cfg.parallelism,
        storage_root=values.get("storage.root", cfg.storage_root),
        catalog_path=values.get("catalog.path", cfg.catalog_path),
    )

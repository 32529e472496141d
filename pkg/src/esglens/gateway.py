"""Uniform model access: chat completion, embeddings, rerank.

The HTTP adapters speak the common chat-completions and embeddings wire
shapes plus a minimal rerank endpoint, with bounded retries and an
observable attempt counter. All golden tests run against the deterministic
mock backend in mock_gateway instead.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import httpx

from esglens.errors import ConfigError, GatewayError

__all__ = [
    "ChatExchange",
    "EmbeddingVector",
    "HttpModelGateway",
    "ModelEndpointConfig",
    "ModelGateway",
]

ENDPOINT_KINDS = ("chat", "embed", "rerank")
EMBED_BATCH_LIMIT = 64
MAX_RETRY_LIMIT = 5
RETRYABLE_STATUS = (429, 500, 502, 503, 504)


@dataclass(frozen=True)
class ModelEndpointConfig:
    kind: str
    base_url: str
    model_name: str
    api_key_env: str = ""
    timeout: float = 30.0
    max_retries: int = 2

    def __post_init__(self) -> None:
        if self.kind not in ENDPOINT_KINDS:
            raise ConfigError(f"unknown endpoint kind {self.kind!r}")
        if self.timeout <= 0:
            raise ConfigError("endpoint timeout must be positive")
        if not 0 <= self.max_retries <= MAX_RETRY_LIMIT:
            raise ConfigError(f"max_retries must be between 0 and {MAX_RETRY_LIMIT}")


@dataclass(frozen=True)
class EmbeddingVector:
    model_id: str
    dim: int
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) != self.dim:
            raise GatewayError(
                f"embedding claims dim {self.dim} but has {len(self.values)} values"
            )


@dataclass(frozen=True)
class ChatExchange:
    system: str
    user: str
    response_text: str
    prompt_tokens: int | None = None
    completion_tokens: int | None = None
    latency_ms: int = 0


@runtime_checkable
class ModelGateway(Protocol):
    """What the pipeline needs from any model backend."""

    @property
    def embed_model_id(self) -> str: ...

    def embed_texts(self, texts: list[str]) -> list[EmbeddingVector]: ...

    def rerank(self, query: str, documents: list[str]) -> list[float]: ...

    def complete_chat(self, system: str, user: str) -> ChatExchange: ...


@dataclass
class AttemptCounter:
    """HTTP attempts per endpoint kind, visible to retry tests."""

    counts: dict[str, int] = field(default_factory=lambda: dict.fromkeys(ENDPOINT_KINDS, 0))
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def bump(self, kind: str) -> None:
        with self._lock:
            self.counts[kind] += 1

    def get(self, kind: str) -> int:
        with self._lock:
            return self.counts[kind]


class HttpModelGateway:
    """Gateway over HTTP model services.

    Shareable across threads; an in-flight semaphore caps concurrent
    requests so parallel analysis cannot stampede a rate-limited service.
    """

    def __init__(
        self,
        chat: ModelEndpointConfig,
        embed: ModelEndpointConfig,
        rerank: ModelEndpointConfig,
        *,
        transport: httpx.BaseTransport | None = None,
        backoff_base: float = 0.5,
        max_in_flight: int = 8,
        sleeper=time.sleep,
    ) -> None:
        for cfg, expected in ((chat, "chat"), (embed, "embed"), (rerank, "rerank")):
            if cfg.kind != expected:
                raise ConfigError(
                    f"endpoint config of kind {cfg.kind!r} passed as {expected!r}"
                )
        self._configs = {"chat": chat, "embed": embed, "rerank": rerank}
        self._client = httpx.Client(transport=transport)
        self._backoff_base = backoff_base
        self._sleep = sleeper
        self._semaphore = threading.Semaphore(max_in_flight)
        self.attempts = AttemptCounter()

    @property
    def embed_model_id(self) -> str:
        return self._configs["embed"].model_name

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "HttpModelGateway":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def _headers(self, cfg: ModelEndpointConfig) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if cfg.api_key_env:
            key = os.environ.get(cfg.api_key_env)
            if not key:
                raise GatewayError(
                    f"environment variable {cfg.api_key_env} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, kind: str, path: str, payload: dict) -> dict:
        cfg = self._configs[kind]
        url = cfg.base_url.rstrip("/") + path
        headers = self._headers(cfg)
        last_error: Exception | None = None
        last_status: int | None = None
        for attempt in range(1 + cfg.max_retries):
            if attempt > 0:
                self._sleep(self._backoff_base * (2 ** (attempt - 1)))
            self.attempts.bump(kind)
            try:
                with self._semaphore:
                    response = self._client.post(
                        url, json=payload, headers=headers, timeout=cfg.timeout
                    )
            except httpx.HTTPError as exc:
                last_error, last_status = exc, None
                continue
            if response.status_code in RETRYABLE_STATUS:
                last_error, last_status = None, response.status_code
                continue
            if response.status_code >= 400:
                raise GatewayError(
                    f"{kind} endpoint returned HTTP {response.status_code}",
                    status_code=response.status_code,
                )
            try:
                return response.json()
            except ValueError as exc:
                raise GatewayError(f"{kind} endpoint returned invalid JSON: {exc}")
        if last_status is not None:
            raise GatewayError(
                f"{kind} endpoint failed after {1 + cfg.max_retries} attempts "
                f"with HTTP {last_status}",
                status_code=last_status,
            )
        raise GatewayError(
            f"{kind} endpoint failed after {1 + cfg.max_retries} attempts: {last_error}"
        )

    def embed_texts(self, texts: list[str]) -> list[EmbeddingVector]:
        if not texts:
            raise GatewayError("embed_texts requires at least one text")
        cfg = self._configs["embed"]
        vectors: list[EmbeddingVector] = []
        dim: int | None = None
        for start in range(0, len(texts), EMBED_BATCH_LIMIT):
            batch = texts[start : start + EMBED_BATCH_LIMIT]
            data = self._post(
                "embed", "/embeddings", {"model": cfg.model_name, "input": batch}
            )
            rows = data.get("data")
            if not isinstance(rows, list) or len(rows) != len(batch):
                raise GatewayError("embeddings response does not match batch size")
            by_index = sorted(rows, key=lambda row: row.get("index", 0))
            for row in by_index:
                values = tuple(float(x) for x in row["embedding"])
                if dim is None:
                    dim = len(values)
                elif len(values) != dim:
                    raise GatewayError(
                        f"embedding dim mismatch: expected {dim}, got {len(values)}"
                    )
                vectors.append(
                    EmbeddingVector(model_id=cfg.model_name, dim=len(values), values=values)
                )
        return vectors

    def rerank(self, query: str, documents: list[str]) -> list[float]:
        if not documents:
            raise GatewayError("rerank requires at least one document")
        data = self._post("rerank", "/rerank", {"query": query, "documents": documents})
        scores = data.get("scores")
        if not isinstance(scores, list) or len(scores) != len(documents):
            raise GatewayError("rerank response does not match document count")
        return [float(s) for s in scores]

    def complete_chat(self, system: str, user: str) -> ChatExchange:
        if not system or not user:
            raise GatewayError("complete_chat requires nonempty prompts")
        cfg = self._configs["chat"]
        started = time.monotonic()
        data = self._post(
            "chat",
            "/chat/completions",
            {
                "model": cfg.model_name,
                "messages": [
                    {"role": "system", "content": system},
                    {"role": "user", "content": user},
                ],
                "temperature": 0,
            },
        )
        latency_ms = int((time.monotonic() - started) * 1000)
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"chat response missing message content: {exc}")
        usage = data.get("usage") or {}
        return ChatExchange(
            system=system,
            user=user,
            response_text=text,
            prompt_tokens=usage.get("prompt_tokens"),
            completion_tokens=usage.get("completion_tokens"),
            latency_ms=latency_ms,
        )

"""HTTP client for the caption/QA generator endpoint, plus a scripted mock.

The endpoint speaks the OpenAI-compatible chat-completions protocol. Images
travel either as base64 data URIs (default, keeps the pipeline hermetic) or
as pass-through URLs. Transport failures and 5xx responses are retried with
exponential backoff; anything else surfaces immediately.
"""

from __future__ import annotations

import base64
import mimetypes
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import requests

from .errors import (
    HttpError,
    InvalidRange,
    MalformedResponse,
    ScriptExhausted,
    TransportError,
)

DEFAULT_BASE_URL = "http://localhost:8080"
DEFAULT_MODEL = "generator"
DEFAULT_TIMEOUT_S = 30.0
DEFAULT_MAX_TOKENS = 512
DEFAULT_MAX_IN_FLIGHT = 4
DEFAULT_TRANSPORT_ATTEMPTS = 3
DEFAULT_BACKOFF_BASE_S = 0.5

IMAGE_TRANSPORTS = ("base64", "url", "none")

ENV_URL = "GENERATOR_URL"
ENV_MODEL = "GENERATOR_MODEL"
ENV_TIMEOUT = "GENERATOR_TIMEOUT_S"


@dataclass(frozen=True)
class GeneratorRequest:
    prompt: str
    image_refs: tuple[str, ...] = ()
    model: str = DEFAULT_MODEL
    max_tokens: int = DEFAULT_MAX_TOKENS
    timeout_s: float = DEFAULT_TIMEOUT_S

    def __post_init__(self) -> None:
        if not self.prompt.strip():
            raise InvalidRange("prompt must be non-empty")
        if self.max_tokens < 1:
            raise InvalidRange(f"max_tokens must be >= 1, got {self.max_tokens}")
        if not self.timeout_s > 0:
            raise InvalidRange(f"timeout_s must be positive, got {self.timeout_s}")
        object.__setattr__(self, "image_refs", tuple(self.image_refs))


@dataclass(frozen=True)
class GeneratorResponse:
    text: str
    latency_s: float
    transport_retries: int


def _image_block(ref: str, transport: str) -> dict:
    if transport == "url":
        url = ref
    else:
        data = Path(ref).read_bytes()
        mime = mimetypes.guess_type(ref)[0] or "application/octet-stream"
        url = f"data:{mime};base64,{base64.b64encode(data).decode('ascii')}"
    return {"type": "image_url", "image_url": {"url": url}}


class HttpGeneratorClient:
    """Chat-completions client with bounded concurrency and retries.

    ``sleep`` is injectable so tests can assert the backoff schedule
    without waiting it out.
    """

    def __init__(
        self,
        base_url: str = DEFAULT_BASE_URL,
        model: str = DEFAULT_MODEL,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        max_tokens: int = DEFAULT_MAX_TOKENS,
        image_transport: str = "base64",
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        transport_attempts: int = DEFAULT_TRANSPORT_ATTEMPTS,
        backoff_base_s: float = DEFAULT_BACKOFF_BASE_S,
        sleep: Callable[[float], None] = time.sleep,
        session: requests.Session | None = None,
    ):
        if image_transport not in IMAGE_TRANSPORTS:
            raise InvalidRange(f"image_transport must be one of {IMAGE_TRANSPORTS}")
        if transport_attempts < 1:
            raise InvalidRange("transport_attempts must be >= 1")
        if max_in_flight < 1:
            raise InvalidRange("max_in_flight must be >= 1")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.timeout_s = timeout_s
        self.max_tokens = max_tokens
        self.image_transport = image_transport
        self.transport_attempts = transport_attempts
        self.backoff_base_s = backoff_base_s
        self._sleep = sleep
        self._session = session or requests.Session()
        self._gate = threading.BoundedSemaphore(max_in_flight)

    @property
    def endpoint(self) -> str:
        return f"{self.base_url}/v1/chat/completions"

    def _body(self, request: GeneratorRequest) -> dict:
        content: list[dict] = [{"type": "text", "text": request.prompt}]
        if self.image_transport != "none":
            content += [_image_block(r, self.image_transport) for r in request.image_refs]
        return {
            "model": request.model,
            "messages": [{"role": "user", "content": content}],
            "max_tokens": request.max_tokens,
        }

    def complete(self, request: GeneratorRequest) -> GeneratorResponse:
        body = self._body(request)
        start = time.monotonic()
        last_failure = "no attempts made"
        with self._gate:
            for attempt in range(self.transport_attempts):
                if attempt:
                    self._sleep(self.backoff_base_s * 2 ** (attempt - 1))
                try:
                    resp = self._session.post(
                        self.endpoint, json=body, timeout=request.timeout_s
                    )
                except (requests.ConnectionError, requests.Timeout) as exc:
                    last_failure = f"{type(exc).__name__}: {exc}"
                    continue
                if resp.status_code >= 500:
                    last_failure = f"HTTP {resp.status_code}"
                    continue
                if resp.status_code != 200:
                    raise HttpError(resp.status_code, resp.text[:200])
                return GeneratorResponse(
                    text=_extract_text(resp),
                    latency_s=time.monotonic() - start,
                    transport_retries=attempt,
                )
        raise TransportError(
            f"gave up after {self.transport_attempts} attempts ({last_failure})"
        )

    def generate(self, prompt: str, image_refs: Sequence[str] = ()) -> str:
        request = GeneratorRequest(
            prompt=prompt,
            image_refs=tuple(image_refs),
            model=self.model,
            max_tokens=self.max_tokens,
            timeout_s=self.timeout_s,
        )
        return self.complete(request).text


def _extract_text(resp: requests.Response) -> str:
    try:
        payload = resp.json()
    except ValueError as exc:
        raise MalformedResponse(f"response body is not JSON: {exc}") from exc
    try:
        choices = payload["choices"]
        text = choices[0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"missing choices/message/content: {exc!r}") from exc
    if not isinstance(text, str):
        raise MalformedResponse(f"content must be a string, got {type(text).__name__}")
    return text


@dataclass
class MockGeneratorClient:
    """Replays a fixed script of outputs (or exceptions to raise).

    Deterministic stand-in for the endpoint in tests and offline runs;
    counts calls and raises ScriptExhausted past the end of the script.
    """

    script: Sequence[str | Exception]
    calls: int = 0
    prompts: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.script:
            raise InvalidRange("mock script must be non-empty")

    def generate(self, prompt: str, image_refs: Sequence[str] = ()) -> str:
        if self.calls >= len(self.script):
            raise ScriptExhausted(f"script of {len(self.script)} outputs exhausted")
        item = self.script[self.calls]
        self.calls += 1
        self.prompts.append(prompt)
        if isinstance(item, Exception):
            raise item
        return item

    def complete(self, request: GeneratorRequest) -> GeneratorResponse:
        return GeneratorResponse(
            text=self.generate(request.prompt, request.image_refs),
            latency_s=0.0,
            transport_retries=0,
        )

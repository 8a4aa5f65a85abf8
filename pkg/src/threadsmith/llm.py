"""Backend-agnostic LLM access: prompt rendering, token budgets, retries.

Backends expose generate(request) -> str and may raise TransientBackendError
for conditions worth retrying. Everything else goes through complete(), which
wraps the raw text into an LLMResponse with whitespace-token usage counts.
"""
from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

logger = logging.getLogger(__name__)

Tokenizer = Callable[[str], list[str]]


def whitespace_tokenize(text: str) -> list[str]:
    return text.split()


def fingerprint(text: str) -> str:
    """Stable 16-hex-char id for a piece of text; shared with fixture files."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


class GatewayError(RuntimeError):
    """Base class for anything that goes wrong talking to a backend."""


class TransientBackendError(GatewayError):
    """Retryable: timeouts, connection resets, 5xx."""


class ExhaustedRetriesError(GatewayError):
    pass


class BackendProtocolError(GatewayError):
    """The backend answered with something that is not the agreed shape."""


class UnknownFingerprintError(GatewayError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    """The shared skeleton of every task prompt.

    Rendering order: intro, one block per example (prefix, input prefix,
    input, output prefix, output), then the task block (task prefix, input
    prefix, input, output prefix). Empty parts are omitted entirely.
    """

    intro: str = ""
    example_prefix: str = ""
    example_input_prefix: str = ""
    example_output_prefix: str = ""
    input_task_prefix: str = ""
    input_prefix: str = ""
    output_prefix: str = ""


def render_prompt(
    template: PromptTemplate,
    examples: Sequence[tuple[str, str]],
    task_input: str,
) -> str:
    """Assemble the final prompt string; blocks are separated by blank lines."""
    blocks: list[str] = []
    if template.intro:
        blocks.append(template.intro)
    for example_input, example_output in examples:
        lines: list[str] = []
        if template.example_prefix:
            lines.append(template.example_prefix)
        if template.example_input_prefix:
            lines.append(template.example_input_prefix)
        lines.append(example_input)
        if template.example_output_prefix:
            lines.append(template.example_output_prefix)
        lines.append(example_output)
        blocks.append("\n".join(lines))
    lines = []
    if template.input_task_prefix:
        lines.append(template.input_task_prefix)
    if template.input_prefix:
        lines.append(template.input_prefix)
    lines.append(task_input)
    if template.output_prefix:
        lines.append(template.output_prefix)
    blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def truncate_to_budget(
    units: Sequence[str],
    token_budget: int,
    tokenizer: Tokenizer = whitespace_tokenize,
) -> list[str]:
    """Longest prefix of units that fits the budget; never splits a unit."""
    kept: list[str] = []
    total = 0
    for unit in units:
        n = len(tokenizer(unit))
        if total + n > token_budget:
            break
        kept.append(unit)
        total += n
    if units and not kept:
        warnings.warn(
            f"first unit alone exceeds the token budget of {token_budget}",
            stacklevel=2,
        )
    return kept


@dataclass(frozen=True)
class LLMRequest:
    prompt: str
    temperature: float = 0.7
    max_output_tokens: int = 1024
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("empty prompt")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class LLMResponse:
    text: str
    backend_id: str
    usage: Mapping[str, int] = field(default_factory=dict)


class MockBackend:
    """Maps prompt fingerprints to canned responses; unknown prompts fail."""

    backend_id = "mock"

    def __init__(self, responses: Mapping[str, str] | None = None):
        self._responses: dict[str, str] = dict(responses or {})
        self._lock = threading.Lock()

    def register(self, prompt_fingerprint: str, text: str) -> None:
        with self._lock:
            self._responses[prompt_fingerprint] = text

    def register_prompt(self, prompt: str, text: str) -> str:
        fp = fingerprint(prompt)
        self.register(fp, text)
        return fp

    @classmethod
    def from_fixture_file(cls, path) -> "MockBackend":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def save_fixture_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self._responses, fh, indent=2, sort_keys=True)

    def generate(self, request: LLMRequest) -> str:
        fp = fingerprint(request.prompt)
        with self._lock:
            if fp not in self._responses:
                raise UnknownFingerprintError(
                    f"no canned response for fingerprint {fp}"
                )
            return self._responses[fp]


class ScriptedBackend:
    """Computes responses with a caller-supplied function of the request."""

    def __init__(self, responder: Callable[[LLMRequest], str], backend_id: str = "scripted"):
        self._responder = responder
        self.backend_id = backend_id

    def generate(self, request: LLMRequest) -> str:
        return self._responder(request)


class HTTPBackend:
    """POSTs {prompt, temperature, max_output_tokens, stop_sequences} as JSON
    and expects {"text": ...} back."""

    backend_id = "http"

    def __init__(
        self,
        url: str,
        auth_token: str | None = None,
        timeout: float = 60.0,
        poster: Callable[[str, dict, dict], tuple[int, str]] | None = None,
    ):
        if not url:
            raise ValueError("backend url required")
        self.url = url
        self._headers = {"Content-Type": "application/json"}
        if auth_token:
            self._headers["Authorization"] = f"Bearer {auth_token}"
        self._timeout = timeout
        self._poster = poster or self._default_poster

    def _default_poster(self, url: str, payload: dict, headers: dict) -> tuple[int, str]:
        import requests

        try:
            resp = requests.post(url, json=payload, headers=headers, timeout=self._timeout)
        except requests.RequestException as err:
            raise TransientBackendError(str(err)) from err
        return resp.status_code, resp.text

    def generate(self, request: LLMRequest) -> str:
        payload = {
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_output_tokens": request.max_output_tokens,
            "stop_sequences": list(request.stop_sequences),
        }
        status, body = self._poster(self.url, payload, self._headers)
        if status >= 500:
            raise TransientBackendError(f"backend returned {status}")
        if status != 200:
            raise GatewayError(f"backend returned {status}: {body[:200]}")
        try:
            parsed = json.loads(body)
        except json.JSONDecodeError as err:
            raise BackendProtocolError(f"non-JSON reply: {body[:200]}") from err
        if not isinstance(parsed, dict) or not isinstance(parsed.get("text"), str):
            raise BackendProtocolError("reply lacks a text field")
        return parsed["text"]


def complete(
    backend,
    request: LLMRequest,
    max_attempts: int = 3,
    backoff_seconds: float = 0.5,
    sleeper: Callable[[float], None] = time.sleep,
    tokenizer: Tokenizer = whitespace_tokenize,
) -> LLMResponse:
    """Call a backend, retrying transient failures with exponential backoff."""
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    delay = backoff_seconds
    last: TransientBackendError | None = None
    for attempt in range(max_attempts):
        try:
            text = backend.generate(request)
        except TransientBackendError as err:
            last = err
            if attempt + 1 < max_attempts:
                sleeper(delay)
                delay *= 2
            continue
        usage = {
            "prompt_tokens": len(tokenizer(request.prompt)),
            "completion_tokens": len(tokenizer(text)),
        }
        return LLMResponse(text=text, backend_id=backend.backend_id, usage=usage)
    raise ExhaustedRetriesError(
        f"gave up after {max_attempts} attempts: {last}"
    ) from last


class Gateway:
    """A backend plus decoding defaults, a token budget and a concurrency cap."""

    def __init__(
        self,
        backend,
        tokenizer: Tokenizer = whitespace_tokenize,
        context_budget: int = 4096,
        temperature: float = 0.7,
        max_output_tokens: int = 1024,
        max_attempts: int = 3,
        backoff_seconds: float = 0.5,
        concurrency: int = 8,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        if concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        self.backend = backend
        self.tokenizer = tokenizer
        self.context_budget = context_budget
        self.temperature = temperature
        self.max_output_tokens = max_output_tokens
        self.max_attempts = max_attempts
        self.backoff_seconds = backoff_seconds
        self._semaphore = threading.BoundedSemaphore(concurrency)
        self._sleeper = sleeper
        self._usage_lock = threading.Lock()
        self._usage = {"requests": 0, "prompt_tokens": 0, "completion_tokens": 0}

    def complete_text(
        self,
        prompt: str,
        max_output_tokens: int | None = None,
        temperature: float | None = None,
        stop_sequences: Sequence[str] = (),
    ) -> str:
        request = LLMRequest(
            prompt=prompt,
            temperature=self.temperature if temperature is None else temperature,
            max_output_tokens=max_output_tokens or self.max_output_tokens,
            stop_sequences=tuple(stop_sequences),
        )
        with self._semaphore:
            response = complete(
                self.backend,
                request,
                max_attempts=self.max_attempts,
                backoff_seconds=self.backoff_seconds,
                sleeper=self._sleeper,
                tokenizer=self.tokenizer,
            )
        with self._usage_lock:
            self._usage["requests"] += 1
            self._usage["prompt_tokens"] += response.usage.get("prompt_tokens", 0)
            self._usage["completion_tokens"] += response.usage.get("completion_tokens", 0)
        return response.text

    def usage_summary(self) -> dict[str, int]:
        with self._usage_lock:
            return dict(self._usage)

"""Uniform text-generation interface over interchangeable backends.

Two backends ship with the package: a chat-completion wire-protocol
client for real servers and a deterministic mock for offline runs and
tests.  The gateway layered on top handles retries with exponential
backoff, bounded-concurrency batching, and token-bucket rate limiting.
This is the only concurrent subsystem in the pipeline; results always
come back in input order so everything downstream stays deterministic.
"""

from __future__ import annotations

import hashlib
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import httpx

logger = logging.getLogger(__name__)

DEFAULT_AUTH_ENV_VAR = "LLM_API_TOKEN"


@dataclass(frozen=True)
class GenParams:
    """Decoding configuration for one generation request."""

    temperature: float = 1.0
    max_new_tokens: int = 200
    top_k: int | None = None
    num_samples: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.max_new_tokens <= 0:
            raise ValueError("max_new_tokens must be positive")
        if self.top_k is not None and self.top_k <= 0:
            raise ValueError("top_k must be positive when set")
        if self.num_samples <= 0:
            raise ValueError("num_samples must be positive")

    @classmethod
    def conceptualization_profile(cls, seed: int = 0) -> "GenParams":
        return cls(temperature=1.0, max_new_tokens=200, top_k=None, num_samples=20, seed=seed)

    @classmethod
    def instantiation_profile(cls, seed: int = 0) -> "GenParams":
        return cls(temperature=1.0, max_new_tokens=200, top_k=10, num_samples=1, seed=seed)


@dataclass(frozen=True)
class GenerationResult:
    prompt_id: str
    completions: tuple[str, ...]
    backend_id: str
    latency: float
    attempt_count: int


class GatewayError(Exception):
    """Base class for generation failures."""

    def __init__(self, message: str, status: int | None = None, attempts: int = 1):
        super().__init__(message)
        self.status = status
        self.attempts = attempts


class TransientBackendError(GatewayError):
    """Retryable condition: rate limit, 5xx, timeout, connection loss."""


class PermanentBackendError(GatewayError):
    """Non-retryable condition: 4xx-class rejection or protocol violation."""


class RetriesExhaustedError(GatewayError):
    """Raised after the retry cap, carrying the last observed status."""


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff: delay(i) = base * multiplier**i, capped."""

    max_attempts: int = 4
    base_delay: float = 0.5
    multiplier: float = 2.0
    max_delay: float = 30.0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.base_delay < 0 or self.max_delay < 0:
            raise ValueError("delays must be non-negative")
        if self.multiplier < 1.0:
            raise ValueError("multiplier must be >= 1 so delays never shrink")

    def delay(self, attempt_index: int) -> float:
        return min(self.base_delay * self.multiplier**attempt_index, self.max_delay)


class Backend:
    """A thing that turns one prompt into ``num_samples`` completions."""

    backend_id: str = "backend"

    def complete(self, prompt: str, params: GenParams) -> list[str]:
        raise NotImplementedError


# Generic phrases the mock backend draws from, mixing concept-flavored
# and instance-flavored wording so both pipeline stages get plausible
# shapes out of it.
DEFAULT_MOCK_VOCABULARY: tuple[str, ...] = (
    "social gathering place",
    "healthy lifestyle",
    "outdoor activity",
    "recreational event",
    "household chore",
    "personal achievement",
    "stressful situation",
    "daily routine",
    "leisure pursuit",
    "physical exercise",
    "communication device",
    "public venue",
    "domestic animal",
    "musical performance",
    "learning experience",
    "financial decision",
    "mode of transport",
    "social obligation",
    "creative hobby",
    "community event",
    "a neighborhood picnic",
    "an evening jog",
    "a borrowed novel",
    "a pottery class",
    "a farmers market",
    "a road trip",
    "a karaoke night",
    "a chess tournament",
    "a garage sale",
    "a cooking contest",
    "a morning swim",
    "a volunteer shift",
    "a birthday parade",
    "a camping weekend",
    "a painting workshop",
    "a secondhand guitar",
    "a rooftop garden",
    "a library visit",
    "a street festival",
    "a science fair",
)


def _stable_unit(*parts: object) -> float:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / float(1 << 64)


class MockBackend(Backend):
    """Deterministic offline backend.

    Completions are a pure function of (backend seed, params seed, prompt,
    sample index) hashed into the vocabulary.  Instrumented with in-flight
    tracking so concurrency contracts are observable in tests.
    """

    def __init__(
        self,
        seed: int = 0,
        vocabulary: Sequence[str] | None = None,
        latency: float = 0.0,
    ):
        vocab = tuple(vocabulary) if vocabulary is not None else DEFAULT_MOCK_VOCABULARY
        if not vocab:
            raise ValueError("mock vocabulary must be non-empty")
        self.seed = seed
        self.vocabulary = vocab
        self.latency = latency
        self.backend_id = f"mock-{seed}"
        self._lock = threading.Lock()
        self._in_flight = 0
        self.peak_in_flight = 0
        self.call_count = 0
        self.request_log: list[float] = []

    def _pick(self, prompt: str, params: GenParams, index: int) -> str:
        u = _stable_unit(self.seed, params.seed, prompt, index)
        return self.vocabulary[int(u * len(self.vocabulary)) % len(self.vocabulary)]

    def complete(self, prompt: str, params: GenParams) -> list[str]:
        with self._lock:
            self._in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self._in_flight)
            self.call_count += 1
            self.request_log.append(time.monotonic())
        try:
            if self.latency:
                time.sleep(self.latency)
            return [self._pick(prompt, params, i) for i in range(params.num_samples)]
        finally:
            with self._lock:
                self._in_flight -= 1


class RemoteBackend(Backend):
    """Chat-completion wire-protocol client.

    POSTs ``{"model", "messages", "temperature", "max_tokens", "n"}`` and
    reads ``{"choices": [{"message": {"content"}}, ...]}``.  ``top_k``
    travels as an extension field that plain servers ignore.  If a server
    returns fewer choices than requested, the shortfall is fetched with
    single-sample follow-up calls.
    """

    RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})

    def __init__(
        self,
        endpoint: str,
        model_name: str = "default",
        auth_env_var: str = DEFAULT_AUTH_ENV_VAR,
        timeout: float = 60.0,
        client: httpx.Client | None = None,
    ):
        if not endpoint.startswith(("http://", "https://")):
            raise ValueError(f"malformed endpoint: {endpoint!r}")
        self.endpoint = endpoint
        self.model_name = model_name
        self.auth_env_var = auth_env_var
        self.backend_id = f"remote-{model_name}"
        self._client = client or httpx.Client(timeout=timeout)
        self._warned_top_k = False

    def _headers(self) -> dict[str, str]:
        token = os.environ.get(self.auth_env_var, "")
        return {"Authorization": f"Bearer {token}"} if token else {}

    def _post(self, prompt: str, params: GenParams, n: int) -> list[str]:
        payload: dict = {
            "model": self.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_new_tokens,
            "n": n,
        }
        if params.top_k is not None:
            payload["top_k"] = params.top_k
        try:
            response = self._client.post(self.endpoint, json=payload, headers=self._headers())
        except (httpx.TimeoutException, httpx.TransportError) as exc:
            raise TransientBackendError(f"transport failure: {exc}") from exc
        if response.status_code in self.RETRYABLE_STATUSES:
            raise TransientBackendError(f"retryable status {response.status_code}", status=response.status_code)
        if response.status_code >= 400:
            raise PermanentBackendError(f"rejected with status {response.status_code}", status=response.status_code)
        try:
            body = response.json()
            if params.top_k is not None and not body.get("capabilities", {}).get("top_k", True):
                if not self._warned_top_k:
                    logger.info("backend %s lacks top-k sampling; server fell back to its default", self.backend_id)
                    self._warned_top_k = True
            return [choice["message"]["content"] for choice in body["choices"]]
        except (ValueError, KeyError, TypeError) as exc:
            raise PermanentBackendError(f"malformed response body: {exc}", status=response.status_code) from exc

    def complete(self, prompt: str, params: GenParams) -> list[str]:
        completions = self._post(prompt, params, params.num_samples)
        while len(completions) < params.num_samples:
            extra = self._post(prompt, params, 1)
            if not extra:
                raise PermanentBackendError("backend returned no choices")
            completions.append(extra[0])
        return completions[: params.num_samples]


class TokenBucket:
    """Thread-safe token bucket; acquire() blocks until a token is free.

    The default capacity of one token enforces the sustained rate with no
    burst allowance; pass a larger capacity to permit bursts.
    """

    def __init__(
        self,
        rate: float,
        capacity: float = 1.0,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.capacity = capacity
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self, tokens: float = 1.0) -> None:
        # The small epsilon absorbs float residue from repeated refills,
        # which would otherwise spin on infinitesimal waits.
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens + 1e-9 >= tokens:
                    self._tokens = max(0.0, self._tokens - tokens)
                    return
                wait = (tokens - self._tokens) / self.rate
            self._sleep(wait)


@dataclass(frozen=True)
class BatchOutcome:
    """Per-request slot in a batch: either a result or a recorded failure."""

    prompt_id: str
    result: GenerationResult | None = None
    error: str | None = None
    status: int | None = None

    @property
    def ok(self) -> bool:
        return self.result is not None


class Gateway:
    """Retry, rate-limit, and batch orchestration around one backend."""

    def __init__(
        self,
        backend: Backend,
        retry: RetryPolicy = RetryPolicy(),
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.retry = retry
        self._sleep = sleep

    def generate(self, prompt: str, params: GenParams, prompt_id: str = "") -> GenerationResult:
        """Run one prompt, retrying transient failures with backoff."""
        started = time.monotonic()
        last_error: GatewayError | None = None
        for attempt in range(1, self.retry.max_attempts + 1):
            try:
                completions = self.backend.complete(prompt, params)
            except TransientBackendError as exc:
                last_error = exc
                if attempt < self.retry.max_attempts:
                    self._sleep(self.retry.delay(attempt - 1))
                continue
            except PermanentBackendError as exc:
                exc.attempts = attempt
                raise
            if len(completions) != params.num_samples:
                raise PermanentBackendError(
                    f"backend returned {len(completions)} completions, expected {params.num_samples}",
                    attempts=attempt,
                )
            return GenerationResult(
                prompt_id=prompt_id,
                completions=tuple(completions),
                backend_id=self.backend.backend_id,
                latency=time.monotonic() - started,
                attempt_count=attempt,
            )
        raise RetriesExhaustedError(
            f"gave up after {self.retry.max_attempts} attempts: {last_error}",
            status=last_error.status if last_error else None,
            attempts=self.retry.max_attempts,
        )

    def generate_batch(
        self,
        requests: Sequence[tuple[str, str, GenParams]],
        max_in_flight: int = 8,
        rate: float | None = None,
    ) -> list[BatchOutcome]:
        """Run many prompts with bounded concurrency, results in input order.

        At most ``max_in_flight`` requests are outstanding at any instant
        and the sustained issue rate stays at or below ``rate`` requests
        per second.  Failures are per-slot values; the batch never aborts.
        """
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        bucket = TokenBucket(rate) if rate else None

        def job(request: tuple[str, str, GenParams]) -> BatchOutcome:
            prompt_id, prompt, params = request
            if bucket is not None:
                bucket.acquire()
            try:
                return BatchOutcome(prompt_id=prompt_id, result=self.generate(prompt, params, prompt_id))
            except GatewayError as exc:
                return BatchOutcome(prompt_id=prompt_id, error=str(exc), status=exc.status)

        if not requests:
            return []
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            return list(pool.map(job, requests))


# --- backend configuration ---


@dataclass(frozen=True)
class MockSpec:
    seed: int = 0
    vocabulary: tuple[str, ...] | None = None


@dataclass(frozen=True)
class RemoteSpec:
    endpoint: str
    model_name: str = "default"
    auth_env_var: str = DEFAULT_AUTH_ENV_VAR
    timeout: float = 60.0


def configure_backend(spec: MockSpec | RemoteSpec) -> Backend:
    """Build a backend from its spec; reachability is checked lazily."""
    if isinstance(spec, MockSpec):
        return MockBackend(seed=spec.seed, vocabulary=spec.vocabulary)
    if isinstance(spec, RemoteSpec):
        return RemoteBackend(
            endpoint=spec.endpoint,
            model_name=spec.model_name,
            auth_env_var=spec.auth_env_var,
            timeout=spec.timeout,
        )
    raise TypeError(f"unknown backend spec: {spec!r}")

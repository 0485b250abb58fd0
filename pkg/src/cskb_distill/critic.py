"""Plausibility scoring and threshold filtering.

Two interchangeable critics score text in [0, 1]: a remote scorer that
POSTs statements to a scoring endpoint, and an offline heuristic that
blends lexical signals deterministically.  The heuristic exists so the
whole pipeline runs and tests without any model behind it; it makes no
claim of agreeing with a trained discriminator.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

import httpx

from .gateway import (
    PermanentBackendError,
    RetriesExhaustedError,
    RetryPolicy,
    TransientBackendError,
)

# The threshold grid used for acceptance-rate reporting.
TAU_GRID: tuple[float, ...] = (0.0, 0.5, 0.7, 0.9)

_ARTICLES = ("a ", "an ", "the ")


def concept_assertion(instance: str, concept: str) -> str:
    """Render ``<Instance> is a <concept>.`` for critic and training data.

    The instance is capitalized, the concept lowercased with any leading
    article dropped.
    """
    instance = instance.strip()
    concept = concept.strip().lower()
    for article in _ARTICLES:
        if concept.startswith(article):
            concept = concept[len(article) :]
            break
    if not instance or not concept:
        raise ValueError("instance and concept must be non-empty")
    return f"{instance[0].upper()}{instance[1:]} is a {concept}."


def conceptualization_statement(head: str, instance: str, concept: str) -> str:
    """Full statement scored for a conceptualization: event plus assertion."""
    head = head.strip().rstrip(".").rstrip()
    if not head:
        raise ValueError("head must be non-empty")
    return f"{head}. {concept_assertion(instance, concept)}"


class ScoreProtocolError(Exception):
    """A scoring server answered outside the contract (e.g. score not in [0, 1])."""


class Critic:
    """Scores statements in [0, 1]; shareable and reentrant."""

    def score_statement(self, statement: str) -> float:
        raise NotImplementedError

    def score_conceptualization(self, head: str, instance: str, concept: str) -> float:
        return self.score_statement(conceptualization_statement(head, instance, concept))

    def score_statements(self, statements: Sequence[str]) -> list[float]:
        return [self.score_statement(s) for s in statements]


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def _char_trigrams(text: str) -> set[str]:
    text = text.casefold()
    if len(text) < 3:
        return {text} if text else set()
    return {text[i : i + 3] for i in range(len(text) - 2)}


def _trigram_jaccard(a: str, b: str) -> float:
    ta, tb = _char_trigrams(a), _char_trigrams(b)
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / len(ta | tb)


class HeuristicCritic(Critic):
    """Deterministic offline critic: a pure function of (seed, inputs).

    Blends a length penalty, a trigram-overlap penalty that discourages
    concepts copying their instance, and hash noise for spread, clamped
    into [0, 1].
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    def _unit(self, *parts: str) -> float:
        payload = "|".join((str(self.seed), *parts)).encode("utf-8")
        digest = hashlib.sha256(payload).digest()
        return int.from_bytes(digest[:8], "big") / float(1 << 64)

    def score_conceptualization(self, head: str, instance: str, concept: str) -> float:
        if not head.strip() or not instance.strip() or not concept.strip():
            raise ValueError("head, instance, and concept must be non-empty")
        noise = self._unit("concept", head, instance, concept)
        length_penalty = 0.05 * max(0, len(concept.split()) - 4)
        overlap = _trigram_jaccard(instance, concept)
        copy_penalty = 0.5 * overlap * overlap
        return _clamp01(0.70 + 0.30 * noise - length_penalty - copy_penalty)

    def score_statement(self, statement: str) -> float:
        if not statement.strip():
            raise ValueError("statement must be non-empty")
        noise = self._unit("statement", statement)
        length_penalty = 0.03 * max(0, len(statement.split()) - 20)
        return _clamp01(0.70 + 0.30 * noise - length_penalty)


class RemoteCritic(Critic):
    """Client for the scoring wire contract.

    ``POST <base>/score {"statement": ...} -> {"score": ...}`` and
    ``POST <base>/score_batch {"statements": [...]} -> {"scores": [...]}``.
    Out-of-range scores are protocol errors, never silently clamped, so a
    misconfigured server surfaces immediately.
    """

    def __init__(
        self,
        base_url: str,
        retry: RetryPolicy = RetryPolicy(),
        timeout: float = 30.0,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not base_url.startswith(("http://", "https://")):
            raise ValueError(f"malformed scoring endpoint: {base_url!r}")
        self.base_url = base_url.rstrip("/")
        self.retry = retry
        self._client = client or httpx.Client(timeout=timeout)
        self._sleep = sleep

    def _post(self, path: str, payload: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(1, self.retry.max_attempts + 1):
            try:
                response = self._client.post(f"{self.base_url}{path}", json=payload)
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                last_error = exc
                if attempt < self.retry.max_attempts:
                    self._sleep(self.retry.delay(attempt - 1))
                continue
            if response.status_code in (429, 500, 502, 503, 504):
                last_error = TransientBackendError(f"retryable status {response.status_code}")
                if attempt < self.retry.max_attempts:
                    self._sleep(self.retry.delay(attempt - 1))
                continue
            if response.status_code >= 400:
                raise PermanentBackendError(
                    f"scoring rejected with status {response.status_code}", status=response.status_code
                )
            return response.json()
        raise RetriesExhaustedError(
            f"scoring endpoint unreachable after {self.retry.max_attempts} attempts: {last_error}",
            attempts=self.retry.max_attempts,
        )

    @staticmethod
    def _check_score(value: object) -> float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ScoreProtocolError(f"score is not a number: {value!r}")
        score = float(value)
        if not (0.0 <= score <= 1.0):
            raise ScoreProtocolError(f"score {score} outside [0, 1]")
        return score

    def score_statement(self, statement: str) -> float:
        if not statement.strip():
            raise ValueError("statement must be non-empty")
        body = self._post("/score", {"statement": statement})
        return self._check_score(body.get("score"))

    def score_statements(self, statements: Sequence[str]) -> list[float]:
        if not statements:
            return []
        for statement in statements:
            if not statement.strip():
                raise ValueError("statement must be non-empty")
        body = self._post("/score_batch", {"statements": list(statements)})
        scores = body.get("scores")
        if not isinstance(scores, list) or len(scores) != len(statements):
            raise ScoreProtocolError("scores array missing or of wrong length")
        return [self._check_score(s) for s in scores]


# --- configuration and filtering ---


@dataclass(frozen=True)
class HeuristicSpec:
    seed: int = 0


@dataclass(frozen=True)
class RemoteScorerSpec:
    endpoint: str


@dataclass(frozen=True)
class FilterConfig:
    tau: float = 0.9
    critic: HeuristicSpec | RemoteScorerSpec = HeuristicSpec()

    def __post_init__(self) -> None:
        if not (0.0 <= self.tau <= 1.0):
            raise ValueError(f"tau {self.tau} outside [0, 1]")


def make_critic(spec: HeuristicSpec | RemoteScorerSpec) -> Critic:
    if isinstance(spec, HeuristicSpec):
        return HeuristicCritic(seed=spec.seed)
    if isinstance(spec, RemoteScorerSpec):
        return RemoteCritic(base_url=spec.endpoint)
    raise TypeError(f"unknown critic spec: {spec!r}")


R = TypeVar("R")


def filter_records(records: Sequence[R], tau: float) -> tuple[list[R], list[R]]:
    """Partition scored records into (kept, dropped) at threshold tau.

    Keeps ``score >= tau``; order is preserved within each list and the
    two lists always partition the input.  An unscored record is an error.
    """
    if not (0.0 <= tau <= 1.0):
        raise ValueError(f"tau {tau} outside [0, 1]")
    kept: list[R] = []
    dropped: list[R] = []
    for record in records:
        score = getattr(record, "score", None)
        if score is None:
            raise ValueError(f"record {getattr(record, 'id', record)!r} is unscored")
        (kept if score >= tau else dropped).append(record)
    return kept, dropped

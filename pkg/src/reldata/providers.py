"""Pluggable model providers: translator, embedder, relevance scorer.

Each capability has a bit-exact deterministic mock (pure functions, no
network, no ambient state) and an HTTP JSON client.  Mocks exist so every
pipeline stage can be exercised and reproduced offline; the HTTP clients
talk to whatever real models back the three endpoints.
"""

from __future__ import annotations

import math
import os
import time
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Protocol, Sequence, TypeVar

import numpy as np

from .corpus import Task
from .errors import ConfigError, ProviderError
from .hashing import fnv1a64

MOCK_EMBED_DIM = 64

ENV_TRANSLATE_URL = "PROVIDER_TRANSLATE_URL"
ENV_EMBED_URL = "PROVIDER_EMBED_URL"
ENV_SCORE_URL = "PROVIDER_SCORE_URL"
ENV_TOKEN = "PROVIDER_TOKEN"


@dataclass(frozen=True)
class TranslationRequest:
    text: str
    source_language: str
    target_language: str

    def validate(self) -> None:
        if not self.text.strip():
            raise ProviderError("translation request has empty text")
        if self.source_language == self.target_language:
            raise ProviderError(
                f"source and target language are both {self.source_language!r}"
            )


@dataclass(frozen=True)
class ScorePair:
    """Raw log-scores for the two output tokens, before normalization."""

    logp_yes: float
    logp_no: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.logp_yes) and math.isfinite(self.logp_no)):
            raise ProviderError(
                f"non-finite log-scores: yes={self.logp_yes!r} no={self.logp_no!r}"
            )


class Translator(Protocol):
    def translate(self, request: TranslationRequest) -> str: ...


class Embedder(Protocol):
    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class Scorer(Protocol):
    def score(self, task: Task, query: str, candidate: str, language: str) -> ScorePair: ...


class MockTranslator:
    """Prefixes the target language in visible brackets, keeping provenance obvious."""

    def translate(self, request: TranslationRequest) -> str:
        request.validate()
        return f"⟦{request.target_language}⟧ {request.text}"


@lru_cache(maxsize=1 << 16)
def _trigram_bucket(trigram: str) -> int:
    return fnv1a64(trigram.encode("utf-8")) % MOCK_EMBED_DIM


class MockEmbedder:
    """Character-trigram hash embedder, bit-exact across runs and platforms.

    NFC-normalize and lowercase the text, pad with start/end markers, hash
    every trigram with 64-bit FNV-1a into one of 64 buckets, L2-normalize.
    """

    dimension = MOCK_EMBED_DIM

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        vectors = np.zeros((len(texts), MOCK_EMBED_DIM), dtype=np.float64)
        for row, text in enumerate(texts):
            if not text:
                raise ProviderError("cannot embed an empty text")
            padded = "␂" + unicodedata.normalize("NFC", text).lower() + "␃"
            for i in range(len(padded) - 2):
                vectors[row, _trigram_bucket(padded[i : i + 3])] += 1.0
            norm = math.sqrt(float(np.dot(vectors[row], vectors[row])))
            vectors[row] /= norm
        return vectors


JACCARD_FLOOR = 1e-6


def token_jaccard(a: str, b: str) -> float:
    """Jaccard overlap of lowercased whitespace tokens."""
    ta, tb = set(a.lower().split()), set(b.lower().split())
    union = ta | tb
    if not union:
        return 0.0
    return len(ta & tb) / len(union)


class MockScorer:
    """Token-Jaccard scorer; the epsilon floor keeps both log-scores finite."""

    def score(self, task: Task, query: str, candidate: str, language: str) -> ScorePair:
        if not query or not candidate:
            raise ProviderError("score needs a non-empty query and candidate")
        s = token_jaccard(query, candidate)
        return ScorePair(
            logp_yes=math.log(s + JACCARD_FLOOR),
            logp_no=math.log(1.0 - s + JACCARD_FLOOR),
        )


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    base_delay: float = 0.2
    timeout: float = 30.0


class _HttpClient:
    def __init__(self, url: str, token: str | None, retry: RetryPolicy) -> None:
        if not url:
            raise ConfigError("provider URL is empty")
        self.url = url
        self.token = token
        self.retry = retry
        # import here so mock-only runs never pull in network machinery
        import requests

        self._session = requests.Session()
        self._exceptions = requests.RequestException

    def post(self, payload: dict) -> dict:
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        last_error: Exception | None = None
        for attempt in range(self.retry.attempts):
            if attempt:
                time.sleep(self.retry.base_delay * (2 ** (attempt - 1)))
            try:
                response = self._session.post(
                    self.url, json=payload, headers=headers, timeout=self.retry.timeout
                )
                response.raise_for_status()
                body = response.json()
                if not isinstance(body, dict):
                    raise ProviderError(f"provider returned non-object JSON: {body!r}")
                return body
            except ProviderError:
                raise
            except self._exceptions as exc:
                last_error = exc
        raise ProviderError(
            f"provider at {self.url} failed after {self.retry.attempts} attempts: {last_error}"
        )


class HttpTranslator:
    def __init__(self, url: str, token: str | None = None, retry: RetryPolicy = RetryPolicy()) -> None:
        self._client = _HttpClient(url, token, retry)

    def translate(self, request: TranslationRequest) -> str:
        request.validate()
        body = self._client.post(
            {
                "text": request.text,
                "source_lang": request.source_language,
                "target_lang": request.target_language,
            }
        )
        text = body.get("text")
        if not isinstance(text, str) or not text:
            raise ProviderError(f"translator returned an empty response: {body!r}")
        return text


class HttpEmbedder:
    def __init__(self, url: str, token: str | None = None, retry: RetryPolicy = RetryPolicy()) -> None:
        self._client = _HttpClient(url, token, retry)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if any(not t for t in texts):
            raise ProviderError("cannot embed an empty text")
        body = self._client.post({"texts": list(texts)})
        vectors = body.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProviderError(
                f"embedder returned {0 if not isinstance(vectors, list) else len(vectors)}"
                f" vectors for {len(texts)} texts"
            )
        matrix = np.asarray(vectors, dtype=np.float64)
        if matrix.ndim != 2:
            raise ProviderError("embedder vectors have inconsistent dimensions")
        if not np.all(np.isfinite(matrix)):
            raise ProviderError("embedder returned non-finite values")
        return matrix


class HttpScorer:
    def __init__(self, url: str, token: str | None = None, retry: RetryPolicy = RetryPolicy()) -> None:
        self._client = _HttpClient(url, token, retry)

    def score(self, task: Task, query: str, candidate: str, language: str) -> ScorePair:
        body = self._client.post(
            {
                "task": task.value,
                "query": query,
                "candidate": candidate,
                "language": language,
            }
        )
        try:
            logp_yes = float(body["logp_yes"])
            logp_no = float(body["logp_no"])
        except (KeyError, TypeError, ValueError):
            raise ProviderError(f"scorer response missing log-scores: {body!r}")
        return ScorePair(logp_yes=logp_yes, logp_no=logp_no)


@dataclass(frozen=True)
class ProviderSettings:
    """Where the three capabilities come from: deterministic mocks or HTTP services."""

    mode: str = "mock"  # "mock" | "http"
    translate_url: str | None = None
    embed_url: str | None = None
    score_url: str | None = None
    token: str | None = None
    retry: RetryPolicy = RetryPolicy()

    @classmethod
    def from_env(cls, mode: str = "http") -> "ProviderSettings":
        return cls(
            mode=mode,
            translate_url=os.environ.get(ENV_TRANSLATE_URL),
            embed_url=os.environ.get(ENV_EMBED_URL),
            score_url=os.environ.get(ENV_SCORE_URL),
            token=os.environ.get(ENV_TOKEN),
        )

    def translator(self) -> Translator:
        if self.mode == "mock":
            return MockTranslator()
        if not self.translate_url:
            raise ConfigError(f"http provider mode needs {ENV_TRANSLATE_URL} or a configured URL")
        return HttpTranslator(self.translate_url, self.token, self.retry)

    def embedder(self) -> Embedder:
        if self.mode == "mock":
            return MockEmbedder()
        if not self.embed_url:
            raise ConfigError(f"http provider mode needs {ENV_EMBED_URL} or a configured URL")
        return HttpEmbedder(self.embed_url, self.token, self.retry)

    def scorer(self) -> Scorer:
        if self.mode == "mock":
            return MockScorer()
        if not self.score_url:
            raise ConfigError(f"http provider mode needs {ENV_SCORE_URL} or a configured URL")
        return HttpScorer(self.score_url, self.token, self.retry)


T = TypeVar("T")
R = TypeVar("R")


def map_bounded(fn: Callable[[T], R], items: Iterable[T], max_in_flight: int = 16) -> list[R]:
    """Apply fn to every item with bounded concurrency; results keep input order.

    The caller's fn handles its own per-item failures; completion order never
    leaks into the output, so concurrent runs stay deterministic.
    """
    items = list(items)
    if max_in_flight <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(fn, items))

"""Semantic hard-negative mining over a cosine top-k candidate index.

For every positive pair, retrieve the candidates most similar to the true
one, drop anything known to be a positive for that query, and pair one of
the survivors with the (optionally translated) query under label 0.  All
retrieval is exact: full scan plus partial sort, no approximation.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Origin, RelevanceRecord, Task, make_record
from .errors import ConfigError, DataError, ProviderError
from .hashing import derive_seed
from .providers import Embedder, TranslationRequest, Translator, map_bounded

EMBED_BATCH = 256


@dataclass
class CandidateCatalog:
    """The candidate pool: category paths for QC, item titles for QI."""

    entries: list[tuple[int, str]]
    task: Task

    def __post_init__(self) -> None:
        ids = [cid for cid, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise DataError("candidate ids must be unique")
        if any(not text.strip() for _, text in self.entries):
            raise DataError("candidate texts must be non-empty")
        self._text_by_id = dict(self.entries)
        self._first_id_by_text: dict[str, int] = {}
        for cid, text in self.entries:
            self._first_id_by_text.setdefault(text, cid)

    def __len__(self) -> int:
        return len(self.entries)

    def text(self, candidate_id: int) -> str:
        return self._text_by_id[candidate_id]

    def id_for_text(self, text: str) -> int | None:
        return self._first_id_by_text.get(text)

    @classmethod
    def from_texts(cls, texts: Iterable[str], task: Task) -> "CandidateCatalog":
        return cls(entries=[(i, text) for i, text in enumerate(texts)], task=task)

    @classmethod
    def from_records(cls, records: Iterable[RelevanceRecord], task: Task) -> "CandidateCatalog":
        """Unique candidates in first-seen order."""
        seen: set[str] = set()
        texts: list[str] = []
        for rec in records:
            if rec.task is task and rec.candidate not in seen:
                seen.add(rec.candidate)
                texts.append(rec.candidate)
        return cls.from_texts(texts, task)

    @classmethod
    def from_file(cls, path: str | Path, task: Task) -> "CandidateCatalog":
        """One candidate per line, UTF-8; blank lines skipped."""
        texts = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                text = line.rstrip("\n")
                if text.strip():
                    texts.append(text)
        if not texts:
            raise DataError(f"catalog file {path} holds no candidates")
        return cls.from_texts(texts, task)


@dataclass
class EmbeddingIndex:
    """Unit-normalized candidate vectors aligned with catalog order."""

    candidate_ids: np.ndarray  # int64, shape (n,)
    matrix: np.ndarray  # float64, shape (n, dimension), rows unit norm
    dimension: int

    def __post_init__(self) -> None:
        self._row_by_id = {int(cid): row for row, cid in enumerate(self.candidate_ids)}

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def vector(self, candidate_id: int) -> np.ndarray:
        return self.matrix[self._row_by_id[candidate_id]]


def build_index(catalog: CandidateCatalog, embedder: Embedder) -> EmbeddingIndex:
    """Embed every catalog entry and L2-normalize the rows."""
    if not len(catalog):
        raise DataError("cannot index an empty catalog")
    texts = [text for _, text in catalog.entries]
    blocks = []
    for start in range(0, len(texts), EMBED_BATCH):
        blocks.append(np.asarray(embedder.embed(texts[start : start + EMBED_BATCH]), dtype=np.float64))
    dims = {block.shape[1] for block in blocks}
    if len(dims) != 1:
        raise ProviderError(f"embedder returned mixed dimensions: {sorted(dims)}")
    matrix = np.vstack(blocks)
    norms = np.sqrt(np.einsum("ij,ij->i", matrix, matrix))
    if not np.all(np.isfinite(norms)) or np.any(norms == 0.0):
        raise ProviderError("embedder produced a zero or non-finite vector")
    matrix = matrix / norms[:, None]
    return EmbeddingIndex(
        candidate_ids=np.asarray([cid for cid, _ in catalog.entries], dtype=np.int64),
        matrix=matrix,
        dimension=matrix.shape[1],
    )


def _check_query(index: EmbeddingIndex, query_vector: np.ndarray) -> np.ndarray:
    q = np.asarray(query_vector, dtype=np.float64)
    if q.shape != (index.dimension,):
        raise DataError(
            f"query vector has shape {q.shape}, index dimension is {index.dimension}"
        )
    norm = float(np.sqrt(np.dot(q, q)))
    if abs(norm - 1.0) > 1e-6:
        raise DataError(f"query vector is not unit-normalized (norm {norm!r})")
    return q


def _ordered_topk(cos: np.ndarray, ids: np.ndarray, k: int) -> list[tuple[int, float]]:
    """Exact selection: descending cosine, ties by ascending id."""
    n = cos.shape[0]
    if k < n:
        # partial sort, then widen to every candidate tied with the boundary
        part = np.argpartition(-cos, k - 1)[:k]
        boundary = cos[part].min()
        pool = np.flatnonzero(cos >= boundary)
    else:
        pool = np.arange(n)
    order = np.lexsort((ids[pool], -cos[pool]))
    chosen = pool[order][:k]
    return [(int(ids[i]), float(cos[i])) for i in chosen]


def top_k_similar(
    index: EmbeddingIndex,
    query_vector: np.ndarray,
    k: int,
    exclude_id: int | None = None,
) -> list[tuple[int, float]]:
    """The k most cosine-similar candidates, exactly ordered.

    Ties break by ascending candidate id so the ordering is stable across
    platforms; ``exclude_id`` is never returned.
    """
    q = _check_query(index, query_vector)
    cos = index.matrix @ q
    ids = index.candidate_ids
    if exclude_id is not None:
        keep = ids != exclude_id
        cos, ids = cos[keep], ids[keep]
    if not 1 <= k <= cos.shape[0]:
        raise DataError(f"k={k} out of range for {cos.shape[0]} candidates")
    return _ordered_topk(cos, ids, k)


def top_k_similar_heap(
    index: EmbeddingIndex,
    query_vector: np.ndarray,
    k: int,
    exclude_id: int | None = None,
) -> list[tuple[int, float]]:
    """Heap-based selection; agrees exactly with top_k_similar."""
    q = _check_query(index, query_vector)
    cos = index.matrix @ q
    ids = index.candidate_ids
    if exclude_id is not None:
        keep = ids != exclude_id
        cos, ids = cos[keep], ids[keep]
    if not 1 <= k <= cos.shape[0]:
        raise DataError(f"k={k} out of range for {cos.shape[0]} candidates")
    # min-heap of the best k; (cos, -id) makes the worst entry the smallest
    heap: list[tuple[float, int]] = []
    for i in range(cos.shape[0]):
        item = (float(cos[i]), -int(ids[i]))
        if len(heap) < k:
            heapq.heappush(heap, item)
        elif item > heap[0]:
            heapq.heapreplace(heap, item)
    ranked = sorted(((-c, -nid) for c, nid in heap))
    return [(nid, -negc) for negc, nid in ranked]


@dataclass(frozen=True)
class NegativeMiningConfig:
    k_min: int = 20
    k_max: int = 50
    negatives_per_positive: int = 1
    master_seed: int = 0

    def validate(self, catalog_size: int) -> None:
        if not 1 <= self.k_min <= self.k_max:
            raise ConfigError(f"need 1 <= k_min <= k_max, got [{self.k_min}, {self.k_max}]")
        if self.k_max > catalog_size - 1:
            raise ConfigError(
                f"k_max={self.k_max} needs a catalog of at least {self.k_max + 1}"
                f" candidates, got {catalog_size}"
            )
        if self.negatives_per_positive < 1:
            raise ConfigError(
                f"negatives_per_positive must be >= 1, got {self.negatives_per_positive}"
            )


def normalize_query_text(query: str) -> str:
    """Whitespace-collapsed casefold; the exclusion-set key for queries."""
    return " ".join(query.split()).casefold()


def build_exclusion_set(records: Iterable[RelevanceRecord]) -> set[tuple[str, str]]:
    """(normalized query, candidate) for every positively labeled pair anywhere."""
    return {
        (normalize_query_text(rec.query), rec.candidate)
        for rec in records
        if rec.label == 1
    }


@dataclass
class NegativeProvenance:
    """Enough detail to re-derive one mined negative from scratch."""

    source_id: str
    negative_id: str
    drawn_k: int
    candidate_id: int
    cosine: float


@dataclass
class MiningReport:
    requested: int = 0
    emitted: int = 0
    skipped_no_candidates: int = 0
    skipped_shortfall: int = 0
    collapsed: int = 0
    translation_failed: int = 0
    provenance: list[NegativeProvenance] = field(default_factory=list)


def mine_hard_negatives(
    positives: Sequence[RelevanceRecord],
    catalog: CandidateCatalog,
    index: EmbeddingIndex,
    config: NegativeMiningConfig,
    exclusion: set[tuple[str, str]] | None = None,
    translator: Translator | None = None,
    target_language: str | None = None,
    max_in_flight: int = 16,
) -> tuple[list[RelevanceRecord], MiningReport]:
    """Mine label-0 records whose candidates are semantically close to real ones.

    Per positive: draw K uniformly from [k_min, k_max], retrieve the top-K
    candidates similar to the positive's own candidate (itself excluded),
    drop known positives for the query, and sample uniformly.  Everything is
    seeded per record, so reruns are byte-identical at any worker count.
    """
    config.validate(len(catalog))
    for rec in positives:
        if rec.label != 1:
            raise DataError(f"record {rec.id} is not a positive (label={rec.label})")
        if catalog.id_for_text(rec.candidate) is None:
            raise DataError(f"record {rec.id} candidate is missing from the catalog")
    if exclusion is None:
        exclusion = build_exclusion_set(positives)

    ordered = sorted(positives, key=lambda r: r.id)
    report = MiningReport(requested=len(ordered) * config.negatives_per_positive)

    def query_for(rec: RelevanceRecord) -> str | None:
        if target_language is None or target_language == rec.language:
            return rec.query
        if translator is None:
            raise ConfigError("mining toward another language needs a translator")
        try:
            return translator.translate(
                TranslationRequest(
                    text=rec.query,
                    source_language=rec.language,
                    target_language=target_language,
                )
            )
        except ProviderError:
            return None

    queries = map_bounded(query_for, ordered, max_in_flight)

    # top-k_max per unique candidate, computed once; slicing gives any smaller K
    topk_cache: dict[int, list[tuple[int, float]]] = {}

    def topk_for(candidate_id: int) -> list[tuple[int, float]]:
        cached = topk_cache.get(candidate_id)
        if cached is None:
            cached = top_k_similar(
                index, index.vector(candidate_id), config.k_max, exclude_id=candidate_id
            )
            topk_cache[candidate_id] = cached
        return cached

    out: list[RelevanceRecord] = []
    seen_keys: set[tuple[str, str, str, int]] = set()
    for rec, query in zip(ordered, queries):
        if query is None:
            report.translation_failed += 1
            continue
        rng = random.Random(derive_seed(config.master_seed, "negmine", rec.id))
        k = rng.randint(config.k_min, config.k_max)
        cid = catalog.id_for_text(rec.candidate)
        norm_query = normalize_query_text(query)
        eligible = [
            (other_id, cos)
            for other_id, cos in topk_for(cid)[:k]
            if catalog.text(other_id) != rec.candidate
            and (norm_query, catalog.text(other_id)) not in exclusion
        ]
        if not eligible:
            report.skipped_no_candidates += 1
            continue
        take = min(config.negatives_per_positive, len(eligible))
        report.skipped_shortfall += config.negatives_per_positive - take
        language = target_language if target_language is not None else rec.language
        for other_id, cos in rng.sample(eligible, take):
            negative = make_record(
                task=rec.task,
                query=query,
                language=language,
                candidate=catalog.text(other_id),
                label=0,
                origin=Origin.SYNTHETIC_NEGATIVE,
                source_id=rec.id,
            )
            key = negative.content_key()
            if key in seen_keys:
                report.collapsed += 1
                continue
            seen_keys.add(key)
            out.append(negative)
            report.provenance.append(
                NegativeProvenance(
                    source_id=rec.id,
                    negative_id=negative.id,
                    drawn_k=k,
                    candidate_id=other_id,
                    cosine=cos,
                )
            )
            report.emitted += 1
    return out, report

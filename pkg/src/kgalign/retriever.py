"""Exact top-K cosine retrieval over an embedded candidate corpus.

The index is an exhaustive scan with blocked dot products: at desk scale
(up to ~100K vectors) this is fast, and exactness removes recall as a
confound. Ties are broken by ascending candidate id so rankings are fully
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoder import (
    NORM_TOLERANCE,
    EmbeddingProvider,
    embed,
    load_embedding_cache,
    save_embedding_cache,
)
from .errors import DimensionMismatch, DuplicateId, NonUnitVector
from .mining import AlignmentPair
from .model import Entity, serialize_entity


@dataclass(frozen=True)
class RetrievalResult:
    query_id: str
    hits: tuple[tuple[str, float], ...]


class VectorIndex:
    """Immutable id-addressed matrix of unit-norm vectors."""

    def __init__(self, ids: Sequence[str], matrix: np.ndarray):
        if len(ids) != len(set(ids)):
            seen: set[str] = set()
            for entity_id in ids:
                if entity_id in seen:
                    raise DuplicateId(f"duplicate id in index: {entity_id!r}")
                seen.add(entity_id)
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(ids):
            raise DimensionMismatch(
                f"matrix shape {matrix.shape} does not match {len(ids)} ids"
            )
        norms = np.linalg.norm(matrix, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOLERANCE)
        if bad.size:
            raise NonUnitVector(
                f"{bad.size} rows are not unit-norm (first: {ids[int(bad[0])]!r})"
            )
        self.ids = list(ids)
        self.matrix = matrix
        self.matrix.setflags(write=False)
        # Unicode dtype so lexsort can tie-break on ids.
        self._id_array = np.array(self.ids)
        self._row_of = {entity_id: row for row, entity_id in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]

    def __contains__(self, entity_id: str) -> bool:
        return entity_id in self._row_of

    def vector(self, entity_id: str) -> np.ndarray:
        return self.matrix[self._row_of[entity_id]]


def build_index(ids: Sequence[str], vectors: np.ndarray) -> VectorIndex:
    """Validate and freeze an index; insertion order never affects queries."""
    return VectorIndex(ids, vectors)


def query_topk(index: VectorIndex, q: np.ndarray, k: int) -> RetrievalResult:
    """Exact top-k by cosine, descending score then ascending id.

    Returns min(k, len(index)) hits; identical to an exhaustive scan.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (index.dimension,):
        raise DimensionMismatch(f"query shape {q.shape}, index dim {index.dimension}")
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = index.matrix @ q
    order = np.lexsort((index._id_array, -scores))[: min(k, len(index))]
    hits = tuple((index.ids[int(i)], float(scores[int(i)])) for i in order)
    return RetrievalResult(query_id="", hits=hits)


def query_topk_batch(
    index: VectorIndex,
    queries: np.ndarray,
    query_ids: Sequence[str],
    k: int,
    block: int = 256,
) -> list[RetrievalResult]:
    """Blocked batch variant of :func:`query_topk` with identical results."""
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != index.dimension:
        raise DimensionMismatch(
            f"queries shape {queries.shape}, index dim {index.dimension}"
        )
    results: list[RetrievalResult] = []
    for start in range(0, len(queries), block):
        scores_block = index.matrix @ queries[start : start + block].T
        for col in range(scores_block.shape[1]):
            scores = scores_block[:, col]
            order = np.lexsort((index._id_array, -scores))[: min(k, len(index))]
            hits = tuple((index.ids[int(i)], float(scores[int(i)])) for i in order)
            results.append(RetrievalResult(query_id=query_ids[start + col], hits=hits))
    return results


def index_entities(
    entities: Sequence[Entity],
    provider: EmbeddingProvider,
    budget: int = 1_000,
) -> VectorIndex:
    """Embed entities' serialized contexts and index them by entity id."""
    texts = [serialize_entity(e, budget) for e in entities]
    return build_index([e.id for e in entities], embed(provider, texts))


def build_hn_pool(
    benchmark: Sequence[AlignmentPair],
    provider: EmbeddingProvider,
    budget: int = 1_000,
) -> VectorIndex:
    """Index the union of side-B entities over every benchmark row.

    Positives and negatives both contribute, deduplicated by id, so each
    positive query is ranked against its same-name distractors.
    """
    pool: dict[str, Entity] = {}
    for pair in benchmark:
        pool.setdefault(pair.b.id, pair.b)
    ordered = [pool[entity_id] for entity_id in sorted(pool)]
    return index_entities(ordered, provider, budget)


def save_index(path: str | Path, index: VectorIndex) -> None:
    save_embedding_cache(path, index.ids, index.matrix)


def load_index(path: str | Path) -> VectorIndex:
    ids, matrix = load_embedding_cache(path)
    return VectorIndex(ids, matrix)

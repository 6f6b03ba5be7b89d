"""Name-dependent alignment baselines.

These deliberately ignore relational structure; on benchmarks whose
negatives share names with their positives they collapse toward the
always-positive ceiling, which is exactly what they are here to measure.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .encoder import EmbeddingProvider, cosine, embed
from .model import Entity

SUBSTRING_MIN_LENGTH = 2


def baseline_string_match(a: Entity, b: Entity) -> bool:
    """Match iff case-folded canonical names are identical."""
    return a.name_key == b.name_key


def baseline_substring_match(a: Entity, b: Entity) -> bool:
    """String match with a contiguous-substring fallback.

    The contained name must have at least SUBSTRING_MIN_LENGTH characters,
    which avoids trivial one-character hits. Known false-positive mode:
    unrelated titles sharing a short name ("Rome" inside "Romeo and
    Juliet") still match.
    """
    x, y = a.name_key, b.name_key
    if x == y:
        return True
    shorter, longer = (x, y) if len(x) <= len(y) else (y, x)
    return len(shorter) >= SUBSTRING_MIN_LENGTH and shorter in longer


def name_cosine(a: Entity, b: Entity, provider: EmbeddingProvider) -> float:
    """Cosine similarity of name-only embeddings (no triples)."""
    vectors = embed(provider, [a.canonical_name, b.canonical_name])
    return cosine(vectors[0], vectors[1])


def baseline_name_only(
    a: Entity, b: Entity, provider: EmbeddingProvider, threshold: float
) -> bool:
    """Match iff name-embedding cosine reaches a (validation-swept) threshold."""
    return name_cosine(a, b, provider) >= threshold


def rank_candidates_by_score(
    candidate_ids: Sequence[str], scores: Sequence[float]
) -> list[tuple[str, float]]:
    """Order candidates by descending score, ties by ascending id."""
    ids = np.array(candidate_ids)
    values = np.asarray(scores, dtype=np.float64)
    order = np.lexsort((ids, -values))
    return [(str(ids[i]), float(values[i])) for i in order]


def string_score(a: Entity, b: Entity) -> float:
    return 1.0 if baseline_string_match(a, b) else 0.0


def substring_score(a: Entity, b: Entity) -> float:
    return 1.0 if baseline_substring_match(a, b) else 0.0

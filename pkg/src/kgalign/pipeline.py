"""Two-stage alignment: top-K retrieval, listwise reranking, score fusion.

A pipeline bundles an embedding provider, an optional chat client, and the
fusion weight. With no client the pipeline degrades to retriever-only
scoring (fusion weight effectively 1). Evaluation drivers for the three
benchmark tasks live here as well.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .encoder import EmbeddingProvider, embed
from .errors import SingleClassInput, TransportError
from .fusion import (
    DEFAULT_GRID_STEP,
    EvalReport,
    evaluate_binary_scores,
    fuse,
    ranking_metrics,
)
from .mining import AlignmentPair, Label
from .model import Entity, serialize_entity
from .reranker import (
    AuditWriter,
    ChatClient,
    RankedCandidate,
    RerankRequest,
    build_prompt,
    rerank,
)
from .retriever import VectorIndex, query_topk


@dataclass
class QueryRanking:
    query_id: str
    ranked: list[tuple[str, float]]
    cosines: dict[str, float]
    llm_scores: dict[str, float] | None
    fallback_used: bool

    @property
    def hits(self) -> list[tuple[str, float]]:
        # RetrievalResult-compatible view for ranking_metrics.
        return self.ranked


@dataclass
class TwoStagePipeline:
    provider: EmbeddingProvider
    client: ChatClient | None
    alpha: float
    k: int = 10
    budget: int = 1_000
    audit: AuditWriter | None = None

    def embed_query(self, query: Entity) -> np.ndarray:
        return embed(self.provider, [serialize_entity(query, self.budget)])[0]

    def rank_query(
        self,
        query: Entity,
        index: VectorIndex,
        entities_by_id: Mapping[str, Entity],
        force_include: Sequence[str] = (),
        query_vector: np.ndarray | None = None,
    ) -> QueryRanking:
        """Retrieve, rerank, and fuse one query against an indexed pool.

        ``force_include`` ids join the candidate list even when retrieval
        misses them, keeping their scores part of the single listwise call.
        """
        q = self.embed_query(query) if query_vector is None else query_vector
        result = query_topk(index, q, self.k)
        cosines = {cid: score for cid, score in result.hits}
        for cid in force_include:
            if cid not in cosines:
                cosines[cid] = float(index.vector(cid) @ q)
        ordered_ids = [cid for cid, _ in sorted(cosines.items(), key=lambda kv: (-kv[1], kv[0]))]

        if self.client is None:
            ranked = [(cid, cosines[cid]) for cid in ordered_ids]
            return QueryRanking(
                query_id=query.id,
                ranked=ranked,
                cosines=cosines,
                llm_scores=None,
                fallback_used=False,
            )

        candidates = tuple(
            RankedCandidate(
                entity=entities_by_id[cid],
                retriever_rank=rank,
                cosine_score=cosines[cid],
            )
            for rank, cid in enumerate(ordered_ids, start=1)
        )
        request = RerankRequest(query=query, candidates=candidates, budget=self.budget)
        started = time.perf_counter()
        outcome = rerank(request, self.client)
        elapsed_ms = (time.perf_counter() - started) * 1_000.0
        if self.audit is not None:
            self.audit.record(
                query_id=query.id,
                prompt=build_prompt(request),
                raw_response=outcome.raw_response,
                fallback_used=outcome.fallback_used,
                latency_ms=elapsed_ms,
            )
        llm_scores = {
            cid: outcome.scores[rank] for rank, cid in enumerate(ordered_ids, start=1)
        }
        fused = {
            cid: fuse(cosines[cid], llm_scores[cid], self.alpha) for cid in ordered_ids
        }
        ranked = sorted(fused.items(), key=lambda kv: (-kv[1], kv[0]))
        return QueryRanking(
            query_id=query.id,
            ranked=[(cid, score) for cid, score in ranked],
            cosines=cosines,
            llm_scores=llm_scores,
            fallback_used=outcome.fallback_used,
        )

    def score_benchmark_rows(
        self,
        rows: Sequence[AlignmentPair],
        index: VectorIndex,
        entities_by_id: Mapping[str, Entity],
    ) -> tuple[list[float | None], int, int]:
        """Fused score for each (a, b) row via one listwise call per query.

        Rows sharing a query entity share that call; each row's designated
        side-B entity is force-included so its score always comes from the
        listwise output. Returns (scores aligned to rows, fallback count,
        failed-query count); rows of failed queries score None.
        """
        grouped: dict[tuple[str, str], list[int]] = {}
        query_of: dict[tuple[str, str], Entity] = {}
        for i, pair in enumerate(rows):
            key = (pair.a.kg.value, pair.a.id)
            grouped.setdefault(key, []).append(i)
            query_of[key] = pair.a

        scores: list[float | None] = [None] * len(rows)
        n_fallback = 0
        n_failed = 0
        for key in sorted(grouped):
            indices = grouped[key]
            query = query_of[key]
            targets = [rows[i].b.id for i in indices]
            try:
                ranking = self.rank_query(
                    query, index, entities_by_id, force_include=targets
                )
            except TransportError:
                n_failed += 1
                continue
            if ranking.fallback_used:
                n_fallback += 1
            for i in indices:
                b_id = rows[i].b.id
                sim = ranking.cosines[b_id]
                if ranking.llm_scores is None:
                    scores[i] = sim
                else:
                    scores[i] = fuse(sim, ranking.llm_scores[b_id], self.alpha)
        return scores, n_fallback, n_failed


def pool_entity_lookup(benchmark: Sequence[AlignmentPair]) -> dict[str, Entity]:
    """Side-B entities of a benchmark keyed by id."""
    lookup: dict[str, Entity] = {}
    for pair in benchmark:
        lookup.setdefault(pair.b.id, pair.b)
    return lookup


def evaluate_retrieval(
    queries: Sequence[tuple[Entity, str]],
    index: VectorIndex,
    entities_by_id: Mapping[str, Entity],
    pipeline: TwoStagePipeline,
    ks: Sequence[int] = (1, 5, 10),
    task: str = "retrieval",
) -> EvalReport:
    """Rank each (query, gold id) against the pool and report Hit@K / MRR."""
    if not queries:
        raise SingleClassInput("no queries to evaluate")
    texts = [serialize_entity(q, pipeline.budget) for q, _ in queries]
    vectors = embed(pipeline.provider, texts)
    rankings = []
    gold: dict[str, str] = {}
    n_fallback = 0
    n_failed = 0
    for (query, gold_id), vector in zip(queries, vectors):
        try:
            ranking = pipeline.rank_query(
                query, index, entities_by_id, query_vector=vector
            )
        except TransportError:
            n_failed += 1
            continue
        gold[ranking.query_id] = gold_id
        rankings.append(ranking)
        if ranking.fallback_used:
            n_fallback += 1
    hit_at, mrr = ranking_metrics(rankings, gold, ks)
    return EvalReport(
        task=task,
        hit_at=hit_at,
        mrr=mrr,
        n_queries=len(rankings),
        n_fallback=n_fallback,
        n_failed=n_failed,
    )


def evaluate_hn_retrieval(
    benchmark: Sequence[AlignmentPair],
    pool_index: VectorIndex,
    pipeline: TwoStagePipeline,
    ks: Sequence[int] = (1, 5, 10),
) -> EvalReport:
    """Retrieval protocol where the pool contains every benchmark row.

    Each positive row's side-A queries the full pool, so every query is
    ranked against its same-name distractors; Hit@K and MRR are computed
    over the fused rankings of the top-K-then-reranked candidates.
    """
    positives = [p for p in benchmark if p.label is Label.POSITIVE]
    if not positives:
        raise SingleClassInput("benchmark has no positive rows")
    entities_by_id = pool_entity_lookup(benchmark)
    queries = [(p.a, p.b.id) for p in positives]
    return evaluate_retrieval(
        queries, pool_index, entities_by_id, pipeline, ks, task="hn_retrieval"
    )


def evaluate_binary(
    benchmark: Sequence[AlignmentPair],
    pool_index: VectorIndex,
    pipeline: TwoStagePipeline,
    grid_step: float = DEFAULT_GRID_STEP,
    val_fraction: float = 0.3,
    seed: int = 42,
) -> EvalReport:
    """Binary alignment decisions on benchmark rows at a swept threshold."""
    entities_by_id = pool_entity_lookup(benchmark)
    scores, n_fallback, n_failed = pipeline.score_benchmark_rows(
        benchmark, pool_index, entities_by_id
    )
    scored_rows = [
        (score, 1 if pair.label is Label.POSITIVE else 0)
        for score, pair in zip(scores, benchmark)
        if score is not None
    ]
    return evaluate_binary_scores(
        scored_rows,
        grid_step=grid_step,
        val_fraction=val_fraction,
        seed=seed,
        n_fallback=n_fallback,
        n_failed=n_failed,
    )

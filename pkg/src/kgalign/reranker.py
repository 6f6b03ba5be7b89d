"""Listwise reranking of retrieved candidates through a chat endpoint.

Each query costs exactly one scoring call: the query and all candidates go
into a single prompt and the response carries one ``index:score`` list.
Malformed responses trigger bounded re-asks and finally a fallback that
reproduces the retriever ordering, so fused rankings degrade gracefully.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import requests

from .errors import MalformedOutput, TransportError
from .model import Entity, serialize_entity

logger = logging.getLogger(__name__)

_RANKING_PAIR = re.compile(
    r"^(\d+)\s*:\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)$"
)


@dataclass(frozen=True)
class RankedCandidate:
    """A candidate as handed to the reranker."""

    entity: Entity
    retriever_rank: int
    cosine_score: float


@dataclass(frozen=True)
class RerankRequest:
    query: Entity
    candidates: tuple[RankedCandidate, ...]
    budget: int = 1_000

    def __post_init__(self):
        ranks = [c.retriever_rank for c in self.candidates]
        if ranks != list(range(1, len(ranks) + 1)):
            raise ValueError("candidates must carry retriever ranks 1..n in order")


@dataclass
class RerankResult:
    scores: dict[int, float]
    order: list[int]
    fallback_used: bool
    raw_response: str


@dataclass
class LlmClientConfig:
    endpoint: str = ""
    model: str = "default"
    api_key: str | None = None
    max_retries: int = 3
    timeout: float = 60.0
    max_in_flight: int = 4
    temperature: float = 0.0
    malformed_retries: int = 2
    backoff: float = 0.25

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")

    @classmethod
    def from_env(cls, **overrides) -> "LlmClientConfig":
        values = {
            "endpoint": os.environ.get("LLM_ENDPOINT", ""),
            "model": os.environ.get("LLM_MODEL", "default"),
            "api_key": os.environ.get("LLM_API_KEY"),
        }
        values.update(overrides)
        return cls(**values)


class ChatClient:
    """Anything that turns a prompt into a raw response string."""

    def complete(self, prompt: str) -> str:
        raise NotImplementedError


class HttpChatClient(ChatClient):
    """Chat-completion wire protocol client.

    POST ``{"model", "messages": [{"role", "content"}], "temperature"}``;
    the first choice's message content is the raw response. Transport
    failures retry with exponential backoff up to the configured budget.
    """

    def __init__(self, config: LlmClientConfig):
        if not config.endpoint:
            raise TransportError("chat endpoint is not configured")
        self.config = config
        self._gate = threading.Semaphore(config.max_in_flight)

    def complete(self, prompt: str) -> str:
        cfg = self.config
        headers = {"Content-Type": "application/json"}
        if cfg.api_key:
            headers["Authorization"] = f"Bearer {cfg.api_key}"
        payload = {
            "model": cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": cfg.temperature,
        }
        last_error: Exception | None = None
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                time.sleep(cfg.backoff * (2 ** (attempt - 1)))
            try:
                with self._gate:
                    response = requests.post(
                        cfg.endpoint, json=payload, headers=headers, timeout=cfg.timeout
                    )
                if response.status_code == 429 or response.status_code >= 500:
                    last_error = TransportError(f"server returned {response.status_code}")
                    continue
                response.raise_for_status()
                return response.json()["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_error = exc
        raise TransportError(f"chat endpoint failed: {last_error}")


def build_prompt(req: RerankRequest) -> str:
    """Render the fixed listwise prompt for a query and its candidates.

    Byte-identical output for identical requests; cosine scores are shown
    with three decimal places.
    """
    lines = [
        "[System]",
        "Base your judgment on the entity names and knowledge graph triples.",
        "Entities with identical names can refer to completely different real-world objects;",
        "use the relational structure to disambiguate.",
        "",
        "[Query]",
        serialize_entity(req.query, req.budget),
    ]
    for c in req.candidates:
        lines.append("")
        lines.append(
            f"[Candidate {c.retriever_rank}]  "
            f"(Retriever Rank: {c.retriever_rank}, Score: {c.cosine_score:.3f})"
        )
        lines.append(serialize_entity(c.entity, req.budget))
    lines += [
        "",
        "Rank the candidates from best to worst match for the query entity.",
        "You MUST begin your response immediately with 'RANKING:'.",
        "Respond strictly in the following format:",
        "",
        "RANKING: i:<score>, j:<score>, k:<score>, ...",
        "(scores are confidence values in [0, 1]; e.g., RANKING: 3:0.92, 1:0.75, 2:0.41, ...)",
        "Reasoning: <2-3 sentences citing the discriminating triples>",
    ]
    return "\n".join(lines)


def parse_ranking(raw: str, n_candidates: int) -> dict[int, float]:
    """Parse a ``RANKING: i:score, ...`` response into a full score map.

    The first line starting with ``RANKING:`` (leading whitespace allowed)
    is parsed; scores are clamped to [0, 1]; indices outside 1..n and repeat
    occurrences after the first are ignored; candidates absent from the
    parse score 0.0. Raises MalformedOutput when no ranking line exists or
    no pair parses.
    """
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    content: str | None = None
    for line in raw.splitlines():
        stripped = line.lstrip()
        if stripped.startswith("RANKING:"):
            content = stripped[len("RANKING:") :]
            break
    if content is None:
        raise MalformedOutput("no RANKING line in response")
    scores: dict[int, float] = {}
    for token in content.split(","):
        m = _RANKING_PAIR.match(token.strip())
        if not m:
            continue
        index = int(m.group(1))
        if not 1 <= index <= n_candidates or index in scores:
            continue
        scores[index] = min(1.0, max(0.0, float(m.group(2))))
    if not scores:
        raise MalformedOutput("RANKING line contained no valid index:score pairs")
    for index in range(1, n_candidates + 1):
        scores.setdefault(index, 0.0)
    return scores


def fallback_scores(n_candidates: int) -> dict[int, float]:
    """Rank-derived surrogate scores preserving retriever order.

    score(rank r of n) = (n - r + 1) / n is strictly decreasing in rank, so
    fused rankings equal the retriever ranking for every fusion weight.
    """
    n = n_candidates
    return {r: (n - r + 1) / n for r in range(1, n + 1)}


def rerank(req: RerankRequest, client: ChatClient) -> RerankResult:
    """Score all candidates of one query with a single listwise call.

    Malformed responses are re-asked a bounded number of times (a config
    knob on HTTP clients; plain clients get one re-ask budget of 2), after
    which the retriever-order fallback applies. Transport errors propagate
    after the client's own retry budget.
    """
    n = len(req.candidates)
    if n == 0:
        return RerankResult(scores={}, order=[], fallback_used=False, raw_response="")
    prompt = build_prompt(req)
    malformed_budget = getattr(
        getattr(client, "config", None), "malformed_retries", 2
    )
    raw = ""
    scores: dict[int, float] | None = None
    for _ in range(malformed_budget + 1):
        raw = client.complete(prompt)
        try:
            scores = parse_ranking(raw, n)
            break
        except MalformedOutput:
            continue
    fallback_used = scores is None
    if scores is None:
        scores = fallback_scores(n)
    by_rank = {c.retriever_rank: c for c in req.candidates}
    order = sorted(by_rank, key=lambda r: (-scores[r], r))
    return RerankResult(
        scores=scores, order=order, fallback_used=fallback_used, raw_response=raw
    )


# ---------------------------------------------------------------------------
# Audit log


@dataclass
class AuditWriter:
    """Append-only JSON-lines audit of reranker calls."""

    path: str | Path
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record(
        self,
        query_id: str,
        prompt: str,
        raw_response: str,
        fallback_used: bool,
        latency_ms: float,
    ) -> None:
        entry = {
            "query_id": query_id,
            "prompt_hash": hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
            "raw_response": raw_response,
            "fallback_used": fallback_used,
            "latency_ms": round(latency_ms, 3),
        }
        line = json.dumps(entry, ensure_ascii=False) + "\n"
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)

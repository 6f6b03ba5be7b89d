"""Score fusion, threshold selection, and evaluation metrics.

The final alignment score is the convex combination
``alpha * cosine + (1 - alpha) * llm``. Binary decisions threshold that
score; the threshold is chosen on validation scores by maximizing F1 and is
then applied fixed to evaluation data.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    LengthMismatch,
    MissingGold,
    RangeError,
    SingleClassInput,
)

DEFAULT_GRID_STEP = 0.005
ALPHA_RETRIEVAL = 0.75
ALPHA_HARD_NEGATIVE = 0.25


def fuse(sim: float, llm: float, alpha: float) -> float:
    """Linear fusion of a cosine similarity and an LLM confidence."""
    if not -1.0 <= sim <= 1.0:
        raise RangeError(f"sim must be in [-1, 1], got {sim}")
    if not 0.0 <= llm <= 1.0:
        raise RangeError(f"llm must be in [0, 1], got {llm}")
    if not 0.0 <= alpha <= 1.0:
        raise RangeError(f"alpha must be in [0, 1], got {alpha}")
    return alpha * sim + (1.0 - alpha) * llm


@dataclass(frozen=True)
class ThresholdResult:
    threshold: float
    f1_at_threshold: float
    sweep_grid: float


def binary_metrics(
    preds: Sequence[int], labels: Sequence[int]
) -> tuple[float, float, float, float]:
    """(accuracy, precision, recall, f1); undefined denominators yield 0."""
    if len(preds) != len(labels):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(labels)} labels")
    if not preds:
        return 0.0, 0.0, 0.0, 0.0
    p = np.asarray(preds, dtype=bool)
    y = np.asarray(labels, dtype=bool)
    tp = int(np.sum(p & y))
    fp = int(np.sum(p & ~y))
    fn = int(np.sum(~p & y))
    tn = int(np.sum(~p & ~y))
    accuracy = (tp + tn) / len(preds)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return accuracy, precision, recall, f1


def sweep_threshold(
    val_scores: Sequence[tuple[float, int]],
    grid_step: float = DEFAULT_GRID_STEP,
) -> ThresholdResult:
    """Pick the F1-maximizing decision threshold on validation scores.

    Thresholds run over [min score, max score] at ``grid_step``; a score is
    predicted positive when it is >= the threshold. Ties resolve toward the
    lower threshold. The result is meant to be applied unchanged to the
    evaluation set.
    """
    if grid_step <= 0:
        raise RangeError("grid_step must be positive")
    if not val_scores:
        raise SingleClassInput("empty score set")
    labels = {label for _, label in val_scores}
    if labels != {0, 1}:
        raise SingleClassInput(f"need both classes, got labels {sorted(labels)}")

    scores = np.array([s for s, _ in val_scores], dtype=np.float64)
    y = np.array([l for _, l in val_scores], dtype=np.int64)
    lo, hi = float(scores.min()), float(scores.max())
    n_steps = int(np.floor((hi - lo) / grid_step + 1e-12))
    grid = [lo + i * grid_step for i in range(n_steps + 1)]
    if grid[-1] < hi:
        grid.append(hi)

    # Counting positives above a cut via sorted score arrays.
    pos_sorted = np.sort(scores[y == 1])
    neg_sorted = np.sort(scores[y == 0])
    n_pos = len(pos_sorted)

    best_t, best_f1 = grid[0], -1.0
    for t in grid:
        tp = n_pos - int(np.searchsorted(pos_sorted, t, side="left"))
        fp = len(neg_sorted) - int(np.searchsorted(neg_sorted, t, side="left"))
        fn = n_pos - tp
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall
            else 0.0
        )
        if f1 > best_f1:
            best_t, best_f1 = t, f1
    return ThresholdResult(threshold=best_t, f1_at_threshold=best_f1, sweep_grid=grid_step)


def ranking_metrics(
    results: Iterable,
    gold: Mapping[str, str],
    ks: Sequence[int] = (1, 5, 10),
) -> tuple[dict[int, float], float]:
    """Hit@K and MRR over ranked result lists.

    ``results`` items are RetrievalResult-like (query_id plus ordered hits)
    or ``(query_id, [candidate ids...])`` tuples. A gold id absent from a
    ranked list contributes 0 to MRR.
    """
    hits_at = {k: 0 for k in ks}
    reciprocal_sum = 0.0
    n = 0
    for item in results:
        if hasattr(item, "query_id"):
            query_id = item.query_id
            ranked = [h[0] if isinstance(h, tuple) else h for h in item.hits]
        else:
            query_id, ranked = item[0], list(item[1])
        if query_id not in gold:
            raise MissingGold(f"no gold id for query {query_id!r}")
        target = gold[query_id]
        n += 1
        rank = ranked.index(target) + 1 if target in ranked else None
        if rank is not None:
            reciprocal_sum += 1.0 / rank
            for k in ks:
                if rank <= k:
                    hits_at[k] += 1
    if n == 0:
        return {k: 0.0 for k in ks}, 0.0
    return {k: hits_at[k] / n for k in ks}, reciprocal_sum / n


@dataclass
class EvalReport:
    """One evaluation run in both machine- and table-friendly form."""

    task: str
    hit_at: dict[int, float] = field(default_factory=dict)
    mrr: float = 0.0
    accuracy: float = 0.0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    n_queries: int = 0
    n_fallback: int = 0
    n_failed: int = 0
    threshold: float | None = None

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "hit_at": {str(k): v for k, v in sorted(self.hit_at.items())},
            "mrr": self.mrr,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "n_queries": self.n_queries,
            "n_fallback": self.n_fallback,
            "n_failed": self.n_failed,
            "threshold": self.threshold,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_table(self) -> str:
        """Aligned-column text table."""
        if self.task in ("retrieval", "hn_retrieval"):
            headers = [f"Hit@{k}" for k in sorted(self.hit_at)] + ["MRR"]
            values = [f"{self.hit_at[k]:.3f}" for k in sorted(self.hit_at)] + [
                f"{self.mrr:.3f}"
            ]
        else:
            headers = ["Acc.", "Prec.", "Recall", "F1", "Thr."]
            thr = f"{self.threshold:.3f}" if self.threshold is not None else "-"
            values = [
                f"{self.accuracy:.3f}",
                f"{self.precision:.3f}",
                f"{self.recall:.3f}",
                f"{self.f1:.3f}",
                thr,
            ]
        headers = ["Task"] + headers
        values = [self.task] + values
        widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
        header_row = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
        value_row = "  ".join(v.rjust(w) for v, w in zip(values, widths))
        counts = (
            f"queries: {self.n_queries}  fallback: {self.n_fallback}  "
            f"failed: {self.n_failed}"
        )
        return "\n".join([header_row, value_row, counts])


def evaluate_binary_scores(
    scored_rows: Sequence[tuple[float, int]],
    grid_step: float = DEFAULT_GRID_STEP,
    val_fraction: float = 0.3,
    seed: int = 42,
    n_fallback: int = 0,
    n_failed: int = 0,
) -> EvalReport:
    """Threshold-on-validation binary evaluation of (score, label) rows.

    A seeded fraction of rows serves as validation for the sweep; metrics
    are reported on the remaining rows at the fixed threshold.
    """
    if not 0.0 < val_fraction < 1.0:
        raise RangeError("val_fraction must be in (0, 1)")
    rows = list(scored_rows)
    rng = random.Random(seed)
    rng.shuffle(rows)
    n_val = max(1, int(round(val_fraction * len(rows))))
    val, test = rows[:n_val], rows[n_val:]
    if not test:
        raise SingleClassInput("no rows left for evaluation after the split")
    result = sweep_threshold(val, grid_step)
    preds = [1 if score >= result.threshold else 0 for score, _ in test]
    labels = [label for _, label in test]
    accuracy, precision, recall, f1 = binary_metrics(preds, labels)
    return EvalReport(
        task="binary",
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        n_queries=len(test),
        n_fallback=n_fallback,
        n_failed=n_failed,
        threshold=result.threshold,
    )

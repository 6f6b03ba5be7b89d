"""Same-name pair mining: collision groups, positives, hard negatives.

Entities sharing a case-folded canonical name form a collision group.
Within a group, cross-KG pairs listed in the identity links are positives;
every other same-name pair (cross-KG or within-KG) is a hard negative.
Training mode mines over full dumps; evaluation mode restricts negatives to
the collision groups of the seed-alignment entities and subsamples to a
fixed budget. Leakage filtering removes every training pair that touches an
evaluation entity.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DuplicateId, MalformedRecord
from .model import KG, Entity

logger = logging.getLogger(__name__)

DEFAULT_NEGATIVE_CAP = 50
EVAL_SUBSAMPLE_SEED = 42


class Label(str, Enum):
    POSITIVE = "positive"
    HARD_NEGATIVE = "hard_negative"


class Origin(str, Enum):
    CROSS_KG = "cross_kg"
    WITHIN_KG_A = "within_kg_a"
    WITHIN_KG_B = "within_kg_b"


@dataclass(frozen=True)
class CollisionGroup:
    """Entities sharing one case-folded canonical name, possibly cross-KG."""

    key: str
    members: tuple[Entity, ...]

    @property
    def is_singleton(self) -> bool:
        return len(self.members) == 1


@dataclass(frozen=True)
class AlignmentPair:
    a: Entity
    b: Entity
    label: Label
    origin: Origin

    def key(self) -> tuple[str, str, str, str]:
        return (self.a.kg.value, self.a.id, self.b.kg.value, self.b.id)


@dataclass
class DatasetStats:
    n_pos: int
    n_neg: int
    pos_exact_name_overlap: float
    neg_exact_name_overlap: float
    origin_histogram: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "pos_exact_name_overlap": self.pos_exact_name_overlap,
            "neg_exact_name_overlap": self.neg_exact_name_overlap,
            "origin_histogram": dict(sorted(self.origin_histogram.items())),
        }


class LinkSet:
    """1:1 identity links between KG_A and KG_B entity ids."""

    def __init__(self, links: Iterable[tuple[str, str]]):
        self.a_to_b: dict[str, str] = {}
        self.b_to_a: dict[str, str] = {}
        for a_id, b_id in links:
            if a_id in self.a_to_b or b_id in self.b_to_a:
                raise DuplicateId(f"id reused in identity links: ({a_id}, {b_id})")
            self.a_to_b[a_id] = b_id
            self.b_to_a[b_id] = a_id

    def __len__(self) -> int:
        return len(self.a_to_b)

    def __iter__(self):
        return iter(sorted(self.a_to_b.items()))

    def contains(self, a_id: str, b_id: str) -> bool:
        return self.a_to_b.get(a_id) == b_id

    @property
    def ids(self) -> set[str]:
        """All participating ids, both sides."""
        return set(self.a_to_b) | set(self.b_to_a)


@dataclass
class EvalPairsResult:
    """Evaluation pairs plus the negative-sampling bookkeeping."""

    pairs: list[AlignmentPair]
    negatives_requested: int
    negatives_found: int

    @property
    def shortfall(self) -> int:
        return max(0, self.negatives_requested - self.negatives_found)


def build_collision_groups(entities: Sequence[Entity]) -> list[CollisionGroup]:
    """Partition entities by case-folded canonical name, sorted by key.

    Groups of size 1 are retained; they carry no negatives but their members
    may still participate in evaluation positives.
    """
    by_key: dict[str, list[Entity]] = {}
    seen: set[tuple[str, str]] = set()
    for e in entities:
        ident = (e.kg.value, e.id)
        if ident in seen:
            raise DuplicateId(f"entity listed twice: {ident}")
        seen.add(ident)
        by_key.setdefault(e.name_key, []).append(e)
    groups = []
    for key in sorted(by_key):
        members = tuple(sorted(by_key[key], key=lambda e: (e.kg.value, e.id)))
        groups.append(CollisionGroup(key=key, members=members))
    return groups


def _oriented(x: Entity, y: Entity) -> tuple[Entity, Entity, Origin]:
    """Orient a member pair: KG_A side first for cross-KG, ascending id within."""
    if x.kg != y.kg:
        a, b = (x, y) if x.kg == KG.A else (y, x)
        return a, b, Origin.CROSS_KG
    a, b = (x, y) if x.id <= y.id else (y, x)
    origin = Origin.WITHIN_KG_A if x.kg == KG.A else Origin.WITHIN_KG_B
    return a, b, origin


def generate_training_pairs(
    groups: Sequence[CollisionGroup],
    links: LinkSet,
    cap: int = DEFAULT_NEGATIVE_CAP,
    seed: int = 0,
) -> list[AlignmentPair]:
    """Mine training pairs from full-dump collision groups.

    Cross-KG member pairs present in the links become positives; every other
    same-name pair becomes a hard negative, subsampled per group to ``cap``
    with a seed derived from the group key so groups can be processed
    independently.
    """
    out: list[AlignmentPair] = []
    for group in groups:
        positives: list[AlignmentPair] = []
        negatives: list[AlignmentPair] = []
        for x, y in combinations(group.members, 2):
            a, b, origin = _oriented(x, y)
            if origin is Origin.CROSS_KG and links.contains(a.id, b.id):
                positives.append(AlignmentPair(a, b, Label.POSITIVE, origin))
            else:
                negatives.append(AlignmentPair(a, b, Label.HARD_NEGATIVE, origin))
        if len(negatives) > cap:
            rng = random.Random(f"{seed}:{group.key}")
            negatives = rng.sample(negatives, cap)
            negatives.sort(key=AlignmentPair.key)
        out.extend(positives)
        out.extend(negatives)
    return out


def generate_eval_pairs(
    groups: Sequence[CollisionGroup],
    links: LinkSet,
    seed_entities: set[str],
    n_negatives: int,
    seed: int = EVAL_SUBSAMPLE_SEED,
) -> EvalPairsResult:
    """Build a benchmark: seed-alignment positives plus same-name negatives.

    Positives are the identity links among the seed entities whose both
    members survived cleaning. Negatives are same-name non-link pairs with
    at least one seed-entity side, subsampled uniformly without replacement
    to ``n_negatives`` after sorting candidates by (name key, id pair). A
    shortfall is flagged on the result rather than raised.
    """
    a_side: dict[str, Entity] = {}
    b_side: dict[str, Entity] = {}
    for group in groups:
        for e in group.members:
            (a_side if e.kg == KG.A else b_side)[e.id] = e

    positives: list[AlignmentPair] = []
    for a_id, b_id in links:
        if a_id not in seed_entities or b_id not in seed_entities:
            continue
        a, b = a_side.get(a_id), b_side.get(b_id)
        if a is None or b is None:
            continue
        positives.append(AlignmentPair(a, b, Label.POSITIVE, Origin.CROSS_KG))

    candidates: list[tuple[tuple, AlignmentPair]] = []
    for group in groups:
        for x, y in combinations(group.members, 2):
            a, b, origin = _oriented(x, y)
            if origin is Origin.CROSS_KG and links.contains(a.id, b.id):
                continue
            if a.id not in seed_entities and b.id not in seed_entities:
                continue
            pair = AlignmentPair(a, b, Label.HARD_NEGATIVE, origin)
            candidates.append(((group.key, a.id, b.id), pair))
    candidates.sort(key=lambda item: item[0])

    found = len(candidates)
    if found > n_negatives:
        rng = random.Random(seed)
        chosen = rng.sample(candidates, n_negatives)
        chosen.sort(key=lambda item: item[0])
        negatives = [pair for _, pair in chosen]
    else:
        negatives = [pair for _, pair in candidates]
        if found < n_negatives:
            logger.warning(
                "insufficient hard-negative candidates: requested %d, found %d",
                n_negatives,
                found,
            )
    return EvalPairsResult(
        pairs=positives + negatives,
        negatives_requested=n_negatives,
        negatives_found=len(negatives),
    )


def filter_leakage(
    train: Sequence[AlignmentPair],
    eval_pairs: Sequence[AlignmentPair],
) -> tuple[list[AlignmentPair], int]:
    """Drop every training pair touching any entity that appears in eval.

    Entity-level removal: a training pair is removed when either member's
    (kg, id) occurs anywhere in the evaluation set. Returns the filtered
    list and the removal count.
    """
    eval_ids = set()
    for pair in eval_pairs:
        eval_ids.add((pair.a.kg.value, pair.a.id))
        eval_ids.add((pair.b.kg.value, pair.b.id))
    kept = [
        p
        for p in train
        if (p.a.kg.value, p.a.id) not in eval_ids
        and (p.b.kg.value, p.b.id) not in eval_ids
    ]
    return kept, len(train) - len(kept)


def compute_stats(pairs: Sequence[AlignmentPair]) -> DatasetStats:
    """Exact-name overlap and origin composition of a pair set.

    Overlap is computed on case-folded canonical names, separately for
    positives and negatives; empty classes report a ratio of 0.
    """
    n_pos = n_neg = pos_match = neg_match = 0
    histogram: dict[str, int] = {}
    for pair in pairs:
        match = pair.a.name_key == pair.b.name_key
        if pair.label is Label.POSITIVE:
            n_pos += 1
            pos_match += match
        else:
            n_neg += 1
            neg_match += match
        histogram[pair.origin.value] = histogram.get(pair.origin.value, 0) + 1
    return DatasetStats(
        n_pos=n_pos,
        n_neg=n_neg,
        pos_exact_name_overlap=pos_match / n_pos if n_pos else 0.0,
        neg_exact_name_overlap=neg_match / n_neg if n_neg else 0.0,
        origin_histogram=histogram,
    )


def split_pairs(
    pairs: Sequence[AlignmentPair],
    fractions: Sequence[float],
    seed: int,
) -> list[list[AlignmentPair]]:
    """Seeded shuffle-and-split into len(fractions) parts.

    Fractions must sum to 1 (within rounding); the last part absorbs the
    remainder so every pair lands in exactly one split.
    """
    if not fractions or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    order = list(pairs)
    random.Random(seed).shuffle(order)
    sizes = [int(round(f * len(order))) for f in fractions[:-1]]
    splits: list[list[AlignmentPair]] = []
    start = 0
    for size in sizes:
        splits.append(order[start : start + size])
        start += size
    splits.append(order[start:])
    return splits


# ---------------------------------------------------------------------------
# File formats


def save_pairs(path: str | Path, pairs: Iterable[AlignmentPair]) -> None:
    """Write pairs as JSON-lines `{a_kg, a_id, b_kg, b_id, label, origin}`."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(
                json.dumps(
                    {
                        "a_kg": p.a.kg.value,
                        "a_id": p.a.id,
                        "b_kg": p.b.kg.value,
                        "b_id": p.b.id,
                        "label": p.label.value,
                        "origin": p.origin.value,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_pairs(
    path: str | Path,
    entities: Mapping[tuple[str, str], Entity] | Sequence[Entity],
) -> list[AlignmentPair]:
    """Read a pair file, resolving entity references against a lookup."""
    if not isinstance(entities, Mapping):
        entities = {(e.kg.value, e.id): e for e in entities}
    out: list[AlignmentPair] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            out.append(
                AlignmentPair(
                    a=entities[(d["a_kg"], d["a_id"])],
                    b=entities[(d["b_kg"], d["b_id"])],
                    label=Label(d["label"]),
                    origin=Origin(d["origin"]),
                )
            )
    return out


def entity_lookup(*entity_lists: Sequence[Entity]) -> dict[tuple[str, str], Entity]:
    """Merge entity lists into a (kg, id) -> Entity mapping."""
    lookup: dict[tuple[str, str], Entity] = {}
    for entities in entity_lists:
        for e in entities:
            lookup[(e.kg.value, e.id)] = e
    return lookup


def save_links(path: str | Path, links: LinkSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a_id, b_id in links:
            fh.write(f"{a_id}\t{b_id}\n")


def load_links(path: str | Path) -> LinkSet:
    """Read an identity-link TSV (`a_id \\t b_id` per line)."""
    pairs: list[tuple[str, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise MalformedRecord(f"bad link line: {line!r}")
            pairs.append((fields[0], fields[1]))
    return LinkSet(pairs)

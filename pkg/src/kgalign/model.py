"""Domain types for knowledge-graph entities and their serialized contexts.

An entity is a node from one of two source graphs, carrying a raw label,
a canonical name used for collision grouping, and its deduplicated 1-hop
triples. Entities are immutable once constructed.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

DEFAULT_SERIALIZATION_BUDGET = 1_000

# Trailing parenthetical qualifier: " (...)" at the very end, no nesting.
_TRAILING_PAREN = re.compile(r"^(?P<head>.*\S)\s+\([^()]*\)$", re.DOTALL)
_WHITESPACE_RUN = re.compile(r"\s+")


class KG(str, Enum):
    """Source knowledge graph of an entity."""

    A = "KG_A"
    B = "KG_B"


@dataclass(frozen=True)
class Triple:
    """One 1-hop fact: a predicate label and an object label or literal."""

    relation: str
    tail: str


@dataclass(frozen=True)
class Entity:
    """A KG node with its canonical name and deduplicated 1-hop triples."""

    kg: KG
    id: str
    raw_name: str
    canonical_name: str
    triples: tuple[Triple, ...]

    @property
    def name_key(self) -> str:
        """Case-folded canonical name, the collision-grouping key."""
        return self.canonical_name.casefold()


@dataclass(frozen=True)
class RawRecord:
    """Faithful image of one dump line; no cleaning applied."""

    subject_id: str
    subject_label: str = ""
    relation: str = ""
    object_id_or_literal: str = ""
    object_label: str = ""
    language_tag: str = ""


@dataclass
class CleanReport:
    """Exact counts emitted by one ingestion run."""

    entities_in: int = 0
    rejected_bare_qid: int = 0
    rejected_empty_neighborhood: int = 0
    triples_dropped_unresolved: int = 0
    triples_dropped_non_english: int = 0
    entities_out: int = 0
    malformed_records: int = 0

    def check(self) -> None:
        """Assert the arithmetic identity between in/out counts."""
        expected = (
            self.entities_in
            - self.rejected_bare_qid
            - self.rejected_empty_neighborhood
        )
        if self.entities_out != expected:
            raise AssertionError(
                f"clean report inconsistent: out={self.entities_out}, "
                f"expected {expected}"
            )

    def to_dict(self) -> dict[str, int]:
        return {
            "entities_in": self.entities_in,
            "rejected_bare_qid": self.rejected_bare_qid,
            "rejected_empty_neighborhood": self.rejected_empty_neighborhood,
            "triples_dropped_unresolved": self.triples_dropped_unresolved,
            "triples_dropped_non_english": self.triples_dropped_non_english,
            "entities_out": self.entities_out,
            "malformed_records": self.malformed_records,
        }


def canonicalize_name(raw: str) -> str:
    """Canonicalize an entity label for display and collision grouping.

    Applies compatibility Unicode normalization (NFKC), maps underscores to
    spaces, collapses whitespace runs, trims, and removes one trailing
    parenthetical qualifier such as ``Boston (city)`` -> ``Boston``. Case is
    preserved. The suffix is stripped only when something precedes it and the
    remainder does not itself end in a parenthetical group, which keeps the
    function idempotent. Inner parentheses are never touched.
    """
    text = unicodedata.normalize("NFKC", raw)
    text = text.replace("_", " ")
    text = _WHITESPACE_RUN.sub(" ", text).strip()
    m = _TRAILING_PAREN.match(text)
    if m:
        head = m.group("head")
        if not head.endswith(")"):
            text = head
    return text


def make_entity(
    kg: KG,
    entity_id: str,
    raw_name: str,
    triples: Iterable[tuple[str, str] | Triple],
) -> Entity:
    """Build an Entity, canonicalizing its name and deduplicating triples."""
    deduped: list[Triple] = []
    seen: set[tuple[str, str]] = set()
    for t in triples:
        triple = t if isinstance(t, Triple) else Triple(t[0], t[1])
        key = (triple.relation, triple.tail)
        if key not in seen:
            seen.add(key)
            deduped.append(triple)
    return Entity(
        kg=kg,
        id=entity_id,
        raw_name=raw_name,
        canonical_name=canonicalize_name(raw_name),
        triples=tuple(deduped),
    )


def serialize_entity(e: Entity, budget: int = DEFAULT_SERIALIZATION_BUDGET) -> str:
    """Render ``<name> | <rel1>: <tail1> | ...`` within a character budget.

    Triples are appended in stored order until the next one would exceed the
    budget; the canonical name is always included even when it alone exceeds
    the budget.
    """
    out = e.canonical_name
    for triple in e.triples:
        piece = f" | {triple.relation}: {triple.tail}"
        if len(out) + len(piece) > budget:
            break
        out += piece
    return out


def entity_to_dict(e: Entity) -> dict:
    return {
        "kg": e.kg.value,
        "id": e.id,
        "raw_name": e.raw_name,
        "canonical_name": e.canonical_name,
        "triples": [[t.relation, t.tail] for t in e.triples],
    }


def entity_from_dict(d: dict) -> Entity:
    return Entity(
        kg=KG(d["kg"]),
        id=d["id"],
        raw_name=d["raw_name"],
        canonical_name=d["canonical_name"],
        triples=tuple(Triple(rel, tail) for rel, tail in d["triples"]),
    )


def save_entities(path: str | Path, entities: Iterable[Entity]) -> None:
    """Write an entity store as JSON-lines, one entity per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in entities:
            fh.write(json.dumps(entity_to_dict(e), ensure_ascii=False) + "\n")


def load_entities(path: str | Path) -> list[Entity]:
    """Read an entity store written by :func:`save_entities`."""
    out: list[Entity] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(entity_from_dict(json.loads(line)))
    return out


def iter_entities(path: str | Path) -> Iterator[Entity]:
    """Stream an entity store without materializing it."""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield entity_from_dict(json.loads(line))

"""Stage-1 dump ingestion and cleaning.

Input dumps are UTF-8 TSV, one record per line::

    subject_id \\t subject_label \\t relation \\t object_id_or_literal \\t object_label \\t language_tag

Empty fields are allowed. Cleaning drops non-English triples and triples
whose object is an unresolved opaque identifier, rejects entities whose own
name is a bare opaque identifier, and rejects entities left with no triples.
Literal tails are passed through verbatim.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Iterable

from .errors import MalformedRecord
from .model import KG, CleanReport, Entity, RawRecord, Triple, canonicalize_name

# Unresolved opaque identifier: an uppercase Q followed by digits, as a whole
# token. Configurable for graphs with other id schemes.
DEFAULT_UNRESOLVED_PATTERN = r"^Q\d+$"


def is_english_tag(tag: str) -> bool:
    """True for an absent tag, ``en``, or any ``en-*`` regional variant."""
    tag = tag.strip().casefold()
    return tag == "" or tag == "en" or tag.startswith("en-")


def parse_tsv_line(line: str) -> RawRecord:
    """Parse one dump line into a RawRecord.

    Raises MalformedRecord when the line does not carry at least the
    subject/label/relation/object columns or has trailing extras.
    """
    fields = line.rstrip("\r\n").split("\t")
    if not 4 <= len(fields) <= 6:
        raise MalformedRecord(f"expected 4..6 tab-separated fields, got {len(fields)}")
    fields += [""] * (6 - len(fields))
    return RawRecord(
        subject_id=fields[0].strip(),
        subject_label=fields[1].strip(),
        relation=fields[2].strip(),
        object_id_or_literal=fields[3].strip(),
        object_label=fields[4].strip(),
        language_tag=fields[5].strip(),
    )


def ingest_dump(
    source: Iterable[RawRecord | str],
    kg: KG,
    unresolved_pattern: str = DEFAULT_UNRESOLVED_PATTERN,
) -> tuple[list[Entity], CleanReport]:
    """Group dump records by subject and apply the Stage-1 cleaning rules.

    ``source`` may yield RawRecord values or raw TSV lines; malformed lines
    are counted and skipped, never fatal. Returns the surviving entities
    sorted by id plus a CleanReport with exact counts.
    """
    unresolved = re.compile(unresolved_pattern)
    report = CleanReport()

    # Per-subject state: first-seen non-empty label, ordered unique triples.
    labels: dict[str, str] = {}
    triples: dict[str, list[Triple]] = {}
    seen_pairs: dict[str, set[tuple[str, str]]] = {}

    for item in source:
        if isinstance(item, str):
            if not item.strip():
                continue
            try:
                record = parse_tsv_line(item)
            except MalformedRecord:
                report.malformed_records += 1
                continue
        else:
            record = item
        if not record.subject_id or not record.relation or not record.object_id_or_literal:
            report.malformed_records += 1
            continue

        sid = record.subject_id
        if sid not in triples:
            triples[sid] = []
            seen_pairs[sid] = set()
            labels[sid] = ""
        if not labels[sid] and record.subject_label:
            labels[sid] = record.subject_label

        if not is_english_tag(record.language_tag):
            report.triples_dropped_non_english += 1
            continue
        if not record.object_label and unresolved.match(record.object_id_or_literal):
            report.triples_dropped_unresolved += 1
            continue

        tail = record.object_label or record.object_id_or_literal
        pair = (record.relation, tail)
        if pair not in seen_pairs[sid]:
            seen_pairs[sid].add(pair)
            triples[sid].append(Triple(record.relation, tail))

    report.entities_in = len(triples)
    entities: list[Entity] = []
    for sid in sorted(triples):
        raw_name = labels[sid] or sid
        canonical = canonicalize_name(raw_name)
        # Unusable names (bare opaque ids, or empty after canonicalization)
        # are rejected at the entity level.
        if not canonical or unresolved.match(canonical):
            report.rejected_bare_qid += 1
            continue
        if not triples[sid]:
            report.rejected_empty_neighborhood += 1
            continue
        entities.append(
            Entity(
                kg=kg,
                id=sid,
                raw_name=raw_name,
                canonical_name=canonical,
                triples=tuple(triples[sid]),
            )
        )

    report.entities_out = len(entities)
    report.check()
    return entities, report


def ingest_dump_file(
    path: str | Path,
    kg: KG,
    unresolved_pattern: str = DEFAULT_UNRESOLVED_PATTERN,
) -> tuple[list[Entity], CleanReport]:
    """Ingest a TSV dump from disk; see :func:`ingest_dump`."""
    with open(path, "r", encoding="utf-8") as fh:
        return ingest_dump(fh, kg, unresolved_pattern=unresolved_pattern)

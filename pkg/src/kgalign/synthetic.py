"""Synthetic mini-KG fixtures.

All generators are seeded and deterministic. The common construction: a set
of real-world objects, each present in both graphs (a linked positive pair),
with names drawn from a limited pool so distinct objects collide on names.
Each object lives in a topical domain with its own relation/value
vocabulary; same-name objects sit in different domains, so their 1-hop
neighborhoods are (near-)disjoint while their names are identical. That is
precisely the regime where name-reliant scorers fail and relational scorers
succeed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

from .mining import AlignmentPair, Label, LinkSet, Origin
from .model import KG, CleanReport, Entity, make_entity

_DOMAINS = [
    "music",
    "politics",
    "sport",
    "film",
    "science",
    "geo",
    "novel",
    "ship",
    "comet",
    "opera",
    "bridge",
    "plant",
]


def _domain_triples(
    domain: str, rng: random.Random, count: int
) -> list[tuple[str, str]]:
    """Sample distinct (relation, value) combos from one domain vocabulary."""
    combos = rng.sample(range(6 * 40), count)
    return [
        (f"{domain}_rel{c // 40}", f"{domain}_value{c % 40}") for c in combos
    ]


@dataclass
class SyntheticWorld:
    entities_a: list[Entity]
    entities_b: list[Entity]
    links: LinkSet

    @property
    def all_entities(self) -> list[Entity]:
        return self.entities_a + self.entities_b


def make_world(
    n_objects: int = 600,
    n_names: int = 150,
    seed: int = 0,
    triples_full: int = 10,
    triples_side: int = 7,
) -> SyntheticWorld:
    """Two graphs over ``n_objects`` linked objects with colliding names.

    Names repeat every ``n_names`` objects, so collision groups have about
    ``n_objects / n_names`` objects (twice that in entities). Each object
    draws ``triples_full`` facts from a random domain; the two sides keep
    overlapping windows of ``triples_side`` facts.
    """
    rng = random.Random(seed)
    names = [f"Name {i:04d}" for i in range(n_names)]
    entities_a: list[Entity] = []
    entities_b: list[Entity] = []
    links: list[tuple[str, str]] = []
    for o in range(n_objects):
        name = names[o % n_names]
        domain = rng.choice(_DOMAINS)
        facts = _domain_triples(domain, rng, triples_full)
        a_facts = facts[:triples_side]
        b_facts = facts[len(facts) - triples_side :]
        a_id, b_id = f"a{o:05d}", f"b{o:05d}"
        entities_a.append(
            make_entity(KG.A, a_id, name.replace(" ", "_"), a_facts)
        )
        entities_b.append(make_entity(KG.B, b_id, name, b_facts))
        links.append((a_id, b_id))
    return SyntheticWorld(entities_a, entities_b, LinkSet(links))


def make_benchmark(
    n_pos: int = 500,
    n_neg: int = 500,
    name_overlap: float = 0.95,
    seed: int = 0,
    triples_full: int = 10,
    triples_side: int = 7,
) -> list[AlignmentPair]:
    """A benchmark of positives plus same-name hard negatives.

    Positive names are unique across rows; exactly round(name_overlap *
    n_pos) positives share an exact name across sides, the rest differ by a
    suffix on side A. Negative row j reuses positive row (j mod n_pos)'s
    side-A entity against a fresh side-B entity with the same name but a
    disjoint neighborhood from a different domain. Side-B ids are assigned
    from one shuffled pool so name ties between gold and distractor ids
    break either way.
    """
    if n_neg > 0 and n_pos == 0:
        raise ValueError("negatives require positives to collide with")
    rng = random.Random(seed)
    b_ids = [f"b{i:05d}" for i in range(n_pos + n_neg)]
    rng.shuffle(b_ids)

    n_matched = int(round(name_overlap * n_pos))
    pairs: list[AlignmentPair] = []
    a_entities: list[Entity] = []
    domains_of: list[str] = []
    for i in range(n_pos):
        base = f"Landmark {i:04d}"
        a_name = base if i < n_matched else f"{base} variant"
        domain = rng.choice(_DOMAINS)
        facts = _domain_triples(domain, rng, triples_full)
        a = make_entity(KG.A, f"a{i:05d}", a_name.replace(" ", "_"), facts[:triples_side])
        b = make_entity(KG.B, b_ids[i], a_name, facts[triples_full - triples_side :])
        a_entities.append(a)
        domains_of.append(domain)
        pairs.append(AlignmentPair(a, b, Label.POSITIVE, Origin.CROSS_KG))
    for j in range(n_neg):
        m = j % n_pos
        a = a_entities[m]
        other_domains = [d for d in _DOMAINS if d != domains_of[m]]
        domain = rng.choice(other_domains)
        facts = _domain_triples(domain, rng, triples_side)
        distractor = make_entity(KG.B, b_ids[n_pos + j], a.canonical_name, facts)
        pairs.append(AlignmentPair(a, distractor, Label.HARD_NEGATIVE, Origin.CROSS_KG))
    return pairs


@dataclass
class DumpFixture:
    """Paths and exact expected cleaning counts for a written dump pair."""

    dump_a: Path
    dump_b: Path
    links: Path
    seeds: Path
    expected_report_a: CleanReport = field(default_factory=CleanReport)
    expected_report_b: CleanReport = field(default_factory=CleanReport)
    n_seed_objects: int = 0


def _entity_rows(entity_id: str, label: str, facts: list[tuple[str, str]]) -> list[str]:
    return [f"{entity_id}\t{label}\t{rel}\t{value}\t\t" for rel, value in facts]


def write_dump_fixture(
    out_dir: str | Path,
    seed: int = 0,
    n_objects: int = 120,
    n_names: int = 30,
    n_seed_objects: int = 30,
    bare_qid_entities: tuple[int, int] = (4, 2),
    unresolved_entities: tuple[int, int] = (3, 1),
    extra_unresolved_triples: tuple[int, int] = (5, 2),
    non_english_triples: tuple[int, int] = (6, 3),
    malformed_lines: tuple[int, int] = (2, 1),
    duplicate_triples: tuple[int, int] = (3, 0),
) -> DumpFixture:
    """Write TSV dumps with planted defects plus link and seed files.

    Per-KG plant counts are (dump_a, dump_b) tuples. The returned fixture
    carries the exact CleanReport each ingestion run must produce.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    world = make_world(n_objects=n_objects, n_names=n_names, seed=seed)

    fixture = DumpFixture(
        dump_a=out / "dump_a.tsv",
        dump_b=out / "dump_b.tsv",
        links=out / "links.tsv",
        seeds=out / "seeds.tsv",
        n_seed_objects=n_seed_objects,
    )

    for kg_index, (entities, path, report) in enumerate(
        [
            (world.entities_a, fixture.dump_a, fixture.expected_report_a),
            (world.entities_b, fixture.dump_b, fixture.expected_report_b),
        ]
    ):
        rows: list[str] = []
        healthy: list[str] = []
        for e in entities:
            facts = [(t.relation, t.tail) for t in e.triples]
            healthy.extend(_entity_rows(e.id, e.raw_name, facts))
        report.entities_in += len(entities)
        report.entities_out += len(entities)

        # Entities whose own name is a bare opaque identifier.
        for i in range(bare_qid_entities[kg_index]):
            eid = f"x{kg_index}bare{i:03d}"
            rows.extend(
                _entity_rows(eid, f"Q9{kg_index}{i:04d}", [("geo_rel0", "geo_value0")])
            )
            report.entities_in += 1
            report.rejected_bare_qid += 1

        # Entities left with no triples once unresolved objects are dropped.
        for i in range(unresolved_entities[kg_index]):
            eid = f"x{kg_index}empty{i:03d}"
            n_triples = 2
            rows.extend(
                f"{eid}\tGhost {kg_index}{i:03d}\tship_rel{t}\tQ{77000 + i * 10 + t}\t\t"
                for t in range(n_triples)
            )
            report.entities_in += 1
            report.rejected_empty_neighborhood += 1
            report.triples_dropped_unresolved += n_triples

        # Unresolved triples attached to otherwise healthy entities.
        victims = rng.sample(entities, extra_unresolved_triples[kg_index])
        for i, e in enumerate(victims):
            rows.append(f"{e.id}\t{e.raw_name}\tship_rel5\tQ{88000 + i}\t\t")
            report.triples_dropped_unresolved += 1

        # Non-English triples.
        victims = rng.sample(entities, non_english_triples[kg_index])
        for i, e in enumerate(victims):
            rows.append(f"{e.id}\t{e.raw_name}\topera_rel1\tvaleur {i}\t\tfr")
            report.triples_dropped_non_english += 1

        # Duplicate (relation, tail) rows; deduplicated on ingest.
        victims = rng.sample(entities, duplicate_triples[kg_index])
        for e in victims:
            t = e.triples[0]
            rows.append(f"{e.id}\t{e.raw_name}\t{t.relation}\t{t.tail}\t\t")

        # Lines that cannot be parsed.
        for i in range(malformed_lines[kg_index]):
            rows.append(f"broken{i}\tonly-two-fields" if i % 2 == 0 else "lonefield")
            report.malformed_records += 1

        rng.shuffle(rows)
        with open(path, "w", encoding="utf-8") as fh:
            for line in healthy + rows:
                fh.write(line + "\n")

    with open(fixture.links, "w", encoding="utf-8") as fh:
        for a_id, b_id in world.links:
            fh.write(f"{a_id}\t{b_id}\n")
    seed_objects = rng.sample(range(n_objects), n_seed_objects)
    with open(fixture.seeds, "w", encoding="utf-8") as fh:
        for o in sorted(seed_objects):
            fh.write(f"a{o:05d}\tb{o:05d}\n")
    return fixture

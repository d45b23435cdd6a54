"""Shared fixtures: a small threat-intelligence graph and fixture paths."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import pytest

from cti_graph_toolkit.ontology import Entity, EntityClass, RelationType, Triple

FIXTURES = Path(__file__).parent / "fixtures"


def ent(cls: EntityClass, name: str, mentions: int = 2) -> Entity:
    return Entity.create(name, cls, mention_count=mentions)


def tri(head: Entity, relation: RelationType, tail: Entity, *docs: str) -> Triple:
    return Triple(head.id, relation, tail.id, provenance=frozenset(docs))


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def small_graph():
    """Three malware sharing techniques, an actor, an alias and an indicator."""
    cerberus = ent(EntityClass.MALWARE, "Cerberus")
    anubis = ent(EntityClass.MALWARE, "Anubis")
    flubot = ent(EntityClass.MALWARE, "FluBot")
    alien = ent(EntityClass.MALWARE, "Alien")
    t1 = ent(EntityClass.ATTACK_PATTERN, "T1636")
    t2 = ent(EntityClass.ATTACK_PATTERN, "T1406")
    t3 = ent(EntityClass.ATTACK_PATTERN, "T1417")
    bank = ent(EntityClass.ORGANIZATION, "Santander")
    spain = ent(EntityClass.LOCATION, "Spain")
    actor = ent(EntityClass.THREAT_ACTOR, "TA505")
    domain = ent(EntityClass.INDICATOR, "evil.example.com")

    entities = {e.id: e for e in (cerberus, anubis, flubot, alien, t1, t2, t3,
                                  bank, spain, actor, domain)}
    triples = [
        tri(cerberus, RelationType.USES, t1, "d1"),
        tri(cerberus, RelationType.USES, t2, "d1"),
        tri(cerberus, RelationType.TARGETS, bank, "d1"),
        tri(anubis, RelationType.USES, t1, "d2"),
        tri(anubis, RelationType.USES, t2, "d2"),
        tri(anubis, RelationType.TARGETS, bank, "d2"),
        tri(flubot, RelationType.USES, t3, "d3"),
        tri(flubot, RelationType.TARGETS, spain, "d3"),
        tri(cerberus, RelationType.HAS_ALIAS, alien, "d1"),
        tri(anubis, RelationType.HAS_AUTHOR, actor, "d2"),
        tri(domain, RelationType.INDICATES, flubot, "d3"),
    ]
    return entities, triples


def make_ann(text, spans, relations=()):
    """
    ``.ann`` contents for ``text``.

    ``spans`` are ``(ann_id, label, surface)``; offsets are the first
    occurrence of ``surface``. ``relations`` are ``(ann_id, relation, arg1, arg2)``.
    """
    lines = []
    for ann_id, label, surface in spans:
        start = text.index(surface)
        lines.append(f"{ann_id}\t{label} {start} {start + len(surface)}\t{surface}")
    for ann_id, relation, arg1, arg2 in relations:
        lines.append(f"{ann_id}\t{relation} Arg1:{arg1} Arg2:{arg2}")
    return "".join(line + "\n" for line in lines)


REPORT_TEXT = (
    "In March 2021, researchers found that Cerberus can steal SMS codes. "
    "Cerberus targets Santander customers in Spain. "
    "The sample contacts 203.0.113.7 and exploits CVE-2020-0096."
)

REPORT_SPANS = [
    ("T1", "Malware", "Cerberus"),
    ("T2", "AttackPattern", "steal SMS codes"),
    ("T3", "Organization", "Santander"),
    ("T4", "Location", "Spain"),
]

REPORT_RELATIONS = [
    ("R1", "uses", "T1", "T2"),
    ("R2", "targets", "T1", "T3"),
    ("R3", "targets", "T1", "T4"),
]


@pytest.fixture
def brat_corpus(tmp_path):
    """A one-report BRAT corpus directory."""
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    (corpus / "cerberus.txt").write_text(REPORT_TEXT, encoding="utf-8")
    (corpus / "cerberus.ann").write_text(
        make_ann(REPORT_TEXT, REPORT_SPANS, REPORT_RELATIONS), encoding="utf-8")
    return corpus


def planted_triples(blocks: int = 4, per_block: int = 4):
    """
    A 40-entity graph with block-deterministic tails.

    Malware of one block all use the same three techniques, target the
    same two organizations and have the same location.
    """
    triples = []
    for b in range(blocks):
        techniques = [f"AttackPattern:T{b}{k}" for k in range(3)]
        orgs = [f"Organization:O{b}{k}" for k in range(2)]
        location = f"Location:L{b}"
        for j in range(per_block):
            malware = f"Malware:M{b}{j}"
            triples += [Triple(malware, RelationType.USES, t) for t in techniques]
            triples += [Triple(malware, RelationType.TARGETS, o) for o in orgs]
            triples.append(Triple(malware, RelationType.HAS, location))
    return triples


@pytest.fixture
def planted():
    return planted_triples()

"""
Knowledge Graph
===============

Typed, indexed triple store built from extracted threat intelligence,
with noise cleanup, neighborhood queries and Jaccard similarity between
malware families or threat actors.

Usage:
    >>> from cti_graph_toolkit.kg import build, most_similar
    >>> kg = build(result.triples, result.entities)
    >>> kg.build_log.report()
    >>> most_similar(kg, "Malware:FluBot", k=5)
"""

import hashlib
import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import (
    Dict, FrozenSet, Iterable, List, Mapping, Optional, Set, Tuple, Union,
)

import networkx as nx
from networkx.utils import UnionFind

from .audit import AuditReport, IssueType, Severity
from .config import BuildOptions
from .exceptions import ContractError, DanglingReferenceError, EntityLookupError, ParseError
from .ingest.triples import parse_triple_line, write_triples
from .ontology import (
    Entity,
    EntityClass,
    Mention,
    PlausibilityTable,
    RelationType,
    Triple,
    make_entity_id,
    normalize_alias,
    validate_triple,
)

logger = logging.getLogger(__name__)

GRAPH_FORMAT_VERSION = 1
TRIPLES_FILE = "triples.tsv"
ENTITIES_FILE = "entities.json"

CLEANUP_CLASSES = frozenset({EntityClass.MALWARE, EntityClass.THREAT_ACTOR})

PathLike = Union[str, Path]
TripleKey = Tuple[str, RelationType, str]


def _sort_key(t: Triple) -> Tuple[str, str, str]:
    return (t.head, t.relation.value, t.tail)


# =============================================================================
# KNOWLEDGE GRAPH
# =============================================================================

class KnowledgeGraph:
    """
    Immutable entity store plus triple set, indexed by head, tail and relation.

    Build instances with :func:`build`; the constructor trusts its input.
    """

    def __init__(
        self,
        entities: Mapping[str, Entity],
        triples: Iterable[Triple],
        build_log: Optional[AuditReport] = None,
    ):
        self._entities: Mapping[str, Entity] = MappingProxyType(dict(entities))
        self._triples: Tuple[Triple, ...] = tuple(sorted(triples, key=_sort_key))
        self.build_log = build_log if build_log is not None else AuditReport("kg.build")

        self._by_head: Dict[str, List[Triple]] = defaultdict(list)
        self._by_tail: Dict[str, List[Triple]] = defaultdict(list)
        self._by_relation: Dict[RelationType, List[Triple]] = defaultdict(list)
        for t in self._triples:
            self._by_head[t.head].append(t)
            self._by_tail[t.tail].append(t)
            self._by_relation[t.relation].append(t)

        self.aliases = UnionFind(sorted(self._entities))
        for t in self._by_relation.get(RelationType.HAS_ALIAS, ()):
            self.aliases.union(t.head, t.tail)

    # -- basic access -------------------------------------------------------

    @property
    def entities(self) -> Mapping[str, Entity]:
        return self._entities

    @property
    def triples(self) -> Tuple[Triple, ...]:
        return self._triples

    def __len__(self) -> int:
        return len(self._triples)

    def __contains__(self, entity_id: object) -> bool:
        return entity_id in self._entities

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return dict(self._entities) == dict(other._entities) and self._triples == other._triples

    def __repr__(self) -> str:
        return f"KnowledgeGraph({len(self._entities)} entities, {len(self._triples)} triples)"

    def entity(self, entity_id: str) -> Entity:
        """
        Raises:
            EntityLookupError: If the id is unknown
        """
        try:
            return self._entities[entity_id]
        except KeyError:
            raise EntityLookupError(f"unknown entity: {entity_id}") from None

    def entities_of_class(self, entity_class: EntityClass) -> List[str]:
        return sorted(e.id for e in self._entities.values() if e.entity_class == entity_class)

    def triples_from(self, head: str) -> List[Triple]:
        return list(self._by_head.get(head, ()))

    def triples_to(self, tail: str) -> List[Triple]:
        return list(self._by_tail.get(tail, ()))

    def triples_with(self, relation: RelationType) -> List[Triple]:
        return list(self._by_relation.get(relation, ()))

    def alias_class(self, entity_id: str) -> FrozenSet[str]:
        """All entities linked to ``entity_id`` through chains of ``hasAlias``."""
        self.entity(entity_id)
        root = self.aliases[entity_id]
        return frozenset(e for e in self._entities if self.aliases[e] == root)

    # -- export -------------------------------------------------------------

    def summary(self) -> Dict[str, Dict[str, int]]:
        """Entity counts per class and triple counts per relation."""
        classes = Counter(e.entity_class.value for e in self._entities.values())
        relations = Counter(t.relation.value for t in self._triples)
        return {"entities": dict(sorted(classes.items())),
                "triples": dict(sorted(relations.items()))}

    def content_hash(self) -> str:
        """SHA-256 over a canonical rendering of entities and triples."""
        payload = {
            "entities": [self._entities[k].to_dict() for k in sorted(self._entities)],
            "triples": [
                [t.head, t.relation.value, t.tail, sorted(t.provenance), t.confidence]
                for t in self._triples
            ],
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def to_networkx(self) -> nx.MultiDiGraph:
        """Directed multigraph with ``entity_class`` node and ``relation`` edge attributes."""
        graph = nx.MultiDiGraph()
        for e in self._entities.values():
            graph.add_node(e.id, entity_class=e.entity_class.value, name=e.canonical_name)
        for t in self._triples:
            graph.add_edge(t.head, t.tail, key=t.relation.value, relation=t.relation.value)
        return graph

    def save(self, out_dir: PathLike) -> Path:
        """Write ``triples.tsv`` and ``entities.json`` into ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_triples(self._triples, self._entities, out / TRIPLES_FILE)
        manifest = {
            "format_version": GRAPH_FORMAT_VERSION,
            "content_hash": self.content_hash(),
            "entities": [self._entities[k].to_dict() for k in sorted(self._entities)],
        }
        (out / ENTITIES_FILE).write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return out

    @classmethod
    def load(cls, graph_dir: PathLike) -> "KnowledgeGraph":
        """
        Read a graph written by :meth:`save`.

        Raises:
            ParseError: On a bad entity manifest or triple line
            DanglingReferenceError: If a triple names an entity missing from the manifest
        """
        root = Path(graph_dir)
        try:
            manifest = json.loads((root / ENTITIES_FILE).read_text(encoding="utf-8"))
        except ValueError as exc:
            raise ParseError(f"invalid entity manifest: {exc}", source=ENTITIES_FILE) from exc
        if manifest.get("format_version") != GRAPH_FORMAT_VERSION:
            raise ParseError(
                f"unsupported graph format_version {manifest.get('format_version')}",
                source=ENTITIES_FILE,
            )
        entities = {e["id"]: Entity.from_dict(e) for e in manifest["entities"]}

        triples = []
        lines = (root / TRIPLES_FILE).read_text(encoding="utf-8").splitlines()
        for number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            row = parse_triple_line(line, number)
            try:
                head = make_entity_id(EntityClass.parse(row.head_class), row.head_name)
                tail = make_entity_id(EntityClass.parse(row.tail_class), row.tail_name)
                relation = RelationType.parse(row.relation)
            except ValueError as exc:
                raise ParseError(str(exc), number, TRIPLES_FILE) from exc
            for end in (head, tail):
                if end not in entities:
                    raise DanglingReferenceError(f"{TRIPLES_FILE}:{number}: unknown entity {end}")
            triples.append(Triple(head, relation, tail, frozenset(row.doc_ids), row.confidence))
        return cls(entities, triples)


# =============================================================================
# BUILD
# =============================================================================

def build(
    triples: Iterable[Triple],
    entities: Mapping[str, Entity],
    options: Optional[BuildOptions] = None,
    table: Optional[PlausibilityTable] = None,
) -> KnowledgeGraph:
    """
    Build a knowledge graph.

    Invalid or dangling triples are dropped, ``hasAlias`` triples are
    ordered and all duplicates merged. With cleanup enabled, Malware and
    ThreatActor entities are removed (with their triples) when one of
    their surface forms also names an entity of another class, or when
    they were mentioned only once in the whole corpus. Entities without
    triples are kept. Every drop is recorded in ``build_log``.

    Args:
        triples: Candidate triples
        entities: Entity store the triples refer to
        options: Build options (cleanup on by default)
        table: Plausibility table (defaults to the shipped one)

    Returns:
        KnowledgeGraph
    """
    options = options or BuildOptions()
    log = AuditReport("kg.build")

    merged: Dict[TripleKey, Triple] = {}
    for t in triples:
        try:
            check = validate_triple(t, entities, table)
        except DanglingReferenceError as exc:
            log.add(IssueType.DANGLING_REFERENCE, str(exc), location=str(t))
            continue
        if not check:
            log.add(check.rule or IssueType.INVALID_CLASS_PAIR, check.reason, location=str(t))
            continue
        if t.relation.symmetric:
            t = normalize_alias(t)
        if t.key in merged:
            merged[t.key] = merged[t.key].merged(t)
        else:
            merged[t.key] = t

    kept_entities = dict(entities)
    if options.cleanup:
        removed = _noisy_entities(entities, log)
        for entity_id in removed:
            del kept_entities[entity_id]
        dropped = [k for k in merged if k[0] in removed or k[2] in removed]
        for key in dropped:
            del merged[key]
        if removed:
            logger.info("cleanup removed %d entities and %d triples", len(removed), len(dropped))

    kg = KnowledgeGraph(kept_entities, merged.values(), build_log=log)
    logger.info("built %r", kg)
    return kg


def _noisy_entities(entities: Mapping[str, Entity], log: AuditReport) -> Set[str]:
    classes_by_form: Dict[str, Set[EntityClass]] = defaultdict(set)
    for e in entities.values():
        for form in e.surface_forms:
            classes_by_form[form].add(e.entity_class)

    removed: Set[str] = set()
    for entity_id in sorted(entities):
        e = entities[entity_id]
        if e.entity_class not in CLEANUP_CLASSES:
            continue
        others = sorted(
            c.value for form in e.surface_forms
            for c in classes_by_form[form] if c != e.entity_class
        )
        if others:
            log.add(IssueType.CLASS_CONFLICT,
                    f"'{e.canonical_name}' also appears as {', '.join(sorted(set(others)))}",
                    severity=Severity.WARNING, location=entity_id)
            removed.add(entity_id)
        elif e.mention_count == 1:
            log.add(IssueType.SINGLE_MENTION, f"'{e.canonical_name}' mentioned once",
                    severity=Severity.WARNING, location=entity_id)
            removed.add(entity_id)
    return removed


def primary_malware(mentions: Iterable[Mention]) -> Optional[str]:
    """
    The most-mentioned Malware entity of one document.

    Ties go to the entity mentioned first. Returns None without Malware mentions.

    Example:
        >>> primary_malware([Mention("Anubis", EntityClass.MALWARE, 10),
        ...                  Mention("Cerberus", EntityClass.MALWARE, 40)])
        'Malware:Anubis'
    """
    counts: Counter = Counter()
    first: Dict[str, int] = {}
    for m in mentions:
        if m.entity_class is not EntityClass.MALWARE:
            continue
        counts[m.entity_id] += 1
        first[m.entity_id] = min(first.get(m.entity_id, m.offset), m.offset)
    if not counts:
        return None
    return min(counts, key=lambda e: (-counts[e], first[e], e))


# =============================================================================
# NEIGHBORHOODS AND SIMILARITY
# =============================================================================

OUT, IN, ANY = "out", "in", "any"

NeighborItem = Tuple[RelationType, str, str]


@dataclass(frozen=True)
class NeighborhoodSet:
    """Edges incident to ``owner`` as (relation, direction, neighbor) items."""

    owner: str
    items: FrozenSet[NeighborItem] = frozenset()

    def __len__(self) -> int:
        return len(self.items)

    def union(self, other: "NeighborhoodSet") -> "NeighborhoodSet":
        return NeighborhoodSet(self.owner, self.items | other.items)

    def to_records(self) -> List[Dict[str, str]]:
        return [
            {"relation": r.value, "direction": d, "neighbor": n}
            for r, d, n in sorted(self.items, key=lambda i: (i[0].value, i[1], i[2]))
        ]


def neighborhood(
    kg: KnowledgeGraph, entity_id: str, direction_agnostic: bool = False
) -> NeighborhoodSet:
    """
    Neighborhood of one entity.

    ``hasAlias`` edges are always direction ``out``; with
    ``direction_agnostic`` every direction is ``any``.

    Raises:
        EntityLookupError: If the id is unknown
    """
    kg.entity(entity_id)
    items: Set[NeighborItem] = set()
    for t in kg.triples_from(entity_id):
        direction = ANY if direction_agnostic else OUT
        items.add((t.relation, direction, t.tail))
    for t in kg.triples_to(entity_id):
        direction = ANY if direction_agnostic else (OUT if t.relation.symmetric else IN)
        items.add((t.relation, direction, t.head))
    return NeighborhoodSet(entity_id, frozenset(items))


def jaccard_similarity(
    a: Union[NeighborhoodSet, FrozenSet, Set], b: Union[NeighborhoodSet, FrozenSet, Set]
) -> float:
    """``|a & b| / |a | b|``, 0 when both are empty."""
    sa = a.items if isinstance(a, NeighborhoodSet) else a
    sb = b.items if isinstance(b, NeighborhoodSet) else b
    union = len(sa | sb)
    return len(sa & sb) / union if union else 0.0


def _actor_neighborhood(
    kg: KnowledgeGraph, actor_id: str, direction_agnostic: bool
) -> NeighborhoodSet:
    own = neighborhood(kg, actor_id, direction_agnostic)
    for t in kg.triples_to(actor_id):
        if t.relation is RelationType.HAS_AUTHOR:
            own = own.union(neighborhood(kg, t.head, direction_agnostic))
    return own


def most_similar(
    kg: KnowledgeGraph,
    entity_id: str,
    class_filter: Optional[EntityClass] = None,
    k: int = 10,
    direction_agnostic: bool = False,
) -> List[Tuple[str, float]]:
    """
    Rank other entities by Jaccard similarity of their neighborhoods.

    Threat actors are compared on their own neighborhood plus those of the
    malware that name them via ``hasAuthor``.

    Args:
        kg: Knowledge graph
        entity_id: Query entity
        class_filter: Candidate class (default: the query's class)
        k: Number of results
        direction_agnostic: Ignore edge direction

    Returns:
        (entity id, similarity) pairs, best first, ties by id

    Raises:
        EntityLookupError: If the id is unknown
        ContractError: If ``k < 1``
    """
    if k < 1:
        raise ContractError("k must be >= 1")
    query = kg.entity(entity_id)
    target_class = class_filter or query.entity_class

    def hood(eid: str) -> NeighborhoodSet:
        if kg.entity(eid).entity_class is EntityClass.THREAT_ACTOR:
            return _actor_neighborhood(kg, eid, direction_agnostic)
        return neighborhood(kg, eid, direction_agnostic)

    anchor = hood(entity_id)
    scored = [
        (cand, jaccard_similarity(anchor, hood(cand)))
        for cand in kg.entities_of_class(target_class)
        if cand != entity_id
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]


def query_tails(kg: KnowledgeGraph, head: str, relation: RelationType) -> Set[str]:
    """
    Stored tails of ``<head, relation, ?>``; ``hasAlias`` answers both orientations.

    Raises:
        EntityLookupError: If the head is unknown
    """
    kg.entity(head)
    tails = {t.tail for t in kg.triples_from(head) if t.relation is relation}
    if relation.symmetric:
        tails |= {t.head for t in kg.triples_to(head) if t.relation is relation}
    return tails


# =============================================================================
# AUDIT
# =============================================================================

def audit_graph(kg: KnowledgeGraph, table: Optional[PlausibilityTable] = None) -> AuditReport:
    """
    Check graph-wide invariants: endpoints exist, every triple is valid,
    no duplicate after alias ordering, and indices agree with the triple set.
    """
    report = AuditReport("kg.audit")
    seen: Set[TripleKey] = set()
    for t in kg.triples:
        try:
            check = validate_triple(t, kg.entities, table)
        except DanglingReferenceError as exc:
            report.add(IssueType.DANGLING_REFERENCE, str(exc), location=str(t))
            continue
        if not check:
            report.add(check.rule or IssueType.INVALID_CLASS_PAIR, check.reason, location=str(t))
        key = normalize_alias(t).key if t.relation.symmetric else t.key
        if key in seen:
            report.add(IssueType.DUPLICATE_TRIPLE, "duplicate fact", location=str(t))
        seen.add(key)

    expected = set(kg.triples)
    for name, index in (("head", kg._by_head), ("tail", kg._by_tail),
                        ("relation", kg._by_relation)):
        indexed = [t for bucket in index.values() for t in bucket]
        if len(indexed) != len(expected) or set(indexed) != expected:
            report.add(IssueType.INDEX_MISMATCH, f"{name} index disagrees with triple set")
    for head, bucket in kg._by_head.items():
        if any(t.head != head for t in bucket):
            report.add(IssueType.INDEX_MISMATCH, "head index misfiled", location=head)
    for tail, bucket in kg._by_tail.items():
        if any(t.tail != tail for t in bucket):
            report.add(IssueType.INDEX_MISMATCH, "tail index misfiled", location=tail)
    return report

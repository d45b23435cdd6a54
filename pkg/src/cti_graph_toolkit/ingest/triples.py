"""
Triple Files
============

Loading and writing tab-separated triple files, with entity interning and
ontology validation. Bad lines are reported, never fatal.

Line format (trailing fields optional)::

    head_name <TAB> head_class <TAB> relation <TAB> tail_name <TAB> tail_class
        [<TAB> doc_id[,doc_id...] [<TAB> confidence]]

Usage:
    >>> from cti_graph_toolkit.ingest.triples import parse_triples
    >>> result = parse_triples("triples.tsv")
    >>> len(result.triples), len(result.rejected)
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

from ..audit import AuditReport, IssueType, Severity
from ..exceptions import ParseError
from ..ontology import (
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

PathLike = Union[str, Path]


@dataclass(frozen=True)
class TripleRow:
    """One unvalidated triple record, names and classes as written."""

    head_name: str
    head_class: str
    relation: str
    tail_name: str
    tail_class: str
    doc_ids: Tuple[str, ...] = ()
    confidence: Optional[float] = None
    line_number: Optional[int] = None

    def to_line(self) -> str:
        fields = [self.head_name, self.head_class, self.relation,
                  self.tail_name, self.tail_class, ",".join(self.doc_ids)]
        if self.confidence is not None:
            fields.append(repr(self.confidence))
        return "\t".join(fields)


def parse_triple_line(line: str, line_number: Optional[int] = None) -> TripleRow:
    """
    Split one TSV line into a :class:`TripleRow`.

    Raises:
        ParseError: On a wrong field count, an empty name or a bad confidence
    """
    fields = line.rstrip("\r\n").split("\t")
    if not 5 <= len(fields) <= 7:
        raise ParseError(f"expected 5-7 tab-separated fields, got {len(fields)}",
                         line_number=line_number)
    fields = [f.strip() for f in fields]
    if not fields[0] or not fields[3]:
        raise ParseError("empty entity name", line_number=line_number)

    doc_ids: Tuple[str, ...] = ()
    if len(fields) >= 6 and fields[5]:
        doc_ids = tuple(d.strip() for d in fields[5].split(",") if d.strip())

    confidence = None
    if len(fields) == 7 and fields[6]:
        try:
            confidence = float(fields[6])
        except ValueError:
            raise ParseError(f"bad confidence '{fields[6]}'", line_number=line_number) from None
        if not (math.isfinite(confidence) and 0.0 <= confidence <= 1.0):
            raise ParseError(f"confidence out of [0, 1]: {fields[6]}", line_number=line_number)

    return TripleRow(
        head_name=fields[0], head_class=fields[1], relation=fields[2],
        tail_name=fields[3], tail_class=fields[4],
        doc_ids=doc_ids, confidence=confidence, line_number=line_number,
    )


# =============================================================================
# ENTITY REGISTRY
# =============================================================================

class EntityRegistry:
    """
    Interns entities by (canonical name, class) and counts their mentions.

    Example:
        >>> reg = EntityRegistry()
        >>> reg.intern("Cerberus", EntityClass.MALWARE)
        'Malware:Cerberus'
        >>> reg["Malware:Cerberus"].mention_count
        1
    """

    def __init__(self, entities: Optional[Mapping[str, Entity]] = None):
        self._entities: Dict[str, Entity] = dict(entities or {})

    def intern(
        self,
        name: str,
        entity_class: EntityClass,
        mentions: int = 1,
        surface_form: Optional[str] = None,
    ) -> str:
        """Register (or re-count) an entity and return its id."""
        entity_id = make_entity_id(entity_class, name)
        forms = {surface_form} if surface_form else set()
        current = self._entities.get(entity_id)
        if current is None:
            self._entities[entity_id] = Entity(
                id=entity_id, canonical_name=name, entity_class=entity_class,
                surface_forms=frozenset(forms), mention_count=mentions,
            )
        else:
            self._entities[entity_id] = Entity(
                id=entity_id, canonical_name=current.canonical_name,
                entity_class=entity_class,
                surface_forms=current.surface_forms | forms,
                mention_count=current.mention_count + mentions,
            )
        return entity_id

    def add_mentions(self, mentions: Iterable[Mention]) -> None:
        for m in mentions:
            self.intern(m.name, m.entity_class)

    def get(self, entity_id: str) -> Optional[Entity]:
        return self._entities.get(entity_id)

    def __getitem__(self, entity_id: str) -> Entity:
        return self._entities[entity_id]

    def __contains__(self, entity_id: object) -> bool:
        return entity_id in self._entities

    def __len__(self) -> int:
        return len(self._entities)

    def entities(self) -> Dict[str, Entity]:
        """Snapshot of all entities keyed by id."""
        return dict(self._entities)


# =============================================================================
# PARSING
# =============================================================================

@dataclass
class ParseResult:
    """Valid triples in first-seen order, their entities, and rejected lines."""

    triples: List[Triple] = field(default_factory=list)
    entities: Dict[str, Entity] = field(default_factory=dict)
    rejected: AuditReport = field(default_factory=lambda: AuditReport("parse_triples"))


def rows_to_triples(
    rows: Iterable[TripleRow],
    registry: Optional[EntityRegistry] = None,
    table: Optional[PlausibilityTable] = None,
    source: str = "<rows>",
    count_mentions: bool = True,
) -> ParseResult:
    """
    Validate rows and intern their entities.

    Each accepted row counts one mention for its head and tail unless
    ``count_mentions`` is False (mentions were counted elsewhere).
    Duplicate facts merge provenance; ``hasAlias`` facts are ordered first.
    """
    registry = registry if registry is not None else EntityRegistry()
    result = ParseResult()
    report = result.rejected
    merged: Dict[Tuple[str, RelationType, str], Triple] = {}

    for row in rows:
        where = f"{source}:{row.line_number}" if row.line_number else source
        try:
            relation = RelationType.parse(row.relation)
        except ValueError:
            report.add(IssueType.UNKNOWN_RELATION,
                       f"unknown relation '{row.relation}'", location=where)
            continue
        try:
            head_cls = EntityClass.parse(row.head_class)
            tail_cls = EntityClass.parse(row.tail_class)
        except ValueError as exc:
            report.add(IssueType.UNKNOWN_CLASS, str(exc), location=where)
            continue

        head = Entity.create(row.head_name, head_cls)
        tail = Entity.create(row.tail_name, tail_cls)
        triple = Triple(head.id, relation, tail.id,
                        provenance=frozenset(row.doc_ids), confidence=row.confidence)
        check = validate_triple(triple, {head.id: head, tail.id: tail}, table)
        if not check:
            report.add(check.rule or IssueType.INVALID_CLASS_PAIR, check.reason,
                       location=where)
            continue

        mentions = 1 if count_mentions else 0
        registry.intern(row.head_name, head_cls, mentions)
        registry.intern(row.tail_name, tail_cls, mentions)
        if relation.symmetric:
            triple = normalize_alias(triple)
        if triple.key in merged:
            merged[triple.key] = merged[triple.key].merged(triple)
        else:
            merged[triple.key] = triple

    result.triples = list(merged.values())
    result.entities = registry.entities()
    logger.info("%s: %d triples, %d rejected", source, len(result.triples), len(report))
    return result


def parse_triples(
    path: PathLike,
    table: Optional[PlausibilityTable] = None,
    registry: Optional[EntityRegistry] = None,
) -> ParseResult:
    """
    Load a TSV triple file.

    Blank lines and lines starting with ``#`` are skipped. Malformed or
    invalid lines land in ``ParseResult.rejected``.

    Args:
        path: TSV file
        table: Plausibility table (defaults to the shipped one)
        registry: Registry to extend, e.g. across several files

    Returns:
        ParseResult

    Raises:
        OSError: If the file cannot be read
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    rows: List[TripleRow] = []
    malformed = AuditReport("parse_triples")
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            rows.append(parse_triple_line(line, number))
        except ParseError as exc:
            malformed.add(IssueType.MALFORMED_LINE, str(exc),
                          location=f"{path.name}:{number}")

    result = rows_to_triples(rows, registry=registry, table=table, source=path.name)
    malformed.extend(result.rejected)
    malformed.issues.sort(key=lambda i: _line_of(i.location))
    result.rejected = malformed
    return result


def _line_of(location: Optional[str]) -> int:
    if not location or ":" not in location:
        return 0
    tail = location.rsplit(":", 1)[1]
    return int(tail) if tail.isdigit() else 0


def write_triples(
    triples: Iterable[Triple],
    entities: Mapping[str, Entity],
    path: PathLike,
) -> Path:
    """Write triples in the TSV format read by :func:`parse_triples`."""
    path = Path(path)
    lines = []
    for t in triples:
        head, tail = entities[t.head], entities[t.tail]
        lines.append(TripleRow(
            head_name=head.canonical_name, head_class=head.entity_class.value,
            relation=t.relation.value,
            tail_name=tail.canonical_name, tail_class=tail.entity_class.value,
            doc_ids=tuple(sorted(t.provenance)), confidence=t.confidence,
        ).to_line())
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path

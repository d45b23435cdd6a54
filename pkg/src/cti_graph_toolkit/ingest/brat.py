"""
BRAT Standoff Annotations
=========================

Reader and writer for BRAT ``.txt``/``.ann`` pairs: T-lines become entity
or attack-pattern spans, R-lines become typed relations.

Usage:
    >>> from cti_graph_toolkit.ingest.brat import parse_brat, to_ann
    >>> doc = parse_brat("report.txt", "report.ann")
    >>> [s.text for s in doc.entity_spans]
    >>> to_ann(doc)
"""

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

from ..exceptions import ParseError
from ..ontology import EntityClass, Mention, RelationType
from .documents import Document, extract_date
from .triples import TripleRow

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Technique resolver: attack-pattern phrase -> technique id, or None if unmapped.
PhraseResolver = Callable[[str], Optional[str]]


@dataclass(frozen=True)
class EntitySpan:
    """Annotated mention of a named entity."""

    ann_id: str
    start: int
    end: int
    entity_class: EntityClass
    text: str

    @property
    def span(self) -> Tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class AttackPatternSpan:
    """Annotated attack-pattern description."""

    ann_id: str
    start: int
    end: int
    text: str

    @property
    def span(self) -> Tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class Relation:
    """Binary relation between two annotations, by annotation id."""

    ann_id: str
    relation: RelationType
    arg1: str
    arg2: str


@dataclass
class AnnotatedDocument:
    """A document with its entity spans, attack-pattern spans and relations."""

    document: Document
    entity_spans: List[EntitySpan] = field(default_factory=list)
    attack_pattern_spans: List[AttackPatternSpan] = field(default_factory=list)
    relations: List[Relation] = field(default_factory=list)

    def span_by_id(self, ann_id: str) -> Union[EntitySpan, AttackPatternSpan]:
        for span in self.entity_spans:
            if span.ann_id == ann_id:
                return span
        for ap in self.attack_pattern_spans:
            if ap.ann_id == ann_id:
                return ap
        raise KeyError(ann_id)

    def mentions(self) -> List[Mention]:
        """Entity mentions in text order."""
        ordered = sorted(self.entity_spans, key=lambda s: (s.start, s.end))
        return [
            Mention(s.text, s.entity_class, s.start, self.document.id)
            for s in ordered
        ]


# =============================================================================
# PARSING
# =============================================================================

_T_LINE = re.compile(
    r"^(?P<id>T\d+)\s+(?P<label>\S+)\s+"
    r"(?P<offsets>\d+\s+\d+(?:;\d+\s+\d+)*)(?:[\t ](?P<text>.*))?$"
)
_R_LINE = re.compile(
    r"^(?P<id>R\d+)\s+(?P<rel>\S+)\s+Arg1:(?P<a1>\S+)\s+Arg2:(?P<a2>\S+)\s*$"
)
_SKIPPED_PREFIXES = ("A", "M", "N", "#", "E", "*")

_ATTACK_PATTERN_LABEL = "attackpattern"


def _is_attack_pattern(label: str) -> bool:
    return "".join(ch for ch in label.lower() if ch not in " _-") == _ATTACK_PATTERN_LABEL


def parse_brat_text(
    text: str,
    ann: str,
    doc_id: str = "doc",
    source: str = "<ann>",
) -> AnnotatedDocument:
    """
    Parse BRAT annotations given as strings.

    Args:
        text: Document text the offsets refer to
        ann: Contents of the ``.ann`` file
        doc_id: Id for the resulting document
        source: Label used in error messages

    Returns:
        AnnotatedDocument

    Raises:
        ParseError: On a malformed line, an unknown label or relation, an
            offset whose text does not match, a dangling relation argument,
            or overlapping spans other than an attack pattern containing an
            entity
    """
    doc = AnnotatedDocument(
        document=Document(id=doc_id, body=text, published_year=extract_date(text))
    )
    lines_of: Dict[str, int] = {}
    pending: List[Tuple[int, re.Match]] = []

    for number, raw in enumerate(ann.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        if line.startswith("T"):
            match = _T_LINE.match(line)
            if match is None:
                raise ParseError(f"malformed T-line: {line!r}", number, source)
            _add_span(doc, match, text, number, source)
            lines_of[match["id"]] = number
        elif line.startswith("R"):
            match = _R_LINE.match(line)
            if match is None:
                raise ParseError(f"malformed R-line: {line!r}", number, source)
            pending.append((number, match))
        elif line.startswith(_SKIPPED_PREFIXES):
            continue
        else:
            raise ParseError(f"unrecognized annotation line: {line!r}", number, source)

    for number, match in pending:
        try:
            relation = RelationType.parse(match["rel"])
        except ValueError:
            raise ParseError(f"unknown relation '{match['rel']}'", number, source) from None
        for arg in (match["a1"], match["a2"]):
            if arg not in lines_of:
                raise ParseError(f"relation argument {arg} is not defined", number, source)
        doc.relations.append(Relation(match["id"], relation, match["a1"], match["a2"]))

    _check_overlaps(doc, lines_of, source)
    logger.debug(
        "%s: %d entities, %d attack patterns, %d relations", source,
        len(doc.entity_spans), len(doc.attack_pattern_spans), len(doc.relations),
    )
    return doc


def _add_span(
    doc: AnnotatedDocument, match: re.Match, text: str, number: int, source: str
) -> None:
    fragments = []
    for part in match["offsets"].split(";"):
        start, end = (int(x) for x in part.split())
        if not 0 <= start < end <= len(text):
            raise ParseError(f"offsets {start}-{end} out of bounds", number, source)
        fragments.append((start, end))
    # discontinuous text is written with fragments joined by a space
    expected = " ".join(text[s:e] for s, e in fragments)
    written = match["text"] if match["text"] is not None else ""
    if written != expected:
        raise ParseError(
            f"offset text mismatch: annotated {written!r}, document has {expected!r}",
            number, source,
        )

    start, end = fragments[0][0], fragments[-1][1]
    label = match["label"]
    if _is_attack_pattern(label):
        doc.attack_pattern_spans.append(
            AttackPatternSpan(match["id"], start, end, text[start:end])
        )
        return
    try:
        entity_class = EntityClass.parse(label)
    except ValueError:
        raise ParseError(f"unknown label '{label}'", number, source) from None
    doc.entity_spans.append(
        EntitySpan(match["id"], start, end, entity_class, text[start:end])
    )


def _check_overlaps(doc: AnnotatedDocument, lines_of: Dict[str, int], source: str) -> None:
    spans = [(s.start, s.end, s.ann_id, False) for s in doc.entity_spans]
    spans += [(s.start, s.end, s.ann_id, True) for s in doc.attack_pattern_spans]
    spans.sort()
    for i, (s1, e1, id1, ap1) in enumerate(spans):
        for s2, e2, id2, ap2 in spans[i + 1:]:
            if s2 >= e1:
                break
            contained = (ap1 and not ap2 and e2 <= e1) or (
                ap2 and not ap1 and s2 == s1 and e1 <= e2
            )
            if not contained:
                number = max(lines_of[id1], lines_of[id2])
                raise ParseError(f"spans {id1} and {id2} overlap", number, source)


def parse_brat(text_file: PathLike, ann_file: PathLike) -> AnnotatedDocument:
    """
    Parse a BRAT ``.txt``/``.ann`` pair; the document id is the file stem.

    Raises:
        OSError: If either file cannot be read
        ParseError: See :func:`parse_brat_text`
    """
    text_path, ann_path = Path(text_file), Path(ann_file)
    text = text_path.read_text(encoding="utf-8")
    ann = ann_path.read_text(encoding="utf-8")
    return parse_brat_text(text, ann, doc_id=text_path.stem, source=ann_path.name)


# =============================================================================
# WRITING
# =============================================================================

def to_ann(doc: AnnotatedDocument) -> str:
    """Serialize annotations back to ``.ann`` text (entities, attack patterns, relations)."""
    lines = [
        f"{s.ann_id}\t{s.entity_class.value} {s.start} {s.end}\t{s.text}"
        for s in doc.entity_spans
    ]
    lines += [
        f"{s.ann_id}\tAttackPattern {s.start} {s.end}\t{s.text}"
        for s in doc.attack_pattern_spans
    ]
    lines += [
        f"{r.ann_id}\t{r.relation.value} Arg1:{r.arg1} Arg2:{r.arg2}"
        for r in doc.relations
    ]
    return "".join(line + "\n" for line in lines)


def to_triple_rows(
    doc: AnnotatedDocument,
    resolver: Optional[PhraseResolver] = None,
) -> List[TripleRow]:
    """
    Turn annotated relations into triple rows.

    Attack-pattern arguments are replaced by ``resolver(phrase)``; a phrase
    the resolver cannot map drops its relation. Without a resolver the
    phrase text itself is used as the entity name.
    """
    rows = []
    for rel in doc.relations:
        ends = []
        for arg in (rel.arg1, rel.arg2):
            span = doc.span_by_id(arg)
            if isinstance(span, AttackPatternSpan):
                name = resolver(span.text) if resolver else span.text
                ends.append((name, EntityClass.ATTACK_PATTERN.value))
            else:
                ends.append((span.text, span.entity_class.value))
        if any(name is None for name, _ in ends):
            logger.debug("dropping %s: unmapped attack pattern", rel.ann_id)
            continue
        (head, head_cls), (tail, tail_cls) = ends
        rows.append(TripleRow(
            head_name=head, head_class=head_cls, relation=rel.relation.value,
            tail_name=tail, tail_class=tail_cls, doc_ids=(doc.document.id,),
        ))
    return rows

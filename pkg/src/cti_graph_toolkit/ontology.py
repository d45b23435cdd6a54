"""
Threat-Intelligence Ontology
============================

Entity classes, relation types, and the table of which
(head class, relation, tail class) combinations may be stored.

Usage:
    >>> from cti_graph_toolkit.ontology import EntityClass, plausible_relations
    >>> plausible_relations(EntityClass.MALWARE, EntityClass.ATTACK_PATTERN)
    frozenset({<RelationType.USES: 'uses'>})
"""

import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, Mapping, Optional, Tuple, Union

from .audit import IssueType
from .exceptions import ConfigurationError, ContractError, DanglingReferenceError

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"
PLAUSIBILITY_FILE = DATA_DIR / "plausibility.json"
PLAUSIBILITY_FORMAT_VERSION = 1


class EntityClass(Enum):
    """Node classes of the knowledge graph."""
    MALWARE = "Malware"
    MALWARE_TYPE = "MalwareType"
    APPLICATION = "Application"
    OS = "OS"
    ORGANIZATION = "Organization"
    PERSON = "Person"
    TIME = "Time"
    THREAT_ACTOR = "ThreatActor"
    LOCATION = "Location"
    ATTACK_PATTERN = "AttackPattern"
    # IoCs and CVE ids
    INDICATOR = "Indicator"
    VULNERABILITY = "Vulnerability"

    @classmethod
    def parse(cls, label: str) -> "EntityClass":
        """
        Resolve a class from its stable name or a common annotation label.

        Raises:
            ValueError: If the label names no class
        """
        key = _normalize_label(label)
        if key in _CLASS_LABELS:
            return _CLASS_LABELS[key]
        raise ValueError(f"unknown entity class: '{label}'")


class RelationType(Enum):
    """Edge types; ``noRelation`` is a validation outcome, never stored."""
    IS_A = "isA"
    TARGETS = "targets"
    USES = "uses"
    HAS_AUTHOR = "hasAuthor"
    HAS_ALIAS = "hasAlias"
    INDICATES = "indicates"
    DISCOVERED_IN = "discoveredIn"
    EXPLOITS = "exploits"
    VARIANT_OF = "variantOf"
    HAS = "has"
    NO_RELATION = "noRelation"

    @classmethod
    def parse(cls, name: str) -> "RelationType":
        """
        Resolve a relation by name, ignoring case and ``_``/``-``/space.

        Raises:
            ValueError: If the name is not a relation
        """
        key = _normalize_label(name)
        for rel in cls:
            if _normalize_label(rel.value) == key:
                return rel
        raise ValueError(f"unknown relation: '{name}'")

    @property
    def symmetric(self) -> bool:
        return self is RelationType.HAS_ALIAS


def _normalize_label(label: str) -> str:
    return "".join(ch for ch in label.lower() if ch not in " _-")


_CLASS_LABELS: Dict[str, EntityClass] = {
    _normalize_label(c.value): c for c in EntityClass
}
_CLASS_LABELS.update({
    "operatingsystem": EntityClass.OS,
    "org": EntityClass.ORGANIZATION,
    "actor": EntityClass.THREAT_ACTOR,
    "date": EntityClass.TIME,
    "ioc": EntityClass.INDICATOR,
    "cve": EntityClass.VULNERABILITY,
    "attack": EntityClass.ATTACK_PATTERN,
})


def make_entity_id(entity_class: EntityClass, name: str) -> str:
    """Stable entity id: ``"<Class>:<canonical name>"``."""
    return f"{entity_class.value}:{name}"


# =============================================================================
# ENTITIES AND TRIPLES
# =============================================================================

@dataclass(frozen=True)
class Entity:
    """
    A typed node.

    Attributes:
        id: Unique identifier (see :func:`make_entity_id`)
        canonical_name: Display name; always one of ``surface_forms``
        entity_class: Node class
        surface_forms: All spellings seen for this entity
        mention_count: Corpus-wide number of mentions
    """

    id: str
    canonical_name: str
    entity_class: EntityClass
    surface_forms: FrozenSet[str] = frozenset()
    mention_count: int = 1

    def __post_init__(self):
        if self.mention_count < 0:
            raise ContractError("mention_count must be non-negative")
        forms = frozenset(self.surface_forms) | {self.canonical_name}
        object.__setattr__(self, "surface_forms", forms)

    @classmethod
    def create(
        cls,
        name: str,
        entity_class: EntityClass,
        mention_count: int = 1,
        surface_forms: Iterable[str] = (),
    ) -> "Entity":
        """Create an entity with an id derived from class and name."""
        return cls(
            id=make_entity_id(entity_class, name),
            canonical_name=name,
            entity_class=entity_class,
            surface_forms=frozenset(surface_forms),
            mention_count=mention_count,
        )

    def merged(self, other: "Entity") -> "Entity":
        """Combine two records of the same entity; mention counts add up."""
        if other.id != self.id:
            raise ContractError(f"cannot merge {self.id} with {other.id}")
        return replace(
            self,
            surface_forms=self.surface_forms | other.surface_forms,
            mention_count=self.mention_count + other.mention_count,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "canonical_name": self.canonical_name,
            "entity_class": self.entity_class.value,
            "surface_forms": sorted(self.surface_forms),
            "mention_count": self.mention_count,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Entity":
        return cls(
            id=data["id"],
            canonical_name=data["canonical_name"],
            entity_class=EntityClass(data["entity_class"]),
            surface_forms=frozenset(data.get("surface_forms", ())),
            mention_count=int(data.get("mention_count", 1)),
        )


@dataclass(frozen=True)
class Mention:
    """One occurrence of a named entity in a document."""

    name: str
    entity_class: EntityClass
    offset: int
    doc_id: Optional[str] = None

    @property
    def entity_id(self) -> str:
        return make_entity_id(self.entity_class, self.name)


@dataclass(frozen=True)
class Triple:
    """A ``<head, relation, tail>`` fact with provenance."""

    head: str
    relation: RelationType
    tail: str
    provenance: FrozenSet[str] = frozenset()
    confidence: Optional[float] = None

    def __post_init__(self):
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ContractError(
                f"confidence must lie in [0, 1], got {self.confidence}"
            )
        object.__setattr__(self, "provenance", frozenset(self.provenance))

    @property
    def key(self) -> Tuple[str, RelationType, str]:
        """Identity of the fact, ignoring provenance and confidence."""
        return (self.head, self.relation, self.tail)

    def merged(self, other: "Triple") -> "Triple":
        """Union provenance of two copies of the same fact."""
        if other.key != self.key:
            raise ContractError("cannot merge different triples")
        confidences = [c for c in (self.confidence, other.confidence) if c is not None]
        return replace(
            self,
            provenance=self.provenance | other.provenance,
            confidence=max(confidences) if confidences else None,
        )

    def __str__(self) -> str:
        return f"<{self.head}, {self.relation.value}, {self.tail}>"


# =============================================================================
# PLAUSIBILITY TABLE
# =============================================================================

ClassPair = Tuple[EntityClass, EntityClass]


@dataclass(frozen=True)
class PlausibilityTable:
    """Map from (head class, tail class) to the relations allowed between them."""

    rules: Mapping[ClassPair, FrozenSet[RelationType]] = field(default_factory=dict)
    format_version: int = PLAUSIBILITY_FORMAT_VERSION

    def relations(self, head: EntityClass, tail: EntityClass) -> FrozenSet[RelationType]:
        return self.rules.get((head, tail), frozenset())

    def tail_classes(
        self, head: EntityClass, relation: RelationType
    ) -> FrozenSet[EntityClass]:
        """Tail classes a head class may reach through ``relation``."""
        return frozenset(
            tail for (h, tail), rels in self.rules.items()
            if h == head and relation in rels
        )

    def tail_classes_for(self, relation: RelationType) -> FrozenSet[EntityClass]:
        """Tail classes reachable through ``relation`` from any head class."""
        return frozenset(
            tail for (_, tail), rels in self.rules.items() if relation in rels
        )

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PlausibilityTable":
        """
        Parse ``{"format_version": 1, "rules": [{head, tail, relations}]}``.

        Raises:
            ConfigurationError: On an unknown version, class or relation
        """
        version = data.get("format_version")
        if version != PLAUSIBILITY_FORMAT_VERSION:
            raise ConfigurationError(
                f"unsupported plausibility format_version: {version}"
            )
        rules: Dict[ClassPair, FrozenSet[RelationType]] = {}
        try:
            for rule in data["rules"]:
                pair = (EntityClass.parse(rule["head"]), EntityClass.parse(rule["tail"]))
                rels = frozenset(RelationType.parse(r) for r in rule["relations"])
                if RelationType.NO_RELATION in rels:
                    raise ConfigurationError("noRelation cannot be a stored relation")
                rules[pair] = rules.get(pair, frozenset()) | rels
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"invalid plausibility table: {exc}") from exc
        return cls(rules=rules, format_version=version)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "PlausibilityTable":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigurationError(f"cannot read plausibility table {path}: {exc}") from exc
        table = cls.from_dict(data)
        logger.debug("loaded %d plausibility rules from %s", len(table.rules), path)
        return table

    def to_dict(self) -> Dict[str, Any]:
        rules = [
            {
                "head": h.value,
                "tail": t.value,
                "relations": sorted(r.value for r in rels),
            }
            for (h, t), rels in sorted(
                self.rules.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)
            )
        ]
        return {"format_version": self.format_version, "rules": rules}


@lru_cache(maxsize=1)
def default_table() -> PlausibilityTable:
    """The plausibility table shipped with the package."""
    return PlausibilityTable.from_file(PLAUSIBILITY_FILE)


def plausible_relations(
    head_class: EntityClass,
    tail_class: EntityClass,
    table: Optional[PlausibilityTable] = None,
) -> FrozenSet[RelationType]:
    """
    Relations allowed from ``head_class`` to ``tail_class``.

    Example:
        >>> plausible_relations(EntityClass.APPLICATION, EntityClass.TIME)
        frozenset()
    """
    return (table or default_table()).relations(head_class, tail_class)


# =============================================================================
# VALIDATION
# =============================================================================

@dataclass(frozen=True)
class ValidationResult:
    """Outcome of :func:`validate_triple`; ``rule`` names the failed check."""

    ok: bool
    reason: str = ""
    rule: Optional[IssueType] = None

    def __bool__(self) -> bool:
        return self.ok


_OK = ValidationResult(ok=True)


def validate_triple(
    triple: Triple,
    entities: Mapping[str, Entity],
    table: Optional[PlausibilityTable] = None,
) -> ValidationResult:
    """
    Check a triple against the ontology.

    Args:
        triple: Triple to check
        entities: Entity store keyed by id
        table: Plausibility table (defaults to the shipped one)

    Returns:
        ValidationResult, falsy when a rule is violated

    Raises:
        DanglingReferenceError: If head or tail is not in ``entities``
    """
    for end in (triple.head, triple.tail):
        if end not in entities:
            raise DanglingReferenceError(f"dangling reference: {end} in {triple}")

    if triple.relation is RelationType.NO_RELATION:
        return ValidationResult(False, "noRelation is not storable", IssueType.NO_RELATION)
    if triple.head == triple.tail:
        return ValidationResult(
            False, f"self-reference on {triple.head}", IssueType.SELF_REFERENCE
        )

    head_cls = entities[triple.head].entity_class
    tail_cls = entities[triple.tail].entity_class
    allowed = plausible_relations(head_cls, tail_cls, table)
    if triple.relation not in allowed:
        logger.debug("implausible triple %s", triple)
        return ValidationResult(
            False,
            f"{head_cls.value} -{triple.relation.value}-> {tail_cls.value} "
            f"not allowed (allowed: {sorted(r.value for r in allowed) or 'none'})",
            IssueType.INVALID_CLASS_PAIR,
        )
    return _OK


def normalize_alias(triple: Triple) -> Triple:
    """
    Order the ends of a ``hasAlias`` triple by id so symmetric copies coincide.

    Raises:
        ContractError: If the relation is not ``hasAlias``
    """
    if triple.relation is not RelationType.HAS_ALIAS:
        raise ContractError(
            f"normalize_alias needs hasAlias, got {triple.relation.value}"
        )
    if triple.head <= triple.tail:
        return triple
    return replace(triple, head=triple.tail, tail=triple.head)

"""Tests for the ontology: classes, relations, entities and validation."""

import logging

import pytest

from cti_graph_toolkit.audit import IssueType
from cti_graph_toolkit.exceptions import (
    ConfigurationError,
    ContractError,
    DanglingReferenceError,
)
from cti_graph_toolkit.ontology import (
    Entity,
    EntityClass,
    PlausibilityTable,
    RelationType,
    Triple,
    default_table,
    make_entity_id,
    normalize_alias,
    plausible_relations,
    validate_triple,
)


class TestLabels:
    """Test class and relation parsing."""

    def test_parse_stable_names(self):
        """Stable names resolve to their members."""
        assert EntityClass.parse("AttackPattern") is EntityClass.ATTACK_PATTERN
        assert RelationType.parse("hasAlias") is RelationType.HAS_ALIAS

    def test_parse_is_lenient(self):
        """Case, spaces, dashes and underscores are ignored."""
        assert EntityClass.parse("attack_pattern") is EntityClass.ATTACK_PATTERN
        assert EntityClass.parse("Threat Actor") is EntityClass.THREAT_ACTOR
        assert RelationType.parse("discovered-in") is RelationType.DISCOVERED_IN

    def test_annotation_synonyms(self):
        """Common annotation labels map onto classes."""
        assert EntityClass.parse("OperatingSystem") is EntityClass.OS
        assert EntityClass.parse("CVE") is EntityClass.VULNERABILITY

    def test_unknown_labels(self):
        """Unknown names raise ValueError."""
        with pytest.raises(ValueError):
            EntityClass.parse("Spaceship")
        with pytest.raises(ValueError):
            RelationType.parse("likes")

    def test_only_alias_is_symmetric(self):
        """hasAlias is the single symmetric relation."""
        assert [r for r in RelationType if r.symmetric] == [RelationType.HAS_ALIAS]


class TestEntity:
    """Test Entity and Triple records."""

    def test_create_derives_id(self):
        """The id is the class name and canonical name."""
        e = Entity.create("Cerberus", EntityClass.MALWARE)
        assert e.id == make_entity_id(EntityClass.MALWARE, "Cerberus") == "Malware:Cerberus"
        assert "Cerberus" in e.surface_forms

    def test_merge_adds_mentions(self):
        """Merging unions surface forms and adds counts."""
        a = Entity.create("Cerberus", EntityClass.MALWARE, 2, ["cerberus"])
        b = Entity.create("Cerberus", EntityClass.MALWARE, 3, ["CERBERUS"])
        merged = a.merged(b)
        assert merged.mention_count == 5
        assert merged.surface_forms == {"Cerberus", "cerberus", "CERBERUS"}

    def test_merge_rejects_different_ids(self):
        """Only records of the same entity merge."""
        a = Entity.create("Cerberus", EntityClass.MALWARE)
        b = Entity.create("Anubis", EntityClass.MALWARE)
        with pytest.raises(ContractError):
            a.merged(b)

    def test_negative_mentions_rejected(self):
        """Mention counts are non-negative."""
        with pytest.raises(ContractError):
            Entity.create("X", EntityClass.MALWARE, mention_count=-1)

    def test_dict_round_trip(self):
        """to_dict and from_dict preserve an entity."""
        e = Entity.create("FluBot", EntityClass.MALWARE, 4, ["flubot"])
        assert Entity.from_dict(e.to_dict()) == e

    def test_triple_confidence_range(self):
        """Confidence outside [0, 1] is rejected."""
        with pytest.raises(ContractError):
            Triple("Malware:A", RelationType.USES, "AttackPattern:T1", confidence=1.5)

    def test_triple_merge_unions_provenance(self):
        """Copies of one fact merge provenance and keep the higher confidence."""
        a = Triple("Malware:A", RelationType.USES, "AttackPattern:T1", {"d1"}, 0.4)
        b = Triple("Malware:A", RelationType.USES, "AttackPattern:T1", {"d2"}, 0.9)
        merged = a.merged(b)
        assert merged.provenance == {"d1", "d2"}
        assert merged.confidence == 0.9

    def test_triple_str(self):
        """Triples print as angle-bracketed tuples."""
        t = Triple("Malware:A", RelationType.USES, "AttackPattern:T1")
        assert str(t) == "<Malware:A, uses, AttackPattern:T1>"


class TestPlausibility:
    """Test the plausibility table."""

    def test_malware_uses_attack_pattern(self):
        """Malware may use attack patterns and nothing else."""
        assert plausible_relations(EntityClass.MALWARE, EntityClass.ATTACK_PATTERN) == {
            RelationType.USES
        }

    def test_unlisted_pair_is_empty(self):
        """Pairs without a rule allow nothing."""
        assert plausible_relations(EntityClass.APPLICATION, EntityClass.TIME) == frozenset()

    def test_indicator_indicates_malware(self):
        """Indicators point at malware."""
        assert RelationType.INDICATES in plausible_relations(
            EntityClass.INDICATOR, EntityClass.MALWARE)

    def test_tail_classes(self):
        """targets reaches locations, organizations, persons, applications and OSes."""
        tails = default_table().tail_classes(EntityClass.MALWARE, RelationType.TARGETS)
        assert {EntityClass.LOCATION, EntityClass.ORGANIZATION,
                EntityClass.APPLICATION} <= tails
        assert EntityClass.ATTACK_PATTERN not in tails

    def test_no_relation_is_never_allowed(self):
        """noRelation appears in no rule."""
        for rels in default_table().rules.values():
            assert RelationType.NO_RELATION not in rels

    def test_from_dict_rejects_bad_version(self):
        """Unknown format versions are configuration errors."""
        with pytest.raises(ConfigurationError):
            PlausibilityTable.from_dict({"format_version": 99, "rules": []})

    def test_from_dict_rejects_no_relation(self):
        """noRelation cannot be configured as storable."""
        data = {"format_version": 1, "rules": [
            {"head": "Malware", "tail": "Malware", "relations": ["noRelation"]}]}
        with pytest.raises(ConfigurationError):
            PlausibilityTable.from_dict(data)

    def test_dict_round_trip(self):
        """The shipped table survives to_dict/from_dict."""
        table = default_table()
        assert PlausibilityTable.from_dict(table.to_dict()).rules == table.rules


class TestValidateTriple:
    """Test validate_triple."""

    @pytest.fixture
    def entities(self):
        items = [
            Entity.create("Cerberus", EntityClass.MALWARE),
            Entity.create("T1636", EntityClass.ATTACK_PATTERN),
            Entity.create("2021", EntityClass.TIME),
        ]
        return {e.id: e for e in items}

    def test_valid(self, entities):
        """An allowed class pair validates."""
        t = Triple("Malware:Cerberus", RelationType.USES, "AttackPattern:T1636")
        assert validate_triple(t, entities)

    def test_invalid_class_pair(self, entities):
        """A disallowed relation names the broken rule."""
        t = Triple("Malware:Cerberus", RelationType.TARGETS, "AttackPattern:T1636")
        result = validate_triple(t, entities)
        assert not result
        assert result.rule is IssueType.INVALID_CLASS_PAIR

    def test_invalid_class_pair_logged(self, entities, caplog):
        """Rejected triples are logged at debug level."""
        caplog.set_level(logging.DEBUG, logger="cti_graph_toolkit.ontology")
        t = Triple("Malware:Cerberus", RelationType.TARGETS, "AttackPattern:T1636")
        validate_triple(t, entities)
        assert "implausible triple <Malware:Cerberus, targets, AttackPattern:T1636>" in caplog.text

    def test_no_relation(self, entities):
        """noRelation is never storable."""
        t = Triple("Malware:Cerberus", RelationType.NO_RELATION, "Time:2021")
        assert validate_triple(t, entities).rule is IssueType.NO_RELATION

    def test_self_reference(self, entities):
        """An entity cannot relate to itself."""
        t = Triple("Malware:Cerberus", RelationType.VARIANT_OF, "Malware:Cerberus")
        assert validate_triple(t, entities).rule is IssueType.SELF_REFERENCE

    def test_dangling(self, entities):
        """Unknown endpoints raise."""
        t = Triple("Malware:Ghost", RelationType.USES, "AttackPattern:T1636")
        with pytest.raises(DanglingReferenceError):
            validate_triple(t, entities)

    def test_dangling_is_a_key_error(self, entities):
        """Lookup failures can be caught as KeyError."""
        t = Triple("Malware:Cerberus", RelationType.USES, "AttackPattern:T9999")
        with pytest.raises(KeyError):
            validate_triple(t, entities)


class TestNormalizeAlias:
    """Test alias normalization."""

    def test_orders_ends(self):
        """The smaller id becomes the head."""
        t = Triple("Malware:Cerberus", RelationType.HAS_ALIAS, "Malware:Alien")
        n = normalize_alias(t)
        assert (n.head, n.tail) == ("Malware:Alien", "Malware:Cerberus")

    def test_already_ordered_is_unchanged(self):
        """Ordered triples come back as-is."""
        t = Triple("Malware:Alien", RelationType.HAS_ALIAS, "Malware:Cerberus")
        assert normalize_alias(t) is t

    def test_other_relations_rejected(self):
        """Only hasAlias can be normalized."""
        with pytest.raises(ContractError):
            normalize_alias(Triple("Malware:A", RelationType.USES, "AttackPattern:T1"))

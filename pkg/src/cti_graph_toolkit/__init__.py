"""
CTI Graph Toolkit
=================

Cyber-threat-intelligence knowledge graphs: report ingestion, technique
mapping, graph construction and TuckER link prediction.

Quick Start:
    >>> from cti_graph_toolkit import parse_triples, build, most_similar
    >>> parsed = parse_triples("reports.tsv")
    >>> kg = build(parsed.triples, parsed.entities)
    >>> most_similar(kg, "Malware:FluBot", k=5)

Features:
    - Threat-report cleaning, date and IoC extraction
    - Attack-phrase to technique mapping
    - Ontology-checked knowledge graph with entity similarity
    - TuckER training, prediction and filtered evaluation
"""

__version__ = "0.1.0"

from .exceptions import (
    ConfigurationError,
    ContractError,
    CtiGraphError,
    DanglingReferenceError,
    EmptyInputError,
    EntityLookupError,
    ParseError,
    TrainingError,
    VocabularyError,
)

from .audit import AuditReport, Issue, IssueType, Severity

from .config import (
    BuildOptions,
    EvalOptions,
    IngestConfig,
    MappingConfig,
    RunConfig,
    TuckerConfig,
    load_config,
)

from .ontology import (
    Entity,
    EntityClass,
    Mention,
    PlausibilityTable,
    RelationType,
    Triple,
    default_table,
    make_entity_id,
    plausible_relations,
    validate_triple,
)

from .ingest import (
    Document,
    EntityRegistry,
    extract_date,
    extract_iocs,
    load_document,
    parse_brat,
    parse_triples,
    relevance_filter,
)

from .ttp import (
    TechniqueIndex,
    filter_invalid_phrases,
    get_catalog,
    map_attack_phrases,
    map_phrase,
    merge_tagged_spans,
    score_extraction,
    trend_analysis,
)

from .kg import (
    KnowledgeGraph,
    audit_graph,
    build,
    jaccard_similarity,
    most_similar,
    neighborhood,
    primary_malware,
    query_tails,
)

__all__ = [
    '__version__',
    # Errors
    'ConfigurationError',
    'ContractError',
    'CtiGraphError',
    'DanglingReferenceError',
    'EmptyInputError',
    'EntityLookupError',
    'ParseError',
    'TrainingError',
    'VocabularyError',
    # Audit
    'AuditReport',
    'Issue',
    'IssueType',
    'Severity',
    # Config
    'BuildOptions',
    'EvalOptions',
    'IngestConfig',
    'MappingConfig',
    'RunConfig',
    'TuckerConfig',
    'load_config',
    # Ontology
    'Entity',
    'EntityClass',
    'Mention',
    'PlausibilityTable',
    'RelationType',
    'Triple',
    'default_table',
    'make_entity_id',
    'plausible_relations',
    'validate_triple',
    # Ingest
    'Document',
    'EntityRegistry',
    'extract_date',
    'extract_iocs',
    'load_document',
    'parse_brat',
    'parse_triples',
    'relevance_filter',
    # Techniques
    'TechniqueIndex',
    'filter_invalid_phrases',
    'get_catalog',
    'map_attack_phrases',
    'map_phrase',
    'merge_tagged_spans',
    'score_extraction',
    'trend_analysis',
    # Graph
    'KnowledgeGraph',
    'audit_graph',
    'build',
    'jaccard_similarity',
    'most_similar',
    'neighborhood',
    'primary_malware',
    'query_tails',
]

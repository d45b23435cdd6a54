"""Attack-pattern phrases, technique mapping, scoring and trends."""

from .catalog import (
    Platform,
    Technique,
    TechniqueCatalog,
    TechniqueEmbedding,
    catalog_from_vectors,
    embed_catalog,
    get_catalog,
    list_platforms,
    load_catalog,
    register_catalog,
)
from .embeddings import (
    EmbeddingProvider,
    EmbeddingVector,
    HashedFeatureProvider,
    PrecomputedProvider,
    cosine_distance,
    embed,
    embed_many,
    load_embeddings,
    save_embeddings,
)
from .mapping import (
    MappingResult,
    PhraseMapping,
    TechniqueIndex,
    map_attack_phrases,
    map_phrase,
    weighted_distance,
)
from .phrases import (
    AttackPhrase,
    default_verb_lexicon,
    filter_invalid_phrases,
    format_relation_input,
    merge_tagged_spans,
)
from .scoring import ExtractionScore, score_extraction, score_from_counts
from .trends import TrendReport, trend_analysis

__all__ = [
    "Platform", "Technique", "TechniqueCatalog", "TechniqueEmbedding",
    "catalog_from_vectors", "embed_catalog", "get_catalog", "list_platforms",
    "load_catalog", "register_catalog",
    "EmbeddingProvider", "EmbeddingVector", "HashedFeatureProvider",
    "PrecomputedProvider", "cosine_distance", "embed", "embed_many",
    "load_embeddings", "save_embeddings",
    "MappingResult", "PhraseMapping", "TechniqueIndex", "map_attack_phrases",
    "map_phrase", "weighted_distance",
    "AttackPhrase", "default_verb_lexicon", "filter_invalid_phrases",
    "format_relation_input", "merge_tagged_spans",
    "ExtractionScore", "score_extraction", "score_from_counts",
    "TrendReport", "trend_analysis",
]

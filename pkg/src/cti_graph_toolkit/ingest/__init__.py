"""Turning raw reports, annotations and triple files into graph inputs."""

from .brat import (
    AnnotatedDocument,
    AttackPatternSpan,
    EntitySpan,
    Relation,
    parse_brat,
    parse_brat_text,
    to_ann,
    to_triple_rows,
)
from .crawler import (
    CrawlResult,
    FixturePageProvider,
    HttpPageProvider,
    Page,
    PageProvider,
    crawl,
)
from .documents import (
    Document,
    clean_html,
    extract_date,
    load_document,
    read_document_store,
    relevance_filter,
    split_sentences,
    write_document_store,
)
from .iocs import IocHit, IocType, extract_iocs
from .triples import (
    EntityRegistry,
    ParseResult,
    TripleRow,
    parse_triples,
    rows_to_triples,
    write_triples,
)

__all__ = [
    "AnnotatedDocument", "AttackPatternSpan", "EntitySpan", "Relation",
    "parse_brat", "parse_brat_text", "to_ann", "to_triple_rows",
    "CrawlResult", "FixturePageProvider", "HttpPageProvider", "Page",
    "PageProvider", "crawl",
    "Document", "clean_html", "extract_date", "load_document",
    "read_document_store", "relevance_filter", "split_sentences",
    "write_document_store",
    "IocHit", "IocType", "extract_iocs",
    "EntityRegistry", "ParseResult", "TripleRow", "parse_triples",
    "rows_to_triples", "write_triples",
]

"""
Report Crawler
==============

Breadth-first, keyword-gated crawl over an injectable page provider.

The seed page is only a link hub. Every generation fetches the current
frontier; relevant pages are saved and their unseen links form the next
frontier, irrelevant pages are dropped without expansion. A URL is
enqueued at most once.

Usage:
    >>> from cti_graph_toolkit.ingest.crawler import FixturePageProvider, crawl
    >>> provider = FixturePageProvider.from_file("tests/fixtures/crawl_graph.json")
    >>> result = crawl("https://seed.example/", provider, generations=2)
    >>> result.relevant_urls
"""

import json
import logging
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Set, Tuple, Union
from urllib.parse import urldefrag, urljoin, urlparse

from ..audit import AuditReport, IssueType, Severity
from ..config import DEFAULT_KEYWORDS
from ..exceptions import ContractError, ParseError
from .documents import Document, clean_html, document_id_for, extract_date, relevance_filter

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Page:
    """Fetched page: cleaned text plus outgoing absolute URLs."""

    text: str
    links: Tuple[str, ...] = ()


class PageProvider(ABC):
    """Source of pages for :func:`crawl`."""

    @abstractmethod
    def fetch(self, url: str) -> Page:
        """Fetch one page; any exception marks the URL as failed."""


class FixturePageProvider(PageProvider):
    """
    In-memory link graph, loaded from ``{url: {"body": ..., "links": [...]}}``.

    Unknown URLs raise ``LookupError``.
    """

    def __init__(self, pages: Mapping[str, Mapping[str, object]]):
        self._pages: Dict[str, Page] = {
            url: Page(
                text=str(entry.get("body", "")),
                links=tuple(str(link) for link in entry.get("links", ())),  # type: ignore[union-attr]
            )
            for url, entry in pages.items()
        }

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "FixturePageProvider":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise ParseError(f"invalid crawl fixture: {exc}", source=str(path)) from exc
        if not isinstance(data, dict):
            raise ParseError("crawl fixture must be a JSON object", source=str(path))
        return cls(data)

    def fetch(self, url: str) -> Page:
        try:
            return self._pages[url]
        except KeyError:
            raise LookupError(f"no fixture page for {url}") from None


class HttpPageProvider(PageProvider):
    """
    Thin HTTP adapter built on ``requests``.

    No politeness policy or JavaScript rendering; meant for small, manual runs.
    """

    def __init__(self, timeout: float = 20.0, user_agent: str = "cti-graph-toolkit"):
        import requests

        self._session = requests.Session()
        self._session.headers["User-Agent"] = user_agent
        self._timeout = timeout

    def fetch(self, url: str) -> Page:
        from bs4 import BeautifulSoup

        response = self._session.get(url, timeout=self._timeout)
        response.raise_for_status()
        html = response.text
        soup = BeautifulSoup(html, "html.parser")
        links: List[str] = []
        for anchor in soup.find_all("a", href=True):
            target, _ = urldefrag(urljoin(url, anchor["href"]))
            if urlparse(target).scheme in ("http", "https") and target not in links:
                links.append(target)
        return Page(text=clean_html(html), links=tuple(links))


@dataclass
class CrawlResult:
    """
    Outcome of a crawl.

    Attributes:
        documents: Saved relevant pages, in discovery order
        relevant_urls: URLs of the saved pages
        visited: Every URL fetched (seed first), in fetch order
        issues: Fetch failures
    """

    documents: List[Document] = field(default_factory=list)
    relevant_urls: List[str] = field(default_factory=list)
    visited: List[str] = field(default_factory=list)
    issues: AuditReport = field(default_factory=lambda: AuditReport("crawl"))


def crawl(
    seed_url: str,
    provider: PageProvider,
    generations: int = 2,
    keywords: Iterable[str] = DEFAULT_KEYWORDS,
    n: int = 150,
    max_workers: int = 1,
) -> CrawlResult:
    """
    Crawl from ``seed_url`` for a number of generations.

    Args:
        seed_url: Start page (used for its links only)
        provider: Page source
        generations: Frontier expansions; must be >= 1
        keywords: Relevance keywords
        n: Relevance word window (> 100)
        max_workers: Threads used to fetch one generation

    Returns:
        CrawlResult, identical across runs for a deterministic provider

    Raises:
        ContractError: If ``generations < 1``
    """
    if generations < 1:
        raise ContractError("generations must be >= 1")
    keywords = frozenset(keywords)
    result = CrawlResult()

    seen: Set[str] = {seed_url}
    seed = _fetch_all(provider, [seed_url], max_workers, result)[0]
    if seed is None:
        return result

    frontier = _enqueue(seed.links, seen)
    for generation in range(1, generations + 1):
        if not frontier:
            break
        logger.debug("generation %d: %d urls", generation, len(frontier))
        pages = _fetch_all(provider, frontier, max_workers, result)
        next_frontier: List[str] = []
        for url, page in zip(frontier, pages):
            if page is None or not relevance_filter(page.text, keywords, n):
                continue
            result.relevant_urls.append(url)
            result.documents.append(Document(
                id=document_id_for(url),
                body=page.text,
                source_url=url,
                published_year=extract_date(page.text),
            ))
            next_frontier.extend(_enqueue(page.links, seen))
        frontier = next_frontier

    logger.info(
        "crawl from %s: %d visited, %d saved, %d failed",
        seed_url, len(result.visited), len(result.documents), len(result.issues),
    )
    return result


def _enqueue(links: Iterable[str], seen: Set[str]) -> List[str]:
    fresh = []
    for link in links:
        if link not in seen:
            seen.add(link)
            fresh.append(link)
    return fresh


def _fetch_all(
    provider: PageProvider,
    urls: List[str],
    max_workers: int,
    result: CrawlResult,
) -> List[Optional[Page]]:
    def fetch(url: str) -> Tuple[Optional[Page], Optional[Exception]]:
        try:
            return provider.fetch(url), None
        except Exception as exc:  # provider failures never abort the crawl
            return None, exc

    if max_workers > 1 and len(urls) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(fetch, urls))
    else:
        outcomes = [fetch(u) for u in urls]

    pages: List[Optional[Page]] = []
    for url, (page, error) in zip(urls, outcomes):
        result.visited.append(url)
        if error is not None:
            logger.warning("fetch failed for %s: %s", url, error)
            result.issues.add(
                IssueType.FETCH_FAILED, str(error),
                severity=Severity.WARNING, location=url,
            )
        pages.append(page)
    return pages

"""
Documents
=========

Cleaning, sentence splitting, publication-year extraction and relevance
filtering for threat reports, plus an on-disk document store.

Usage:
    >>> from cti_graph_toolkit.ingest.documents import clean_html, relevance_filter
    >>> clean_html("<p>Hello <b>world</b></p>")
    'Hello world'
"""

import datetime
import hashlib
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

from bs4 import BeautifulSoup
from bs4.element import Comment, Declaration, Doctype, ProcessingInstruction

from ..config import DEFAULT_KEYWORDS
from ..exceptions import ConfigurationError, ContractError

logger = logging.getLogger(__name__)

STORE_FORMAT_VERSION = 1
MIN_YEAR = 1990
DATE_WINDOW_SENTENCES = 5

PathLike = Union[str, Path]


@dataclass(frozen=True)
class Document:
    """
    A cleaned report.

    Attributes:
        id: Opaque document id
        source_url: Where the page came from, if known
        body: Plain text, no markup
        published_year: Year of the first date in the opening sentences
    """

    id: str
    body: str
    source_url: Optional[str] = None
    published_year: Optional[int] = None

    def __post_init__(self):
        year = self.published_year
        if year is not None and not MIN_YEAR <= year <= _current_year():
            raise ContractError(f"published_year out of range: {year}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "source_url": self.source_url,
            "published_year": self.published_year,
        }


def _current_year() -> int:
    return datetime.date.today().year


def document_id_for(key: str) -> str:
    """Short stable id for a URL or file name."""
    return hashlib.sha1(key.encode("utf-8")).hexdigest()[:16]


# =============================================================================
# HTML CLEANING
# =============================================================================

_DROP_TAGS = (
    "script", "style", "noscript", "template", "img", "svg", "picture",
    "iframe", "meta", "link", "head", "object", "embed", "video", "audio",
)

_BLOCK_TAGS = (
    "p", "div", "section", "article", "header", "footer", "aside", "nav",
    "main", "h1", "h2", "h3", "h4", "h5", "h6", "li", "ul", "ol", "table",
    "tr", "td", "th", "blockquote", "pre", "figure", "figcaption", "dd",
    "dt", "dl", "hr", "title", "address",
)

_NON_TEXT = (Comment, Declaration, Doctype, ProcessingInstruction)


def clean_html(raw: str) -> str:
    """
    Strip markup from a page.

    Scripts, styles and image-like elements are removed, block elements
    become line breaks, and whitespace inside each line is collapsed.
    Malformed markup is cleaned best-effort.

    Args:
        raw: HTML or plain text

    Returns:
        Plain text with one block per line

    Example:
        >>> clean_html("<script>x=1</script>Text")
        'Text'
    """
    soup = BeautifulSoup(raw, "html.parser")

    for tag in soup.find_all(_DROP_TAGS):
        tag.decompose()
    for node in soup.find_all(string=lambda s: isinstance(s, _NON_TEXT)):
        node.extract()

    for br in soup.find_all("br"):
        br.replace_with("\n")
    for tag in soup.find_all(_BLOCK_TAGS):
        tag.insert_before("\n")
        tag.insert_after("\n")

    lines = (" ".join(line.split()) for line in soup.get_text().splitlines())
    return "\n".join(line for line in lines if line)


# =============================================================================
# SENTENCES AND DATES
# =============================================================================

_ABBREVIATIONS = frozenset({
    "e.g", "i.e", "etc", "vs", "mr", "mrs", "ms", "dr", "prof", "inc",
    "ltd", "co", "corp", "fig", "no", "st", "jr", "sr", "u.s", "approx",
    "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct",
    "nov", "dec",
})

_BOUNDARY_RE = re.compile(r"[.!?]+[\"')\]]*\s+(?=[A-Z\"'(\[])")


def split_sentences(text: str) -> List[str]:
    """
    Split text into sentences.

    Line breaks always end a sentence. Inside a line, ``.``, ``!`` or ``?``
    followed by whitespace and a capital letter ends one, unless the word
    before the period is a known abbreviation.
    """
    sentences: List[str] = []
    for line in text.splitlines():
        start = 0
        for match in _BOUNDARY_RE.finditer(line):
            head = line[start:match.start()]
            last = head.split()[-1].lower() if head.split() else ""
            if line[match.start()] == "." and last.rstrip(".") in _ABBREVIATIONS:
                continue
            sentence = line[start:match.end()].strip()
            if sentence:
                sentences.append(sentence)
            start = match.end()
        tail = line[start:].strip()
        if tail:
            sentences.append(tail)
    return sentences


_MONTH = (
    r"(?:jan(?:uary)?|feb(?:ruary)?|mar(?:ch)?|apr(?:il)?|may|june?|july?"
    r"|aug(?:ust)?|sep(?:t(?:ember)?)?|oct(?:ober)?|nov(?:ember)?|dec(?:ember)?)"
)
_YEAR = r"(?:199\d|20\d\d)"
_DAY = r"\d{1,2}(?:st|nd|rd|th)?"

# Alternatives are tried longest-form first at each position.
_DATE_RE = re.compile(
    rf"\b{_MONTH}\.?\s+(?:{_DAY},?\s+)?(?P<month_first>{_YEAR})\b"
    rf"|\b{_DAY}\s+(?:of\s+)?{_MONTH}\.?,?\s+(?P<day_first>{_YEAR})\b"
    rf"|\b\d{{1,2}}[/.]\d{{1,2}}[/.](?P<numeric>{_YEAR})\b"
    rf"|\b(?P<iso>{_YEAR})-\d{{1,2}}-\d{{1,2}}\b"
    rf"|\b(?P<bare>{_YEAR})\b",
    re.IGNORECASE,
)


def find_year(sentence: str) -> Optional[int]:
    """Year of the first valid date expression in one sentence."""
    for match in _DATE_RE.finditer(sentence):
        year = int(next(g for g in match.groups() if g is not None))
        if MIN_YEAR <= year <= _current_year():
            return year
    return None


def extract_date(doc: Union[Document, str]) -> Optional[int]:
    """
    Publication year of a report.

    Only the first five sentences are scanned; the first date expression
    (month-name dates, ``dd/mm/yyyy``, ``yyyy-mm-dd`` or a bare year)
    whose year lies between 1990 and the current year wins.

    Args:
        doc: Cleaned document or its body

    Returns:
        Year, or None if the opening sentences contain no date

    Example:
        >>> extract_date("In June 2019, ThreatFabric found a new trojan.")
        2019
    """
    body = doc.body if isinstance(doc, Document) else doc
    for sentence in split_sentences(body)[:DATE_WINDOW_SENTENCES]:
        year = find_year(sentence)
        if year is not None:
            return year
    return None


# =============================================================================
# RELEVANCE
# =============================================================================

def relevance_filter(
    text: str,
    keywords: Iterable[str] = DEFAULT_KEYWORDS,
    n: int = 150,
) -> bool:
    """
    Does a keyword occur within the first ``n`` words?

    Matching is whole-word and case-insensitive, without stemming.

    Args:
        text: Page text
        keywords: Relevance keywords
        n: Word window; must exceed 100

    Returns:
        True if any keyword occurs in the window

    Raises:
        ConfigurationError: If ``n <= 100``
    """
    if n <= 100:
        raise ConfigurationError(f"relevance window must exceed 100 words, got {n}")
    words = sorted({k for k in keywords if k}, key=lambda k: (-len(k), k))
    if not words:
        return False
    pattern = re.compile(
        r"\b(?:" + "|".join(re.escape(w) for w in words) + r")\b", re.IGNORECASE
    )
    window = " ".join(text.split()[:n])
    return pattern.search(window) is not None


# =============================================================================
# DOCUMENT STORE
# =============================================================================

def load_document(path: PathLike, source_url: Optional[str] = None) -> Document:
    """
    Read a report from disk; ``.html``/``.htm`` files are cleaned first.

    Raises:
        OSError: If the file cannot be read
        UnicodeDecodeError: If the file is not UTF-8
    """
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    body = clean_html(raw) if path.suffix.lower() in (".html", ".htm") else raw
    doc_id = path.stem
    return Document(
        id=doc_id,
        body=body,
        source_url=source_url,
        published_year=extract_date(body),
    )


def write_document_store(documents: Iterable[Document], out_dir: PathLike) -> Path:
    """
    Save documents as ``<id>.txt`` plus ``manifest.json``.

    Returns:
        Path of the manifest
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for doc in documents:
        (out / f"{doc.id}.txt").write_text(doc.body, encoding="utf-8")
        entry = doc.to_dict()
        entry["sha256"] = hashlib.sha256(doc.body.encode("utf-8")).hexdigest()
        entries.append(entry)
    manifest = out / "manifest.json"
    manifest.write_text(
        json.dumps(
            {"format_version": STORE_FORMAT_VERSION, "documents": entries},
            indent=2, sort_keys=True,
        ) + "\n",
        encoding="utf-8",
    )
    logger.info("wrote %d documents to %s", len(entries), out)
    return manifest


def read_document_store(store_dir: PathLike) -> List[Document]:
    """Load documents saved by :func:`write_document_store`, in manifest order."""
    store = Path(store_dir)
    data = json.loads((store / "manifest.json").read_text(encoding="utf-8"))
    if data.get("format_version") != STORE_FORMAT_VERSION:
        raise ConfigurationError(
            f"unsupported document store version: {data.get('format_version')}"
        )
    return [
        Document(
            id=entry["id"],
            body=(store / f"{entry['id']}.txt").read_text(encoding="utf-8"),
            source_url=entry.get("source_url"),
            published_year=entry.get("published_year"),
        )
        for entry in data["documents"]
    ]

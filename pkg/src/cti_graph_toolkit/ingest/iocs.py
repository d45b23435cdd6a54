"""
IoC Extraction
==============

Regex extraction of indicators of compromise: file paths, e-mail
addresses, SHA256/SHA1 hashes, CVE ids and IPv4 addresses.

Overlapping candidates are resolved by type precedence
(SHA256 > SHA1 > CVE > IPv4 > Email > FilePath), then by length, then by
position. Hits come back sorted by start offset and never overlap.

Usage:
    >>> from cti_graph_toolkit.ingest.iocs import extract_iocs
    >>> [h.matched_text for h in extract_iocs("CVE-2014-1234 was exploited")]
    ['CVE-2014-1234']
"""

import bisect
import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Pattern, Tuple

logger = logging.getLogger(__name__)


class IocType(Enum):
    """Indicator kinds, listed in precedence order."""
    SHA256 = "SHA256"
    SHA1 = "SHA1"
    CVE = "CVE"
    IPV4 = "IPv4"
    EMAIL = "Email"
    FILE_PATH = "FilePath"


@dataclass(frozen=True)
class IocHit:
    """One indicator; ``text[start:end] == matched_text``."""

    start: int
    end: int
    ioc_type: IocType
    matched_text: str

    @property
    def span(self) -> Tuple[int, int]:
        return (self.start, self.end)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "start": self.start,
            "end": self.end,
            "ioc_type": self.ioc_type.value,
            "matched_text": self.matched_text,
        }


def _hex_pattern(n: int) -> Pattern[str]:
    # guards keep a 64-hex run from also yielding a 40-hex SHA1 candidate
    return re.compile(
        rf"(?<![0-9a-fA-F])(?:[a-f0-9]{{{n}}}|[A-F0-9]{{{n}}})(?![0-9a-fA-F])"
    )


_OCTET = r"(?:25[0-5]|2[0-4]\d|1\d\d|[1-9]?\d)"

PATTERNS: Dict[IocType, Tuple[Pattern[str], ...]] = {
    IocType.SHA256: (_hex_pattern(64),),
    IocType.SHA1: (_hex_pattern(40),),
    IocType.CVE: (re.compile(r"\bCVE-[0-9]{4}-[0-9]{4,6}(?!\d)"),),
    IocType.IPV4: (re.compile(rf"(?<![\d.]){_OCTET}(?:\.{_OCTET}){{3}}(?!\.?\d)"),),
    IocType.EMAIL: (
        re.compile(
            r"(?<![\w.+-])[a-z][_a-z0-9.-]+@[a-z0-9-]+(?:\.[a-z0-9-]+)*\.[a-z]{2,}\b",
            re.IGNORECASE,
        ),
    ),
    # Reconstructed forms: Windows drive paths and POSIX paths of 2+ segments.
    IocType.FILE_PATH: (
        re.compile(r"\b[a-zA-Z]:\\[\w$~-][\w.$~\\-]*"),
        re.compile(r"(?<![\w:/.])(?:/[\w.$~@+-]+){2,}"),
    ),
}

_PRECEDENCE = {t: i for i, t in enumerate(IocType)}
_TRAILING = ".,"


def _candidates(text: str) -> List[Tuple[int, int, IocType]]:
    found = []
    for ioc_type, patterns in PATTERNS.items():
        for pattern in patterns:
            for match in pattern.finditer(text):
                start, end = match.span()
                if ioc_type is IocType.FILE_PATH:
                    while end > start and text[end - 1] in _TRAILING:
                        end -= 1
                if end > start:
                    found.append((start, end, ioc_type))
    return found


def extract_iocs(text: str) -> List[IocHit]:
    """
    Extract indicators of compromise from text.

    Args:
        text: Cleaned document body

    Returns:
        Non-overlapping hits sorted by start offset

    Example:
        >>> extract_iocs("beacon to 192.168.0.1 daily")[0].ioc_type
        <IocType.IPV4: 'IPv4'>
    """
    candidates = sorted(
        _candidates(text),
        key=lambda c: (_PRECEDENCE[c[2]], -(c[1] - c[0]), c[0]),
    )

    starts: List[int] = []
    accepted: List[Tuple[int, int, IocType]] = []
    for start, end, ioc_type in candidates:
        i = bisect.bisect_right(starts, start)
        if i > 0 and accepted[i - 1][1] > start:
            continue
        if i < len(accepted) and accepted[i][0] < end:
            continue
        starts.insert(i, start)
        accepted.insert(i, (start, end, ioc_type))

    hits = [IocHit(s, e, t, text[s:e]) for s, e, t in accepted]
    logger.debug("extracted %d IoCs from %d chars", len(hits), len(text))
    return hits

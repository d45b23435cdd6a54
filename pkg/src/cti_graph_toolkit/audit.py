"""
Audit Reports
=============

Collected, non-fatal findings produced while ingesting, building and
checking threat-intelligence data.

Usage:
    >>> from cti_graph_toolkit.audit import AuditReport, IssueType, Severity
    >>> report = AuditReport("parse_triples")
    >>> report.add(IssueType.UNKNOWN_RELATION, "unknown relation 'foo'",
    ...            location="triples.tsv:3")
    >>> print(report.report(verbose=False))
"""

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum, auto
from typing import Any, Dict, Iterator, List, Optional


class Severity(Enum):
    """How a finding affects the record it concerns."""
    ERROR = auto()      # record dropped
    WARNING = auto()    # record kept or removed by policy
    INFO = auto()


class IssueType(Enum):
    """Types of data-quality findings."""

    # Ontology
    DANGLING_REFERENCE = "dangling_reference"
    SELF_REFERENCE = "self_reference"
    INVALID_CLASS_PAIR = "invalid_class_pair"
    NO_RELATION = "no_relation"

    # Record parsing
    MALFORMED_LINE = "malformed_line"
    UNKNOWN_RELATION = "unknown_relation"
    UNKNOWN_CLASS = "unknown_class"
    DIMENSION_MISMATCH = "dimension_mismatch"
    NON_FINITE_VALUE = "non_finite_value"
    ZERO_VECTOR = "zero_vector"

    # Graph build and audit
    CLASS_CONFLICT = "class_conflict"
    SINGLE_MENTION = "single_mention"
    DUPLICATE_TRIPLE = "duplicate_triple"
    INDEX_MISMATCH = "index_mismatch"

    # Ingest
    FETCH_FAILED = "fetch_failed"
    UNREADABLE_FILE = "unreadable_file"


@dataclass(frozen=True)
class Issue:
    """A single finding."""

    type: IssueType
    severity: Severity
    message: str
    location: Optional[str] = None  # file:line, url or entity id
    suggestion: str = ""

    def __str__(self) -> str:
        loc = f" [{self.location}]" if self.location else ""
        text = f"[{self.severity.name}] {self.type.value}{loc}: {self.message}"
        if self.suggestion:
            text += f"\n   -> {self.suggestion}"
        return text

    def to_dict(self) -> Dict[str, Any]:
        """Convert to a JSON-serializable dictionary."""
        return {
            "type": self.type.value,
            "severity": self.severity.name,
            "message": self.message,
            "location": self.location,
        }


@dataclass
class AuditReport:
    """
    Ordered collection of issues raised by one operation.

    Example:
        >>> report = AuditReport("kg.build")
        >>> report.add(IssueType.SINGLE_MENTION, "Malware:Foo mentioned once",
        ...            severity=Severity.WARNING)
        >>> len(report)
        1
    """

    title: str
    issues: List[Issue] = field(default_factory=list)

    def add(
        self,
        issue_type: IssueType,
        message: str,
        severity: Severity = Severity.ERROR,
        location: Optional[str] = None,
        suggestion: str = "",
    ) -> Issue:
        """Record an issue and return it."""
        issue = Issue(
            type=issue_type,
            severity=severity,
            message=message,
            location=location,
            suggestion=suggestion,
        )
        self.issues.append(issue)
        return issue

    def extend(self, other: "AuditReport") -> None:
        """Append all issues of another report."""
        self.issues.extend(other.issues)

    def of_type(self, issue_type: IssueType) -> List[Issue]:
        """Issues of one type, in insertion order."""
        return [i for i in self.issues if i.type == issue_type]

    @property
    def ok(self) -> bool:
        """True when no ERROR-level issue was recorded."""
        return not any(i.severity == Severity.ERROR for i in self.issues)

    def __len__(self) -> int:
        return len(self.issues)

    def __iter__(self) -> Iterator[Issue]:
        return iter(self.issues)

    def counts(self) -> Dict[str, int]:
        """Number of issues per issue type, keyed by type name."""
        return dict(sorted(Counter(i.type.value for i in self.issues).items()))

    def report(self, verbose: bool = True) -> str:
        """
        Render the report as text: one tally line, then issues by severity.

        Args:
            verbose: If True, print to stdout

        Returns:
            Report string
        """
        if not self.issues:
            text = f"{self.title}: no issues"
        else:
            tally = ", ".join(f"{name}={n}" for name, n in self.counts().items())
            blocking = "" if self.ok else " (blocking)"
            lines = [f"{self.title}: {len(self.issues)} issues{blocking} [{tally}]"]
            for issue in sorted(self.issues, key=lambda i: i.severity.value):
                lines.append(f"  {issue}")
            text = "\n".join(lines)
        if verbose:
            print(text)
        return text

    def to_records(self) -> List[Dict[str, Any]]:
        """All issues as dictionaries, in insertion order."""
        return [i.to_dict() for i in self.issues]

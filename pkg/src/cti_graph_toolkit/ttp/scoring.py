"""Precision/recall/F1 of extracted technique sets against a gold list."""

from dataclasses import asdict, dataclass
from typing import Dict, Iterable


@dataclass(frozen=True)
class ExtractionScore:
    """Counts and derived metrics; ratios with a zero denominator are 0."""

    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> Dict:
        return asdict(self)

    def rounded(self, digits: int = 2) -> "ExtractionScore":
        return ExtractionScore(
            self.tp, self.fp, self.fn,
            round(self.precision, digits),
            round(self.recall, digits),
            round(self.f1, digits),
        )


def score_from_counts(tp: int, fp: int, fn: int) -> ExtractionScore:
    """
    Metrics from raw counts.

    Example:
        >>> score_from_counts(tp=41, fp=22, fn=24).rounded()
        ExtractionScore(tp=41, fp=22, fn=24, precision=0.65, recall=0.63, f1=0.64)
    """
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ExtractionScore(tp, fp, fn, precision, recall, f1)


def score_extraction(predicted: Iterable[str], gold: Iterable[str]) -> ExtractionScore:
    """Compare predicted technique ids with gold ids as sets."""
    p, g = set(predicted), set(gold)
    return score_from_counts(len(p & g), len(p - g), len(g - p))

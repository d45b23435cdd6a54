"""
Technique Trends
================

Per-year share of each technique among all technique observations.

A (malware, technique) pair is counted once, in the earliest year it was
reported. For every year, a technique's normalized count is its number of
observations divided by all observations of that year, so the values of
a year sum to 1. The share of malware using each technique that year is
reported alongside.

Usage:
    >>> from cti_graph_toolkit.ttp.trends import trend_analysis
    >>> report = trend_analysis([("m1", "T1", 2020), ("m2", "T1", 2020),
    ...                          ("m1", "T2", 2020)])
    >>> report.normalized[2020]
    {'T1': 0.6666666666666666, 'T2': 0.3333333333333333}
"""

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)

Observation = Tuple[str, str, int]


@dataclass
class TrendReport:
    """
    Attributes:
        normalized: year -> technique -> share of that year's observations
        counts: year -> technique -> deduplicated observation count
        malware_per_year: year -> distinct malware first seen with a technique
        malware_ratio: year -> technique -> share of that year's malware
    """

    normalized: Dict[int, Dict[str, float]] = field(default_factory=dict)
    counts: Dict[int, Dict[str, int]] = field(default_factory=dict)
    malware_per_year: Dict[int, int] = field(default_factory=dict)
    malware_ratio: Dict[int, Dict[str, float]] = field(default_factory=dict)

    @property
    def years(self) -> List[int]:
        return sorted(self.normalized)

    def series(self, technique_id: str) -> List[Tuple[int, float]]:
        """(year, normalized count) for one technique, zero-filled over all years."""
        return [(y, self.normalized[y].get(technique_id, 0.0)) for y in self.years]

    def to_dict(self) -> Dict:
        return {
            "normalized": {str(y): v for y, v in sorted(self.normalized.items())},
            "counts": {str(y): v for y, v in sorted(self.counts.items())},
            "malware_per_year": {str(y): v for y, v in sorted(self.malware_per_year.items())},
            "malware_ratio": {str(y): v for y, v in sorted(self.malware_ratio.items())},
        }


def trend_analysis(
    observations: Iterable[Observation],
    years: Optional[Sequence[int]] = None,
) -> TrendReport:
    """
    Normalize technique observations per year.

    Args:
        observations: (malware id, technique id, year) tuples; duplicates allowed
        years: Years to report even without observations (they map to ``{}``)

    Returns:
        TrendReport
    """
    first_year: Dict[Tuple[str, str], int] = {}
    for malware, technique, year in observations:
        key = (malware, technique)
        year = int(year)
        if key not in first_year or year < first_year[key]:
            first_year[key] = year

    counts: Dict[int, Counter] = defaultdict(Counter)
    malware_by_year: Dict[int, set] = defaultdict(set)
    for (malware, technique), year in first_year.items():
        counts[year][technique] += 1
        malware_by_year[year].add(malware)

    report = TrendReport()
    for year in sorted(set(counts) | set(years or ())):
        year_counts = counts.get(year, Counter())
        total = sum(year_counts.values())
        n_malware = len(malware_by_year.get(year, ()))
        ordered = sorted(year_counts)
        report.counts[year] = {t: year_counts[t] for t in ordered}
        report.normalized[year] = {t: year_counts[t] / total for t in ordered} if total else {}
        report.malware_per_year[year] = n_malware
        report.malware_ratio[year] = (
            {t: year_counts[t] / n_malware for t in ordered} if n_malware else {}
        )

    logger.debug("trends over %d years from %d unique pairs", len(report.normalized),
                 len(first_year))
    return report

"""Tests for extraction scoring and technique trends."""

import pytest

from cti_graph_toolkit.ttp.scoring import score_extraction, score_from_counts
from cti_graph_toolkit.ttp.trends import trend_analysis


class TestScoring:
    """Test precision, recall and F1."""

    def test_reference_counts(self):
        """41 true positives, 22 false positives, 24 false negatives."""
        score = score_from_counts(tp=41, fp=22, fn=24).rounded()
        assert (score.precision, score.recall, score.f1) == (0.65, 0.63, 0.64)

    def test_sets(self):
        """Predicted and gold ids are compared as sets."""
        score = score_extraction(["T1", "T2", "T2", "T3"], ["T2", "T3", "T4"])
        assert (score.tp, score.fp, score.fn) == (2, 1, 1)

    def test_zero_denominators(self):
        """Empty inputs score zero instead of failing."""
        score = score_extraction([], [])
        assert (score.precision, score.recall, score.f1) == (0.0, 0.0, 0.0)

    def test_negative_counts(self):
        """Counts cannot be negative."""
        with pytest.raises(ValueError):
            score_from_counts(-1, 0, 0)


class TestTrends:
    """Test trend_analysis."""

    @pytest.fixture
    def report(self):
        return trend_analysis([
            ("m1", "T1", 2019),
            ("m1", "T1", 2020),
            ("m2", "T1", 2020),
            ("m2", "T2", 2020),
            ("m2", "T2", 2020),
        ], years=[2021])

    def test_first_year_only(self, report):
        """A pair counts once, in its earliest year."""
        assert report.counts[2019] == {"T1": 1}
        assert report.counts[2020] == {"T1": 1, "T2": 1}

    def test_normalized_sums_to_one(self, report):
        """Each year's shares add up to one."""
        assert report.normalized[2020] == {"T1": 0.5, "T2": 0.5}
        assert sum(report.normalized[2019].values()) == pytest.approx(1.0)

    def test_empty_year(self, report):
        """Requested years without observations are empty."""
        assert report.normalized[2021] == {}
        assert report.years == [2019, 2020, 2021]

    def test_malware_ratio(self, report):
        """Shares of the year's new malware are reported."""
        assert report.malware_per_year[2020] == 1
        assert report.malware_ratio[2020] == {"T1": 1.0, "T2": 1.0}

    def test_series_zero_filled(self, report):
        """Series cover every year."""
        assert report.series("T2") == [(2019, 0.0), (2020, 0.5), (2021, 0.0)]

    def test_to_dict_keys(self, report):
        """Years become string keys."""
        assert list(report.to_dict()["normalized"]) == ["2019", "2020", "2021"]

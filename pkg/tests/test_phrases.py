"""Tests for attack-phrase merging, filtering and relation inputs."""

import logging

import pytest

from cti_graph_toolkit.exceptions import ContractError
from cti_graph_toolkit.ttp.phrases import (
    AttackPhrase,
    default_verb_lexicon,
    filter_invalid_phrases,
    format_relation_input,
    load_verb_lexicon,
    merge_tagged_spans,
    verb_candidates,
)


def phrase(text):
    return AttackPhrase("d", 0, (0, len(text.split())), text)


class TestMergeTaggedSpans:
    """Test grouping of AP tags."""

    def test_runs(self):
        """Each maximal AP run is one phrase."""
        tokens = ["It", "can", "steal", "SMS", "codes", "and", "record", "audio"]
        tags = ["O", "O", "AP", "AP", "AP", "O", "AP", "AP"]
        phrases = merge_tagged_spans(tokens, tags, "d1", 3)
        assert [(p.token_span, p.text) for p in phrases] == [
            ((2, 5), "steal SMS codes"), ((6, 8), "record audio")]
        assert phrases[0].doc_id == "d1"
        assert phrases[0].sentence_index == 3

    def test_no_spans(self):
        """No AP tags, no phrases."""
        assert merge_tagged_spans(["a", "b"], ["O", "O"]) == []

    def test_length_mismatch(self):
        """Tokens and tags must align."""
        with pytest.raises(ContractError):
            merge_tagged_spans(["a"], ["O", "O"])

    def test_unknown_tag(self):
        """Only AP and O tags exist."""
        with pytest.raises(ContractError):
            merge_tagged_spans(["a"], ["B-AP"])


class TestVerbFilter:
    """Test the verb-based phrase filter."""

    def test_inflections(self):
        """Suffix stripping recovers base forms."""
        assert "steal" in verb_candidates("steals")
        assert "intercept" in verb_candidates("intercepted")
        assert "capture" in verb_candidates("capturing")
        assert "steal" in verb_candidates("Stealing,")

    def test_filter(self):
        """Phrases without a lexicon verb are dropped."""
        phrases = [phrase("steals SMS codes"), phrase("banking credentials"),
                   phrase("intercepted calls")]
        kept = filter_invalid_phrases(phrases)
        assert [p.text for p in kept] == ["steals SMS codes", "intercepted calls"]

    def test_filter_logs_drops(self, caplog):
        """Each dropped phrase is logged."""
        caplog.set_level(logging.DEBUG, logger="cti_graph_toolkit.ttp.phrases")
        filter_invalid_phrases([phrase("banking credentials"), phrase("steals SMS codes")])
        assert "'banking credentials'" in caplog.text
        assert "steals SMS codes" not in caplog.text

    def test_custom_lexicon(self):
        """A caller-supplied lexicon replaces the default."""
        assert filter_invalid_phrases([phrase("exfiltrate files")], {"exfiltrate"})

    def test_empty_lexicon(self):
        """An empty lexicon is a contract error."""
        with pytest.raises(ContractError):
            filter_invalid_phrases([phrase("steal")], set())

    def test_shipped_lexicon(self):
        """The shipped lexicon holds common attack verbs."""
        assert {"steal", "intercept", "send", "collect"} <= default_verb_lexicon()

    def test_load_lexicon(self, tmp_path):
        """Comments and case are handled when loading."""
        path = tmp_path / "verbs.txt"
        path.write_text("# verbs\nExfiltrate\nwipe  # destructive\n", encoding="utf-8")
        assert load_verb_lexicon(path) == {"exfiltrate", "wipe"}


class TestRelationInput:
    """Test entity-marker formatting."""

    def test_markers(self):
        """Both mentions are wrapped after a CLS token."""
        assert format_relation_input("Cerberus uses TeamViewer.", (0, 8), (14, 24)) == (
            "[CLS] <e1> Cerberus </e1> uses <e2> TeamViewer </e2>.")

    def test_reversed_order(self):
        """e1 marks the first argument even when it comes second."""
        out = format_relation_input("TeamViewer is abused by Cerberus", (24, 32), (0, 10))
        assert out == "[CLS] <e2> TeamViewer </e2> is abused by <e1> Cerberus </e1>"

    def test_overlap(self):
        """Overlapping mentions are rejected."""
        with pytest.raises(ContractError):
            format_relation_input("Cerberus banker", (0, 8), (4, 15))

    def test_out_of_bounds(self):
        """Spans must lie inside the sentence."""
        with pytest.raises(ContractError):
            format_relation_input("short", (0, 3), (4, 10))

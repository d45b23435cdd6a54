"""
Attack Phrases
==============

Post-processing of token tags into attack-pattern phrases, verb-based
phrase filtering, and entity-marker formatting for relation inputs.

Usage:
    >>> from cti_graph_toolkit.ttp.phrases import merge_tagged_spans
    >>> phrases = merge_tagged_spans(
    ...     ["It", "can", "steal", "SMS", "codes"], ["O", "O", "AP", "AP", "AP"])
    >>> phrases[0].text
    'steal SMS codes'
"""

import logging
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

from ..exceptions import ContractError

logger = logging.getLogger(__name__)

VERB_LEXICON_FILE = Path(__file__).resolve().parent.parent / "data" / "verb_lexicon.txt"

ATTACK_TAG = "AP"
OUTSIDE_TAG = "O"

CLS_MARKER = "[CLS] "
E1_OPEN, E1_CLOSE = "<e1> ", " </e1>"
E2_OPEN, E2_CLOSE = "<e2> ", " </e2>"


@dataclass(frozen=True)
class AttackPhrase:
    """
    A contiguous run of attack-pattern tokens.

    Attributes:
        doc_id: Source document
        sentence_index: Sentence position within the document
        token_span: ``(first, last + 1)`` token indices
        text: The span's tokens joined by single spaces
    """

    doc_id: str
    sentence_index: int
    token_span: Tuple[int, int]
    text: str

    @property
    def tokens(self) -> List[str]:
        return self.text.split()


def merge_tagged_spans(
    tokens: Sequence[str],
    tags: Sequence[str],
    doc_id: str = "",
    sentence_index: int = 0,
) -> List[AttackPhrase]:
    """
    Group each maximal run of ``AP`` tags into one phrase.

    Args:
        tokens: Sentence tokens
        tags: One of ``AP``/``O`` per token

    Returns:
        Phrases in sentence order

    Raises:
        ContractError: If lengths differ or a tag is neither ``AP`` nor ``O``
    """
    if len(tokens) != len(tags):
        raise ContractError(f"{len(tokens)} tokens but {len(tags)} tags")
    phrases: List[AttackPhrase] = []
    start: Optional[int] = None
    for i, tag in enumerate(list(tags) + [OUTSIDE_TAG]):
        if tag not in (ATTACK_TAG, OUTSIDE_TAG):
            raise ContractError(f"unknown tag '{tag}' at token {i}")
        if tag == ATTACK_TAG and start is None:
            start = i
        elif tag == OUTSIDE_TAG and start is not None:
            phrases.append(AttackPhrase(
                doc_id, sentence_index, (start, i), " ".join(tokens[start:i])
            ))
            start = None
    return phrases


# =============================================================================
# VERB FILTER
# =============================================================================

@lru_cache(maxsize=1)
def default_verb_lexicon() -> FrozenSet[str]:
    """Security-domain verbs shipped with the package."""
    words = set()
    for line in VERB_LEXICON_FILE.read_text(encoding="utf-8").splitlines():
        word = line.split("#", 1)[0].strip().lower()
        if word:
            words.add(word)
    return frozenset(words)


def load_verb_lexicon(path: Union[str, Path]) -> FrozenSet[str]:
    """One verb per line; ``#`` starts a comment."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return frozenset(
        w for w in (line.split("#", 1)[0].strip().lower() for line in lines) if w
    )


_EDGE_PUNCT = re.compile(r"^[^\w]+|[^\w]+$")


def verb_candidates(token: str) -> Set[str]:
    """Lowercased token plus its forms with ``-s``, ``-ed`` or ``-ing`` stripped."""
    t = _EDGE_PUNCT.sub("", token.lower())
    if not t:
        return set()
    forms = {t}
    if t.endswith("ies") and len(t) > 4:
        forms.add(t[:-3] + "y")
    if t.endswith("es") and len(t) > 3:
        forms.add(t[:-2])
    if t.endswith("s") and not t.endswith("ss") and len(t) > 2:
        forms.add(t[:-1])
    for suffix in ("ed", "ing"):
        if t.endswith(suffix) and len(t) > len(suffix) + 1:
            stem = t[: -len(suffix)]
            forms.update({stem, stem + "e"})
            if suffix == "ed" and stem.endswith("i"):
                forms.add(stem[:-1] + "y")
            if len(stem) > 2 and stem[-1] == stem[-2]:
                forms.add(stem[:-1])
    return forms


def has_verb(phrase: AttackPhrase, verb_lexicon: Iterable[str]) -> bool:
    lexicon = verb_lexicon if isinstance(verb_lexicon, (set, frozenset)) else set(verb_lexicon)
    return any(verb_candidates(tok) & lexicon for tok in phrase.tokens)


def filter_invalid_phrases(
    phrases: Iterable[AttackPhrase],
    verb_lexicon: Optional[Iterable[str]] = None,
) -> List[AttackPhrase]:
    """
    Keep phrases that contain at least one verb from the lexicon.

    Args:
        phrases: Candidate phrases
        verb_lexicon: Verbs (default: the shipped lexicon)

    Returns:
        Kept phrases, order preserved

    Example:
        >>> [p.text for p in filter_invalid_phrases(phrases)]
    """
    lexicon = frozenset(verb_lexicon) if verb_lexicon is not None else default_verb_lexicon()
    if not lexicon:
        raise ContractError("verb lexicon is empty")
    kept = []
    for phrase in phrases:
        if has_verb(phrase, lexicon):
            kept.append(phrase)
        else:
            logger.debug("dropping phrase without a known verb: %r", phrase.text)
    return kept


# =============================================================================
# RELATION INPUT
# =============================================================================

def format_relation_input(
    sentence: str,
    e1_span: Tuple[int, int],
    e2_span: Tuple[int, int],
) -> str:
    """
    Wrap two entity mentions in ``<e1>``/``<e2>`` markers after a ``[CLS]`` token.

    ``e1`` always marks the first argument, wherever it sits in the sentence.

    Raises:
        ContractError: If a span is out of bounds or the spans overlap

    Example:
        >>> format_relation_input("Cerberus uses TeamViewer.", (0, 8), (14, 24))
        '[CLS] <e1> Cerberus </e1> uses <e2> TeamViewer </e2>.'
    """
    for name, (start, end) in (("e1", e1_span), ("e2", e2_span)):
        if not 0 <= start < end <= len(sentence):
            raise ContractError(f"{name} span {start}-{end} out of bounds")
    if e1_span[0] < e2_span[1] and e2_span[0] < e1_span[1]:
        raise ContractError("entity spans overlap")

    marks = sorted([
        (e1_span, E1_OPEN, E1_CLOSE),
        (e2_span, E2_OPEN, E2_CLOSE),
    ])
    pieces = [CLS_MARKER]
    cursor = 0
    for (start, end), opener, closer in marks:
        pieces += [sentence[cursor:start], opener, sentence[start:end], closer]
        cursor = end
    pieces.append(sentence[cursor:])
    return "".join(pieces)

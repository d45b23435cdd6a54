"""
Link-Prediction Evaluation
==========================

Ranked tail prediction and MRR / Mean Rank / Hits@n evaluation.

Ranks use raw scores, which order candidates exactly as confidences do.
In the filtered setting every other known-true tail of the query is
removed before ranking; ties count against the true tail.

Usage:
    >>> from cti_graph_toolkit.tucker.evaluation import evaluate, predict_tails
    >>> predict_tails(model, "Malware:Anubis", "uses", k=5, restrict_classes=True)
    >>> report = evaluate(model, test, known=train + test)
    >>> report.mrr, report.hits[10]
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
from scipy.special import expit

from ..config import EvalOptions
from ..exceptions import ContractError
from ..ontology import EntityClass, PlausibilityTable, RelationType, Triple, default_table
from .model import TuckerModel, entity_class_of, raw_scores_all_tails

logger = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = 1
UNKNOWN_CLASS = "unknown"

KnownTails = Dict[Tuple[str, str], Set[str]]
RelationLike = Union[RelationType, str]


def _relation(relation: RelationLike) -> RelationType:
    return relation if isinstance(relation, RelationType) else RelationType.parse(relation)


def known_tails(triples: Iterable[Triple]) -> KnownTails:
    """Index ``(head, relation name) -> true tails``; ``hasAlias`` in both orientations."""
    index: KnownTails = defaultdict(set)
    for t in triples:
        index[(t.head, t.relation.value)].add(t.tail)
        if t.relation.symmetric:
            index[(t.tail, t.relation.value)].add(t.head)
    return index


def candidate_mask(
    model: TuckerModel,
    head: str,
    relation: RelationLike,
    table: Optional[PlausibilityTable] = None,
) -> np.ndarray:
    """
    Boolean mask over the vocabulary of ontology-valid tails for the query.

    The head's class narrows the valid tail classes when it is known.
    """
    table = table or default_table()
    rel = _relation(relation)
    head_class = entity_class_of(head)
    allowed = (table.tail_classes(head_class, rel) if head_class is not None
               else table.tail_classes_for(rel))
    return np.array([entity_class_of(e) in allowed for e in model.entity_ids], dtype=bool)


# =============================================================================
# PREDICTION
# =============================================================================

@dataclass(frozen=True)
class RankedPrediction:
    """One predicted tail; ``rank`` starts at 1."""

    entity_id: str
    confidence: float
    rank: int

    def to_dict(self) -> Dict[str, Any]:
        return {"entity_id": self.entity_id, "confidence": self.confidence, "rank": self.rank}


def predict_tails(
    model: TuckerModel,
    head: str,
    relation: RelationLike,
    k: int = 10,
    restrict_classes: bool = False,
    known: Optional[Iterable[Triple]] = None,
    exclude_known: bool = False,
    table: Optional[PlausibilityTable] = None,
) -> List[RankedPrediction]:
    """
    Answer ``<head, relation, ?>`` with the ``k`` most confident tails.

    Args:
        model: Trained model
        head: Head entity id
        relation: Relation of the query
        k: Number of predictions (all candidates if fewer)
        restrict_classes: Only ontology-valid tail classes for the query
        known: Known true triples, used with ``exclude_known``
        exclude_known: Drop tails already known for the query
        table: Plausibility table for ``restrict_classes``

    Returns:
        Predictions by confidence descending, ties by entity id

    Raises:
        ContractError: If ``k < 1``
        VocabularyError: If the head or relation is unknown to the model

    Example:
        >>> predict_tails(model, "Malware:Anubis", RelationType.USES, k=1)[0].to_dict()
        {'entity_id': 'AttackPattern:T1636', 'confidence': 0.522, 'rank': 1}
    """
    if k < 1:
        raise ContractError("k must be >= 1")
    rel = _relation(relation)
    scores = raw_scores_all_tails(model, head, rel)
    keep = np.ones(model.n_entities, dtype=bool)
    if restrict_classes:
        keep &= candidate_mask(model, head, rel, table)
    if exclude_known and known is not None:
        for tail in known_tails(known).get((head, rel.value), ()):
            if model.has_entity(tail):
                keep[model.entity_index(tail)] = False

    candidates = list(np.flatnonzero(keep))
    candidates.sort(key=lambda i: (-scores[i], model.entity_ids[i]))
    return [
        RankedPrediction(model.entity_ids[i], float(expit(scores[i])), rank)
        for rank, i in enumerate(candidates[:k], start=1)
    ]


def rank_of(
    model: TuckerModel,
    triple: Triple,
    known: Optional[Union[KnownTails, Iterable[Triple]]] = None,
    filtered: bool = True,
    restrict_classes: bool = False,
    table: Optional[PlausibilityTable] = None,
) -> int:
    """
    Rank of the true tail of ``triple`` among all candidate tails.

    ``rank = 1 + #{c != t : s_c >= s_t}`` over candidates that are not
    filtered out, so a tie with one competitor gives rank 2.

    Raises:
        VocabularyError: If an endpoint or the relation is unknown to the model
    """
    scores = raw_scores_all_tails(model, triple.head, triple.relation)
    t = model.entity_index(triple.tail)
    competing = scores >= scores[t]
    competing[t] = False
    if restrict_classes:
        competing &= candidate_mask(model, triple.head, triple.relation, table)
    if filtered and known is not None:
        index = known if isinstance(known, dict) else known_tails(known)
        for tail in index.get((triple.head, triple.relation.value), ()):
            if tail != triple.tail and model.has_entity(tail):
                competing[model.entity_index(tail)] = False
    return 1 + int(competing.sum())


# =============================================================================
# METRICS
# =============================================================================

@dataclass(frozen=True)
class RankMetrics:
    """MRR, Mean Rank and Hits@n of one rank list."""

    n: int
    mrr: float
    mean_rank: float
    hits: Dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "mrr": self.mrr,
            "mean_rank": self.mean_rank,
            "hits": {str(k): v for k, v in sorted(self.hits.items())},
        }


def metrics_from_ranks(
    ranks: Sequence[int], hits_at: Sequence[int] = (1, 3, 10, 30)
) -> RankMetrics:
    """
    Example:
        >>> metrics_from_ranks([1, 2, 4]).mrr
        0.5833333333333334
    """
    if not len(ranks):
        raise ContractError("no ranks to summarize")
    r = np.asarray(ranks, dtype=np.float64)
    if (r < 1).any():
        raise ContractError("ranks start at 1")
    return RankMetrics(
        n=len(r),
        mrr=float(np.mean(1.0 / r)),
        mean_rank=float(np.mean(r)),
        hits={int(k): float(np.mean(r <= k)) for k in sorted(set(hits_at))},
    )


@dataclass
class EvalReport:
    """
    Link-prediction results, overall and per tail class.

    Attributes:
        overall: Metrics over every test triple
        per_class: Metrics grouped by the tail's entity class
        ranks: Rank of each test triple, in input order
        filtered: Whether known-true tails were filtered
    """

    overall: RankMetrics
    per_class: Dict[str, RankMetrics] = field(default_factory=dict)
    ranks: List[int] = field(default_factory=list)
    filtered: bool = True

    @property
    def mrr(self) -> float:
        return self.overall.mrr

    @property
    def mean_rank(self) -> float:
        return self.overall.mean_rank

    @property
    def hits(self) -> Dict[int, float]:
        return self.overall.hits

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "filtered": self.filtered,
            **self.overall.to_dict(),
            "per_class": {c: m.to_dict() for c, m in sorted(self.per_class.items())},
        }

    def report(self) -> str:
        """Plain-text table for terminals."""
        cuts = sorted(self.overall.hits)
        header = f"{'class':<16}{'n':>6}{'MRR':>8}{'MR':>9}" + "".join(
            f"{'H@' + str(k):>8}" for k in cuts)
        lines = ["=" * len(header), header, "-" * len(header)]
        rows = [("all", self.overall)] + sorted(self.per_class.items())
        for name, m in rows:
            lines.append(f"{name:<16}{m.n:>6}{m.mrr:>8.3f}{m.mean_rank:>9.1f}" + "".join(
                f"{m.hits.get(k, 0.0):>8.3f}" for k in cuts))
        lines.append("=" * len(header))
        return "\n".join(lines)


def evaluate(
    model: TuckerModel,
    test: Sequence[Triple],
    known: Optional[Iterable[Triple]] = None,
    options: Optional[EvalOptions] = None,
    table: Optional[PlausibilityTable] = None,
) -> EvalReport:
    """
    Rank every test triple and summarize.

    Args:
        model: Trained model
        test: Test triples
        known: All known true triples (train and test) used for filtering
        options: Filtering, cut-offs and candidate restriction
        table: Plausibility table for candidate restriction

    Returns:
        EvalReport

    Raises:
        ContractError: If ``test`` is empty
    """
    options = options or EvalOptions()
    test = list(test)
    if not test:
        raise ContractError("test set is empty")
    index = known_tails(list(known) if known is not None else test)

    ranks: List[int] = []
    by_class: Dict[str, List[int]] = defaultdict(list)
    for triple in test:
        rank = rank_of(model, triple, index, options.filtered,
                       options.restrict_candidates, table)
        ranks.append(rank)
        cls: Optional[EntityClass] = entity_class_of(triple.tail)
        by_class[cls.value if cls else UNKNOWN_CLASS].append(rank)

    report = EvalReport(
        overall=metrics_from_ranks(ranks, options.hits_at),
        per_class={c: metrics_from_ranks(r, options.hits_at) for c, r in by_class.items()},
        ranks=ranks,
        filtered=options.filtered,
    )
    logger.info("evaluated %d triples: MRR %.4f", len(ranks), report.mrr)
    return report

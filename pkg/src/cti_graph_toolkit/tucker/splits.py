"""
Dataset Splits
==============

Train/test splits for link prediction and the leave-out protocol for
attack-pattern prediction.

Usage:
    >>> from cti_graph_toolkit.tucker.splits import split_dataset, leave_out_attack_patterns
    >>> train, test = split_dataset(kg.triples, fraction=0.25, seed=0)
    >>> reduced = leave_out_attack_patterns(kg.triples, "Malware:Anubis")
"""

import logging
from collections import Counter
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import ContractError, EntityLookupError
from ..ontology import Entity, EntityClass, RelationType, Triple
from .model import entity_class_of

logger = logging.getLogger(__name__)

TEST_TAIL_CLASSES = frozenset({
    EntityClass.ATTACK_PATTERN,
    EntityClass.LOCATION,
    EntityClass.APPLICATION,
    EntityClass.ORGANIZATION,
})


def _class_lookup(
    entities: Optional[Mapping[str, Entity]],
) -> Callable[[str], Optional[EntityClass]]:
    if entities is None:
        return entity_class_of

    def lookup(entity_id: str) -> Optional[EntityClass]:
        entity = entities.get(entity_id)
        return entity.entity_class if entity is not None else entity_class_of(entity_id)

    return lookup


def split_dataset(
    triples: Iterable[Triple],
    fraction: float = 0.25,
    seed: int = 0,
    entities: Optional[Mapping[str, Entity]] = None,
) -> Tuple[List[Triple], List[Triple]]:
    """
    Split triples into train and test sets.

    Test triples come from the pool of Malware-headed triples whose tail is
    an AttackPattern, Location, Application or Organization; ``fraction`` of
    the pool is drawn in seeded random order. A draw is skipped when it would
    leave its head or tail without any training triple, so every test entity
    is still known to the trained model.

    Args:
        triples: Annotated triples (duplicates are collapsed)
        fraction: Share of the pool used for testing, in (0, 1)
        seed: Sampling seed
        entities: Entity store for class lookup (default: class from the id)

    Returns:
        (train, test), each in input order and disjoint

    Raises:
        ContractError: If ``fraction`` is outside (0, 1)
    """
    if not 0 < fraction < 1:
        raise ContractError(f"fraction must lie in (0, 1), got {fraction}")
    class_of = _class_lookup(entities)

    unique: Dict[Tuple[str, RelationType, str], Triple] = {}
    for t in triples:
        unique.setdefault(t.key, t)
    ordered = list(unique.values())

    pool = [
        i for i, t in enumerate(ordered)
        if class_of(t.head) is EntityClass.MALWARE and class_of(t.tail) in TEST_TAIL_CLASSES
    ]
    n_test = int(round(fraction * len(pool)))

    degree: Counter = Counter()
    for t in ordered:
        degree[t.head] += 1
        degree[t.tail] += 1

    rng = np.random.default_rng(seed)
    chosen = set()
    for pick in rng.permutation(len(pool)):
        if len(chosen) == n_test:
            break
        t = ordered[pool[pick]]
        if degree[t.head] > 1 and degree[t.tail] > 1:
            degree[t.head] -= 1
            degree[t.tail] -= 1
            chosen.add(pool[pick])
    if len(chosen) < n_test:
        logger.warning("only %d of %d test triples keep their entities in training",
                       len(chosen), n_test)

    train = [t for i, t in enumerate(ordered) if i not in chosen]
    test = [t for i, t in enumerate(ordered) if i in chosen]
    logger.info("split %d triples: %d train, %d test (pool %d)",
                len(ordered), len(train), len(test), len(pool))
    return train, test


def _is_attack_pattern_use(
    t: Triple, malware_id: str, class_of: Callable[[str], Optional[EntityClass]]
) -> bool:
    return (t.head == malware_id and t.relation is RelationType.USES
            and class_of(t.tail) is EntityClass.ATTACK_PATTERN)


def attack_patterns_of(
    triples: Iterable[Triple],
    malware_id: str,
    entities: Optional[Mapping[str, Entity]] = None,
) -> List[Triple]:
    """The ``<malware, uses, AttackPattern>`` triples among ``triples``."""
    class_of = _class_lookup(entities)
    return [t for t in triples if _is_attack_pattern_use(t, malware_id, class_of)]


def leave_out_attack_patterns(
    triples: Sequence[Triple],
    malware_id: str,
    entities: Optional[Mapping[str, Entity]] = None,
) -> List[Triple]:
    """
    Remove every ``<malware, uses, AttackPattern>`` triple; keep everything else.

    Raises:
        EntityLookupError: If the malware is neither in ``entities`` nor in any triple
    """
    known = (malware_id in entities) if entities is not None else any(
        malware_id in (t.head, t.tail) for t in triples)
    if not known:
        raise EntityLookupError(f"unknown malware: {malware_id}")
    class_of = _class_lookup(entities)
    reduced = [t for t in triples if not _is_attack_pattern_use(t, malware_id, class_of)]
    logger.info("left out %d attack patterns of %s", len(triples) - len(reduced), malware_id)
    return reduced

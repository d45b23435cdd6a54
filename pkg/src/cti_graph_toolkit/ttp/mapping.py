"""
Technique Mapping
=================

Maps an attack-phrase embedding to the closest ATT&CK technique.

For each technique the distance is a weighted sum of the cosine distances
to its title and description vectors::

    d_i = w_t * cos(v_phrase, v_title_i) + (1 - w_t) * cos(v_phrase, v_desc_i)

The technique with the smallest ``d_i`` wins (ties go to the smallest id);
the phrase stays unmapped when that distance is ``>= tau``.

Usage:
    >>> from cti_graph_toolkit.ttp.mapping import TechniqueIndex
    >>> index = TechniqueIndex(embed_catalog(get_catalog('mobile')))
    >>> index.map_vector(embed("steal SMS messages"))
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from ..config import MappingConfig
from ..exceptions import ContractError, EmptyInputError
from .catalog import TechniqueEmbedding
from .embeddings import EmbeddingProvider, EmbeddingVector, cosine_distance, embed
from .phrases import AttackPhrase

logger = logging.getLogger(__name__)

VectorLike = Union[EmbeddingVector, np.ndarray]


@dataclass(frozen=True)
class MappingResult:
    """
    Outcome for one phrase.

    ``technique_id`` is None when unmapped; ``nearest_id`` always names the
    closest technique.
    """

    technique_id: Optional[str]
    distance: float
    nearest_id: str

    @property
    def mapped(self) -> bool:
        return self.technique_id is not None

    def to_dict(self) -> Dict:
        return {"technique_id": self.technique_id, "distance": self.distance}


def weighted_distance(
    v_phrase: VectorLike,
    te: TechniqueEmbedding,
    w_t: float = 0.4,
) -> float:
    """
    Title/description weighted cosine distance.

    Example:
        >>> weighted_distance(v, te, w_t=1.0) == cosine_distance(v, te.v_title)
        True
    """
    if not 0.0 <= w_t <= 1.0:
        raise ContractError(f"w_t must lie in [0, 1], got {w_t}")
    return (
        w_t * cosine_distance(v_phrase, te.v_title)
        + (1.0 - w_t) * cosine_distance(v_phrase, te.v_desc)
    )


def map_phrase(
    v_phrase: VectorLike,
    catalog: Sequence[TechniqueEmbedding],
    cfg: Optional[MappingConfig] = None,
) -> MappingResult:
    """
    Map one phrase vector by scanning the whole catalog.

    Args:
        v_phrase: Phrase embedding
        catalog: Technique embeddings of one platform
        cfg: Weight and threshold (defaults: ``w_t=0.4``, ``tau=0.6``)

    Returns:
        MappingResult

    Raises:
        ContractError: If the catalog is empty or dimensions differ
    """
    if not catalog:
        raise ContractError("cannot map against an empty catalog")
    cfg = cfg or MappingConfig()
    best_id, best = "", float("inf")
    for te in catalog:
        d = weighted_distance(v_phrase, te, cfg.w_t)
        if d < best or (d == best and te.technique_id < best_id):
            best_id, best = te.technique_id, d
    return MappingResult(best_id if best < cfg.tau else None, best, best_id)


class TechniqueIndex:
    """
    Vectorized catalog for mapping many phrases.

    Technique vectors are stacked as unit rows in id order, so ``argmin``
    picks the smallest id among equal distances.
    """

    def __init__(self, catalog: Sequence[TechniqueEmbedding]):
        if not catalog:
            raise ContractError("cannot index an empty catalog")
        ordered = sorted(catalog, key=lambda te: te.technique_id)
        dims = {te.dimension for te in ordered}
        if len(dims) != 1:
            raise ContractError(f"mixed catalog dimensions: {sorted(dims)}")
        self.dimension = dims.pop()
        self.ids: List[str] = [te.technique_id for te in ordered]
        self._titles = np.vstack([te.v_title.unit() for te in ordered])
        self._descs = np.vstack([te.v_desc.unit() for te in ordered])

    def __len__(self) -> int:
        return len(self.ids)

    def distances(self, vectors: np.ndarray, w_t: float = 0.4) -> np.ndarray:
        """``(n_phrases, n_techniques)`` weighted distances."""
        v = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        if v.shape[1] != self.dimension:
            raise ContractError(
                f"dimension mismatch: {v.shape[1]} vs catalog {self.dimension}"
            )
        norms = np.linalg.norm(v, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ContractError("cosine distance is undefined for a zero vector")
        units = v / norms
        d_title = np.clip(1.0 - units @ self._titles.T, 0.0, 2.0)
        d_desc = np.clip(1.0 - units @ self._descs.T, 0.0, 2.0)
        return w_t * d_title + (1.0 - w_t) * d_desc

    def map_batch(
        self, vectors: np.ndarray, cfg: Optional[MappingConfig] = None
    ) -> List[MappingResult]:
        cfg = cfg or MappingConfig()
        dist = self.distances(vectors, cfg.w_t)
        best = np.argmin(dist, axis=1)
        out = []
        for row, j in enumerate(best):
            d = float(dist[row, j])
            tid = self.ids[j]
            out.append(MappingResult(tid if d < cfg.tau else None, d, tid))
        return out

    def map_vector(
        self, v_phrase: VectorLike, cfg: Optional[MappingConfig] = None
    ) -> MappingResult:
        values = v_phrase.values if isinstance(v_phrase, EmbeddingVector) else v_phrase
        return self.map_batch(np.asarray(values)[None, :], cfg)[0]

    def resolver(
        self,
        provider: Optional[EmbeddingProvider] = None,
        cfg: Optional[MappingConfig] = None,
    ) -> Callable[[str], Optional[str]]:
        """Function from phrase text to technique id (None if unmapped)."""
        def resolve(text: str) -> Optional[str]:
            try:
                vec = embed(text, provider)
            except EmptyInputError:
                return None
            return self.map_vector(vec, cfg).technique_id
        return resolve


@dataclass(frozen=True)
class PhraseMapping:
    """Mapping record for one attack phrase."""

    phrase: AttackPhrase
    result: MappingResult

    def to_dict(self) -> Dict:
        return {
            "doc_id": self.phrase.doc_id,
            "sentence_index": self.phrase.sentence_index,
            "phrase": self.phrase.text,
            "technique_id": self.result.technique_id,
            "distance": self.result.distance,
        }


def map_attack_phrases(
    phrases: Iterable[AttackPhrase],
    index: TechniqueIndex,
    provider: Optional[EmbeddingProvider] = None,
    cfg: Optional[MappingConfig] = None,
) -> List[PhraseMapping]:
    """
    Embed and map phrases in order.

    Phrases with nothing to embed come back unmapped with distance 1.0.
    """
    out = []
    for phrase in phrases:
        try:
            vec = embed(phrase.text, provider)
        except EmptyInputError:
            logger.debug("nothing to embed in %r", phrase.text)
            out.append(PhraseMapping(phrase, MappingResult(None, 1.0, "")))
            continue
        out.append(PhraseMapping(phrase, index.map_vector(vec, cfg)))
    mapped = sum(1 for m in out if m.result.mapped)
    logger.info("mapped %d of %d phrases", mapped, len(out))
    return out

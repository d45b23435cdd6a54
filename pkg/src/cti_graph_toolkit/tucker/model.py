"""
TuckER Model
============

Parameters and scoring of a TuckER link-prediction model.

A triple ``<h, r, t>`` scores ``W x1 e_h x2 w_r x3 e_t``: the core tensor
``W`` (d_e x d_r x d_e) contracted with the head embedding, the relation
embedding and the tail embedding. Confidences are the logistic of the score.

Usage:
    >>> from cti_graph_toolkit.tucker.model import score, score_all_tails
    >>> score(model, "Malware:Anubis", "uses", "AttackPattern:T1636")
    >>> score_all_tails(model, "Malware:Anubis", "uses").argmax()
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from ..config import TuckerConfig
from ..exceptions import ContractError, ParseError, VocabularyError
from ..ontology import EntityClass, RelationType

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1

PathLike = Union[str, Path]
RelationLike = Union[RelationType, str]


def entity_class_of(entity_id: str) -> Optional[EntityClass]:
    """Class encoded in a ``"<Class>:<name>"`` id, or None for other ids."""
    prefix, sep, _ = entity_id.partition(":")
    if not sep:
        return None
    try:
        return EntityClass(prefix)
    except ValueError:
        return None


def _relation_name(relation: RelationLike) -> str:
    return relation.value if isinstance(relation, RelationType) else str(relation)


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class TuckerModel:
    """
    Trained (or freshly initialized) TuckER parameters with their vocabulary.

    Arrays are float64 and read-only, so a model can be shared between threads.

    Attributes:
        entity_matrix: ``(n_e, d_e)`` entity embeddings, row i for ``entity_ids[i]``
        relation_matrix: ``(n_r, d_r)`` relation embeddings
        core_tensor: ``(d_e, d_r, d_e)`` core tensor
        entity_ids: Entity vocabulary in row order
        relation_ids: Relation names in row order
        config: Training configuration
    """

    entity_matrix: np.ndarray
    relation_matrix: np.ndarray
    core_tensor: np.ndarray
    entity_ids: Tuple[str, ...]
    relation_ids: Tuple[str, ...]
    config: TuckerConfig = field(default_factory=TuckerConfig)

    def __post_init__(self):
        for name in ("entity_matrix", "relation_matrix", "core_tensor"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "entity_ids", tuple(self.entity_ids))
        object.__setattr__(self, "relation_ids", tuple(self.relation_ids))

        E, R, W = self.entity_matrix, self.relation_matrix, self.core_tensor
        if E.ndim != 2 or R.ndim != 2 or W.ndim != 3:
            raise ContractError("expected 2-D entity/relation matrices and a 3-D core tensor")
        n_e, d_e = E.shape
        n_r, d_r = R.shape
        if W.shape != (d_e, d_r, d_e):
            raise ContractError(f"core tensor shape {W.shape} != {(d_e, d_r, d_e)}")
        if n_e != len(self.entity_ids) or n_r != len(self.relation_ids):
            raise ContractError("vocabulary size does not match parameter shapes")
        if len(set(self.entity_ids)) != n_e or len(set(self.relation_ids)) != n_r:
            raise ContractError("vocabulary contains duplicates")
        if not (np.isfinite(E).all() and np.isfinite(R).all() and np.isfinite(W).all()):
            raise ContractError("model parameters must be finite")

        object.__setattr__(self, "_entity_index",
                           {e: i for i, e in enumerate(self.entity_ids)})
        object.__setattr__(self, "_relation_index",
                           {r: i for i, r in enumerate(self.relation_ids)})

    # -- construction ---------------------------------------------------------

    @classmethod
    def initialize(
        cls,
        entity_ids: Sequence[str],
        relation_ids: Sequence[RelationLike],
        config: Optional[TuckerConfig] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> "TuckerModel":
        """
        Parameters drawn uniform in ``(-init_scale, init_scale)``.

        Draw order is entities, relations, core, all from ``rng``
        (default: a generator seeded with ``config.seed``).
        """
        config = config or TuckerConfig()
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        s = config.init_scale
        n_e, n_r = len(entity_ids), len(relation_ids)
        E = rng.uniform(-s, s, size=(n_e, config.d_e))
        R = rng.uniform(-s, s, size=(n_r, config.d_r))
        W = rng.uniform(-s, s, size=(config.d_e, config.d_r, config.d_e))
        return cls(E, R, W, tuple(entity_ids),
                   tuple(_relation_name(r) for r in relation_ids), config)

    def with_parameters(
        self, entity_matrix: np.ndarray, relation_matrix: np.ndarray, core_tensor: np.ndarray
    ) -> "TuckerModel":
        return TuckerModel(entity_matrix, relation_matrix, core_tensor,
                           self.entity_ids, self.relation_ids, self.config)

    # -- vocabulary -----------------------------------------------------------

    @property
    def n_entities(self) -> int:
        return len(self.entity_ids)

    @property
    def n_relations(self) -> int:
        return len(self.relation_ids)

    @property
    def seed(self) -> int:
        return self.config.seed

    def entity_index(self, entity_id: str) -> int:
        try:
            return self._entity_index[entity_id]  # type: ignore[attr-defined]
        except KeyError:
            raise VocabularyError(f"entity not in model vocabulary: {entity_id}") from None

    def relation_index(self, relation: RelationLike) -> int:
        name = _relation_name(relation)
        try:
            return self._relation_index[name]  # type: ignore[attr-defined]
        except KeyError:
            raise VocabularyError(f"relation not in model vocabulary: {name}") from None

    def has_entity(self, entity_id: str) -> bool:
        return entity_id in self._entity_index  # type: ignore[attr-defined]

    def entity_classes(self) -> Dict[str, Optional[EntityClass]]:
        return {e: entity_class_of(e) for e in self.entity_ids}

    # -- identity -------------------------------------------------------------

    def metadata(self) -> Dict[str, Any]:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "entity_ids": list(self.entity_ids),
            "relation_ids": list(self.relation_ids),
        }

    def fingerprint(self) -> str:
        """SHA-256 over the parameter bytes and the metadata."""
        digest = hashlib.sha256()
        for array in (self.entity_matrix, self.relation_matrix, self.core_tensor):
            digest.update(np.ascontiguousarray(array, dtype="<f8").tobytes())
        digest.update(json.dumps(self.metadata(), sort_keys=True).encode("utf-8"))
        return digest.hexdigest()

    def parameters_equal(self, other: "TuckerModel") -> bool:
        """Bitwise equality of parameters and vocabulary."""
        return (
            self.entity_ids == other.entity_ids
            and self.relation_ids == other.relation_ids
            and np.array_equal(self.entity_matrix, other.entity_matrix)
            and np.array_equal(self.relation_matrix, other.relation_matrix)
            and np.array_equal(self.core_tensor, other.core_tensor)
        )

    def __repr__(self) -> str:
        d_e, d_r = self.entity_matrix.shape[1], self.relation_matrix.shape[1]
        return (f"TuckerModel(n_e={self.n_entities}, n_r={self.n_relations}, "
                f"d_e={d_e}, d_r={d_r}, seed={self.seed})")


# =============================================================================
# SCORING
# =============================================================================

def relation_core(model: TuckerModel, relation_idx: int) -> np.ndarray:
    """The ``(d_e, d_e)`` slice ``sum_k w_r[k] W[:, k, :]``."""
    return np.tensordot(model.relation_matrix[relation_idx], model.core_tensor, axes=([0], [1]))


def score(model: TuckerModel, head: str, relation: RelationLike, tail: str) -> float:
    """
    Raw trilinear score of one triple.

    Raises:
        VocabularyError: If an id is outside the model vocabulary

    Example:
        >>> score(model, "Malware:Anubis", RelationType.USES, "AttackPattern:T1636")
    """
    h = model.entity_index(head)
    r = model.relation_index(relation)
    t = model.entity_index(tail)
    return float(np.einsum(
        "i,k,j,ikj->",
        model.entity_matrix[h], model.relation_matrix[r], model.entity_matrix[t],
        model.core_tensor,
    ))


def confidence(model: TuckerModel, head: str, relation: RelationLike, tail: str) -> float:
    return float(expit(score(model, head, relation, tail)))


def raw_scores_all_tails(model: TuckerModel, head: str, relation: RelationLike) -> np.ndarray:
    """Raw scores of ``<head, relation, t>`` for every entity t, in vocabulary order."""
    h = model.entity_index(head)
    r = model.relation_index(relation)
    projected = model.entity_matrix[h] @ relation_core(model, r)
    return model.entity_matrix @ projected


def score_all_tails(model: TuckerModel, head: str, relation: RelationLike) -> np.ndarray:
    """
    Confidences ``logistic(score(head, relation, t))`` for every entity t.

    Raises:
        VocabularyError: If an id is outside the model vocabulary
    """
    return expit(raw_scores_all_tails(model, head, relation))


# =============================================================================
# PERSISTENCE
# =============================================================================

def save_model(model: TuckerModel, path: PathLike) -> Path:
    """
    Write the model to a single ``.npz`` file (parameters plus JSON metadata).

    Returns:
        The written path
    """
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("wb") as fh:
        np.savez(
            fh,
            entity_matrix=model.entity_matrix,
            relation_matrix=model.relation_matrix,
            core_tensor=model.core_tensor,
            metadata=np.array(json.dumps(model.metadata(), sort_keys=True)),
        )
    logger.info("saved %r to %s", model, out)
    return out


def load_model(path: PathLike) -> TuckerModel:
    """
    Read a model written by :func:`save_model`.

    Raises:
        ParseError: If the file is not a model artifact of a supported version
    """
    source = str(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            meta: Mapping[str, Any] = json.loads(str(data["metadata"]))
            arrays = (data["entity_matrix"], data["relation_matrix"], data["core_tensor"])
    except (KeyError, ValueError, OSError) as exc:
        raise ParseError(f"not a model artifact: {exc}", source=source) from exc
    if meta.get("format_version") != MODEL_FORMAT_VERSION:
        raise ParseError(f"unsupported model format_version {meta.get('format_version')}",
                         source=source)
    config = TuckerConfig(**meta["config"])
    return TuckerModel(*arrays, tuple(meta["entity_ids"]), tuple(meta["relation_ids"]), config)

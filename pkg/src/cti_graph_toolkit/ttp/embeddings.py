"""
Embeddings
==========

Fixed-dimension text vectors and the distance used to compare them.

The default provider hashes character trigrams and word unigrams into
256 buckets and L2-normalizes the counts, so every run is reproducible
without a learned model. Vectors from any external sentence encoder can
be loaded from a text file instead.

Usage:
    >>> from cti_graph_toolkit.ttp.embeddings import embed, cosine_distance
    >>> u = embed("steal SMS codes")
    >>> v = embed("steal SMS codes!")
    >>> cosine_distance(u, v) < 0.1
    True
"""

import logging
import math
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Union

import numpy as np
from sklearn.feature_extraction.text import HashingVectorizer

from ..audit import AuditReport, IssueType
from ..exceptions import ContractError, EmptyInputError, VocabularyError

logger = logging.getLogger(__name__)

DEFAULT_DIMENSION = 256

PathLike = Union[str, Path]
ArrayLike = Union["EmbeddingVector", np.ndarray, List[float]]


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """
    Immutable, finite, non-zero real vector.

    Attributes:
        values: Read-only float64 array
        provider: Name of the provider that produced it
    """

    values: np.ndarray
    provider: str = "external"

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64).reshape(-1)
        if arr.size == 0:
            raise ContractError("embedding must have at least one component")
        if not np.all(np.isfinite(arr)):
            raise ContractError("embedding contains NaN or Inf")
        if not np.any(arr):
            raise ContractError("all-zero embedding has no direction")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def unit(self) -> np.ndarray:
        return self.values / self.norm

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.values.tobytes())

    def __len__(self) -> int:
        return self.dimension


def _as_array(v: ArrayLike) -> np.ndarray:
    if isinstance(v, EmbeddingVector):
        return v.values
    return np.asarray(v, dtype=np.float64).reshape(-1)


def cosine_distance(u: ArrayLike, v: ArrayLike) -> float:
    """
    ``1 - cos(u, v)``, clamped to ``[0, 2]``.

    Raises:
        ContractError: If dimensions differ or a vector is all-zero
    """
    a, b = _as_array(u), _as_array(v)
    if a.shape != b.shape:
        raise ContractError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ContractError("cosine distance is undefined for a zero vector")
    d = 1.0 - float(np.dot(a, b) / (na * nb))
    return min(2.0, max(0.0, d))


# =============================================================================
# PROVIDERS
# =============================================================================

class EmbeddingProvider(ABC):
    """Maps text to vectors of one fixed dimension."""

    name: str = "provider"

    @property
    @abstractmethod
    def dimension(self) -> int:
        """Dimension of every vector this provider returns."""

    @abstractmethod
    def encode_batch(self, texts: List[str]) -> np.ndarray:
        """Encode texts into an ``(n, dimension)`` array."""

    def encode(self, text: str) -> np.ndarray:
        return self.encode_batch([text])[0]


_PUNCT_RE = re.compile(r"[^\w\s]+")


def _preprocess(text: str) -> str:
    return " ".join(_PUNCT_RE.sub(" ", text.lower()).split())


class HashedFeatureProvider(EmbeddingProvider):
    """
    Hashed bag of character trigrams and word unigrams, L2-normalized.

    Lowercases and turns punctuation into spaces first, so trailing
    punctuation does not move a phrase.
    """

    name = "hashed-char3-word1"

    def __init__(self, dimension: int = DEFAULT_DIMENSION):
        if dimension < 1:
            raise ContractError("dimension must be positive")
        self._dimension = dimension
        common = dict(
            n_features=dimension,
            alternate_sign=False,
            norm=None,
            lowercase=False,
            preprocessor=_preprocess,
            dtype=np.float64,
        )
        self._chars = HashingVectorizer(analyzer="char_wb", ngram_range=(3, 3), **common)
        self._words = HashingVectorizer(
            analyzer="word", ngram_range=(1, 1), token_pattern=r"(?u)\b\w+\b", **common
        )

    @property
    def dimension(self) -> int:
        return self._dimension

    def encode_batch(self, texts: List[str]) -> np.ndarray:
        counts = self._chars.transform(texts) + self._words.transform(texts)
        dense = np.asarray(counts.todense(), dtype=np.float64)
        norms = np.linalg.norm(dense, axis=1, keepdims=True)
        return np.divide(dense, norms, out=np.zeros_like(dense), where=norms > 0)


class PrecomputedProvider(EmbeddingProvider):
    """
    Looks texts up in a table of externally computed vectors.

    Raises VocabularyError for a text with no stored vector.
    """

    name = "precomputed"

    def __init__(self, vectors: Mapping[str, EmbeddingVector]):
        if not vectors:
            raise ContractError("precomputed provider needs at least one vector")
        dims = {v.dimension for v in vectors.values()}
        if len(dims) != 1:
            raise ContractError(f"mixed embedding dimensions: {sorted(dims)}")
        self._vectors = dict(vectors)
        self._dimension = dims.pop()

    @property
    def dimension(self) -> int:
        return self._dimension

    def __contains__(self, key: object) -> bool:
        return key in self._vectors

    def encode_batch(self, texts: List[str]) -> np.ndarray:
        rows = []
        for text in texts:
            vec = self._vectors.get(text)
            if vec is None:
                raise VocabularyError(f"no precomputed embedding for '{text}'")
            rows.append(vec.values)
        return np.vstack(rows) if rows else np.zeros((0, self._dimension))


@lru_cache(maxsize=1)
def default_provider() -> HashedFeatureProvider:
    return HashedFeatureProvider()


def embed(text: str, provider: Optional[EmbeddingProvider] = None) -> EmbeddingVector:
    """
    Embed one text.

    Args:
        text: Non-empty text
        provider: Embedding provider (default: hashed features, 256 dims)

    Returns:
        EmbeddingVector

    Raises:
        EmptyInputError: If the text is empty or yields an all-zero vector
    """
    if not text or not text.strip():
        raise EmptyInputError("cannot embed empty text")
    provider = provider or default_provider()
    values = provider.encode(text)
    if not np.any(values):
        raise EmptyInputError(f"text has no embeddable features: '{text}'")
    return EmbeddingVector(values, provider=provider.name)


def embed_many(
    texts: Iterable[str], provider: Optional[EmbeddingProvider] = None
) -> List[EmbeddingVector]:
    """Embed several texts in one provider call."""
    texts = list(texts)
    for text in texts:
        if not text or not text.strip():
            raise EmptyInputError("cannot embed empty text")
    provider = provider or default_provider()
    matrix = provider.encode_batch(texts)
    out = []
    for text, row in zip(texts, matrix):
        if not np.any(row):
            raise EmptyInputError(f"text has no embeddable features: '{text}'")
        out.append(EmbeddingVector(row, provider=provider.name))
    return out


# =============================================================================
# EMBEDDING FILES
# =============================================================================

@dataclass
class EmbeddingLoadResult:
    """Vectors keyed by id, plus rejected lines."""

    vectors: Dict[str, EmbeddingVector] = field(default_factory=dict)
    rejected: AuditReport = field(default_factory=lambda: AuditReport("load_embeddings"))

    @property
    def dimension(self) -> Optional[int]:
        for vec in self.vectors.values():
            return vec.dimension
        return None


def load_embeddings(path: PathLike) -> EmbeddingLoadResult:
    """
    Read ``<id> <float> <float> ...`` lines.

    The first accepted line fixes the dimension; lines with another
    dimension, non-finite or unparsable values, all-zero vectors or a
    repeated id are rejected.

    Raises:
        OSError: If the file cannot be read
    """
    path = Path(path)
    result = EmbeddingLoadResult()
    report = result.rejected
    dimension: Optional[int] = None

    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        where = f"{path.name}:{number}"
        key, raw = parts[0], parts[1:]
        if not raw:
            report.add(IssueType.MALFORMED_LINE, f"no values for '{key}'", location=where)
            continue
        try:
            values = [float(x) for x in raw]
        except ValueError:
            report.add(IssueType.MALFORMED_LINE, f"non-numeric value for '{key}'",
                       location=where)
            continue
        if not all(math.isfinite(x) for x in values):
            report.add(IssueType.NON_FINITE_VALUE, f"non-finite value for '{key}'",
                       location=where)
            continue
        if dimension is not None and len(values) != dimension:
            report.add(IssueType.DIMENSION_MISMATCH,
                       f"'{key}' has dimension {len(values)}, expected {dimension}",
                       location=where)
            continue
        if not any(values):
            report.add(IssueType.ZERO_VECTOR, f"all-zero vector for '{key}'", location=where)
            continue
        if key in result.vectors:
            report.add(IssueType.MALFORMED_LINE, f"duplicate id '{key}'", location=where)
            continue
        dimension = len(values)
        result.vectors[key] = EmbeddingVector(np.array(values), provider=path.name)

    logger.info("%s: loaded %d vectors, rejected %d", path, len(result.vectors), len(report))
    return result


def save_embeddings(vectors: Mapping[str, EmbeddingVector], path: PathLike) -> Path:
    """Write vectors in the format read by :func:`load_embeddings`."""
    path = Path(path)
    lines = [
        key + " " + " ".join(repr(float(x)) for x in vec.values)
        for key, vec in vectors.items()
    ]
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path

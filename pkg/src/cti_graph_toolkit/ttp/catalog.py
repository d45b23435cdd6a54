"""
Technique Catalogs
==================

MITRE ATT&CK technique snapshots (66 mobile, 193 enterprise techniques,
no sub-techniques) and their title/description embeddings.

Usage:
    >>> from cti_graph_toolkit.ttp.catalog import get_catalog, list_platforms
    >>> mobile = get_catalog('mobile')
    >>> len(mobile)
    66
    >>> mobile['T1636'].name
    'Protected user data'
"""

import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, Optional, Tuple, Union

from ..exceptions import ContractError, ParseError, VocabularyError
from .embeddings import EmbeddingProvider, EmbeddingVector, embed_many

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

_TECHNIQUE_ID = re.compile(r"^T[0-9]{4}$")


class Platform(Enum):
    """ATT&CK matrix a technique belongs to."""
    MOBILE = "mobile"
    ENTERPRISE = "enterprise"


@dataclass(frozen=True)
class Technique:
    """
    One ATT&CK technique.

    Attributes:
        id: Technique id, ``T`` plus four digits
        name: Technique name (used as its title)
        description: Short description of adversary behavior
        platform: Matrix the technique belongs to
        kill_chain_phases: Tactic names, e.g. ``("defense-evasion",)``
    """

    id: str
    name: str
    description: str
    platform: Platform
    kill_chain_phases: Tuple[str, ...] = ()

    def __post_init__(self):
        if not _TECHNIQUE_ID.match(self.id):
            raise ContractError(f"invalid technique id: '{self.id}'")
        object.__setattr__(self, "kill_chain_phases", tuple(self.kill_chain_phases))

    def to_dict(self) -> Dict:
        return {
            "id": self.id,
            "name": self.name,
            "description": self.description,
            "platform": self.platform.value,
            "phases": list(self.kill_chain_phases),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Technique":
        return cls(
            id=data["id"],
            name=data["name"],
            description=data["description"],
            platform=Platform(data["platform"]),
            kill_chain_phases=tuple(data.get("phases", ())),
        )


@dataclass(frozen=True)
class TechniqueCatalog:
    """Techniques of one platform, ids unique, in file order."""

    platform: str
    techniques: Tuple[Technique, ...] = ()
    _by_id: Dict[str, Technique] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        index: Dict[str, Technique] = {}
        for tech in self.techniques:
            if tech.id in index:
                raise ContractError(f"duplicate technique id {tech.id} in {self.platform}")
            index[tech.id] = tech
        object.__setattr__(self, "_by_id", index)

    def __len__(self) -> int:
        return len(self.techniques)

    def __iter__(self) -> Iterator[Technique]:
        return iter(self.techniques)

    def __contains__(self, technique_id: object) -> bool:
        return technique_id in self._by_id

    def __getitem__(self, technique_id: str) -> Technique:
        try:
            return self._by_id[technique_id]
        except KeyError:
            raise VocabularyError(
                f"technique {technique_id} not in {self.platform} catalog"
            ) from None

    @property
    def ids(self) -> List[str]:
        return [t.id for t in self.techniques]

    def to_records(self) -> List[Dict]:
        return [t.to_dict() for t in self.techniques]


def load_catalog(path: Union[str, Path], platform: Optional[str] = None) -> TechniqueCatalog:
    """
    Read a catalog from a JSON array of ``{id, name, description, platform, phases}``.

    Raises:
        ParseError: If the file is not valid JSON or a record is incomplete
    """
    path = Path(path)
    try:
        records = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ParseError(f"invalid catalog JSON: {exc}", source=str(path)) from exc
    if not isinstance(records, list):
        raise ParseError("catalog must be a JSON array", source=str(path))

    techniques = []
    for i, record in enumerate(records, start=1):
        try:
            techniques.append(Technique.from_dict(record))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad technique record #{i}: {exc}", source=str(path)) from exc
    name = platform or (techniques[0].platform.value if techniques else path.stem)
    return TechniqueCatalog(platform=name, techniques=tuple(techniques))


# =============================================================================
# CATALOG REGISTRY
# =============================================================================

CATALOGS: Dict[str, TechniqueCatalog] = {}

_SHIPPED = {
    "mobile": DATA_DIR / "mobile_techniques.json",
    "enterprise": DATA_DIR / "enterprise_techniques.json",
}
_ALIASES = {"android": "mobile", "ios": "mobile", "windows": "enterprise"}


def get_catalog(platform: str) -> TechniqueCatalog:
    """
    Get the technique catalog for a platform.

    Args:
        platform: ``mobile``, ``enterprise``, an alias, or a registered name

    Returns:
        TechniqueCatalog

    Raises:
        KeyError: If no catalog is known under that name
    """
    key = platform.lower().strip()
    key = _ALIASES.get(key, key)
    if key not in CATALOGS and key in _SHIPPED:
        CATALOGS[key] = load_catalog(_SHIPPED[key], platform=key)
        logger.debug("loaded %s catalog (%d techniques)", key, len(CATALOGS[key]))
    if key not in CATALOGS:
        available = ", ".join(list_platforms())
        raise KeyError(f"Unknown platform: '{platform}'. Available: {available}")
    return CATALOGS[key]


def list_platforms() -> List[str]:
    """Sorted names of all shipped and registered catalogs."""
    return sorted(set(_SHIPPED) | set(CATALOGS))


def register_catalog(name: str, catalog: TechniqueCatalog) -> None:
    """
    Register a custom catalog under ``name`` (case-insensitive).

    Example:
        >>> register_catalog("ics", load_catalog("ics_techniques.json"))
    """
    CATALOGS[name.lower()] = catalog


# =============================================================================
# CATALOG EMBEDDINGS
# =============================================================================

@dataclass(frozen=True)
class TechniqueEmbedding:
    """Title and description vectors of one technique, same dimension."""

    technique_id: str
    v_title: EmbeddingVector
    v_desc: EmbeddingVector

    def __post_init__(self):
        if self.v_title.dimension != self.v_desc.dimension:
            raise ContractError(
                f"{self.technique_id}: title/description dimensions differ "
                f"({self.v_title.dimension} vs {self.v_desc.dimension})"
            )

    @property
    def dimension(self) -> int:
        return self.v_title.dimension


def embed_catalog(
    catalog: TechniqueCatalog,
    provider: Optional[EmbeddingProvider] = None,
) -> List[TechniqueEmbedding]:
    """Embed every technique's name and description with one provider."""
    titles = embed_many([t.name for t in catalog], provider)
    descs = embed_many([t.description for t in catalog], provider)
    return [
        TechniqueEmbedding(t.id, vt, vd)
        for t, vt, vd in zip(catalog, titles, descs)
    ]


def catalog_from_vectors(
    catalog: TechniqueCatalog,
    vectors: Mapping[str, EmbeddingVector],
) -> List[TechniqueEmbedding]:
    """
    Assemble technique embeddings from loaded vectors keyed
    ``<id>.title`` and ``<id>.desc``.

    Raises:
        VocabularyError: If a technique lacks either vector
    """
    out = []
    for tech in catalog:
        try:
            out.append(TechniqueEmbedding(
                tech.id, vectors[f"{tech.id}.title"], vectors[f"{tech.id}.desc"]
            ))
        except KeyError as exc:
            raise VocabularyError(f"missing embedding {exc.args[0]}") from None
    return out

"""
Configuration
=============

Frozen settings objects for every stage, with the defaults used for
threat-report processing, plus TOML loading and CLI-style overrides.

Usage:
    >>> from cti_graph_toolkit.config import RunConfig, load_config
    >>> cfg = RunConfig()
    >>> cfg.mapping.tau
    0.6
    >>> cfg = cfg.with_overrides(tau=0.5, seed=7)
"""

import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, FrozenSet, Mapping, Optional, Tuple, Union

from .exceptions import ConfigurationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "CTI_GRAPH_CONFIG"
DEFAULT_CONFIG_FILE = "ctigraph.toml"

DEFAULT_KEYWORDS: FrozenSet[str] = frozenset({
    "malware", "trojan", "ransomware", "spyware",
    "botnet", "phishing", "backdoor", "APT",
})

PathLike = Union[str, Path]


def _check_unit(name: str, value: float, *, closed_right: bool) -> None:
    upper_ok = value <= 1.0 if closed_right else value < 1.0
    if not (0.0 <= value and upper_ok):
        bracket = "]" if closed_right else ")"
        raise ConfigurationError(f"{name} must lie in [0, 1{bracket}, got {value}")


# =============================================================================
# STAGE SETTINGS
# =============================================================================

@dataclass(frozen=True)
class IngestConfig:
    """
    Document ingestion settings.

    Attributes:
        keywords: Relevance keywords (matched whole-word, case-insensitive)
        n_words: Size of the leading word window; must exceed 100
        generations: Crawl depth in frontier generations
        max_workers: Thread count for per-generation fetches (1 = serial)
    """

    keywords: FrozenSet[str] = DEFAULT_KEYWORDS
    n_words: int = 150
    generations: int = 2
    max_workers: int = 1

    def __post_init__(self):
        if self.n_words <= 100:
            raise ConfigurationError(
                f"relevance window must exceed 100 words, got {self.n_words}"
            )
        if self.generations < 1:
            raise ConfigurationError("generations must be >= 1")
        if self.max_workers < 1:
            raise ConfigurationError("max_workers must be >= 1")
        # accept any iterable of strings from TOML/JSON
        object.__setattr__(self, "keywords", frozenset(self.keywords))

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        d = asdict(self)
        d["keywords"] = sorted(self.keywords)
        return d


@dataclass(frozen=True)
class MappingConfig:
    """Phrase-to-technique mapping settings.

    Attributes:
        w_t: Weight of the title distance; the description gets ``1 - w_t``
        tau: A phrase is unmapped when its best distance is ``>= tau``
        platform: Technique catalog to map against
    """

    w_t: float = 0.4
    tau: float = 0.6
    platform: str = "mobile"

    def __post_init__(self):
        _check_unit("w_t", self.w_t, closed_right=True)
        if self.tau < 0:
            raise ConfigurationError(f"tau must be >= 0, got {self.tau}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class BuildOptions:
    """Knowledge-graph build settings."""

    cleanup: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class EvalOptions:
    """
    Link-prediction evaluation settings.

    Attributes:
        filtered: Remove other known-true tails before ranking
        hits_at: Cut-offs reported as Hits@n
        restrict_candidates: Rank only ontology-valid tail classes
        direction_agnostic: Ignore edge direction in similarity neighborhoods
    """

    filtered: bool = True
    hits_at: Tuple[int, ...] = (1, 3, 10, 30)
    restrict_candidates: bool = False
    direction_agnostic: bool = False

    def __post_init__(self):
        hits = tuple(sorted(set(int(n) for n in self.hits_at)))
        if not hits or hits[0] < 1:
            raise ConfigurationError("hits_at cut-offs must be positive")
        object.__setattr__(self, "hits_at", hits)

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["hits_at"] = list(self.hits_at)
        return d


@dataclass(frozen=True)
class TuckerConfig:
    """
    TuckER training settings.

    ``iterations`` counts epochs, i.e. full passes over the shuffled
    (head, relation) groups.

    Attributes:
        d_e: Entity embedding dimension
        d_r: Relation embedding dimension
        batch_size: (head, relation) groups per mini-batch
        iterations: Number of epochs
        learning_rate: Adam step size
        label_smoothing: Smoothing applied to 1-N targets, in [0, 1)
        input_dropout: Dropout on the head embedding
        hidden_dropout1: Dropout on the relation-specific core slice
        hidden_dropout2: Dropout on the projected head
        init_scale: Parameters start uniform in (-init_scale, init_scale)
        seed: Seed for initialization, shuffling and dropout
        workers: Data-parallel gradient workers (1 = serial)
    """

    d_e: int = 50
    d_r: int = 50
    batch_size: int = 64
    iterations: int = 1000
    learning_rate: float = 0.001
    label_smoothing: float = 0.1
    input_dropout: float = 0.2
    hidden_dropout1: float = 0.2
    hidden_dropout2: float = 0.3
    init_scale: float = 0.1
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        for name in ("d_e", "d_r", "batch_size", "workers"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be > 0")
        if self.iterations < 0:
            raise ConfigurationError("iterations must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.init_scale <= 0:
            raise ConfigurationError("init_scale must be > 0")
        for name in ("label_smoothing", "input_dropout",
                     "hidden_dropout1", "hidden_dropout2"):
            _check_unit(name, getattr(self, name), closed_right=False)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# =============================================================================
# RUN CONFIG
# =============================================================================

_SECTIONS = {
    "ingest": IngestConfig,
    "mapping": MappingConfig,
    "build": BuildOptions,
    "eval": EvalOptions,
    "tucker": TuckerConfig,
}

_PATH_KEYS = ("catalog", "embeddings", "triples", "corpus", "output_dir")


@dataclass(frozen=True)
class RunConfig:
    """
    Everything one command needs: input paths plus every stage setting.

    Example:
        >>> cfg = RunConfig(output_dir="out")
        >>> cfg.tucker.d_e
        50
    """

    catalog: Optional[str] = None
    embeddings: Optional[str] = None
    triples: Optional[str] = None
    corpus: Optional[str] = None
    output_dir: str = "out"
    split_fraction: float = 0.25
    ingest: IngestConfig = field(default_factory=IngestConfig)
    mapping: MappingConfig = field(default_factory=MappingConfig)
    build: BuildOptions = field(default_factory=BuildOptions)
    eval: EvalOptions = field(default_factory=EvalOptions)
    tucker: TuckerConfig = field(default_factory=TuckerConfig)

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigurationError(
                f"split_fraction must lie in (0, 1), got {self.split_fraction}"
            )

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        """Build from a nested mapping; unknown keys are rejected."""
        top = {f.name for f in fields(cls)}
        unknown = set(data) - top
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        kwargs: Dict[str, Any] = {}
        for key, value in data.items():
            section = _SECTIONS.get(key)
            if section is None:
                kwargs[key] = value
                continue
            if not isinstance(value, Mapping):
                raise ConfigurationError(f"[{key}] must be a table")
            allowed = {f.name for f in fields(section)}
            bad = set(value) - allowed
            if bad:
                raise ConfigurationError(
                    f"unknown keys in [{key}]: {sorted(bad)}"
                )
            try:
                kwargs[key] = section(**value)
            except TypeError as exc:
                raise ConfigurationError(f"invalid [{key}] section: {exc}") from exc
        return cls(**kwargs)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to a nested JSON-serializable dictionary."""
        d: Dict[str, Any] = {k: getattr(self, k) for k in _PATH_KEYS}
        d["split_fraction"] = self.split_fraction
        for key in _SECTIONS:
            d[key] = getattr(self, key).to_dict()
        return d

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """
        Return a copy with flat overrides applied; ``None`` values are ignored.

        Keys may name a top-level field or a field of any stage section
        (``tau``, ``seed``, ``cleanup`` ...).

        Raises:
            ConfigurationError: If a key matches no field
        """
        top: Dict[str, Any] = {}
        per_section: Dict[str, Dict[str, Any]] = {k: {} for k in _SECTIONS}
        for key, value in overrides.items():
            if value is None:
                continue
            if key in _PATH_KEYS or key == "split_fraction":
                top[key] = value
                continue
            owners = [s for s, cls in _SECTIONS.items()
                      if key in {f.name for f in fields(cls)}]
            if not owners:
                raise ConfigurationError(f"unknown override: {key}")
            per_section[owners[0]][key] = value
        for section, values in per_section.items():
            if values:
                top[section] = replace(getattr(self, section), **values)
        return replace(self, **top)


# =============================================================================
# LOADING
# =============================================================================

def default_config_path() -> Optional[Path]:
    """Config path from ``CTI_GRAPH_CONFIG``, else ``./ctigraph.toml`` if present."""
    env = os.environ.get(CONFIG_ENV_VAR)
    if env:
        return Path(env)
    local = Path(DEFAULT_CONFIG_FILE)
    return local if local.is_file() else None


def load_config(path: Optional[PathLike] = None) -> RunConfig:
    """
    Load a run configuration.

    Args:
        path: TOML file, or a JSON run manifest whose ``config`` block is
            used. Defaults to :func:`default_config_path`; with no file at
            all the built-in defaults are returned.

    Returns:
        RunConfig

    Raises:
        ConfigurationError: If the file is missing, unparsable, or has
            unknown keys or out-of-range values
    """
    resolved = Path(path) if path is not None else default_config_path()
    if resolved is None:
        return RunConfig()
    if not resolved.is_file():
        raise ConfigurationError(f"config file not found: {resolved}")

    logger.debug("loading config from %s", resolved)
    try:
        if resolved.suffix == ".json":
            data = json.loads(resolved.read_text(encoding="utf-8"))
            data = data.get("config", data)
        else:
            with open(resolved, "rb") as fh:
                data = tomllib.load(fh)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigurationError(f"cannot parse {resolved}: {exc}") from exc
    return RunConfig.from_dict(data)

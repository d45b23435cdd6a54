"""
Exceptions
==========

Error hierarchy shared by every module.

Lookup-style failures subclass ``KeyError`` so callers that already guard
dictionary access keep working; contract and configuration failures subclass
``ValueError``.
"""

from typing import Optional


class CtiGraphError(Exception):
    """Base class for all toolkit errors."""


class ContractError(CtiGraphError, ValueError):
    """A precondition of an operation was violated by the caller."""


class EmptyInputError(ContractError):
    """Text input was empty or whitespace-only."""


class ConfigurationError(CtiGraphError, ValueError):
    """A configuration value is out of range or a config file is invalid."""


class ParseError(CtiGraphError, ValueError):
    """A structured input file could not be parsed.

    Attributes:
        line_number: 1-based line of the offending record, if known
        source: File name or other label of the input
    """

    def __init__(
        self,
        message: str,
        line_number: Optional[int] = None,
        source: Optional[str] = None,
    ):
        self.line_number = line_number
        self.source = source
        where = ""
        if source is not None:
            where = f"{source}:"
        if line_number is not None:
            where = f"{where}{line_number}:"
        super().__init__(f"{where} {message}" if where else message)


class _LookupFailure(CtiGraphError, KeyError):
    # KeyError wraps its message in quotes; keep it readable.
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else self.__class__.__name__


class DanglingReferenceError(_LookupFailure):
    """A triple refers to an entity id that is not in the entity store."""


class EntityLookupError(_LookupFailure):
    """An entity id is unknown to the knowledge graph."""


class VocabularyError(_LookupFailure):
    """An entity or relation is outside a trained model's vocabulary."""


class TrainingError(CtiGraphError, RuntimeError):
    """Training diverged (non-finite loss or parameters)."""

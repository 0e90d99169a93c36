"""Exception types raised by relmap-ranker.

Each type also derives from the builtin exception callers would naturally
catch (``ValueError``, ``KeyError``, ...), so plain ``except ValueError``
handlers keep working.
"""

from __future__ import annotations

from typing import Optional


class RelmapError(Exception):
    """Base class for every error raised by this package."""


class ParseError(RelmapError, ValueError):
    """Malformed row in an input file or stream."""

    def __init__(self, message: str, *, line: Optional[int] = None, source: Optional[str] = None):
        self.line = line
        self.source = source
        where = []
        if source:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class GraphLoadError(RelmapError, ValueError):
    """Graph rows are well formed but inconsistent (unknown ids, cycles)."""


class UnknownObjectError(RelmapError, KeyError):
    """Lookup of an object id that the graph or an embedding table does not hold."""

    def __init__(self, object_id: str, where: str = "knowledge graph"):
        self.object_id = object_id
        super().__init__(f"unknown object {object_id!r} in {where}")

    def __str__(self) -> str:
        # KeyError.__str__ would repr() the whole message.
        return str(self.args[0])


class DimensionError(RelmapError, ValueError):
    """Vector or matrix shapes do not line up."""


class ConfigurationError(RelmapError, ValueError):
    """A setting or a requested operation is out of range for the data at hand."""


class TrainingDivergedError(RelmapError, RuntimeError):
    """A non-finite loss appeared during training."""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")


class MissingArtifactError(RelmapError, FileNotFoundError):
    """A staged artifact is missing; names the command that produces it."""

    def __init__(self, path: str, producer: str):
        self.path = path
        self.producer = producer
        super().__init__(f"missing artifact {path}; run `relmap-ranker {producer}` first")

    def __str__(self) -> str:
        return str(self.args[0])

"""Artifact staging, hashing and manifests shared by all pipeline commands."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import platform
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Optional

import numpy as np

from .errors import MissingArtifactError, ParseError

logger = logging.getLogger("relmap_ranker.store")

MANIFEST_FORMAT = "relmap-manifest-v1"


def canonicalize(value: Any) -> Any:
    """Canonicalize JSON-like data for stable hashing."""
    if isinstance(value, dict):
        return {str(k): canonicalize(value[k]) for k in sorted(value.keys(), key=str)}
    if isinstance(value, (list, tuple)):
        return [canonicalize(v) for v in value]
    return value


def stable_json_dumps(value: Any) -> str:
    """Deterministic JSON serialization used for hashing."""
    return json.dumps(canonicalize(value), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def stable_hash(value: Any) -> str:
    text = stable_json_dumps(value)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def file_digest(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_text_atomic(path: str | Path, text: str) -> None:
    """Atomic write with Windows retry on locked files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_name(path.name + ".tmp")
    tmp_path.write_text(text, encoding="utf-8", newline="\n")

    max_retries = 3 if platform.system() == "Windows" else 1
    for attempt in range(max_retries):
        try:
            os.replace(tmp_path, path)
            return
        except OSError:
            if attempt < max_retries - 1:
                time.sleep(0.1)
            else:
                raise


def format_floats(values: Iterable[float]) -> str:
    """Space-separated ``repr`` floats; parse_floats reads them back bit-exactly."""
    return " ".join(repr(float(v)) for v in values)


def parse_floats(text: str, *, line: Optional[int] = None, source: Optional[str] = None) -> np.ndarray:
    text = text.strip()
    if not text:
        return np.zeros(0, dtype=np.float64)
    try:
        values = np.array([float(tok) for tok in text.split()], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"invalid float value ({exc})", line=line, source=source) from exc
    if not np.all(np.isfinite(values)):
        raise ParseError("non-finite float value", line=line, source=source)
    return values


def iter_data_lines(source: Iterable[str]) -> Iterable[tuple[int, str]]:
    """Yield ``(line_number, line)`` skipping blank lines and ``#`` comments."""
    for number, raw in enumerate(source, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        yield number, line


def source_name(source: Any) -> Optional[str]:
    name = getattr(source, "name", None)
    return str(name) if isinstance(name, (str, Path)) else None


@contextmanager
def open_source(source: str | Path | Iterable[str]) -> Iterator[Iterable[str]]:
    """Yield an iterable of lines for a path or an already open stream."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            yield fh
    else:
        yield source


def require_artifact(path: str | Path, producer: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(str(path), producer)
    return path


@dataclass(frozen=True)
class ArtifactLayout:
    """Where each command stages its outputs below the experiment output directory."""

    root: Path

    @property
    def graph_nodes(self) -> Path:
        return self.root / "graph" / "nodes.tsv"

    @property
    def graph_edges(self) -> Path:
        return self.root / "graph" / "edges.tsv"

    @property
    def text_vectors(self) -> Path:
        return self.root / "embeddings" / "text_vectors.tsv"

    @property
    def object_vectors(self) -> Path:
        return self.root / "embeddings" / "object_vectors.tsv"

    @property
    def word_state(self) -> Path:
        return self.root / "embeddings" / "word_state.tsv"

    @property
    def referential(self) -> Path:
        return self.root / "referential" / "referential.txt"

    @property
    def vectors(self) -> Path:
        return self.root / "vectors" / "input_vectors.tsv"

    @property
    def bm25_run(self) -> Path:
        return self.root / "runs" / "bm25.run"

    @property
    def model_run(self) -> Path:
        return self.root / "runs" / "dsrim.run"

    @property
    def random_run(self) -> Path:
        return self.root / "runs" / "random.run"

    @property
    def folds(self) -> Path:
        return self.root / "checkpoints" / "folds.tsv"

    def checkpoint(self, fold: int, variant: Optional[str] = None) -> Path:
        """Primary model checkpoints sit in ``checkpoints/``; input variants in a subdirectory each."""
        if variant is None:
            return self.root / "checkpoints" / f"fold-{fold}.json"
        return self.root / "checkpoints" / variant.replace("+", "-") / f"fold-{fold}.json"

    @property
    def loss_history(self) -> Path:
        return self.root / "checkpoints" / "loss_history.tsv"

    def report(self, name: str) -> Path:
        return self.root / "reports" / name

    def manifest(self, command: str) -> Path:
        return self.root / "manifests" / f"{command}.manifest"


def write_manifest(
    layout: ArtifactLayout,
    command: str,
    settings: Mapping[str, Any],
    *,
    config_hash: str,
    seed: int,
    inputs: Optional[Mapping[str, str | Path]] = None,
    artifacts: Optional[Mapping[str, str | Path]] = None,
) -> Path:
    """Write ``manifests/<command>.manifest`` as sorted ``key=value`` lines.

    No timestamps or absolute machine state are recorded, so an unchanged
    rerun reproduces the file byte for byte.
    """
    from . import __version__

    entries: dict[str, str] = {
        "format": MANIFEST_FORMAT,
        "command": command,
        "version": __version__,
        "config_hash": config_hash,
        "seed": str(seed),
    }
    for key, value in settings.items():
        entries[f"setting.{key}"] = value if isinstance(value, str) else json.dumps(canonicalize(value))
    for name, path in (inputs or {}).items():
        if Path(path).exists():
            entries[f"input.{name}"] = file_digest(path)
    for name, path in (artifacts or {}).items():
        entries[f"artifact.{name}"] = file_digest(path)

    text = "".join(f"{key}={entries[key]}\n" for key in sorted(entries))
    target = layout.manifest(command)
    write_text_atomic(target, text)
    logger.debug("Wrote manifest %s (%d entries)", target, len(entries))
    return target


def read_manifest(path: str | Path) -> dict[str, str]:
    entries: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for number, line in iter_data_lines(fh):
            key, sep, value = line.partition("=")
            if not sep:
                raise ParseError("expected key=value", line=number, source=str(path))
            entries[key] = value
    return entries

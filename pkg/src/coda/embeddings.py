"""Load, validate, and group feature embeddings.

Interchange formats decouple the pipeline from whatever encoder produced
the vectors (VAE, CLIP, an external UMAP reduction, ...):

* binary: magic ``CODA`` + version byte, little-endian u64 N and u32 D,
  then N*D row-major float32. Bit-exact round trips.
* csv: one row of D decimal floats per line, no header.

Sample ids and class labels live in a JSON sidecar aligned to row order:
``{"sample_ids": [...], "labels": [...]}``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateSampleId,
    MalformedHeader,
    MissingLabels,
    NonFiniteValue,
    UnknownClass,
    ValidationError,
)

MAGIC = b"CODA"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class EmbeddingSet:
    """Immutable N x D embedding matrix with stable ids and class labels."""

    vectors: np.ndarray          # (N, D) float32, finite
    sample_ids: tuple[str, ...]  # length N, unique
    labels: np.ndarray           # (N,) int, values >= 1
    dim: int
    class_index: dict[int, np.ndarray] = field(repr=False)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def classes(self) -> list[int]:
        return sorted(self.class_index)


@dataclass(frozen=True)
class ClassView:
    """All rows of one class, in stable row order."""

    class_id: int
    rows: np.ndarray             # global row indices, ascending
    vectors: np.ndarray          # (n_c, D)
    sample_ids: tuple[str, ...]


def make_embedding_set(vectors, sample_ids, labels) -> EmbeddingSet:
    """Validate raw arrays and assemble an EmbeddingSet."""
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.ndim != 2:
        raise ValidationError(f"expected an N x D matrix, got shape {vectors.shape}")
    n, dim = vectors.shape
    sample_ids = tuple(str(s) for s in sample_ids)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or len(sample_ids) != n or labels.shape[0] != n:
        raise MissingLabels(
            f"ids/labels must align with {n} rows "
            f"(got {len(sample_ids)} ids, {labels.shape[0]} labels)"
        )
    if not np.isfinite(vectors).all():
        bad = int(np.argwhere(~np.isfinite(vectors))[0][0])
        raise NonFiniteValue(f"non-finite value in row {bad}")
    if len(set(sample_ids)) != n:
        raise DuplicateSampleId("sample_ids must be unique")
    if n and labels.min() < 1:
        raise ValidationError("class labels must be >= 1")
    class_index: dict[int, np.ndarray] = {}
    for c in np.unique(labels):
        class_index[int(c)] = np.flatnonzero(labels == c)
    return EmbeddingSet(vectors, sample_ids, labels, dim, class_index)


def save_embeddings(emb: EmbeddingSet, path, labels_path=None) -> None:
    """Write the binary payload plus the JSON sidecar (defaults to <path>.labels.json)."""
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(bytes([FORMAT_VERSION]))
        f.write(struct.pack("<QI", emb.n, emb.dim))
        f.write(np.ascontiguousarray(emb.vectors, dtype="<f4").tobytes())
    sidecar = Path(labels_path) if labels_path else sidecar_path(path)
    payload = {
        "sample_ids": list(emb.sample_ids),
        "labels": [int(x) for x in emb.labels],
    }
    sidecar.write_text(json.dumps(payload, sort_keys=True))


def sidecar_path(path) -> Path:
    return Path(str(path) + ".labels.json")


def load_embeddings(path, format: str = "binary", labels_path=None) -> EmbeddingSet:
    """Load and validate an EmbeddingSet from disk.

    ``format`` is "binary" or "csv"; the label sidecar is required either way.
    """
    path = Path(path)
    if format == "binary":
        vectors = _read_binary(path)
    elif format == "csv":
        vectors = _read_csv(path)
    else:
        raise ValidationError(f"unknown format {format!r}")
    sidecar = Path(labels_path) if labels_path else sidecar_path(path)
    if not sidecar.exists():
        raise MissingLabels(f"label sidecar not found: {sidecar}")
    meta = json.loads(sidecar.read_text())
    if "sample_ids" not in meta or "labels" not in meta:
        raise MissingLabels(f"sidecar {sidecar} lacks sample_ids/labels")
    return make_embedding_set(vectors, meta["sample_ids"], meta["labels"])


def _read_binary(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    header = MAGIC + bytes([FORMAT_VERSION])
    if len(raw) < len(header) + 12:
        raise MalformedHeader(f"{path}: truncated header")
    if raw[:4] != MAGIC:
        raise MalformedHeader(f"{path}: bad magic {raw[:4]!r}")
    if raw[4] != FORMAT_VERSION:
        raise MalformedHeader(f"{path}: unsupported version {raw[4]}")
    n, dim = struct.unpack_from("<QI", raw, 5)
    expected = 17 + 4 * n * dim
    if len(raw) != expected:
        raise MalformedHeader(
            f"{path}: header declares {n} x {dim} rows "
            f"({expected} bytes) but file has {len(raw)}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=17)
    return data.reshape(n, dim).copy()


def _read_csv(path: Path) -> np.ndarray:
    rows: list[list[float]] = []
    width = None
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise DimensionMismatch(
                    f"{path}:{lineno}: row has {len(parts)} values, expected {width}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise MalformedHeader(f"{path}:{lineno}: unparseable value") from exc
    if not rows:
        raise MalformedHeader(f"{path}: empty csv")
    return np.asarray(rows, dtype=np.float32)


def group_by_class(emb: EmbeddingSet, class_id: int) -> ClassView:
    """Return all and only the rows labeled ``class_id``, in stable order."""
    if class_id not in emb.class_index:
        raise UnknownClass(f"class {class_id} not present (have {emb.classes})")
    rows = emb.class_index[class_id]
    ids = tuple(emb.sample_ids[i] for i in rows)
    return ClassView(class_id, rows, emb.vectors[rows], ids)

"""Exact top-K retrieval over normalized rooftop image embeddings.

Embeddings are unit L2-normalized vectors (512-d by default). Retrieval
ranks reference entries by Euclidean distance between normalized vectors,
which for unit vectors is equivalent to ranking by cosine similarity; the
reported similarity score is 1/(1+distance).

Search is an exhaustive scan: index sizes in this pipeline are a few
thousand entries at most, and exactness matters because retrieved
references feed directly into assessment prompts. Vectors are stored as
32-bit floats; distances are accumulated in 64-bit.

Two binary formats are defined here:

  Index file (magic "PVIX"): header = magic, format version u16,
  dimension u16, entry count u32; per entry seven length-prefixed UTF-8
  strings (id, city, continent, presence, quantity, location,
  explanation) followed by dimension little-endian f32 values. String
  prefix is u16.

  Embedding batch file (magic "PVEB", produced by the embedding tool):
  same header plus a length-prefixed UTF-8 JSON metadata block, then per
  record a length-prefixed id and the f32 vector (no descriptor strings).

All integers are little-endian.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .descriptors import PVDescriptor, validate_descriptor

DEFAULT_DIMENSION = 512

INDEX_MAGIC = b"PVIX"
EMBEDDING_MAGIC = b"PVEB"
FORMAT_VERSION = 1

NORM_TOLERANCE = 1e-6


class IndexFormatError(ValueError):
    """Raised when an index or embedding file cannot be decoded."""


def normalize(v: Sequence[float] | np.ndarray) -> np.ndarray:
    """Scale a vector to unit L2 norm (float64, direction preserved)."""
    arr = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise ValueError("cannot normalize zero embedding")
    return arr / norm


def is_normalized(v: np.ndarray, tol: float = NORM_TOLERANCE) -> bool:
    return abs(float(np.linalg.norm(np.asarray(v, dtype=np.float64))) - 1.0) <= tol


def distance(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """Euclidean distance between two normalized embeddings (64-bit math)."""
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape:
        raise ValueError(f"embedding dimension mismatch: {av.shape} vs {bv.shape}")
    return float(np.linalg.norm(av - bv))


def similarity(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """Similarity score 1/(1+d); 1.0 for identical vectors, in (0,1]."""
    return 1.0 / (1.0 + distance(a, b))


@dataclass(frozen=True)
class ReferenceEntry:
    """One validated rooftop case: normalized embedding plus its descriptor."""

    id: str
    city: str
    continent: str
    embedding: np.ndarray
    label: PVDescriptor

    def __post_init__(self):
        emb = np.asarray(self.embedding, dtype=np.float32)
        object.__setattr__(self, "embedding", emb)
        if not is_normalized(emb):
            raise ValueError(f"entry {self.id!r}: embedding is not normalized")
        violation = validate_descriptor(self.label)
        if violation is not None:
            raise ValueError(f"entry {self.id!r}: invalid label: {violation}")


@dataclass(frozen=True)
class RetrievalHit:
    entry: ReferenceEntry
    distance: float
    similarity: float


EntryPredicate = Callable[[ReferenceEntry], bool]


class VectorIndex:
    """Immutable exhaustive-search index over reference entries.

    Entries are held sorted by id, so a stable distance sort breaks ties on
    ascending entry id and results never depend on insertion order.
    """

    def __init__(self, entries: Iterable[ReferenceEntry], dimension: int = DEFAULT_DIMENSION):
        self.dimension = int(dimension)
        self.entries: tuple[ReferenceEntry, ...] = tuple(
            sorted(entries, key=lambda e: e.id)
        )
        for e in self.entries:
            if e.embedding.shape != (self.dimension,):
                raise ValueError(
                    f"entry {e.id!r}: embedding has dimension "
                    f"{e.embedding.shape[0]}, index expects {self.dimension}"
                )
        if self.entries:
            self._matrix = np.stack([e.embedding for e in self.entries]).astype(np.float64)
        else:
            self._matrix = np.zeros((0, self.dimension), dtype=np.float64)

    def __len__(self) -> int:
        return len(self.entries)

    def _candidate_indices(self, predicate: Optional[EntryPredicate]) -> np.ndarray:
        if predicate is None:
            return np.arange(len(self.entries))
        keep = [i for i, e in enumerate(self.entries) if predicate(e)]
        return np.asarray(keep, dtype=int)

    def search_topk(
        self,
        query: Sequence[float] | np.ndarray,
        k: int,
        predicate: Optional[EntryPredicate] = None,
    ) -> list[RetrievalHit]:
        """Return the min(k, candidates) nearest entries by ascending distance.

        Equals the exhaustive scan exactly; ties break on ascending entry id
        (positions are id-ordered, so a stable sort by distance suffices).
        """
        if k < 1:
            raise ValueError("k must be at least 1")
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dimension,):
            raise ValueError(
                f"query has dimension {q.shape}, index expects ({self.dimension},)"
            )
        if predicate is None:
            if not self.entries:
                raise ValueError("no reference entries match filter")
            diffs = self._matrix - q
            dists = np.sqrt(np.einsum("ij,ij->i", diffs, diffs))
            order = np.argsort(dists, kind="stable")[: min(k, len(self.entries))]
            return [
                RetrievalHit(
                    self.entries[int(i)], float(dists[i]), 1.0 / (1.0 + float(dists[i]))
                )
                for i in order
            ]
        cand = self._candidate_indices(predicate)
        if cand.size == 0:
            raise ValueError("no reference entries match filter")
        diffs = self._matrix[cand] - q
        dists = np.sqrt(np.einsum("ij,ij->i", diffs, diffs))
        order = np.argsort(dists, kind="stable")[: min(k, cand.size)]
        hits = []
        for j in order:
            i = int(cand[j])
            d = float(dists[j])
            hits.append(RetrievalHit(self.entries[i], d, 1.0 / (1.0 + d)))
        return hits

    def random_sample(
        self,
        k: int,
        seed: int,
        predicate: Optional[EntryPredicate] = None,
    ) -> list[ReferenceEntry]:
        """Draw k distinct entries uniformly without replacement, seeded."""
        if k < 1:
            raise ValueError("k must be at least 1")
        cand = self._candidate_indices(predicate)
        if cand.size < k:
            raise ValueError(
                f"cannot sample {k} entries from {cand.size} matching candidates"
            )
        rng = np.random.default_rng(seed)
        chosen = rng.choice(cand, size=k, replace=False)
        return [self.entries[int(i)] for i in chosen]

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(INDEX_MAGIC)
            fh.write(struct.pack("<HHI", FORMAT_VERSION, self.dimension, len(self.entries)))
            for e in self.entries:
                fields = e.label.as_strings()
                for text in (
                    e.id,
                    e.city,
                    e.continent,
                    fields["presence"],
                    fields["quantity"],
                    fields["location"],
                    fields["explanation"],
                ):
                    _write_string(fh, text)
                fh.write(e.embedding.astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "VectorIndex":
        from .descriptors import (
            location_from_text,
            presence_from_text,
            quantity_from_text,
        )

        with open(path, "rb") as fh:
            data = fh.read()
        cur = _Cursor(data, str(path))
        magic = cur.take(4)
        if magic != INDEX_MAGIC:
            raise IndexFormatError(f"{path}: bad magic {magic!r}, expected {INDEX_MAGIC!r}")
        version, dimension, count = cur.unpack("<HHI")
        if version != FORMAT_VERSION:
            raise IndexFormatError(f"{path}: unsupported format version {version}")
        entries = []
        for _ in range(count):
            entry_id = cur.string()
            city = cur.string()
            continent = cur.string()
            presence = presence_from_text(cur.string())
            quantity = quantity_from_text(cur.string())
            location = location_from_text(cur.string())
            explanation = cur.string()
            vec = np.frombuffer(cur.take(dimension * 4), dtype="<f4").astype(np.float32)
            label = PVDescriptor(presence, quantity, location, explanation)
            entries.append(ReferenceEntry(entry_id, city, continent, vec, label))
        return cls(entries, dimension=dimension)


@dataclass
class EmbeddingBatch:
    """Contents of an embedding batch file: ids in file order plus vectors."""

    dimension: int
    ids: list[str]
    vectors: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)


def write_embedding_file(path, vectors: dict[str, np.ndarray], dimension: int,
                         metadata: Optional[dict] = None) -> None:
    """Write an embedding batch file (magic "PVEB") in insertion order."""
    meta_bytes = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<HHI", FORMAT_VERSION, dimension, len(vectors)))
        fh.write(struct.pack("<H", len(meta_bytes)))
        fh.write(meta_bytes)
        for rec_id, vec in vectors.items():
            arr = np.asarray(vec, dtype="<f4")
            if arr.shape != (dimension,):
                raise ValueError(
                    f"record {rec_id!r}: vector dimension {arr.shape} != {dimension}"
                )
            _write_string(fh, rec_id)
            fh.write(arr.tobytes())


def load_embedding_file(path) -> EmbeddingBatch:
    """Read an embedding batch file produced by the embedding tool."""
    with open(path, "rb") as fh:
        data = fh.read()
    cur = _Cursor(data, str(path))
    magic = cur.take(4)
    if magic != EMBEDDING_MAGIC:
        raise IndexFormatError(f"{path}: bad magic {magic!r}, expected {EMBEDDING_MAGIC!r}")
    version, dimension, count = cur.unpack("<HHI")
    if version != FORMAT_VERSION:
        raise IndexFormatError(f"{path}: unsupported format version {version}")
    meta_raw = cur.string()
    try:
        metadata = json.loads(meta_raw) if meta_raw else {}
    except json.JSONDecodeError as exc:
        raise IndexFormatError(f"{path}: malformed metadata block: {exc}") from None
    ids: list[str] = []
    vectors: dict[str, np.ndarray] = {}
    for _ in range(count):
        rec_id = cur.string()
        vec = np.frombuffer(cur.take(dimension * 4), dtype="<f4").astype(np.float32)
        if rec_id in vectors:
            raise IndexFormatError(f"{path}: duplicate embedding id {rec_id!r}")
        ids.append(rec_id)
        vectors[rec_id] = vec
    return EmbeddingBatch(dimension=dimension, ids=ids, vectors=vectors, metadata=metadata)


def _write_string(fh, text: str) -> None:
    raw = text.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError("string field exceeds 65535 bytes")
    fh.write(struct.pack("<H", len(raw)))
    fh.write(raw)


class _Cursor:
    """Sequential reader over bytes that reports the offset of any truncation."""

    def __init__(self, data: bytes, label: str):
        self.data = data
        self.pos = 0
        self.label = label

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise IndexFormatError(
                f"{self.label}: truncated file at byte offset {self.pos} "
                f"(needed {n} more bytes)"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size))

    def string(self) -> str:
        (length,) = self.unpack("<H")
        return self.take(length).decode("utf-8")

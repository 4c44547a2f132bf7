"""Manifest ingestion and split management.

A manifest is a UTF-8 CSV with one record per rooftop image and a fixed
header: id, city, continent, split, presence, quantity, location,
explanation, embedding_ref, image_ref. The split column partitions each
city into an evaluation subset and a reference subset; only reference
records ever enter a retrieval index.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional

import numpy as np

from .descriptors import (
    PVDescriptor,
    VocabularyError,
    location_from_text,
    presence_from_text,
    quantity_from_text,
    validate_descriptor,
)
from .vindex import EmbeddingBatch, ReferenceEntry, VectorIndex, normalize

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = (
    "id",
    "city",
    "continent",
    "split",
    "presence",
    "quantity",
    "location",
    "explanation",
    "embedding_ref",
    "image_ref",
)


class ManifestError(ValueError):
    """Malformed manifest content; message carries the offending line."""


class SplitViolation(ValueError):
    """An id appears in both the evaluation and reference subsets."""


class Split(Enum):
    EVAL = "eval"
    REFERENCE = "reference"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    city: str
    continent: str
    split: Split
    label: PVDescriptor
    embedding_ref: str = ""
    image_ref: str = ""

    @property
    def embedding_key(self) -> str:
        """Key into the embedding batch file; defaults to the record id."""
        return self.embedding_ref or self.id


@dataclass
class RegionSplit:
    city: str
    eval_ids: set[str]
    reference_ids: set[str]


def load_manifest(path: Path | str) -> list[ManifestRecord]:
    """Read and validate a manifest file; duplicate ids are rejected."""
    records: list[ManifestRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty manifest (missing header)") from None
        if tuple(h.strip() for h in header) != MANIFEST_COLUMNS:
            raise ManifestError(
                f"{path}: line 1: header must be {','.join(MANIFEST_COLUMNS)}"
            )
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(MANIFEST_COLUMNS):
                raise ManifestError(
                    f"{path}: line {line}: expected {len(MANIFEST_COLUMNS)} "
                    f"columns, found {len(row)}"
                )
            rec_id, city, continent, split_text = (v.strip() for v in row[:4])
            if not rec_id:
                raise ManifestError(f"{path}: line {line}: empty id")
            if rec_id in seen:
                raise ManifestError(f"{path}: line {line}: duplicate id {rec_id!r}")
            try:
                split = Split(split_text.lower())
            except ValueError:
                raise ManifestError(
                    f"{path}: line {line}: split must be 'eval' or 'reference', "
                    f"got {split_text!r}"
                ) from None
            try:
                label = PVDescriptor(
                    presence=presence_from_text(row[4]),
                    quantity=quantity_from_text(row[5]),
                    location=location_from_text(row[6]),
                    explanation=row[7],
                )
            except VocabularyError as exc:
                raise VocabularyError(f"{path}: line {line}: {exc}") from None
            violation = validate_descriptor(label)
            if violation is not None:
                raise ManifestError(
                    f"{path}: line {line}: invalid label for {rec_id!r}: {violation}"
                )
            seen.add(rec_id)
            records.append(
                ManifestRecord(
                    id=rec_id,
                    city=city,
                    continent=continent,
                    split=split,
                    label=label,
                    embedding_ref=row[8].strip(),
                    image_ref=row[9].strip(),
                )
            )
    return records


def write_manifest(records: Iterable[ManifestRecord], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for r in records:
            fields = r.label.as_strings()
            writer.writerow(
                [
                    r.id,
                    r.city,
                    r.continent,
                    r.split.value,
                    fields["presence"],
                    fields["quantity"],
                    fields["location"],
                    fields["explanation"],
                    r.embedding_ref,
                    r.image_ref,
                ]
            )


def validate_split(records: Iterable[ManifestRecord]) -> dict[str, RegionSplit]:
    """Group records into per-city splits, rejecting eval/reference overlap.

    A city with an empty reference subset is legal (plain assessment still
    works there) but gets a warning since retrieval is impossible.
    """
    splits: dict[str, RegionSplit] = {}
    for rec in records:
        region = splits.setdefault(rec.city, RegionSplit(rec.city, set(), set()))
        if rec.split is Split.EVAL:
            region.eval_ids.add(rec.id)
        else:
            region.reference_ids.add(rec.id)
    for region in splits.values():
        overlap = region.eval_ids & region.reference_ids
        if overlap:
            raise SplitViolation(
                f"city {region.city!r}: ids in both splits: {sorted(overlap)}"
            )
        if not region.reference_ids:
            logger.warning(
                "city %r has no reference records; retrieval-assisted modes "
                "are impossible there",
                region.city,
            )
    return splits


def build_reference_index(
    records: Iterable[ManifestRecord],
    embeddings: EmbeddingBatch | Mapping[str, np.ndarray],
    exclude_city: Optional[str] = None,
    dimension: Optional[int] = None,
) -> VectorIndex:
    """Build a retrieval index from the reference records.

    Evaluation records never enter the index. Embeddings are normalized on
    insertion; a missing embedding is an error naming the record.
    """
    if isinstance(embeddings, EmbeddingBatch):
        vectors: Mapping[str, np.ndarray] = embeddings.vectors
        if dimension is None:
            dimension = embeddings.dimension
    else:
        vectors = embeddings
    entries = []
    for rec in records:
        if rec.split is not Split.REFERENCE:
            continue
        if exclude_city is not None and rec.city == exclude_city:
            continue
        vec = vectors.get(rec.embedding_key)
        if vec is None:
            raise ManifestError(f"no embedding for record {rec.id!r}")
        entries.append(
            ReferenceEntry(
                id=rec.id,
                city=rec.city,
                continent=rec.continent,
                embedding=normalize(vec).astype(np.float32),
                label=rec.label,
            )
        )
    if dimension is None:
        if not entries:
            raise ManifestError("cannot infer index dimension from an empty reference set")
        dimension = entries[0].embedding.shape[0]
    return VectorIndex(entries, dimension=dimension)

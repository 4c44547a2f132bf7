"""Seeded synthetic dataset generation for tests and offline pipelines.

Ground-truth construction for real imagery (geospatial queries, tile
fetching, human review) is out of scope, so tests and the mock pipeline
run on generated data instead. Records are stratified: within each city
the eval/reference split is balanced separately over PV-positive and
PV-negative records.

Embeddings can be label-clustered: each distinct descriptor label gets a
stable direction on the unit sphere and records scatter around their
label's direction. With clustering on, similarity search finds mostly
same-label references, which is what gives the majority-vote mock backend
signal to work with; with clustering off embeddings are isotropic noise.
"""
from __future__ import annotations

import hashlib
from typing import Sequence

import numpy as np

from .dataset import ManifestRecord, Split
from .descriptors import (
    LocationLabel,
    PVDescriptor,
    QuantityInterval,
    ordered_intervals,
)
from .vindex import DEFAULT_DIMENSION

_CONTINENTS = (
    "North America",
    "Europe",
    "Asia",
    "Africa",
    "Oceania",
    "South America",
)

_POSITIVE_LOCATIONS = tuple(l for l in LocationLabel if l is not LocationLabel.NA)


def _label_direction(label: PVDescriptor, dimension: int) -> np.ndarray:
    """Stable unit direction for a label, independent of the dataset seed."""
    key = f"{label.presence}|{label.quantity.value}|{label.location.value}"
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    v = rng.standard_normal(dimension)
    return v / np.linalg.norm(v)


def generate_dataset(
    cities: Sequence[str] | int,
    per_city: int = 480,
    pv_prevalence: float = 0.5,
    seed: int = 0,
    dimension: int = DEFAULT_DIMENSION,
    clustered: bool = True,
    cluster_noise: float = 0.25,
) -> tuple[list[ManifestRecord], dict[str, np.ndarray]]:
    """Generate manifest records plus raw (unnormalized) embeddings.

    Returns (records, vectors) where vectors maps record id to a
    dimension-length float array keyed the same way an embedding batch
    file would be.
    """
    if isinstance(cities, int):
        cities = [f"city{i:02d}" for i in range(cities)]
    rng = np.random.default_rng(seed)
    intervals = ordered_intervals()
    records: list[ManifestRecord] = []
    vectors: dict[str, np.ndarray] = {}
    for c_i, city in enumerate(cities):
        continent = _CONTINENTS[c_i % len(_CONTINENTS)]
        n_pos = int(round(per_city * pv_prevalence))
        flags = [True] * n_pos + [False] * (per_city - n_pos)
        # Alternate splits within each stratum so both halves stay balanced.
        counters = {True: 0, False: 0}
        for i in range(per_city):
            present = flags[i]
            if present:
                label = PVDescriptor(
                    presence=True,
                    quantity=intervals[int(rng.integers(len(intervals)))],
                    location=_POSITIVE_LOCATIONS[
                        int(rng.integers(len(_POSITIVE_LOCATIONS)))
                    ],
                    explanation="",
                )
            else:
                label = PVDescriptor(
                    False, QuantityInterval.NA, LocationLabel.NA, ""
                )
            split = Split.EVAL if counters[present] % 2 == 0 else Split.REFERENCE
            counters[present] += 1
            rec_id = f"{city}-{i:04d}"
            records.append(
                ManifestRecord(
                    id=rec_id,
                    city=city,
                    continent=continent,
                    split=split,
                    label=label,
                )
            )
            noise = rng.standard_normal(dimension)
            if clustered:
                vec = _label_direction(label, dimension) + cluster_noise * noise
            else:
                vec = noise
            vectors[rec_id] = vec
    return records, vectors

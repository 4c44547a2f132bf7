"""Reference-assisted rooftop PV inventory estimation and feeder impact
simulation.

Subpackage map:

- descriptors: PV descriptor types, canonical label vocabulary, the
  interval-to-capacity mapping.
- vindex: exact top-K retrieval over normalized embeddings; index and
  embedding batch file formats.
- prompts / parsing / backends / assess: reference-assisted assessment of
  query images through a pluggable backend (remote service or offline
  mock).
- dataset / synthetic: manifest ingestion, split management, reference
  index construction, seeded synthetic data.
- evaluation: exact-match scoring, presence precision/recall/F1,
  multi-run aggregation, report emission.
- network / powerflow: 30-bus feeder model, case parsing, admittance,
  Newton-Raphson AC power flow.
- profiles / simulation: diurnal profiles, seeded error injection,
  capacity scaling, 96-step day simulation and error metrics.
- cli: the `pvrag` command.
"""

from .descriptors import (
    LocationLabel,
    PVDescriptor,
    QuantityInterval,
    neighbor_intervals,
    representative_count,
    site_capacity_kw,
    validate_descriptor,
)
from .vindex import ReferenceEntry, RetrievalHit, VectorIndex, distance, normalize, similarity

__all__ = [
    "LocationLabel",
    "PVDescriptor",
    "QuantityInterval",
    "neighbor_intervals",
    "representative_count",
    "site_capacity_kw",
    "validate_descriptor",
    "ReferenceEntry",
    "RetrievalHit",
    "VectorIndex",
    "distance",
    "normalize",
    "similarity",
]

__version__ = "0.1.0"

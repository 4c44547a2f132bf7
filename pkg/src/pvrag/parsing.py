"""Parsing of backend output into validated descriptors.

Backends are instructed to answer with a single JSON object but in
practice wrap it in prose or code fences. Parsing is therefore lenient
about the wrapper (first well-formed object wins) and strict about the
vocabulary: field values must map onto the canonical label strings, and
the resulting descriptor must be internally consistent. Invalid outputs
are rejected, never repaired.
"""
from __future__ import annotations

import json

from .descriptors import (
    PVDescriptor,
    VocabularyError,
    location_from_text,
    presence_from_text,
    quantity_from_text,
    validate_descriptor,
)


class ParseError(ValueError):
    """No structured object with the descriptor fields could be extracted."""


class ConsistencyError(ValueError):
    """The parsed descriptor violates a descriptor invariant."""


_REQUIRED_KEYS = ("presence", "quantity", "location", "explanation")


def _candidate_objects(raw: str):
    """Yield JSON objects found in raw text, in order of appearance."""
    decoder = json.JSONDecoder()
    pos = 0
    while True:
        start = raw.find("{", pos)
        if start < 0:
            return
        try:
            obj, end = decoder.raw_decode(raw, start)
        except json.JSONDecodeError:
            pos = start + 1
            continue
        if isinstance(obj, dict):
            yield obj
        pos = start + max(end - start, 1)


def parse_structured_output(raw: str) -> PVDescriptor:
    """Extract and validate the first descriptor object in backend output.

    Raises ParseError when no object with the four descriptor fields is
    present, VocabularyError for values outside the canonical label sets,
    and ConsistencyError when the fields contradict each other (e.g.
    presence true with quantity NA) or the explanation is empty.
    """
    chosen = None
    for obj in _candidate_objects(raw):
        lowered = {str(k).lower(): v for k, v in obj.items()}
        if all(key in lowered for key in _REQUIRED_KEYS):
            chosen = lowered
            break
    if chosen is None:
        raise ParseError("no structured object with descriptor fields found")

    presence_raw = chosen["presence"]
    if isinstance(presence_raw, bool):
        presence = presence_raw
    elif isinstance(presence_raw, str):
        presence = presence_from_text(presence_raw)
    else:
        raise VocabularyError(f"unknown presence value: {presence_raw!r}")

    quantity_raw = chosen["quantity"]
    if not isinstance(quantity_raw, str):
        raise VocabularyError(f"unknown quantity interval: {quantity_raw!r}")
    quantity = quantity_from_text(quantity_raw)

    location_raw = chosen["location"]
    if not isinstance(location_raw, str):
        raise VocabularyError(f"unknown location label: {location_raw!r}")
    location = location_from_text(location_raw)

    explanation_raw = chosen["explanation"]
    explanation = str(explanation_raw) if explanation_raw is not None else ""
    if not explanation.strip():
        raise ConsistencyError("explanation must be non-empty in backend output")

    descriptor = PVDescriptor(presence, quantity, location, explanation)
    violation = validate_descriptor(descriptor)
    if violation is not None:
        raise ConsistencyError(violation)
    return descriptor

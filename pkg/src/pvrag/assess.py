"""Assessment orchestration: retrieve references, prompt a backend, parse.

One assessment runs the full loop for a single query image: pick
references according to the mode (similarity search, seeded random
sampling, or none), build the prompt, call the backend once (the backend
handles its own transport retries), and parse the output into a validated
descriptor. The query is never retrievable as its own reference.
"""
from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from .descriptors import PVDescriptor, validate_descriptor
from .parsing import parse_structured_output
from .prompts import PromptTemplates, build_autolabel_prompt, build_rag_prompt
from .vindex import ReferenceEntry, VectorIndex, similarity

PLAIN = "plain"
RAG = "rag"
RANDOM = "random"


@dataclass(frozen=True)
class AssessmentMode:
    """How references are chosen: none, top-K by similarity, or random K."""

    kind: str
    k: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (PLAIN, RAG, RANDOM):
            raise ValueError(f"unknown assessment mode: {self.kind!r}")
        if self.kind in (RAG, RANDOM) and self.k < 1:
            raise ValueError(f"mode {self.kind!r} requires k >= 1")

    @classmethod
    def plain(cls) -> "AssessmentMode":
        return cls(PLAIN)

    @classmethod
    def rag(cls, k: int) -> "AssessmentMode":
        return cls(RAG, k=k)

    @classmethod
    def random(cls, k: int, seed: int) -> "AssessmentMode":
        return cls(RANDOM, k=k, seed=seed)


@dataclass(frozen=True)
class AssessmentRequest:
    """Everything a backend needs for one query.

    references are (entry, similarity) pairs sorted by descending
    similarity; empty in plain mode.
    """

    query_id: str
    query_image_ref: Optional[str]
    references: tuple[tuple[ReferenceEntry, float], ...]
    prompt_text: str

    def __post_init__(self):
        sims = [s for _, s in self.references]
        if any(sims[i] < sims[i + 1] for i in range(len(sims) - 1)):
            raise ValueError("request references must be sorted by descending similarity")


@dataclass
class AssessmentResult:
    query_id: str
    descriptor: PVDescriptor
    raw_output: str
    backend_name: str
    latency_ms: float

    def __post_init__(self):
        violation = validate_descriptor(self.descriptor)
        if violation is not None:
            raise ValueError(f"result for {self.query_id!r} is invalid: {violation}")


class Backend(Protocol):
    name: str

    def generate(self, request: AssessmentRequest) -> str: ...


class AssessmentError(RuntimeError):
    """Parse or consistency failure; keeps the raw output for auditing."""

    def __init__(self, message: str, query_id: str, raw_output: str):
        super().__init__(message)
        self.query_id = query_id
        self.raw_output = raw_output


def derive_query_seed(seed: int, query_id: str) -> int:
    """Stable per-query sampling seed (platform-independent)."""
    digest = hashlib.sha256(f"{seed}:{query_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def select_references(
    query_id: str,
    query_embedding: np.ndarray,
    index: VectorIndex,
    mode: AssessmentMode,
    leave_out_city: Optional[str] = None,
) -> tuple[tuple[ReferenceEntry, float], ...]:
    """Pick the reference set for one query according to the mode.

    The query id is always excluded, so an index that happens to contain
    the query cannot leak its own label; an optional city exclusion
    supports cross-regional (leave-one-out) evaluation.
    """

    def keep(entry: ReferenceEntry) -> bool:
        if entry.id == query_id:
            return False
        if leave_out_city is not None and entry.city == leave_out_city:
            return False
        return True

    if mode.kind == PLAIN:
        return ()
    if mode.kind == RAG:
        hits = index.search_topk(query_embedding, mode.k, predicate=keep)
        return tuple((h.entry, h.similarity) for h in hits)
    # Random: sample, then report true similarities, most similar first.
    sample = index.random_sample(
        mode.k, derive_query_seed(mode.seed, query_id), predicate=keep
    )
    scored = [(e, similarity(query_embedding, e.embedding)) for e in sample]
    scored.sort(key=lambda pair: (-pair[1], pair[0].id))
    return tuple(scored)


def assess(
    query_id: str,
    query_embedding: np.ndarray,
    index: Optional[VectorIndex],
    mode: AssessmentMode,
    backend: Backend,
    templates: Optional[PromptTemplates] = None,
    leave_out_city: Optional[str] = None,
    query_image_ref: Optional[str] = None,
) -> AssessmentResult:
    """Run one full assessment and return the validated result.

    Parse and consistency failures raise AssessmentError with the raw
    backend output attached; transport failures surface as the backend's
    own error after its internal retries.
    """
    if mode.kind != PLAIN and index is None:
        raise ValueError(f"mode {mode.kind!r} requires a reference index")
    references = (
        ()
        if mode.kind == PLAIN
        else select_references(query_id, query_embedding, index, mode, leave_out_city)
    )
    if mode.kind == PLAIN:
        prompt = build_autolabel_prompt(query_id, templates)
    else:
        prompt = build_rag_prompt(query_id, references, templates)
    request = AssessmentRequest(
        query_id=query_id,
        query_image_ref=query_image_ref,
        references=references,
        prompt_text=prompt,
    )
    started = time.perf_counter()
    raw = backend.generate(request)
    latency_ms = (time.perf_counter() - started) * 1000.0
    try:
        descriptor = parse_structured_output(raw)
    except ValueError as exc:
        raise AssessmentError(
            f"query {query_id!r}: {exc}", query_id=query_id, raw_output=raw
        ) from exc
    return AssessmentResult(
        query_id=query_id,
        descriptor=descriptor,
        raw_output=raw,
        backend_name=backend.name,
        latency_ms=latency_ms,
    )

"""Assessment backends: a remote model service client and an offline mock.

The remote client speaks a minimal JSON protocol: it POSTs
{model, prompt, images, max_output_tokens, temperature} and expects
{output_text, usage} back. Transport failures are retried with
exponential backoff; malformed or unparseable *content* is never retried,
because that is model behavior, not network behavior.

The mock backend is a pure function of the request, which makes the whole
pipeline runnable and testable without any model service: it votes over
the reference labels attached to the request.
"""
from __future__ import annotations

import base64
import json
import os
import time
import urllib.error
import urllib.request
from collections import Counter
from pathlib import Path
from typing import Callable, Optional, Sequence

from .assess import AssessmentRequest
from .descriptors import LocationLabel, QuantityInterval

ENV_BACKEND_URL = "PVRAG_BACKEND_URL"
ENV_API_KEY = "PVRAG_API_KEY"

MOCK_NEGATIVE_EXPLANATION = "mock: no reference context"
MOCK_MAJORITY_EXPLANATION = "mock: majority of K references"


class BackendError(RuntimeError):
    """Transport-level failure that persisted through all retries."""


class MockBackend:
    """Deterministic offline stand-in for the remote assessment model.

    Plain requests (no references) always produce the negative descriptor.
    With references, each field is a majority vote: presence needs a strict
    majority (tie goes to the most similar reference); quantity and location
    are voted only among references that agree with the voted presence, with
    ties again resolved by the most similar such reference.
    """

    name = "mock"

    def generate(self, request: AssessmentRequest) -> str:
        if not request.references:
            return self._render(False, QuantityInterval.NA, LocationLabel.NA,
                                MOCK_NEGATIVE_EXPLANATION)
        entries = [entry for entry, _ in request.references]
        n_true = sum(1 for e in entries if e.label.presence)
        n_false = len(entries) - n_true
        if n_true > n_false:
            presence = True
        elif n_false > n_true:
            presence = False
        else:
            presence = entries[0].label.presence
        if not presence:
            return self._render(False, QuantityInterval.NA, LocationLabel.NA,
                                MOCK_MAJORITY_EXPLANATION)
        agreeing = [e for e in entries if e.label.presence]
        quantity = self._vote(agreeing, lambda e: e.label.quantity)
        location = self._vote(agreeing, lambda e: e.label.location)
        return self._render(True, quantity, location, MOCK_MAJORITY_EXPLANATION)

    @staticmethod
    def _vote(entries: Sequence, key: Callable):
        counts = Counter(key(e) for e in entries)
        best = max(counts.values())
        # Entries arrive most-similar-first; first value holding the top
        # count wins ties.
        for e in entries:
            if counts[key(e)] == best:
                return key(e)
        raise AssertionError("unreachable: entries is non-empty")

    @staticmethod
    def _render(presence: bool, quantity: QuantityInterval,
                location: LocationLabel, explanation: str) -> str:
        return json.dumps(
            {
                "presence": presence,
                "quantity": quantity.value,
                "location": location.value,
                "explanation": explanation,
            },
            sort_keys=True,
        )


class AuditLog:
    """Append-only JSONL log of raw request/response pairs."""

    def __init__(self, path: Path | str):
        self.path = Path(path)

    def append(self, record: dict) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _default_transport(url: str, payload: dict, headers: dict, timeout: float) -> dict:
    data = json.dumps(payload).encode("utf-8")
    req = urllib.request.Request(url, data=data, headers=headers, method="POST")
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return json.loads(resp.read().decode("utf-8"))


class RemoteBackend:
    """Client for a remote assessment model service.

    Configuration resolves flag > config mapping > environment variable.
    `transport` is injectable for tests; the default uses urllib.
    """

    def __init__(
        self,
        url: Optional[str] = None,
        api_key: Optional[str] = None,
        model: str = "gpt-4o",
        temperature: float = 0.0,
        max_output_tokens: int = 800,
        timeout_s: float = 60.0,
        max_attempts: int = 3,
        backoff_s: float = 1.0,
        attach_reference_images: bool = False,
        image_resolver: Optional[Callable[[str], Optional[str]]] = None,
        audit: Optional[AuditLog] = None,
        transport: Optional[Callable[[str, dict, dict, float], dict]] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.url = url or os.environ.get(ENV_BACKEND_URL)
        self.api_key = api_key or os.environ.get(ENV_API_KEY)
        if not self.url:
            raise BackendError(
                f"no backend URL configured (flag/config or {ENV_BACKEND_URL})"
            )
        self.model = model
        self.temperature = temperature
        self.max_output_tokens = max_output_tokens
        self.timeout_s = timeout_s
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self.attach_reference_images = attach_reference_images
        self.image_resolver = image_resolver
        self.audit = audit
        self.transport = transport or _default_transport
        self._sleep = sleep
        self.name = f"remote:{model}"

    def _images(self, request: AssessmentRequest) -> list[str]:
        images = []
        if request.query_image_ref:
            images.append(_image_payload(request.query_image_ref))
        if self.attach_reference_images and self.image_resolver is not None:
            for entry, _ in request.references:
                ref = self.image_resolver(entry.id)
                if ref:
                    images.append(_image_payload(ref))
        return images

    def generate(self, request: AssessmentRequest) -> str:
        payload = {
            "model": self.model,
            "prompt": request.prompt_text,
            "images": self._images(request),
            "max_output_tokens": self.max_output_tokens,
            "temperature": self.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Optional[Exception] = None
        for attempt in range(self.max_attempts):
            if attempt:
                self.sleep_backoff(attempt)
            try:
                body = self.transport(self.url, payload, headers, self.timeout_s)
            except urllib.error.HTTPError as exc:
                # Client errors won't improve on retry; 429/5xx may.
                if exc.code < 500 and exc.code != 429:
                    raise BackendError(f"backend rejected request: HTTP {exc.code}") from exc
                last_error = exc
                continue
            except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as exc:
                last_error = exc
                continue
            if "output_text" not in body:
                raise BackendError("backend response is missing 'output_text'")
            text = str(body["output_text"])
            if self.audit is not None:
                self.audit.append(
                    {
                        "backend": self.name,
                        "query_id": request.query_id,
                        "request": payload,
                        "response": body,
                    }
                )
            return text
        raise BackendError(
            f"backend unreachable after {self.max_attempts} attempts: {last_error}"
        ) from last_error

    def sleep_backoff(self, attempt: int) -> None:
        self._sleep(self.backoff_s * (2 ** (attempt - 1)))


def _image_payload(ref: str) -> str:
    """URL references pass through; local files are inlined as base64."""
    if ref.startswith(("http://", "https://", "data:")):
        return ref
    path = Path(ref)
    if path.exists():
        return base64.b64encode(path.read_bytes()).decode("ascii")
    return ref

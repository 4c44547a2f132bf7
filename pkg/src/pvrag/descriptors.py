"""Core domain types for rooftop PV descriptors.

A descriptor is the structured outcome of assessing one rooftop image:
whether panels are present, how many (as a discrete interval), where on
the roof, and a free-text explanation. Every other module produces or
consumes these values, so the canonical string forms used in manifests,
wire messages, and reports are fixed here.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional


class VocabularyError(ValueError):
    """Raised when a string is outside the canonical label vocabulary."""


class QuantityInterval(Enum):
    """Discrete panel-count bins. Order matters for the four non-NA values."""

    ZERO_TO_ONE = "(0,1]"
    ONE_TO_FIVE = "(1,5]"
    FIVE_TO_TEN = "(5,10]"
    TEN_PLUS = "(10,inf)"
    NA = "NA"

    def __str__(self) -> str:
        return self.value


# Total order over the non-NA intervals, least to greatest.
_ORDERED_INTERVALS = (
    QuantityInterval.ZERO_TO_ONE,
    QuantityInterval.ONE_TO_FIVE,
    QuantityInterval.FIVE_TO_TEN,
    QuantityInterval.TEN_PLUS,
)

# Representative panel count per interval (fractional for the smallest bin).
_REPRESENTATIVE_COUNTS = {
    QuantityInterval.ZERO_TO_ONE: 0.5,
    QuantityInterval.ONE_TO_FIVE: 3.0,
    QuantityInterval.FIVE_TO_TEN: 7.0,
    QuantityInterval.TEN_PLUS: 12.0,
}


class LocationLabel(Enum):
    """Nine-region grid position of a PV array within the image, or NA."""

    TOP = "top"
    BOTTOM = "bottom"
    LEFT = "left"
    RIGHT = "right"
    CENTER = "center"
    TOP_LEFT = "top-left"
    TOP_RIGHT = "top-right"
    BOTTOM_LEFT = "bottom-left"
    BOTTOM_RIGHT = "bottom-right"
    NA = "NA"

    def __str__(self) -> str:
        return self.value


_QUANTITY_BY_TEXT = {m.value.lower(): m for m in QuantityInterval}
_LOCATION_BY_TEXT = {m.value.lower(): m for m in LocationLabel}


def quantity_from_text(text: str) -> QuantityInterval:
    """Parse a canonical quantity string, case-insensitively.

    Whitespace inside the token is ignored so "(10, inf)" parses; any other
    deviation from the canonical vocabulary raises VocabularyError.
    """
    key = "".join(text.split()).lower()
    try:
        return _QUANTITY_BY_TEXT[key]
    except KeyError:
        raise VocabularyError(f"unknown quantity interval: {text!r}") from None


def location_from_text(text: str) -> LocationLabel:
    """Parse a canonical location string, case-insensitively."""
    key = text.strip().lower()
    try:
        return _LOCATION_BY_TEXT[key]
    except KeyError:
        raise VocabularyError(f"unknown location label: {text!r}") from None


def presence_from_text(text: str) -> bool:
    """Parse the canonical presence strings "true"/"false"."""
    key = text.strip().lower()
    if key == "true":
        return True
    if key == "false":
        return False
    raise VocabularyError(f"unknown presence value: {text!r}")


def presence_to_text(presence: bool) -> str:
    return "true" if presence else "false"


@dataclass(frozen=True)
class PVDescriptor:
    """Structured assessment of one rooftop image.

    The three label fields are mutually consistent: a negative assessment
    (presence False) carries NA quantity and NA location, and a positive
    one carries neither. Explanations are free text; ground-truth labels
    may leave them empty but backend-produced descriptors must not.
    """

    presence: bool
    quantity: QuantityInterval
    location: LocationLabel
    explanation: str = ""

    def is_valid(self) -> bool:
        return validate_descriptor(self) is None

    def as_strings(self) -> dict[str, str]:
        """Canonical text form of each field, as used in files and prompts."""
        return {
            "presence": presence_to_text(self.presence),
            "quantity": self.quantity.value,
            "location": self.location.value,
            "explanation": self.explanation,
        }


#: The consistent no-PV descriptor (empty explanation).
NEGATIVE_DESCRIPTOR = PVDescriptor(
    presence=False,
    quantity=QuantityInterval.NA,
    location=LocationLabel.NA,
    explanation="",
)


def validate_descriptor(d: PVDescriptor) -> Optional[str]:
    """Check descriptor consistency; return None if OK.

    Returns the first violated invariant by name, checking quantity
    consistency before location consistency.
    """
    if d.presence:
        if d.quantity is QuantityInterval.NA:
            return "quantity must be non-NA when present"
        if d.location is LocationLabel.NA:
            return "location must be non-NA when present"
    else:
        if d.quantity is not QuantityInterval.NA:
            return "quantity must be NA when absent"
        if d.location is not LocationLabel.NA:
            return "location must be NA when absent"
    return None


def representative_count(q: QuantityInterval) -> float:
    """Representative panel count for a non-NA interval (0.5, 3, 7 or 12)."""
    if q is QuantityInterval.NA:
        raise ValueError("no representative count for NA")
    return _REPRESENTATIVE_COUNTS[q]


def site_capacity_kw(q: QuantityInterval, per_panel_kw: float) -> float:
    """Installed capacity of one site: representative count times panel rating."""
    if per_panel_kw <= 0:
        raise ValueError("per_panel_kw must be positive")
    return representative_count(q) * per_panel_kw


def neighbor_intervals(
    q: QuantityInterval,
) -> tuple[Optional[QuantityInterval], Optional[QuantityInterval]]:
    """Adjacent intervals (lower, upper) in the total order; None at the ends."""
    if q is QuantityInterval.NA:
        raise ValueError("NA has no neighboring intervals")
    i = _ORDERED_INTERVALS.index(q)
    lower = _ORDERED_INTERVALS[i - 1] if i > 0 else None
    upper = _ORDERED_INTERVALS[i + 1] if i < len(_ORDERED_INTERVALS) - 1 else None
    return lower, upper


def ordered_intervals() -> tuple[QuantityInterval, ...]:
    """The four non-NA intervals, least to greatest."""
    return _ORDERED_INTERVALS

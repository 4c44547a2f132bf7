"""Prompt assembly for the assessment backend.

Prompt wording lives in external template files with $-style placeholders;
the code guarantees only structure: which placeholders exist, reference
ordering, and similarity formatting. Templates are validated once at load
so a broken deployment fails immediately rather than mid-run.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path
from string import Template
from typing import Optional, Sequence

from .vindex import ReferenceEntry

#: Field names that must appear literally in every assessment prompt so the
#: backend knows the output schema.
DESCRIPTOR_FIELD_NAMES = ("presence", "quantity", "location", "explanation")

_AUTOLABEL_PLACEHOLDERS = {"query_id"}
_RAG_PLACEHOLDERS = {"query_id", "references"}
_REFERENCE_PLACEHOLDERS = {
    "rank",
    "city",
    "similarity",
    "presence",
    "quantity",
    "location",
    "explanation",
}


class TemplateConfigError(ValueError):
    """Raised when a prompt template file is missing required placeholders."""


def _identifiers(template: Template) -> set[str]:
    # Template.get_identifiers() only exists on 3.11+; scan the pattern directly.
    found = set()
    for match in template.pattern.finditer(template.template):
        name = match.group("named") or match.group("braced")
        if name:
            found.add(name)
    return found


def _load_template(
    text: str, name: str, required: set[str], require_fields: bool
) -> Template:
    tmpl = Template(text)
    missing = required - _identifiers(tmpl)
    if missing:
        raise TemplateConfigError(
            f"template {name!r} is missing placeholders: {sorted(missing)}"
        )
    if require_fields:
        absent = [f for f in DESCRIPTOR_FIELD_NAMES if f not in text]
        if absent:
            raise TemplateConfigError(
                f"template {name!r} does not mention output fields: {absent}"
            )
    return tmpl


class PromptTemplates:
    """The three prompt templates, loaded and validated together."""

    def __init__(self, autolabel: str, rag: str, rag_reference: str):
        self.autolabel = _load_template(
            autolabel, "autolabel", _AUTOLABEL_PLACEHOLDERS, require_fields=True
        )
        self.rag = _load_template(rag, "rag", _RAG_PLACEHOLDERS, require_fields=True)
        self.rag_reference = _load_template(
            rag_reference, "rag_reference", _REFERENCE_PLACEHOLDERS, require_fields=False
        )

    @classmethod
    def load_default(cls) -> "PromptTemplates":
        pkg = resources.files("pvrag").joinpath("templates")
        return cls(
            pkg.joinpath("autolabel.txt").read_text(encoding="utf-8"),
            pkg.joinpath("rag.txt").read_text(encoding="utf-8"),
            pkg.joinpath("rag_reference.txt").read_text(encoding="utf-8"),
        )

    @classmethod
    def load_dir(cls, directory: Path | str) -> "PromptTemplates":
        d = Path(directory)
        return cls(
            (d / "autolabel.txt").read_text(encoding="utf-8"),
            (d / "rag.txt").read_text(encoding="utf-8"),
            (d / "rag_reference.txt").read_text(encoding="utf-8"),
        )


def build_autolabel_prompt(
    query_id: str, templates: Optional[PromptTemplates] = None
) -> str:
    """Render the reference-free labeling prompt for one query image."""
    templates = templates or PromptTemplates.load_default()
    return templates.autolabel.substitute(query_id=query_id)


def build_rag_prompt(
    query_id: str,
    hits: Sequence[tuple[ReferenceEntry, float]],
    templates: Optional[PromptTemplates] = None,
) -> str:
    """Render the reference-assisted prompt.

    `hits` are (entry, similarity) pairs sorted by descending similarity;
    each becomes one reference block, rank starting at 1, with the
    similarity printed to 4 decimal places. The query's own labels are
    never available here, so the prompt cannot leak them.
    """
    if not hits:
        raise ValueError("RAG prompt requires references")
    sims = [s for _, s in hits]
    if any(sims[i] < sims[i + 1] for i in range(len(sims) - 1)):
        raise ValueError("references must be sorted by descending similarity")
    templates = templates or PromptTemplates.load_default()
    blocks = []
    for rank, (entry, sim) in enumerate(hits, start=1):
        fields = entry.label.as_strings()
        blocks.append(
            templates.rag_reference.substitute(
                rank=rank,
                city=entry.city,
                similarity=f"{sim:.4f}",
                presence=fields["presence"],
                quantity=fields["quantity"],
                location=fields["location"],
                explanation=fields["explanation"],
            ).rstrip("\n")
        )
    return templates.rag.substitute(query_id=query_id, references="\n".join(blocks))

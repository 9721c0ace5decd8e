"""Versioned plain-text prompt templates with named slots.

Templates live in the package's ``templates/`` directory as ``<id>.txt``
files using ``{slot}`` placeholders. The template id is recorded in every
pipeline output so a run can be audited against the exact wording used.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    text: str
    slots: frozenset[str]

    def render(self, **values: str) -> str:
        missing = self.slots - set(values)
        if missing:
            raise TemplateError(
                f"template {self.template_id}: missing slots {sorted(missing)}"
            )
        extra = set(values) - self.slots
        if extra:
            raise TemplateError(
                f"template {self.template_id}: unexpected slots {sorted(extra)}"
            )
        return self.text.format(**values)


def _extract_slots(text: str) -> frozenset[str]:
    slots = set()
    for _, field_name, _, _ in string.Formatter().parse(text):
        if field_name is None:
            continue
        if not re.fullmatch(r"[a-z_]+", field_name):
            raise TemplateError(f"invalid slot name {field_name!r}")
        slots.add(field_name)
    return frozenset(slots)


@lru_cache(maxsize=None)
def _load_shipped(template_id: str) -> PromptTemplate:
    try:
        text = (
            resources.files("factflaw")
            .joinpath("templates", f"{template_id}.txt")
            .read_text(encoding="utf-8")
        )
    except FileNotFoundError:
        raise TemplateError(f"unknown template id: {template_id}") from None
    return PromptTemplate(template_id=template_id, text=text, slots=_extract_slots(text))


def load_template(template_id: str, directory: str | Path | None = None) -> PromptTemplate:
    """Load ``<template_id>.txt`` from the shipped set or a custom directory."""
    if directory is None:
        return _load_shipped(template_id)
    path = Path(directory) / f"{template_id}.txt"
    if not path.exists():
        raise TemplateError(f"template file not found: {path}")
    text = path.read_text(encoding="utf-8")
    return PromptTemplate(template_id=template_id, text=text, slots=_extract_slots(text))

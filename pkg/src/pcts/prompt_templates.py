"""Hand-crafted cloze templates wrapping (headline, summary) pairs."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

# Accepts both the bare `{text_a}` form and the OpenPrompt-style
# `{"placeholder": "text_a"}` / `{"mask"}` / `{'mask'}` forms.
_SLOT = re.compile(
    r"""\{\s*(?:["']placeholder["']\s*:\s*["'](?P<ph>text_[ab])["']|["']?(?P<bare>text_a|text_b|mask)["']?)\s*\}"""
)


class TemplateError(ValueError):
    pass


class _NoSummary:
    """Marker for the headline-only ablation; renders as an empty slot."""

    def __repr__(self):
        return "NO_SUMMARY"


NO_SUMMARY = _NoSummary()


@dataclass(frozen=True)
class PromptTemplate:
    id: int
    pattern: str

    def __post_init__(self):
        slots = [m.group("ph") or m.group("bare") for m in _SLOT.finditer(self.pattern)]
        for name in ("text_a", "text_b", "mask"):
            if slots.count(name) != 1:
                raise TemplateError(f"template {self.id}: slot {name!r} occurs {slots.count(name)} times")


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    mask_position: int
    template_id: int
    mask_token: str
    key: str = ""

    @property
    def tokens(self) -> list[str]:
        return self.text.split()


_BUILTIN = (
    (1, 'This title is: {"placeholder": "text_a"} This article is {"placeholder":"text_b"} '
        'and provides detailed information and analysis. is_clickbait: {"mask"}'),
    (2, 'This article title is: {"placeholder": "text_a"}. The content is {"placeholder": "text_b"} '
        "and provides detailed information and analysis. Is it clickbait? {'mask'}"),
    (3, 'Article Title: {"placeholder": "text_a"}, Article Content: {"placeholder": "text_b"}, '
        'is this clickbait? {"mask"}'),
    (4, 'This is an article about: {"placeholder": "text_a"} This article discusses {"placeholder": "text_b"} '
        'and provides detailed information and analysis. is_clickbait: {"mask"}'),
)


def builtin_templates() -> list[PromptTemplate]:
    return [PromptTemplate(i, p) for i, p in _BUILTIN]


def get_template(template_id: int, templates: list[PromptTemplate] | None = None) -> PromptTemplate:
    for t in templates or builtin_templates():
        if t.id == template_id:
            return t
    raise TemplateError(f"no template with id {template_id}")


def render(template: PromptTemplate, headline: str, summary, mask_token: str = "[MASK]",
           key: str = "") -> RenderedPrompt:
    """Fill the slots and collapse internal whitespace to single spaces.

    ``summary`` may be ``NO_SUMMARY`` to leave the content slot empty.
    """
    if not mask_token or any(c.isspace() for c in mask_token):
        raise TemplateError("mask token must be a non-empty string without whitespace")
    if not headline or not headline.strip():
        raise TemplateError("headline is empty")
    if summary is NO_SUMMARY:
        summary = ""
    elif not summary or not summary.strip():
        raise TemplateError("summary is empty")
    for part in (headline, summary):
        if mask_token in part:
            raise TemplateError(f"input text contains the mask token {mask_token!r}")
    fill = {"text_a": headline, "text_b": summary, "mask": f" {mask_token} "}

    def sub(m):
        return fill[m.group("ph") or m.group("bare")]

    text = " ".join(_SLOT.sub(sub, template.pattern).split())
    tokens = text.split()
    positions = [i for i, tok in enumerate(tokens) if tok == mask_token]
    if len(positions) != 1:
        raise TemplateError(f"template {template.id}: mask token not isolated after rendering")
    return RenderedPrompt(text, positions[0], template.id, mask_token, key)


def load_templates(path: str | Path) -> list[PromptTemplate]:
    """Read templates from JSON: a list of ``{"id": int, "pattern": str}``."""
    rows = json.loads(Path(path).read_text(encoding="utf-8"))
    return [PromptTemplate(int(r["id"]), r["pattern"]) for r in rows]


def save_templates(templates: list[PromptTemplate], path: str | Path) -> None:
    rows = [{"id": t.id, "pattern": t.pattern} for t in templates]
    Path(path).write_text(json.dumps(rows, indent=2, ensure_ascii=False), encoding="utf-8")

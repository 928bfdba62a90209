"""Annotated documents, privacy-group partitioning, and prompt assembly.

A document is a character string plus disjoint spans, each span assigned to
one privacy group; characters outside every span are public. Rendering a
*view* replaces the spans of hidden groups with a single placeholder string
(one placeholder per span regardless of span length, so placeholder width
never leaks span length). The paraphrasing prompt wraps a rendered view in a
fixed chat template.

Span offsets are character offsets in memory; the on-disk JSON format uses
byte offsets into the UTF-8 encoding and the loader/writer converts.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import MalformedDocumentError

DEFAULT_PLACEHOLDER = "___"

# Loader-side caps; large documents multiply per-step inference cost by m + 1.
MAX_DOC_CHARS = 10_000
MAX_GROUPS = 8


@dataclass(frozen=True)
class PrivacyGroup:
    group_id: int
    label: str
    budget_beta: float

    def __post_init__(self):
        if self.group_id < 1:
            raise MalformedDocumentError(f"group ids start at 1, got {self.group_id}")
        # beta = 0 is the fully-redacted edge: the group's content never moves
        # the released distribution away from the public one.
        if not self.budget_beta >= 0:
            raise MalformedDocumentError(f"group {self.group_id}: budget beta must be >= 0")


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    group_id: int


@dataclass(frozen=True)
class AnnotatedDocument:
    doc_id: str
    text: str
    spans: tuple[Span, ...]
    groups: tuple[PrivacyGroup, ...]

    def __post_init__(self):
        ids = [g.group_id for g in self.groups]
        if sorted(ids) != list(range(1, len(ids) + 1)):
            raise MalformedDocumentError(f"group ids must be distinct and contiguous from 1, got {ids}")
        known = set(ids)
        ordered = sorted(self.spans, key=lambda s: s.start)
        prev_end = 0
        for s in ordered:
            if not (0 <= s.start <= s.end <= len(self.text)):
                raise MalformedDocumentError(f"span {s} outside text bounds [0, {len(self.text)}]")
            if s.start < prev_end:
                raise MalformedDocumentError(f"span {s} overlaps a previous span")
            if s.group_id not in known:
                raise MalformedDocumentError(f"span {s} references unknown group {s.group_id}")
            prev_end = s.end
        object.__setattr__(self, "spans", tuple(ordered))

    @property
    def group_count(self) -> int:
        return len(self.groups)

    def betas(self) -> dict[int, float]:
        return {g.group_id: g.budget_beta for g in self.groups}


@dataclass(frozen=True)
class ContextView:
    rendered_text: str
    revealed_groups: frozenset[int]


def render_view(doc: AnnotatedDocument, revealed_groups, placeholder: str = DEFAULT_PLACEHOLDER) -> ContextView:
    """Render the document with every span of a non-revealed group replaced by `placeholder`."""
    revealed = frozenset(revealed_groups)
    pieces = []
    cursor = 0
    for s in doc.spans:
        pieces.append(doc.text[cursor:s.start])
        pieces.append(doc.text[s.start:s.end] if s.group_id in revealed else placeholder)
        cursor = s.end
    pieces.append(doc.text[cursor:])
    return ContextView(rendered_text="".join(pieces), revealed_groups=revealed)


def partition(doc: AnnotatedDocument, placeholder: str = DEFAULT_PLACEHOLDER):
    """Public view plus one view per group, in group-id order.

    The public view reveals no group; group view i reveals exactly group i.
    """
    public = render_view(doc, (), placeholder)
    group_views = [render_view(doc, (g.group_id,), placeholder) for g in doc.groups]
    return public, group_views


# --- prompt template -------------------------------------------------------

_SYSTEM_TEXT = (
    "You are given a passage that may contain placeholders (underscores)\n"
    "or incomplete data. Your job is to produce a natural paraphrase.\n"
    "Do not use any underscores or placeholders in your output.\n"
    "If data is missing, just omit it or paraphrase gracefully.\n"
    "Do not output anything except the paraphrase.\n"
    "Make sure to retain all information from the source document."
)

_USER_TEXT = (
    "Document:\n"
    "\n"
    "{private_doc}\n"
    "\n"
    "Paraphrase the above text. Whenever a placeholder—\n"
    "for example, {placeholder}—appears, you must completely ignore it,\n"
    "as it indicates redacted content. To ensure the generated text\n"
    "is as natural as possible, never output the placeholders themselves."
)

_ASSISTANT_PREFIX = (
    "Sure, Here is the paraphrased document without underscores\n"
    "or placeholders:"
)

# Appended to the user turn by the no-DPI baseline modes only.
PRIVACY_INSTRUCTION = "Produce a natural paraphrase of this for ensuring privacy."


@dataclass(frozen=True)
class PromptBundle:
    system_text: str = _SYSTEM_TEXT
    user_text: str = _USER_TEXT
    assistant_prefix: str = _ASSISTANT_PREFIX
    placeholder: str = DEFAULT_PLACEHOLDER

    def with_privacy_instruction(self) -> "PromptBundle":
        return PromptBundle(
            system_text=self.system_text,
            user_text=self.user_text + "\n\n" + PRIVACY_INSTRUCTION,
            assistant_prefix=self.assistant_prefix,
            placeholder=self.placeholder,
        )


def assemble_prompt(view: ContextView, template: PromptBundle = PromptBundle()) -> str:
    """Chat-format prompt for one view; byte-stable given (view, template).

    The generated-so-far suffix is appended by the caller, not here.
    """
    if not template.placeholder:
        raise MalformedDocumentError("template placeholder must be non-empty")
    user = template.user_text.replace("{private_doc}", view.rendered_text)
    user = user.replace("{placeholder}", template.placeholder)
    return (
        "<|im_start|>system\n"
        + template.system_text
        + "\n<|im_end|>\n<|im_start|>user\n"
        + user
        + "\n<|im_end|>\n<|im_start|>assistant\n"
        + template.assistant_prefix
    )


# --- JSON document files ---------------------------------------------------


def _char_offsets_from_bytes(text: str, byte_offsets) -> dict[int, int]:
    """Map each requested UTF-8 byte offset to its character offset."""
    wanted = set(byte_offsets)
    table = {}
    b = 0
    for i, ch in enumerate(text):
        if b in wanted:
            table[b] = i
        b += len(ch.encode("utf-8"))
    if b in wanted:
        table[b] = len(text)
    missing = wanted - table.keys()
    if missing:
        raise MalformedDocumentError(
            f"byte offsets {sorted(missing)} are out of range or not on a codepoint boundary"
        )
    return table


def _byte_offsets_from_chars(text: str) -> list[int]:
    offs = [0]
    for ch in text:
        offs.append(offs[-1] + len(ch.encode("utf-8")))
    return offs


def document_from_obj(obj: dict, max_chars: int = MAX_DOC_CHARS, max_groups: int = MAX_GROUPS) -> AnnotatedDocument:
    """Build a document from the JSON object format; span offsets are UTF-8 byte offsets."""
    try:
        text = obj["text"]
        doc_id = obj["doc_id"]
        raw_spans = obj.get("spans", [])
        raw_groups = obj.get("groups", [])
    except (KeyError, TypeError) as exc:
        raise MalformedDocumentError(f"document object missing required field: {exc}") from exc
    if len(text) > max_chars:
        raise MalformedDocumentError(f"document has {len(text)} characters, cap is {max_chars}")
    if len(raw_groups) > max_groups:
        raise MalformedDocumentError(f"document has {len(raw_groups)} groups, cap is {max_groups}")
    groups = tuple(
        PrivacyGroup(group_id=int(g["id"]), label=str(g.get("label", "")), budget_beta=float(g["beta"]))
        for g in raw_groups
    )
    offsets = []
    for s in raw_spans:
        offsets.extend((int(s["start"]), int(s["end"])))
    table = _char_offsets_from_bytes(text, offsets)
    spans = tuple(
        Span(start=table[int(s["start"])], end=table[int(s["end"])], group_id=int(s["group"]))
        for s in raw_spans
    )
    return AnnotatedDocument(doc_id=str(doc_id), text=text, spans=spans, groups=groups)


def document_to_obj(doc: AnnotatedDocument) -> dict:
    byte_at = _byte_offsets_from_chars(doc.text)
    return {
        "doc_id": doc.doc_id,
        "text": doc.text,
        "spans": [
            {"start": byte_at[s.start], "end": byte_at[s.end], "group": s.group_id} for s in doc.spans
        ],
        "groups": [
            {"id": g.group_id, "label": g.label, "beta": g.budget_beta} for g in doc.groups
        ],
    }


def load_document(path, max_chars: int = MAX_DOC_CHARS, max_groups: int = MAX_GROUPS) -> AnnotatedDocument:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return document_from_obj(obj, max_chars=max_chars, max_groups=max_groups)


def save_document(doc: AnnotatedDocument, path) -> None:
    Path(path).write_text(json.dumps(document_to_obj(doc), ensure_ascii=False), encoding="utf-8")

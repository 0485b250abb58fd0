"""Few-shot prompt construction and generation parsing.

Builds the numbered-example prompts used for the conceptualize and
instantiate stages and turns raw model completions back into normalized
candidate strings via fixed rules.  Rejections are values, not errors:
a batch run must keep moving on junk output.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import IO, Union

from .core import (
    MarkedHead,
    Relation,
    TemplateTable,
    content_tokens,
    mark_span,
    render_bracketed,
    render_statement,
)


class PromptMode(Enum):
    CONCEPTUALIZATION = "conceptualization"
    INSTANTIATION = "instantiation"


CONCEPTUALIZATION_SUFFIX = "can be conceptualized as"
INSTANTIATION_SUFFIX = "can be instantiated as"

# Candidates longer than this many content tokens are not "general"
# single concepts and get rejected in conceptualization mode.
MAX_CONCEPT_CONTENT_TOKENS = 10


@dataclass(frozen=True)
class Exemplar:
    """One worked example: a bracketed head in context plus its answer."""

    head_bracketed: str
    relation: Relation
    tail: str
    answer: str

    def __post_init__(self) -> None:
        mark_span(self.head_bracketed)  # validates the single bracket pair
        if not self.answer.strip():
            raise ValueError("exemplar answer must be non-empty")


@dataclass(frozen=True)
class ExemplarSet:
    mode: PromptMode
    task_prompt: str
    exemplars: tuple[Exemplar, ...]


Query = tuple[MarkedHead, Relation, str]


def _event_line(
    index: int,
    head_bracketed: str,
    relation: Relation,
    tail: str,
    templates: TemplateTable,
    suffix: str,
    answer: str | None,
) -> str:
    statement = render_statement(head_bracketed, relation, tail, templates)
    span_text = mark_span(head_bracketed).span_text
    line = f"Event {index}: {statement} [{span_text}] {suffix}"
    if answer is not None:
        line = f"{line} {answer}"
    return line


def _build_prompt(
    query: Query,
    exemplar_set: ExemplarSet,
    templates: TemplateTable | None,
    expected_mode: PromptMode,
    suffix: str,
) -> str:
    if exemplar_set.mode is not expected_mode:
        raise ValueError(f"exemplar set mode is {exemplar_set.mode.value}, expected {expected_mode.value}")
    templates = templates or TemplateTable.default()
    marked, relation, tail = query
    lines = [exemplar_set.task_prompt]
    for i, ex in enumerate(exemplar_set.exemplars, start=1):
        lines.append(_event_line(i, ex.head_bracketed, ex.relation, ex.tail, templates, suffix, ex.answer))
    query_index = len(exemplar_set.exemplars) + 1
    lines.append(_event_line(query_index, render_bracketed(marked), relation, tail, templates, suffix, None))
    return "\n".join(lines)


def build_conceptualization_prompt(
    query: Query,
    exemplar_set: ExemplarSet,
    templates: TemplateTable | None = None,
) -> str:
    """Render the abstract-this-instance prompt, ending right after the cue."""
    return _build_prompt(query, exemplar_set, templates, PromptMode.CONCEPTUALIZATION, CONCEPTUALIZATION_SUFFIX)


def build_instantiation_prompt(
    query: Query,
    exemplar_set: ExemplarSet,
    templates: TemplateTable | None = None,
) -> str:
    """Render the ground-this-concept prompt, ending right after the cue."""
    return _build_prompt(query, exemplar_set, templates, PromptMode.INSTANTIATION, INSTANTIATION_SUFFIX)


# --- generation parsing ---


class RejectReason(Enum):
    EMPTY = "empty"
    TOO_LONG = "too_long"
    NO_BRACKET_CONTEXT = "no_bracket_context"


@dataclass(frozen=True)
class ParsedCandidate:
    value: str | None
    reason: RejectReason | None = None

    @property
    def ok(self) -> bool:
        return self.value is not None


_LIST_MARKER = re.compile(r"^(?:\d+[.):]\s+|[-*•]\s*)")
_WS_RUN = re.compile(r"\s+")
_WRAPPERS = {('"', '"'), ("'", "'"), ("[", "]"), ("(", ")"), ("{", "}"), ("“", "”"), ("‘", "’")}


def _normalize_fragment(fragment: str) -> str:
    s = fragment.strip()
    while True:
        stripped = _LIST_MARKER.sub("", s)
        if stripped == s:
            break
        s = stripped.strip()
    while len(s) >= 2 and (s[0], s[-1]) in _WRAPPERS:
        s = s[1:-1].strip()
    s = s.rstrip(".!?,;:").rstrip()
    return _WS_RUN.sub(" ", s)


def parse_generation(raw: str, mode: PromptMode) -> ParsedCandidate:
    """Normalize a raw completion into a candidate string, or reject it.

    Completions are split on line breaks, leading list markers are
    stripped, and each fragment is normalized independently (surrounding
    quotes/brackets removed, terminal punctuation dropped, whitespace
    collapsed).  The first surviving fragment wins.  Conceptualization
    mode additionally rejects candidates longer than
    ``MAX_CONCEPT_CONTENT_TOKENS`` content tokens.
    """
    first_reason: RejectReason | None = None
    for fragment in raw.splitlines():
        candidate = _normalize_fragment(fragment)
        if not candidate:
            continue
        if "[" in candidate or "]" in candidate:
            first_reason = first_reason or RejectReason.NO_BRACKET_CONTEXT
            continue
        if mode is PromptMode.CONCEPTUALIZATION and len(content_tokens(candidate)) > MAX_CONCEPT_CONTENT_TOKENS:
            first_reason = first_reason or RejectReason.TOO_LONG
            continue
        return ParsedCandidate(value=candidate)
    return ParsedCandidate(value=None, reason=first_reason or RejectReason.EMPTY)


# --- exemplar files ---


def load_exemplars(source: Union[IO[str], str, Path]) -> ExemplarSet:
    """Load an exemplar set from JSONL.

    The first line is a header ``{"mode", "task_prompt", "version"}``;
    each following line is one exemplar ``{"head_bracketed", "relation",
    "tail", "answer"}``.  Any malformed entry is fatal and names its
    position.
    """
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ValueError("exemplar file is empty")
    try:
        header = json.loads(lines[0])
        mode = PromptMode(header["mode"])
        task_prompt = str(header["task_prompt"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ValueError(f"bad exemplar file header: {exc}") from exc
    exemplars = []
    for index, line in enumerate(lines[1:], start=1):
        try:
            obj = json.loads(line)
            exemplars.append(
                Exemplar(
                    head_bracketed=obj["head_bracketed"],
                    relation=Relation.parse(obj["relation"]),
                    tail=obj["tail"],
                    answer=obj["answer"],
                )
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"bad exemplar at index {index}: {exc}") from exc
    return ExemplarSet(mode=mode, task_prompt=task_prompt, exemplars=tuple(exemplars))


_DATA_FILES = {
    PromptMode.CONCEPTUALIZATION: "conceptualization_exemplars.jsonl",
    PromptMode.INSTANTIATION: "instantiation_exemplars.jsonl",
}


def default_exemplars(mode: PromptMode) -> ExemplarSet:
    """The exemplar sets bundled with the package."""
    ref = resources.files("cskb_distill.data").joinpath(_DATA_FILES[mode])
    with ref.open("r", encoding="utf-8") as fh:
        return load_exemplars(fh)

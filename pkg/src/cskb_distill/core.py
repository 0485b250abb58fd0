"""Data model for CSKB triples and marked head events.

Covers the span-replacement algebra behind conceptualization (swap an
instance span for a concept) and instantiation (swap a concept span for a
new instance), the relation-to-connective verbalization templates, the
shared content tokenizer, and triple/record file I/O.

Spans are half-open character intervals over Unicode code points, so
offsets survive exchange between tools regardless of encoding.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Union


class Relation(Enum):
    """The nine if-then social relations of ATOMIC-style CSKBs."""

    X_EFFECT = "xEffect"
    O_EFFECT = "oEffect"
    X_WANT = "xWant"
    O_WANT = "oWant"
    X_REACT = "xReact"
    O_REACT = "oReact"
    X_NEED = "xNeed"
    X_ATTR = "xAttr"
    X_INTENT = "xIntent"

    @classmethod
    def parse(cls, text: str) -> "Relation":
        try:
            return cls(text.strip())
        except ValueError:
            raise ValueError(f"unknown relation: {text!r}") from None


class SpanKind(Enum):
    INSTANCE = "instance"
    CONCEPT = "concept"


WILDCARD = "___"


@dataclass(frozen=True)
class Triple:
    """One CSKB assertion: (head event, relation, tail)."""

    id: str
    head: str
    relation: Relation
    tail: str

    def __post_init__(self) -> None:
        if not self.head.strip():
            raise ValueError("triple head must be non-empty")
        if not self.tail.strip():
            raise ValueError("triple tail must be non-empty")
        if WILDCARD in self.head:
            raise ValueError(f"wildcard head not allowed: {self.head!r}")


@dataclass(frozen=True)
class MarkedHead:
    """Head-event text with one character span marked as the focus.

    The span is half-open [start, end); the covered substring must be
    non-empty and carry no leading or trailing whitespace.
    """

    text: str
    span: tuple[int, int]
    kind: SpanKind = SpanKind.INSTANCE

    def __post_init__(self) -> None:
        start, end = self.span
        if not (0 <= start < end <= len(self.text)):
            raise ValueError(f"span {self.span} out of bounds for text of length {len(self.text)}")
        covered = self.text[start:end]
        if covered != covered.strip():
            raise ValueError(f"span text has leading/trailing whitespace: {covered!r}")

    @property
    def span_text(self) -> str:
        return self.text[self.span[0] : self.span[1]]


def mark_span(bracketed: str, kind: SpanKind = SpanKind.INSTANCE) -> MarkedHead:
    """Turn a head with one ``[...]``-marked substring into a MarkedHead.

    The returned text is the input with the two bracket characters removed;
    the span covers the previously enclosed substring.  Inverse of
    :func:`render_bracketed`.
    """
    opens = bracketed.count("[")
    closes = bracketed.count("]")
    if opens != 1 or closes != 1:
        raise ValueError(f"expected exactly one [...] pair, got {opens} '[' and {closes} ']' in {bracketed!r}")
    start = bracketed.index("[")
    close = bracketed.index("]")
    if close < start:
        raise ValueError(f"']' precedes '[' in {bracketed!r}")
    content = bracketed[start + 1 : close]
    if not content.strip():
        raise ValueError(f"empty bracket content in {bracketed!r}")
    text = bracketed[:start] + content + bracketed[close + 1 :]
    return MarkedHead(text=text, span=(start, start + len(content)), kind=kind)


def render_bracketed(marked: MarkedHead) -> str:
    """Re-insert brackets around the marked span."""
    start, end = marked.span
    return f"{marked.text[:start]}[{marked.text[start:end]}]{marked.text[end:]}"


def _replace_span(marked: MarkedHead, replacement: str, kind: SpanKind) -> MarkedHead:
    replacement = replacement.strip()
    if not replacement:
        raise ValueError("replacement text must be non-empty")
    start, end = marked.span
    text = marked.text[:start] + replacement + marked.text[end:]
    return MarkedHead(text=text, span=(start, start + len(replacement)), kind=kind)


def conceptualize_head(marked: MarkedHead, concept: str) -> MarkedHead:
    """Replace the instance span with a concept, yielding the abstract head."""
    if marked.kind is not SpanKind.INSTANCE:
        raise ValueError("conceptualize_head expects an instance-marked head")
    return _replace_span(marked, concept, SpanKind.CONCEPT)


def instantiate_head(marked: MarkedHead, instance: str) -> str:
    """Replace the concept span with a new instance, yielding the new head text."""
    if marked.kind is not SpanKind.CONCEPT:
        raise ValueError("instantiate_head expects a concept-marked head")
    return _replace_span(marked, instance, SpanKind.INSTANCE).text


def instantiate_head_marked(marked: MarkedHead, instance: str) -> MarkedHead:
    """Like :func:`instantiate_head` but keeps the new instance span marked."""
    if marked.kind is not SpanKind.CONCEPT:
        raise ValueError("instantiate_head_marked expects a concept-marked head")
    return _replace_span(marked, instance, SpanKind.INSTANCE)


# --- verbalization templates ---

DEFAULT_CONNECTIVES: dict[Relation, str] = {
    Relation.X_EFFECT: "as a result, PersonX will",
    Relation.O_EFFECT: "as a result, PersonY will",
    Relation.X_WANT: "as a result, PersonX wants",
    Relation.O_WANT: "as a result, PersonY wants",
    Relation.X_REACT: "as a result, PersonX feels",
    Relation.O_REACT: "as a result, PersonY feels",
    Relation.X_NEED: "before that, PersonX needed",
    Relation.X_ATTR: "PersonX is seen as",
    Relation.X_INTENT: "because PersonX wanted",
}


@dataclass(frozen=True)
class TemplateTable:
    """Total map from relation to the connective phrase used in statements."""

    connectives: tuple[tuple[Relation, str], ...]

    def __post_init__(self) -> None:
        covered = {relation for relation, _ in self.connectives}
        missing = [r.value for r in Relation if r not in covered]
        if missing:
            raise ValueError(f"template table missing relations: {missing}")

    @classmethod
    def default(cls) -> "TemplateTable":
        return cls(tuple(DEFAULT_CONNECTIVES.items()))

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "TemplateTable":
        """Load overrides from a JSON file mapping relation name to phrase."""
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        table = dict(DEFAULT_CONNECTIVES)
        for key, phrase in raw.items():
            table[Relation.parse(key)] = str(phrase)
        return cls(tuple(table.items()))

    def connective(self, relation: Relation) -> str:
        for rel, phrase in self.connectives:
            if rel is relation:
                return phrase
        raise KeyError(relation)  # unreachable: table is total


def render_statement(
    head: str,
    relation: Relation,
    tail: str,
    templates: TemplateTable | None = None,
) -> str:
    """Concatenate a triple into one declarative sentence.

    Shape: ``<head>, <connective>, <tail>.`` with exactly one terminal
    period regardless of trailing punctuation on the tail.
    """
    templates = templates or TemplateTable.default()
    tail_clean = tail.strip().rstrip(".").rstrip()
    return f"{head.strip()}, {templates.connective(relation)}, {tail_clean}."


# --- shared content tokenizer ---

# Fixed, versioned list (v1): ~40 English function words plus the
# PersonX/Y/Z placeholders, which appear in nearly every head event.
STOPWORDS: frozenset[str] = frozenset(
    """
    a an and are as at be been being but by did do does down for from had
    has have if in into is it its no not of off on or out over so than
    that the then this to under up was were will with would
    personx persony personz
    """.split()
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def content_tokens(text: str) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, drop stopwords."""
    return [tok for tok in _TOKEN_RE.findall(text.lower()) if tok not in STOPWORDS]


# --- generated-knowledge records ---


def _check_score(score: float | None) -> None:
    if score is not None and not (0.0 <= score <= 1.0):
        raise ValueError(f"score {score} outside [0, 1]")


@dataclass(frozen=True)
class ConceptRecord:
    """One generated conceptualization: instance -> concept within a head."""

    id: str
    source_triple_id: str
    instance: str
    concept: str
    abstract_head: MarkedHead
    relation: Relation
    tail: str
    score: float | None = None
    round: int = 1
    generator_id: str = ""

    def __post_init__(self) -> None:
        _check_score(self.score)
        if self.round < 1:
            raise ValueError("round must be >= 1")
        if self.abstract_head.span_text != self.concept:
            raise ValueError("abstract head span must cover the inserted concept")

    def original_head(self) -> str:
        """Reconstruct the source head by undoing the span replacement."""
        start, end = self.abstract_head.span
        return self.abstract_head.text[:start] + self.instance + self.abstract_head.text[end:]


@dataclass(frozen=True)
class InstantiationRecord:
    """One generated instantiation: concept -> new instance, new head."""

    id: str
    source_concept_record_id: str
    instance: str
    new_head: MarkedHead
    relation: Relation
    tail: str
    score: float | None = None
    round: int = 1
    generator_id: str = ""

    def __post_init__(self) -> None:
        _check_score(self.score)
        if self.round < 1:
            raise ValueError("round must be >= 1")
        if self.new_head.span_text != self.instance:
            raise ValueError("new head span must cover the inserted instance")


Record = Union[ConceptRecord, InstantiationRecord]


# --- file I/O ---


@dataclass(frozen=True)
class LineError:
    line: int
    message: str


def _decode_lines(source: Union[IO[bytes], IO[str]]) -> list[str]:
    raw = source.read()
    data = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    return data.splitlines()


def _entry_from_fields(
    head: str,
    relation_text: str,
    tail: str,
    bracketed: str | None,
    triple_id: str,
) -> tuple[Triple, MarkedHead | None]:
    triple = Triple(id=triple_id, head=head.strip(), relation=Relation.parse(relation_text), tail=tail.strip())
    marked = None
    if bracketed is not None and bracketed.strip():
        marked = mark_span(bracketed.strip())
        if marked.text != triple.head:
            raise ValueError(
                f"bracketed head {bracketed!r} does not match head {triple.head!r} once brackets are removed"
            )
    return triple, marked


def parse_triple_file(
    source: Union[IO[bytes], IO[str]],
    format: str = "tsv",
) -> tuple[list[tuple[Triple, MarkedHead | None]], list[LineError]]:
    """Parse a triple file into (triple, optional marked head) entries.

    TSV lines are ``head<TAB>relation<TAB>tail`` with an optional fourth
    column holding the head with its focus instance in brackets.  JSONL
    objects carry ``head``/``relation``/``tail`` plus optional ``id`` and
    ``head_bracketed``.  Malformed lines are reported with their 1-based
    line number and never silently dropped; an undecodable byte stream is
    fatal.
    """
    if format not in ("tsv", "jsonl"):
        raise ValueError(f"unknown triple file format: {format!r}")
    entries: list[tuple[Triple, MarkedHead | None]] = []
    errors: list[LineError] = []
    for line_no, line in enumerate(_decode_lines(source), start=1):
        if not line.strip():
            continue
        try:
            if format == "tsv":
                fields = line.split("\t")
                if len(fields) not in (3, 4):
                    raise ValueError(f"expected 3 or 4 tab-separated fields, got {len(fields)}")
                head, relation_text, tail = fields[0], fields[1], fields[2]
                bracketed = fields[3] if len(fields) == 4 else None
                triple_id = f"t{line_no:06d}"
            else:
                obj = json.loads(line)
                head = obj["head"]
                relation_text = obj["relation"]
                tail = obj["tail"]
                bracketed = obj.get("head_bracketed")
                triple_id = str(obj.get("id") or f"t{line_no:06d}")
            entries.append(_entry_from_fields(head, relation_text, tail, bracketed, triple_id))
        except (ValueError, KeyError, TypeError) as exc:
            errors.append(LineError(line=line_no, message=str(exc)))
    return entries, errors


# Record JSONL schema.  The `instance` key is carried on both kinds so a
# written file parses back into structurally equal records without any
# side lookup.
_RECORD_KEYS = (
    "id",
    "kind",
    "source_id",
    "head",
    "span",
    "relation",
    "tail",
    "text",
    "score",
    "round",
    "generator",
    "instance",
)


def record_to_dict(record: Record) -> dict:
    if isinstance(record, ConceptRecord):
        kind, source_id, head, text = "concept", record.source_triple_id, record.abstract_head, record.concept
    else:
        kind, source_id, head, text = (
            "instantiation",
            record.source_concept_record_id,
            record.new_head,
            record.instance,
        )
    return {
        "id": record.id,
        "kind": kind,
        "source_id": source_id,
        "head": head.text,
        "span": list(head.span),
        "relation": record.relation.value,
        "tail": record.tail,
        "text": text,
        "score": record.score,
        "round": record.round,
        "generator": record.generator_id,
        "instance": record.instance,
    }


def record_from_dict(obj: dict) -> Record:
    kind = obj["kind"]
    span = (int(obj["span"][0]), int(obj["span"][1]))
    relation = Relation.parse(obj["relation"])
    score = obj.get("score")
    common = dict(
        id=obj["id"],
        relation=relation,
        tail=obj["tail"],
        score=None if score is None else float(score),
        round=int(obj["round"]),
        generator_id=obj.get("generator", ""),
    )
    if kind == "concept":
        return ConceptRecord(
            source_triple_id=obj["source_id"],
            instance=obj["instance"],
            concept=obj["text"],
            abstract_head=MarkedHead(obj["head"], span, SpanKind.CONCEPT),
            **common,
        )
    if kind == "instantiation":
        return InstantiationRecord(
            source_concept_record_id=obj["source_id"],
            instance=obj["text"],
            new_head=MarkedHead(obj["head"], span, SpanKind.INSTANCE),
            **common,
        )
    raise ValueError(f"unknown record kind: {kind!r}")


def write_records(records: Iterable[Record], sink: Union[IO[str], str, Path], format: str = "jsonl") -> int:
    """Write records as JSONL, one object per line.  Returns the count written."""
    if format != "jsonl":
        raise ValueError(f"unsupported record format: {format!r}")
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as fh:
            return write_records(records, fh)
    count = 0
    for record in records:
        sink.write(json.dumps(record_to_dict(record), ensure_ascii=False))
        sink.write("\n")
        count += 1
    return count


def read_records(source: Union[IO[str], IO[bytes], str, Path]) -> list[Record]:
    """Parse a record JSONL file (path or open file object) back into records."""
    if isinstance(source, (str, Path)):
        lines = Path(source).read_text(encoding="utf-8").splitlines()
    else:
        lines = _decode_lines(source)
    return [record_from_dict(json.loads(line)) for line in lines if line.strip()]

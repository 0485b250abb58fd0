"""Downstream training-data synthesis from distilled records.

Three synthesizers: binary discrimination pairs with sampled negatives
(event-level and triple-level), source/target linearizations for
sequence-to-sequence tail generators, and multiple-choice QA items with
keyword-disjoint distractors.  All outputs are pure functions of
(input, seed); items that cannot satisfy the sampling rules are skipped
and returned in a ledger rather than raised.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .core import ConceptRecord, Relation, TemplateTable, Triple, content_tokens
from .critic import concept_assertion

# Resample budget per record before the record is skipped.
RESAMPLE_ATTEMPTS = 50


class PairTask(Enum):
    EVENT_DISC = "event_disc"
    TRIPLE_DISC = "triple_disc"


class PairLabel(Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class LabeledPair:
    text_a: str
    text_b: str
    label: PairLabel
    task: PairTask

    def render(self) -> str:
        if self.task is PairTask.EVENT_DISC:
            return f"{self.text_a}. {self.text_b}"
        tail = self.text_b.strip().rstrip(".").rstrip()
        return f"{self.text_a}, {tail}."

    def to_dict(self) -> dict:
        return {"text_a": self.text_a, "text_b": self.text_b, "label": self.label.value, "task": self.task.value}


@dataclass(frozen=True)
class QAItem:
    question: str
    options: tuple[str, ...]
    gold_index: int

    def __post_init__(self) -> None:
        if not (0 <= self.gold_index < len(self.options)):
            raise ValueError("gold_index out of range")
        if len(set(self.options)) != len(self.options):
            raise ValueError("options must be pairwise distinct")

    def to_dict(self) -> dict:
        return {"question": self.question, "options": list(self.options), "gold_index": self.gold_index}


@dataclass(frozen=True)
class SkippedItem:
    item_id: str
    reason: str


def _overlaps(candidate: str, protected: str) -> bool:
    return bool(set(content_tokens(candidate)) & set(content_tokens(protected)))


def _norm(text: str) -> str:
    return " ".join(text.casefold().split())


def synth_event_disc(
    records: Sequence[ConceptRecord],
    seed: int = 0,
) -> tuple[list[LabeledPair], list[SkippedItem]]:
    """Positive/negative pairs for event-conceptualization discrimination.

    Each record yields one positive (its own head and concept assertion)
    and one negative whose concept is drawn from a record of a different
    head event and shares no content token with this record's head.  A
    record that cannot be paired within the resample budget is skipped
    entirely so the output stays balanced.
    """
    rng = random.Random(seed)
    pairs: list[LabeledPair] = []
    skipped: list[SkippedItem] = []
    heads = [record.original_head() for record in records]
    if len({_norm(h) for h in heads}) < 2:
        return [], [SkippedItem(r.id, "fewer than 2 distinct head events") for r in records]
    for record, head in zip(records, heads):
        negative_concept = None
        for _ in range(RESAMPLE_ATTEMPTS):
            other = records[rng.randrange(len(records))]
            if _norm(other.original_head()) == _norm(head):
                continue
            if _norm(other.concept) == _norm(record.concept):
                continue
            if _overlaps(other.concept, head):
                continue
            negative_concept = other.concept
            break
        if negative_concept is None:
            skipped.append(SkippedItem(record.id, "no overlap-free concept found"))
            continue
        pairs.append(
            LabeledPair(head, concept_assertion(record.instance, record.concept), PairLabel.POSITIVE, PairTask.EVENT_DISC)
        )
        pairs.append(
            LabeledPair(head, concept_assertion(record.instance, negative_concept), PairLabel.NEGATIVE, PairTask.EVENT_DISC)
        )
    return pairs, skipped


def synth_triple_disc(
    records: Sequence[ConceptRecord],
    seed: int = 0,
    templates: TemplateTable | None = None,
) -> tuple[list[LabeledPair], list[SkippedItem]]:
    """Positive/negative pairs for abstract-triple discrimination.

    The negative tail comes from a record with a different head event
    under the same relation and shares no content token with this
    record's (abstract) head.
    """
    templates = templates or TemplateTable.default()
    rng = random.Random(seed)
    pairs: list[LabeledPair] = []
    skipped: list[SkippedItem] = []
    by_relation: dict[Relation, list[ConceptRecord]] = {}
    for record in records:
        by_relation.setdefault(record.relation, []).append(record)
    for record in records:
        head = record.abstract_head.text
        prompt_part = f"{head}, {templates.connective(record.relation)}"
        pool = by_relation[record.relation]
        negative_tail = None
        if len(pool) > 1:
            for _ in range(RESAMPLE_ATTEMPTS):
                other = pool[rng.randrange(len(pool))]
                if _norm(other.abstract_head.text) == _norm(head):
                    continue
                if _overlaps(other.tail, head):
                    continue
                negative_tail = other.tail
                break
        if negative_tail is None:
            skipped.append(SkippedItem(record.id, "no overlap-free tail under the same relation"))
            continue
        pairs.append(LabeledPair(prompt_part, record.tail, PairLabel.POSITIVE, PairTask.TRIPLE_DISC))
        pairs.append(LabeledPair(prompt_part, negative_tail, PairLabel.NEGATIVE, PairTask.TRIPLE_DISC))
    return pairs, skipped


def synth_comet_lines(
    triples: Sequence[Triple],
    templates: TemplateTable | None = None,
) -> list[tuple[str, str]]:
    """Source/target pairs for tail generation: head plus connective -> tail."""
    templates = templates or TemplateTable.default()
    return [(f"{t.head}, {templates.connective(t.relation)}", t.tail) for t in triples]


def synth_qa_pairs(
    triples: Sequence[Triple],
    option_count: int = 3,
    seed: int = 0,
    templates: TemplateTable | None = None,
) -> tuple[list[QAItem], list[SkippedItem]]:
    """Multiple-choice QA items with keyword-disjoint distractors.

    The question is the head plus its connective; the gold option is the
    triple's own tail.  Distractors are tails of other triples sharing no
    content token with the question head, sampled without replacement
    within an item (the pools are rebuilt per item).  The gold position
    is uniform under the seeded generator.  Items without enough
    eligible distractors are skipped.
    """
    if option_count < 2:
        raise ValueError("option_count must be >= 2")
    templates = templates or TemplateTable.default()
    rng = random.Random(seed)
    items: list[QAItem] = []
    skipped: list[SkippedItem] = []
    tail_tokens = {t.tail: set(content_tokens(t.tail)) for t in triples}
    for triple in triples:
        head_tokens = set(content_tokens(triple.head))
        eligible: list[str] = []
        seen: set[str] = {triple.tail}
        for other in triples:
            if other.id == triple.id or other.tail in seen:
                continue
            if tail_tokens[other.tail] & head_tokens:
                continue
            seen.add(other.tail)
            eligible.append(other.tail)
        if len(eligible) < option_count - 1:
            skipped.append(SkippedItem(triple.id, "not enough overlap-free distractor tails"))
            continue
        distractors = rng.sample(eligible, option_count - 1)
        gold_index = rng.randrange(option_count)
        options = distractors[:gold_index] + [triple.tail] + distractors[gold_index:]
        question = f"{triple.head}, {templates.connective(triple.relation)}"
        items.append(QAItem(question=question, options=tuple(options), gold_index=gold_index))
    return items, skipped

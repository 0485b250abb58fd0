"""Intrinsic evaluation of a distilled store.

Unigram-BLEU soft uniqueness and novelty, per-relation histograms,
concepts-per-event averages, and hypernym distributions against an
IsA taxonomy dump.  BLEU here is a surface metric: tokens are the
whitespace-split, case-folded text with no stopword removal, and the
brevity penalty uses the reference length closest to the candidate
(ties broken toward the shorter reference).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Hashable, Iterable, Sequence, Union

from .core import Relation
from .distill import KnowledgeStore


def bleu_tokens(text: str) -> list[str]:
    """Tokenizer used by all BLEU-based metrics."""
    return text.casefold().split()


def bleu1(candidate: Sequence[str], references: Sequence[Sequence[str]]) -> float:
    """Sentence-level unigram BLEU with brevity penalty.

    Clipped unigram precision (counts clipped to the per-token maximum
    across references) times BP = 1 if c >= r else exp(1 - r/c), where r
    is the reference length closest to the candidate length.  An empty
    candidate scores 0.
    """
    if not references:
        raise ValueError("reference set must be non-empty")
    if not candidate:
        return 0.0
    cand_counts = Counter(candidate)
    max_ref_counts: Counter = Counter()
    for ref in references:
        for token, count in Counter(ref).items():
            if count > max_ref_counts[token]:
                max_ref_counts[token] = count
    clipped = sum(min(count, max_ref_counts[token]) for token, count in cand_counts.items())
    precision = clipped / len(candidate)
    c = len(candidate)
    r = min((len(ref) for ref in references), key=lambda length: (abs(length - c), length))
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return precision * bp


def soft_uniqueness_ratio(
    items: Sequence[tuple[str, Hashable]],
    threshold: float = 0.5,
) -> float:
    """Fraction of items whose BLEU against their group peers stays below threshold.

    Every item is scored against all the other items sharing its group
    key (the symmetric convention: a duplicated pair makes both items
    non-unique).  Items alone in their group count as unique; an empty
    input has ratio 1.
    """
    if not items:
        return 1.0
    token_lists = [bleu_tokens(text) for text, _ in items]
    groups: dict[Hashable, list[int]] = {}
    for index, (_, group_key) in enumerate(items):
        groups.setdefault(group_key, []).append(index)
    unique = 0
    for index, (_, group_key) in enumerate(items):
        peer_indices = [i for i in groups[group_key] if i != index]
        if not peer_indices:
            unique += 1
        elif bleu1(token_lists[index], [token_lists[i] for i in peer_indices]) < threshold:
            unique += 1
    return unique / len(items)


def novelty_ratio(pairs: Sequence[tuple[str, str]], threshold: float = 0.5) -> float:
    """Fraction of (new head, original head) pairs scoring below threshold."""
    if not pairs:
        return 1.0
    novel = sum(1 for new, orig in pairs if bleu1(bleu_tokens(new), [bleu_tokens(orig)]) < threshold)
    return novel / len(pairs)


def relation_histogram(records: Iterable) -> dict[Relation, int]:
    """Counts by relation, total over all nine relations (zeros included)."""
    histogram = {relation: 0 for relation in Relation}
    for record in records:
        histogram[record.relation] += 1
    return histogram


UNMATCHED = "<unmatched>"


@dataclass(frozen=True)
class Taxonomy:
    """Instance -> weighted hypernyms, keyed on normalized instance text."""

    entries: dict[str, tuple[tuple[str, float], ...]]

    def lookup(self, concept: str) -> tuple[tuple[str, float], ...]:
        return self.entries.get(_norm_concept(concept), ())


def _norm_concept(text: str) -> str:
    return " ".join(text.lower().split())


def load_taxonomy(source: Union[IO[str], str, Path]) -> Taxonomy:
    """Read a TSV dump shaped ``instance<TAB>hypernym<TAB>weight``."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    entries: dict[str, list[tuple[str, float]]] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ValueError(f"taxonomy line {line_no}: expected 3 tab-separated fields, got {len(fields)}")
        instance, hypernym, weight_text = fields
        weight = float(weight_text)
        if weight < 0:
            raise ValueError(f"taxonomy line {line_no}: negative weight {weight}")
        entries.setdefault(_norm_concept(instance), []).append((hypernym, weight))
    return Taxonomy(entries={k: tuple(v) for k, v in entries.items()})


def hypernym_distribution(
    concepts: Sequence[str],
    taxonomy: Taxonomy,
    top_n: int = 10,
) -> list[tuple[str, float]]:
    """Rank hypernym buckets by mass; each concept contributes unit mass.

    A matched concept's mass is split across its hypernyms in proportion
    to their weights (uniformly when all weights are zero); unmatched
    concepts accumulate under ``<unmatched>``.  Masses over the full
    ranking sum to ``len(concepts)``.
    """
    masses: dict[str, float] = {}
    for concept in concepts:
        hypernyms = taxonomy.lookup(concept)
        if not hypernyms:
            masses[UNMATCHED] = masses.get(UNMATCHED, 0.0) + 1.0
            continue
        total_weight = sum(w for _, w in hypernyms)
        for hypernym, weight in hypernyms:
            share = weight / total_weight if total_weight > 0 else 1.0 / len(hypernyms)
            masses[hypernym] = masses.get(hypernym, 0.0) + share
    ranked = sorted(masses.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:top_n]


# --- store-level summary ---


def _norm_text(text: str) -> str:
    return " ".join(text.casefold().split())


@dataclass(frozen=True)
class StoreSummary:
    concepts_total: int
    concepts_unique: int
    instantiations_total: int
    instantiations_unique: int
    head_events: int
    avg_concepts_per_event: float
    concept_relations: dict[Relation, int]
    instantiation_relations: dict[Relation, int]
    acceptance_by_round: list[dict[float, float]]

    def to_dict(self) -> dict:
        return {
            "concepts_total": self.concepts_total,
            "concepts_unique": self.concepts_unique,
            "instantiations_total": self.instantiations_total,
            "instantiations_unique": self.instantiations_unique,
            "head_events": self.head_events,
            "avg_concepts_per_event": self.avg_concepts_per_event,
            "concept_relations": {r.value: n for r, n in self.concept_relations.items()},
            "instantiation_relations": {r.value: n for r, n in self.instantiation_relations.items()},
            "acceptance_by_round": [
                {str(tau): ratio for tau, ratio in grid.items()} for grid in self.acceptance_by_round
            ],
        }


def summarize(store: KnowledgeStore) -> StoreSummary:
    """Totals, unique counts, and the concepts-per-event average for a store."""
    concepts = store.concept_records
    instantiations = store.instantiation_records
    heads = {_norm_text(r.original_head()) for r in concepts}
    avg = len(concepts) / len(heads) if heads else 0.0
    return StoreSummary(
        concepts_total=len(concepts),
        concepts_unique=len({_norm_text(r.concept) for r in concepts}),
        instantiations_total=len(instantiations),
        instantiations_unique=len({_norm_text(r.instance) for r in instantiations}),
        head_events=len(heads),
        avg_concepts_per_event=avg,
        concept_relations=relation_histogram(concepts),
        instantiation_relations=relation_histogram(instantiations),
        acceptance_by_round=[dict(stats.acceptance_by_tau) for stats in store.round_stats],
    )

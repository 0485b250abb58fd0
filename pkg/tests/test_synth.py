from __future__ import annotations

import pytest

from cskb_distill.core import Relation, Triple, conceptualize_head, content_tokens, mark_span
from cskb_distill.core import ConceptRecord
from cskb_distill.synth import (
    PairLabel,
    PairTask,
    QAItem,
    synth_comet_lines,
    synth_event_disc,
    synth_qa_pairs,
    synth_triple_disc,
)


def concept_record(record_id, head_bracketed, concept, relation=Relation.X_WANT, tail="to relax"):
    marked = mark_span(head_bracketed)
    return ConceptRecord(
        id=record_id,
        source_triple_id=f"seed-{record_id}",
        instance=marked.span_text,
        concept=concept,
        abstract_head=conceptualize_head(marked, concept),
        relation=relation,
        tail=tail,
        score=0.95,
    )


CORPUS = [
    concept_record("a", "PersonX enjoys drinking at the [bar]", "Social Gathering Place", Relation.X_REACT, "relaxed"),
    concept_record("b", "PersonX swims in [the lake]", "freshwater", Relation.X_REACT, "tired"),
    concept_record("c", "PersonX plants a [vegetable garden]", "outdoor hobby", Relation.X_EFFECT, "harvests food"),
    concept_record("d", "PersonX watches a [horror film]", "scary entertainment", Relation.X_REACT, "scared"),
    concept_record("e", "PersonX repairs the [leaking roof]", "household problem", Relation.X_EFFECT, "stays dry"),
]


class TestEventDisc:
    def test_single_head_skips_everything(self):
        records = [concept_record(f"r{i}", "PersonX naps on the [couch]", f"furniture {i}") for i in range(4)]
        pairs, skipped = synth_event_disc(records, seed=1)
        assert pairs == []
        assert len(skipped) == 4

    def test_positive_renders_critic_statement(self):
        pairs, _ = synth_event_disc(CORPUS, seed=1)
        positives = [p for p in pairs if p.label is PairLabel.POSITIVE]
        rendered = {p.render() for p in positives}
        assert "PersonX enjoys drinking at the bar. Bar is a social gathering place." in rendered

    def test_balanced_one_to_one(self):
        pairs, skipped = synth_event_disc(CORPUS, seed=1)
        positives = [p for p in pairs if p.label is PairLabel.POSITIVE]
        negatives = [p for p in pairs if p.label is PairLabel.NEGATIVE]
        assert len(positives) == len(negatives)
        assert len(positives) + len(skipped) == len(CORPUS)

    def test_negative_concept_never_overlaps_head(self):
        pairs, _ = synth_event_disc(CORPUS, seed=2)
        for pair in pairs:
            if pair.label is PairLabel.NEGATIVE:
                concept_part = pair.text_b  # "<Instance> is a <concept>."
                concept = concept_part.split(" is a ", 1)[1].rstrip(".")
                assert not set(content_tokens(concept)) & set(content_tokens(pair.text_a))

    def test_overlapping_concept_is_never_chosen(self):
        # The only foreign concept available for record x shares the token
        # "bar" with x's head, so x is skipped rather than mis-paired.
        records = [
            concept_record("x", "PersonX cleans the [bar] counter", "bar area", Relation.X_WANT, "to tidy up"),
            concept_record("y", "PersonX paints the [fence]", "bar fixture", Relation.X_WANT, "to decorate"),
        ]
        pairs, skipped = synth_event_disc(records, seed=3)
        assert any(s.item_id == "x" for s in skipped)
        for pair in pairs:
            if pair.label is PairLabel.NEGATIVE and "bar" in content_tokens(pair.text_a):
                assert "bar" not in content_tokens(pair.text_b)

    def test_deterministic_under_seed(self):
        assert synth_event_disc(CORPUS, seed=9) == synth_event_disc(CORPUS, seed=9)
        assert synth_event_disc(CORPUS, seed=9) != synth_event_disc(CORPUS, seed=10)

    def test_task_tag(self):
        pairs, _ = synth_event_disc(CORPUS, seed=1)
        assert {p.task for p in pairs} == {PairTask.EVENT_DISC}


class TestTripleDisc:
    def test_lone_relation_skipped(self):
        records = [CORPUS[2]]  # only xEffect record
        pairs, skipped = synth_triple_disc(records, seed=1)
        assert pairs == []
        assert len(skipped) == 1

    def test_negative_same_relation_different_head(self):
        pairs, _ = synth_triple_disc(CORPUS, seed=4)
        by_text_a = {}
        for pair in pairs:
            by_text_a.setdefault(pair.text_a, []).append(pair)
        for text_a, group in by_text_a.items():
            negatives = [p for p in group if p.label is PairLabel.NEGATIVE]
            positives = [p for p in group if p.label is PairLabel.POSITIVE]
            assert len(negatives) == len(positives) == 1
            # Same connective implies same relation for the negative.
            assert negatives[0].text_a == positives[0].text_a

    def test_negative_tail_never_overlaps_head(self):
        pairs, _ = synth_triple_disc(CORPUS, seed=4)
        for pair in pairs:
            if pair.label is PairLabel.NEGATIVE:
                head = pair.text_a.split(",")[0]
                assert not set(content_tokens(pair.text_b)) & set(content_tokens(pair.text_a))

    def test_placeholders_do_not_block_sampling(self):
        records = [
            concept_record("p1", "PersonX hums a [tune]", "melody", Relation.X_WANT, "PersonX claps"),
            concept_record("p2", "PersonX bakes [bread]", "food", Relation.X_WANT, "PersonX smiles"),
        ]
        pairs, skipped = synth_triple_disc(records, seed=5)
        # Tails contain PersonX, heads contain PersonX; the placeholder is a
        # stopword so the pairing succeeds.
        assert skipped == []
        assert len(pairs) == 4

    def test_render_shape(self):
        pairs, _ = synth_triple_disc(CORPUS, seed=4)
        positive = next(p for p in pairs if p.label is PairLabel.POSITIVE and p.text_b == "relaxed")
        assert positive.render() == f"{positive.text_a}, relaxed."


TRIPLES = [
    Triple("t1", "PersonX arrives at the bar", Relation.X_WANT, "to relax"),
    Triple("t2", "PersonX hears strange noises", Relation.X_EFFECT, "runs away"),
    Triple("t3", "PersonX plants a vegetable garden", Relation.X_EFFECT, "harvests fresh food"),
    Triple("t4", "PersonX watches a horror film", Relation.X_REACT, "scared"),
    Triple("t5", "PersonX climbs a steep mountain", Relation.X_REACT, "exhausted"),
    Triple("t6", "PersonX keeps every receipt", Relation.X_ATTR, "careful"),
]


class TestCometLines:
    def test_pinned_source_shape(self):
        lines = synth_comet_lines(TRIPLES)
        assert ("PersonX hears strange noises, as a result, PersonX will", "runs away") in lines

    def test_empty(self):
        assert synth_comet_lines([]) == []

    def test_deterministic(self):
        assert synth_comet_lines(TRIPLES) == synth_comet_lines(TRIPLES)

    def test_one_line_per_triple(self):
        assert len(synth_comet_lines(TRIPLES)) == len(TRIPLES)


class TestQaPairs:
    def test_pinned_question_and_gold(self):
        items, _ = synth_qa_pairs(TRIPLES, option_count=3, seed=0)
        bar = next(i for i in items if i.question.startswith("PersonX arrives at the bar"))
        assert bar.question == "PersonX arrives at the bar, as a result, PersonX wants"
        assert bar.options[bar.gold_index] == "to relax"

    def test_option_count_and_single_gold(self):
        items, _ = synth_qa_pairs(TRIPLES, option_count=3, seed=1)
        for item in items:
            assert len(item.options) == 3
            assert len(set(item.options)) == 3
            assert item.options[item.gold_index] == next(t.tail for t in TRIPLES if t.head + "," in item.question + ",")

    def test_distractors_never_overlap_head(self):
        items, _ = synth_qa_pairs(TRIPLES, option_count=3, seed=2)
        for item in items:
            head = item.question.rsplit(",", 2)[0]
            for index, option in enumerate(item.options):
                if index != item.gold_index:
                    assert not set(content_tokens(option)) & set(content_tokens(head))

    def test_insufficient_distractors_skipped(self):
        triples = [
            Triple("t1", "PersonX sorts mail", Relation.X_WANT, "to file letters"),
            Triple("t2", "PersonX reads letters", Relation.X_WANT, "to sort mail quickly"),
        ]
        items, skipped = synth_qa_pairs(triples, option_count=3, seed=0)
        assert items == []
        assert len(skipped) == 2

    def test_gold_position_varies(self):
        many = [
            Triple(f"g{i}", f"PersonX paints object{i}", Relation.X_WANT, f"outcome{i}")
            for i in range(40)
        ]
        items, _ = synth_qa_pairs(many, option_count=3, seed=3)
        assert len({item.gold_index for item in items}) > 1

    def test_deterministic_under_seed(self):
        assert synth_qa_pairs(TRIPLES, seed=7) == synth_qa_pairs(TRIPLES, seed=7)

    def test_option_count_validation(self):
        with pytest.raises(ValueError):
            synth_qa_pairs(TRIPLES, option_count=1)

    def test_qaitem_invariants(self):
        with pytest.raises(ValueError):
            QAItem("q", ("a", "a"), 0)
        with pytest.raises(ValueError):
            QAItem("q", ("a", "b"), 5)

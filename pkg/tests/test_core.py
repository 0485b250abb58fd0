from __future__ import annotations

import io
import json
import random

import pytest

from cskb_distill.core import (
    ConceptRecord,
    InstantiationRecord,
    MarkedHead,
    Relation,
    SpanKind,
    TemplateTable,
    Triple,
    conceptualize_head,
    content_tokens,
    instantiate_head,
    instantiate_head_marked,
    mark_span,
    parse_triple_file,
    read_records,
    record_from_dict,
    record_to_dict,
    render_bracketed,
    render_statement,
    write_records,
)


class TestRelation:
    def test_parses_all_nine(self):
        names = ["xEffect", "oEffect", "xWant", "oWant", "xReact", "oReact", "xNeed", "xAttr", "xIntent"]
        assert [Relation.parse(n).value for n in names] == names
        assert len(Relation) == 9

    def test_rejects_unknown(self):
        with pytest.raises(ValueError, match="unknown relation"):
            Relation.parse("xFoo")


class TestTriple:
    def test_rejects_empty_fields(self):
        with pytest.raises(ValueError):
            Triple("t1", "  ", Relation.X_WANT, "tail")
        with pytest.raises(ValueError):
            Triple("t1", "head", Relation.X_WANT, "\t")

    def test_rejects_wildcard_head(self):
        with pytest.raises(ValueError, match="wildcard"):
            Triple("t1", "PersonX sees ___ at the door", Relation.X_WANT, "to hide")


class TestMarkSpan:
    def test_offsets_from_bracketed_head(self):
        marked = mark_span("PersonX enjoys drinking in the [bar]")
        assert marked.text == "PersonX enjoys drinking in the bar"
        assert marked.span == (31, 34)
        assert marked.span_text == "bar"
        assert marked.kind is SpanKind.INSTANCE

    def test_whole_string_span(self):
        marked = mark_span("[bar]")
        assert marked.text == "bar"
        assert marked.span == (0, 3)

    def test_no_brackets_is_error(self):
        with pytest.raises(ValueError):
            mark_span("no brackets here")

    def test_multiple_pairs_is_error(self):
        with pytest.raises(ValueError):
            mark_span("[a] and [b]")

    def test_empty_content_is_error(self):
        with pytest.raises(ValueError):
            mark_span("PersonX sees []")

    def test_reversed_brackets_is_error(self):
        with pytest.raises(ValueError):
            mark_span("PersonX ]sees[ things")

    def test_round_trips_with_render_bracketed(self, mini_cskb_entries):
        # Every bracketed head in the bundled file survives the round trip.
        for triple, marked in mini_cskb_entries:
            assert render_bracketed(marked) in _raw_bracketed_column()

    def test_render_bracketed_inverse(self):
        for raw in ("PersonX finds a [stray kitten]", "[bar]", "a [b] c"):
            assert render_bracketed(mark_span(raw)) == raw


def _raw_bracketed_column():
    from cskb_distill.data import mini_cskb_path

    return {line.split("\t")[3] for line in mini_cskb_path().read_text(encoding="utf-8").splitlines() if line}


class TestSpanAlgebra:
    def test_conceptualize_example(self):
        marked = mark_span("PersonX enjoys drinking in the [bar]")
        abstract = conceptualize_head(marked, "Social Gathering Place")
        assert abstract.text == "PersonX enjoys drinking in the Social Gathering Place"
        assert abstract.span_text == "Social Gathering Place"
        assert abstract.kind is SpanKind.CONCEPT

    def test_conceptualize_offsets(self):
        marked = mark_span("PersonX likes [painting on the beach]")
        abstract = conceptualize_head(marked, "artistic hobby")
        assert abstract.text == "PersonX likes artistic hobby"
        assert abstract.span == (14, 28)

    def test_identity_replacement(self):
        marked = mark_span("PersonX finds a [stray kitten]")
        assert conceptualize_head(marked, "stray kitten").text == marked.text

    def test_empty_concept_is_error(self):
        with pytest.raises(ValueError):
            conceptualize_head(mark_span("[bar]"), "   ")

    def test_instantiate_example(self):
        abstract = mark_span("PersonX enjoys drinking in the [Social Gathering Place]", SpanKind.CONCEPT)
        assert instantiate_head(abstract, "beer festival") == "PersonX enjoys drinking in the beer festival"

    def test_instantiate_identity(self):
        abstract = mark_span("PersonX joins a [team sport]", SpanKind.CONCEPT)
        assert instantiate_head(abstract, "team sport") == abstract.text

    def test_round_trip(self):
        marked = mark_span("PersonX repairs the [leaking roof]")
        abstract = conceptualize_head(marked, "household problem")
        assert instantiate_head(abstract, "leaking roof") == marked.text

    def test_kind_mismatch_is_error(self):
        concept_marked = mark_span("[a] b", SpanKind.CONCEPT)
        with pytest.raises(ValueError):
            conceptualize_head(concept_marked, "c")
        with pytest.raises(ValueError):
            instantiate_head(mark_span("[a] b"), "c")

    def test_randomized_round_trip(self):
        rng = random.Random(99)
        words = "alpha beta gamma delta epsilon zeta eta theta".split()
        for _ in range(200):
            tokens = [rng.choice(words) for _ in range(rng.randint(1, 8))]
            text = " ".join(tokens)
            i = rng.randrange(len(tokens))
            j = rng.randint(i + 1, len(tokens))
            start = len(" ".join(tokens[:i])) + (1 if i else 0)
            end = start + len(" ".join(tokens[i:j]))
            marked = MarkedHead(text, (start, end))
            replacement = " ".join(rng.choice(words) for _ in range(rng.randint(1, 3)))
            abstract = conceptualize_head(marked, replacement)
            assert abstract.span_text == replacement
            assert instantiate_head(abstract, marked.span_text) == text


class TestMarkedHeadInvariants:
    def test_bounds(self):
        with pytest.raises(ValueError):
            MarkedHead("abc", (1, 1))
        with pytest.raises(ValueError):
            MarkedHead("abc", (0, 4))

    def test_whitespace_edges_rejected(self):
        with pytest.raises(ValueError):
            MarkedHead("a bc", (1, 3))  # covers " b"

    def test_spans_count_code_points(self):
        # Offsets are code points, so non-ASCII text left of the span
        # shifts nothing unexpectedly.
        marked = mark_span("PersonX visits the café [garden]")
        assert marked.span_text == "garden"
        assert marked.text[marked.span[0] : marked.span[1]] == "garden"
        abstract = conceptualize_head(marked, "open-air space")
        assert abstract.text == "PersonX visits the café open-air space"
        assert instantiate_head(abstract, "garden") == marked.text


class TestRenderStatement:
    def test_want_example(self):
        out = render_statement("PersonX arrives at the bar", Relation.X_WANT, "to relax")
        assert out == "PersonX arrives at the bar, as a result, PersonX wants, to relax."

    def test_react_example(self):
        out = render_statement("PersonX swims in the lake", Relation.X_REACT, "tired")
        assert out == "PersonX swims in the lake, as a result, PersonX feels, tired."

    def test_attr_example(self):
        out = render_statement("PersonX spends time with PersonY", Relation.X_ATTR, "social")
        assert out == "PersonX spends time with PersonY, PersonX is seen as, social."

    def test_single_terminal_period(self):
        out = render_statement("PersonX naps", Relation.X_EFFECT, "feels rested.")
        assert out.endswith("feels rested.")
        assert not out.endswith("..")

    def test_template_override(self, tmp_path):
        path = tmp_path / "templates.json"
        path.write_text(json.dumps({"xWant": "and then PersonX hopes"}), encoding="utf-8")
        table = TemplateTable.from_file(path)
        out = render_statement("PersonX naps", Relation.X_WANT, "to dream", table)
        assert out == "PersonX naps, and then PersonX hopes, to dream."
        # Other relations keep their defaults.
        assert table.connective(Relation.X_REACT) == "as a result, PersonX feels"

    def test_table_must_be_total(self):
        with pytest.raises(ValueError, match="missing relations"):
            TemplateTable(((Relation.X_WANT, "as a result, PersonX wants"),))


class TestContentTokens:
    def test_drops_stopwords_and_placeholders(self):
        assert content_tokens("PersonX enjoys drinking in the bar") == ["enjoys", "drinking", "bar"]

    def test_empty(self):
        assert content_tokens("") == []

    def test_all_stopwords(self):
        assert content_tokens("the The THE") == []

    def test_idempotent_on_joined_output(self):
        samples = ["PersonX wins the lottery", "to relax", "a fire truck beeping", "Social Gathering Place"]
        for text in samples:
            tokens = content_tokens(text)
            assert content_tokens(" ".join(tokens)) == tokens


class TestParseTripleFile:
    def test_tsv_line(self):
        entries, errors = parse_triple_file(io.BytesIO(b"PersonX arrives at the bar\txWant\tto relax\n"))
        assert errors == []
        [(triple, marked)] = entries
        assert triple.head == "PersonX arrives at the bar"
        assert triple.relation is Relation.X_WANT
        assert triple.tail == "to relax"
        assert marked is None

    def test_empty_stream(self):
        entries, errors = parse_triple_file(io.BytesIO(b""))
        assert entries == [] and errors == []

    def test_unknown_relation_is_line_error(self):
        entries, errors = parse_triple_file(io.BytesIO(b"PersonX naps\txFoo\tto rest\n"))
        assert entries == []
        assert len(errors) == 1
        assert errors[0].line == 1
        assert "xFoo" in errors[0].message

    def test_wildcard_head_rejected(self):
        entries, errors = parse_triple_file(io.BytesIO(b"PersonX sees ___ outside\txWant\tto hide\n"))
        assert entries == []
        assert len(errors) == 1

    def test_bad_lines_do_not_drop_good_ones(self):
        data = b"PersonX naps\txWant\tto rest\nbroken line\nPersonX sings\txReact\thappy\n"
        entries, errors = parse_triple_file(io.BytesIO(data))
        assert len(entries) == 2
        assert [e.line for e in errors] == [2]

    def test_bracketed_column(self):
        data = "PersonX naps\txWant\tto rest\tPersonX [naps]\n".encode()
        entries, errors = parse_triple_file(io.BytesIO(data))
        assert not errors
        [(triple, marked)] = entries
        assert marked.span_text == "naps"
        assert marked.text == triple.head

    def test_bracketed_column_mismatch(self):
        data = "PersonX naps\txWant\tto rest\tPersonX [sleeps]\n".encode()
        entries, errors = parse_triple_file(io.BytesIO(data))
        assert entries == []
        assert len(errors) == 1

    def test_jsonl_format(self):
        line = json.dumps(
            {"id": "seed-1", "head": "PersonX naps", "relation": "xWant", "tail": "to rest", "head_bracketed": "PersonX [naps]"}
        )
        entries, errors = parse_triple_file(io.StringIO(line + "\n"), "jsonl")
        assert not errors
        [(triple, marked)] = entries
        assert triple.id == "seed-1"
        assert marked.span == (8, 12)

    def test_undecodable_stream_is_fatal(self):
        with pytest.raises(UnicodeDecodeError):
            parse_triple_file(io.BytesIO(b"\xff\xfe\x00broken"))

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            parse_triple_file(io.BytesIO(b""), "csv")


def _sample_records():
    marked = mark_span("PersonX enjoys drinking in the [bar]")
    abstract = conceptualize_head(marked, "Social Gathering Place")
    concept = ConceptRecord(
        id="r1-c00000",
        source_triple_id="t000001",
        instance="bar",
        concept="Social Gathering Place",
        abstract_head=abstract,
        relation=Relation.X_REACT,
        tail="relaxed",
        score=0.97,
        round=1,
        generator_id="mock-7",
    )
    inst = InstantiationRecord(
        id="r1-i00000",
        source_concept_record_id="r1-c00000",
        instance="beer festival",
        new_head=instantiate_head_marked(abstract, "beer festival"),
        relation=Relation.X_REACT,
        tail="relaxed",
        score=0.87,
        round=1,
        generator_id="mock-7",
    )
    return [concept, inst]


class TestRecords:
    def test_concept_reconstructs_original_head(self):
        concept, _ = _sample_records()
        assert concept.original_head() == "PersonX enjoys drinking in the bar"

    def test_score_range_enforced(self):
        concept, _ = _sample_records()
        with pytest.raises(ValueError):
            record_from_dict({**record_to_dict(concept), "score": 1.2})

    def test_span_must_cover_text(self):
        concept, _ = _sample_records()
        bad = record_to_dict(concept)
        bad["text"] = "something else"
        with pytest.raises(ValueError):
            record_from_dict(bad)

    def test_write_read_round_trip(self, tmp_path):
        records = _sample_records()
        path = tmp_path / "records.jsonl"
        assert write_records(records, path) == 2
        assert read_records(path) == records

    def test_empty_write(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        assert write_records([], path) == 0
        assert path.read_text() == ""

    def test_score_serialized_exactly(self, tmp_path):
        path = tmp_path / "records.jsonl"
        write_records(_sample_records(), path)
        first = path.read_text().splitlines()[0]
        assert '"score": 0.97' in first

    def test_unscored_serializes_as_null(self, tmp_path):
        concept, _ = _sample_records()
        unscored = record_from_dict({**record_to_dict(concept), "score": None})
        path = tmp_path / "records.jsonl"
        write_records([unscored], path)
        assert '"score": null' in path.read_text()
        assert read_records(path) == [unscored]

    def test_unknown_kind_rejected(self):
        concept, _ = _sample_records()
        with pytest.raises(ValueError, match="kind"):
            record_from_dict({**record_to_dict(concept), "kind": "mystery"})

from __future__ import annotations

import json

import httpx
import pytest

from cskb_distill.critic import (
    FilterConfig,
    HeuristicCritic,
    HeuristicSpec,
    RemoteCritic,
    RemoteScorerSpec,
    ScoreProtocolError,
    TAU_GRID,
    concept_assertion,
    conceptualization_statement,
    filter_records,
    make_critic,
)
from cskb_distill.gateway import PermanentBackendError, RetriesExhaustedError, RetryPolicy


class TestStatementRendering:
    def test_statement_shape(self):
        out = conceptualization_statement("PersonX enjoys drinking at the bar", "bar", "Social Gathering Place")
        assert out == "PersonX enjoys drinking at the bar. Bar is a social gathering place."

    def test_leading_article_dropped(self):
        assert concept_assertion("lake", "a freshwater body") == "Lake is a freshwater body."
        assert concept_assertion("lake", "the freshwater body") == "Lake is a freshwater body."

    def test_head_period_not_doubled(self):
        out = conceptualization_statement("PersonX naps.", "naps", "rest")
        assert out == "PersonX naps. Naps is a rest."

    def test_empty_inputs_rejected(self):
        with pytest.raises(ValueError):
            conceptualization_statement("", "bar", "place")
        with pytest.raises(ValueError):
            concept_assertion("bar", "   ")


class TestHeuristicCritic:
    def test_deterministic(self):
        a = HeuristicCritic(seed=3).score_conceptualization("PersonX naps", "naps", "rest")
        b = HeuristicCritic(seed=3).score_conceptualization("PersonX naps", "naps", "rest")
        assert a == b

    def test_seed_changes_scores(self):
        a = HeuristicCritic(seed=3).score_statement("PersonX naps, as a result, PersonX feels, rested.")
        b = HeuristicCritic(seed=4).score_statement("PersonX naps, as a result, PersonX feels, rested.")
        assert a != b

    def test_range(self):
        critic = HeuristicCritic(seed=0)
        for i in range(100):
            assert 0.0 <= critic.score_statement(f"statement number {i} about things.") <= 1.0
            assert 0.0 <= critic.score_conceptualization(f"PersonX does thing {i}", f"thing {i}", f"concept {i}") <= 1.0

    def test_near_copy_concept_penalized(self):
        critic = HeuristicCritic(seed=0)
        scores_copy = []
        scores_fresh = []
        for i in range(40):
            head = f"PersonX visits the lakeside cabin {i}"
            scores_copy.append(critic.score_conceptualization(head, "lakeside cabin", "lakeside cabins"))
            scores_fresh.append(critic.score_conceptualization(head, "lakeside cabin", "vacation spot"))
        assert sum(scores_copy) / 40 < sum(scores_fresh) / 40

    def test_empty_statement_is_error(self):
        with pytest.raises(ValueError):
            HeuristicCritic().score_statement("   ")


def _remote(handler, **kwargs):
    transport = httpx.MockTransport(handler)
    kwargs.setdefault("retry", RetryPolicy(max_attempts=3, base_delay=0.0))
    return RemoteCritic("http://scorer.test", client=httpx.Client(transport=transport), sleep=lambda _: None, **kwargs)


class TestRemoteCritic:
    def test_score_passthrough(self):
        critic = _remote(lambda request: httpx.Response(200, json={"score": 0.97}))
        assert critic.score_conceptualization("PersonX swims in the lake", "the lake", "freshwater") == 0.97

    def test_statement_stub_value(self):
        from cskb_distill.core import Relation, render_statement

        statement = render_statement("PersonX buys a new toy for PersonY", Relation.O_REACT, "joyful")
        assert statement == "PersonX buys a new toy for PersonY, as a result, PersonY feels, joyful."
        critic = _remote(lambda request: httpx.Response(200, json={"score": 0.90}))
        assert critic.score_statement(statement) == 0.90

    def test_out_of_range_is_protocol_error(self):
        critic = _remote(lambda request: httpx.Response(200, json={"score": 1.3}))
        with pytest.raises(ScoreProtocolError):
            critic.score_statement("PersonX naps.")

    def test_non_numeric_score_is_protocol_error(self):
        critic = _remote(lambda request: httpx.Response(200, json={"score": "high"}))
        with pytest.raises(ScoreProtocolError):
            critic.score_statement("PersonX naps.")

    def test_unreachable_after_retries_is_typed_failure(self):
        attempts = []

        def handler(request):
            attempts.append(1)
            return httpx.Response(503)

        critic = _remote(handler)
        with pytest.raises(RetriesExhaustedError):
            critic.score_statement("PersonX naps.")
        assert len(attempts) == 3

    def test_client_rejection_is_permanent(self):
        critic = _remote(lambda request: httpx.Response(400))
        with pytest.raises(PermanentBackendError):
            critic.score_statement("PersonX naps.")

    def test_batch_endpoint_and_payload(self):
        seen = {}

        def handler(request):
            seen["path"] = request.url.path
            seen["payload"] = json.loads(request.content)
            n = len(seen["payload"]["statements"])
            return httpx.Response(200, json={"scores": [0.5] * n})

        critic = _remote(handler)
        assert critic.score_statements(["a b.", "c d."]) == [0.5, 0.5]
        assert seen["path"] == "/score_batch"
        assert seen["payload"] == {"statements": ["a b.", "c d."]}

    def test_batch_length_mismatch_is_protocol_error(self):
        critic = _remote(lambda request: httpx.Response(200, json={"scores": [0.5]}))
        with pytest.raises(ScoreProtocolError):
            critic.score_statements(["a.", "b."])

    def test_empty_statement_rejected_before_wire(self):
        critic = _remote(lambda request: httpx.Response(200, json={"score": 0.5}))
        with pytest.raises(ValueError):
            critic.score_statement("")

    def test_malformed_endpoint(self):
        with pytest.raises(ValueError):
            RemoteCritic("scorer.test")


class _Scored:
    def __init__(self, id, score):
        self.id = id
        self.score = score

    def __repr__(self):
        return f"_Scored({self.id}, {self.score})"


class TestFilterRecords:
    def test_table_values_partition_at_default_tau(self):
        records = [_Scored("a", 0.97), _Scored("b", 0.87)]
        kept, dropped = filter_records(records, 0.9)
        assert [r.score for r in kept] == [0.97]
        assert [r.score for r in dropped] == [0.87]

    def test_tau_zero_keeps_all(self):
        records = [_Scored(i, s) for i, s in enumerate([0.0, 0.3, 0.99])]
        kept, dropped = filter_records(records, 0.0)
        assert kept == records and dropped == []

    def test_tau_one_drops_all_below_one(self):
        records = [_Scored(i, s) for i, s in enumerate([0.99, 0.5])]
        kept, dropped = filter_records(records, 1.0)
        assert kept == [] and dropped == records

    def test_partition_and_order(self):
        import random

        rng = random.Random(5)
        records = [_Scored(i, rng.random()) for i in range(200)]
        for tau in TAU_GRID:
            kept, dropped = filter_records(records, tau)
            assert len(kept) + len(dropped) == len(records)
            assert kept == [r for r in records if r.score >= tau]
            assert dropped == [r for r in records if r.score < tau]

    def test_monotonic_nesting_across_grid(self):
        import random

        rng = random.Random(6)
        records = [_Scored(i, rng.random()) for i in range(300)]
        kept_sets = []
        for tau in TAU_GRID:
            kept, _ = filter_records(records, tau)
            kept_sets.append({r.id for r in kept})
        for smaller_tau, larger_tau in zip(kept_sets, kept_sets[1:]):
            assert larger_tau <= smaller_tau

    def test_unscored_record_is_error(self):
        with pytest.raises(ValueError, match="unscored"):
            filter_records([_Scored("a", None)], 0.5)

    def test_bad_tau(self):
        with pytest.raises(ValueError):
            filter_records([], 1.5)


class TestConfig:
    def test_filter_config_validates_tau(self):
        with pytest.raises(ValueError):
            FilterConfig(tau=1.01)

    def test_make_critic_dispatch(self):
        assert isinstance(make_critic(HeuristicSpec(seed=2)), HeuristicCritic)
        assert isinstance(make_critic(RemoteScorerSpec(endpoint="http://scorer.test")), RemoteCritic)
        with pytest.raises(TypeError):
            make_critic(object())

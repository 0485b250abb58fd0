"""The distillation loop: conceptualize, filter, instantiate, filter, re-ingest.

Each round turns marked input triples into scored concept records, keeps
the ones at or above the threshold, grounds each kept concept back into a
new instance, filters again, and hands the surviving new heads to the
next round as fresh input.  Per-item failures are logged and counted but
never abort a round.  With the mock backend and heuristic critic the
whole store is a pure function of (seed data, config, seeds), which the
tests rely on.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Generic, Iterable, Sequence, TypeVar, Union

from .core import (
    ConceptRecord,
    InstantiationRecord,
    MarkedHead,
    Record,
    Relation,
    SpanKind,
    TemplateTable,
    Triple,
    conceptualize_head,
    instantiate_head_marked,
    record_from_dict,
    record_to_dict,
    render_statement,
)
from .critic import TAU_GRID, Critic, filter_records
from .gateway import Gateway, GenParams
from .prompts import (
    ExemplarSet,
    PromptMode,
    build_conceptualization_prompt,
    build_instantiation_prompt,
    default_exemplars,
    parse_generation,
)

SeedInput = tuple[Triple, MarkedHead]

_WS = " ".join


def _norm(text: str) -> str:
    return _WS(text.casefold().split())


T = TypeVar("T")


def dedup_records(items: Sequence[T], key: Callable[[T], str] | None = None) -> list[T]:
    """Keep the first occurrence per normalized key, preserving order.

    Strings are keyed by their case-folded, whitespace-collapsed form;
    other items need an explicit key function.
    """
    if key is None:
        key = lambda item: _norm(item if isinstance(item, str) else str(item))  # noqa: E731
    seen: set[str] = set()
    out: list[T] = []
    for item in items:
        k = key(item)
        if k not in seen:
            seen.add(k)
            out.append(item)
    return out


@dataclass(frozen=True)
class LoopConfig:
    rounds: int = 1
    n_c: int = 20
    tau: float = 0.9
    conceptualization_params: GenParams = field(default_factory=GenParams.conceptualization_profile)
    instantiation_params: GenParams = field(default_factory=GenParams.instantiation_profile)
    max_in_flight: int = 8
    rate: float | None = None
    checkpoint_dir: str | None = None

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.n_c < 1:
            raise ValueError("n_c must be >= 1")
        if not (0.0 <= self.tau <= 1.0):
            raise ValueError(f"tau {self.tau} outside [0, 1]")

    def config_hash(self) -> str:
        stable = {
            "rounds": self.rounds,
            "n_c": self.n_c,
            "tau": self.tau,
            "conceptualization_params": vars(self.conceptualization_params),
            "instantiation_params": vars(self.instantiation_params),
        }
        return hashlib.sha256(json.dumps(stable, sort_keys=True).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ItemError:
    round: int
    stage: str
    item_id: str
    message: str


@dataclass(frozen=True)
class RoundStats:
    round: int
    inputs: int
    concepts_generated: int
    concepts_kept: int
    instantiations_generated: int
    instantiations_kept: int
    rejects_by_reason: dict[str, int]
    acceptance_by_tau: dict[float, float]

    def __post_init__(self) -> None:
        if self.concepts_kept > self.concepts_generated:
            raise ValueError("kept concepts exceed generated")
        if self.instantiations_kept > self.instantiations_generated:
            raise ValueError("kept instantiations exceed generated")

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "inputs": self.inputs,
            "concepts_generated": self.concepts_generated,
            "concepts_kept": self.concepts_kept,
            "instantiations_generated": self.instantiations_generated,
            "instantiations_kept": self.instantiations_kept,
            "rejects_by_reason": dict(sorted(self.rejects_by_reason.items())),
            "acceptance_by_tau": {str(tau): ratio for tau, ratio in self.acceptance_by_tau.items()},
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RoundStats":
        return cls(
            round=obj["round"],
            inputs=obj["inputs"],
            concepts_generated=obj["concepts_generated"],
            concepts_kept=obj["concepts_kept"],
            instantiations_generated=obj["instantiations_generated"],
            instantiations_kept=obj["instantiations_kept"],
            rejects_by_reason=dict(obj["rejects_by_reason"]),
            acceptance_by_tau={float(k): v for k, v in obj["acceptance_by_tau"].items()},
        )


def acceptance_grid(scores: Sequence[float], grid: Sequence[float] = TAU_GRID) -> dict[float, float]:
    """Fraction of raw scores at or above each threshold in the grid."""
    if not scores:
        return {tau: 0.0 for tau in grid}
    return {tau: sum(1 for s in scores if s >= tau) / len(scores) for tau in grid}


class KnowledgeStore:
    """Everything one loop run produced, with provenance intact."""

    def __init__(self) -> None:
        self.seeds: list[SeedInput] = []
        self.triples: dict[str, Triple] = {}
        self.triple_origin: dict[str, str | None] = {}
        self.concept_records: list[ConceptRecord] = []
        self.instantiation_records: list[InstantiationRecord] = []
        self._concepts_by_id: dict[str, ConceptRecord] = {}
        self._instantiations_by_id: dict[str, InstantiationRecord] = {}
        self.round_stats: list[RoundStats] = []
        self.errors: list[ItemError] = []

    # -- registration --

    def register_seed(self, triple: Triple, marked: MarkedHead) -> None:
        if marked.text != triple.head:
            raise ValueError(f"marked head {marked.text!r} does not match triple head {triple.head!r}")
        self.seeds.append((triple, marked))
        self.triples[triple.id] = triple
        self.triple_origin[triple.id] = None

    def register_derived_triple(self, triple: Triple, origin_record_id: str) -> None:
        self.triples[triple.id] = triple
        self.triple_origin[triple.id] = origin_record_id

    def add_concepts(self, records: Iterable[ConceptRecord]) -> None:
        for record in records:
            self.concept_records.append(record)
            self._concepts_by_id[record.id] = record

    def add_instantiations(self, records: Iterable[InstantiationRecord]) -> None:
        for record in records:
            self.instantiation_records.append(record)
            self._instantiations_by_id[record.id] = record

    def concept(self, record_id: str) -> ConceptRecord:
        return self._concepts_by_id[record_id]

    def instantiation(self, record_id: str) -> InstantiationRecord:
        return self._instantiations_by_id[record_id]

    # -- provenance --

    def resolve_seed_triple(self, record: Record) -> str:
        """Walk a record's source chain back to the seed triple id."""
        current: Record = record
        while True:
            if isinstance(current, InstantiationRecord):
                current = self._concepts_by_id[current.source_concept_record_id]
                continue
            triple_id = current.source_triple_id
            origin = self.triple_origin.get(triple_id, None)
            if origin is None:
                if triple_id not in self.triples:
                    raise KeyError(f"unknown triple id in provenance chain: {triple_id!r}")
                return triple_id
            current = self._instantiations_by_id[origin]

    # -- persistence (manifest.json + per-round records, append-only) --

    def save(self, directory: Union[str, Path], config_hash: str) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        seeds_path = directory / "seeds.jsonl"
        if not seeds_path.exists():
            with seeds_path.open("w", encoding="utf-8") as fh:
                for triple, marked in self.seeds:
                    fh.write(
                        json.dumps(
                            {
                                "id": triple.id,
                                "head": triple.head,
                                "relation": triple.relation.value,
                                "tail": triple.tail,
                                "span": list(marked.span),
                            },
                            ensure_ascii=False,
                        )
                        + "\n"
                    )
        for stats in self.round_stats:
            k = stats.round
            records_path = directory / f"round-{k:04d}.records.jsonl"
            if not records_path.exists():
                with records_path.open("w", encoding="utf-8") as fh:
                    for record in self.concept_records:
                        if record.round == k:
                            fh.write(json.dumps(record_to_dict(record), ensure_ascii=False) + "\n")
                    for record in self.instantiation_records:
                        if record.round == k:
                            fh.write(json.dumps(record_to_dict(record), ensure_ascii=False) + "\n")
            stats_path = directory / f"round-{k:04d}.stats.json"
            if not stats_path.exists():
                payload = stats.to_dict()
                payload["errors"] = [vars(e) for e in self.errors if e.round == k]
                stats_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        manifest = {
            "version": 1,
            "config_hash": config_hash,
            "rounds_completed": len(self.round_stats),
            "counts": {
                "seeds": len(self.seeds),
                "concepts": len(self.concept_records),
                "instantiations": len(self.instantiation_records),
            },
        }
        (directory / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, directory: Union[str, Path], expected_config_hash: str | None = None) -> "KnowledgeStore":
        directory = Path(directory)
        manifest_path = directory / "manifest.json"
        if not manifest_path.exists():
            raise FileNotFoundError(f"no manifest.json in {directory}")
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        if expected_config_hash is not None and manifest.get("config_hash") != expected_config_hash:
            raise ValueError(
                f"checkpoint config hash {manifest.get('config_hash')!r} does not match "
                f"expected {expected_config_hash!r}"
            )
        store = cls()
        with (directory / "seeds.jsonl").open("r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                triple = Triple(obj["id"], obj["head"], Relation.parse(obj["relation"]), obj["tail"])
                marked = MarkedHead(obj["head"], (obj["span"][0], obj["span"][1]), SpanKind.INSTANCE)
                store.register_seed(triple, marked)
        for k in range(1, manifest["rounds_completed"] + 1):
            with (directory / f"round-{k:04d}.records.jsonl").open("r", encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    record = record_from_dict(json.loads(line))
                    if isinstance(record, ConceptRecord):
                        store.add_concepts([record])
                    else:
                        store.add_instantiations([record])
            stats_obj = json.loads((directory / f"round-{k:04d}.stats.json").read_text(encoding="utf-8"))
            store.round_stats.append(RoundStats.from_dict(stats_obj))
            store.errors.extend(ItemError(**e) for e in stats_obj.get("errors", []))
            # Re-register the derived triples this round's survivors produced.
            for triple, _ in derive_inputs([r for r in store.instantiation_records if r.round == k]):
                store.register_derived_triple(triple, triple.id.removeprefix("x-"))
        return store


def save_checkpoint(store: KnowledgeStore, directory: Union[str, Path], config_hash: str) -> None:
    store.save(directory, config_hash)


def load_checkpoint(directory: Union[str, Path], expected_config_hash: str | None = None) -> KnowledgeStore:
    return KnowledgeStore.load(directory, expected_config_hash)


def derive_inputs(kept_instantiations: Sequence[InstantiationRecord]) -> list[SeedInput]:
    """Convert surviving instantiations into next-round inputs.

    The new head keeps the instantiated span marked as the fresh instance,
    so no re-parsing is needed to decide what to abstract next.
    """
    inputs: list[SeedInput] = []
    for record in kept_instantiations:
        triple = Triple(
            id=f"x-{record.id}",
            head=record.new_head.text,
            relation=record.relation,
            tail=record.tail,
        )
        marked = replace(record.new_head, kind=SpanKind.INSTANCE)
        inputs.append((triple, marked))
    return inputs


RecordT = TypeVar("RecordT")


@dataclass
class StageResult(Generic[RecordT]):
    """Scored records plus the reject tallies and error ledger of one stage."""

    scored: list[RecordT] = field(default_factory=list)
    rejects: dict[str, int] = field(default_factory=dict)
    errors: list[ItemError] = field(default_factory=list)

    def reject(self, reason: str, count: int = 1) -> None:
        if count:
            self.rejects[reason] = self.rejects.get(reason, 0) + count

    def fail(self, round_no: int, stage: str, item_id: str, message: str) -> None:
        self.errors.append(ItemError(round_no, stage, item_id, message))
        reason = "scoring_failed" if stage.startswith("score") else "generation_failed"
        self.reject(reason)


class Distiller:
    """Drives the loop over a generation gateway and a critic."""

    def __init__(
        self,
        conceptualizer: Gateway,
        instantiater: Gateway,
        critic: Critic,
        cfg: LoopConfig,
        conceptualization_exemplars: ExemplarSet | None = None,
        instantiation_exemplars: ExemplarSet | None = None,
        templates: TemplateTable | None = None,
    ):
        self.conceptualizer = conceptualizer
        self.instantiater = instantiater
        self.critic = critic
        self.cfg = cfg
        self.conceptualization_exemplars = conceptualization_exemplars or default_exemplars(
            PromptMode.CONCEPTUALIZATION
        )
        self.instantiation_exemplars = instantiation_exemplars or default_exemplars(PromptMode.INSTANTIATION)
        self.templates = templates or TemplateTable.default()
        self._seen_keys: set[tuple] = set()

    # -- deduplication keys --

    def _concept_key(self, record: ConceptRecord) -> tuple:
        return ("concept", _norm(record.abstract_head.text), record.relation.value, _norm(record.tail), _norm(record.concept))

    def _instantiation_key(self, record: InstantiationRecord) -> tuple:
        return ("instantiation", _norm(record.new_head.text), record.relation.value, _norm(record.tail), _norm(record.instance))

    def _rebuild_seen(self, store: KnowledgeStore) -> None:
        self._seen_keys = {self._concept_key(r) for r in store.concept_records}
        self._seen_keys.update(self._instantiation_key(r) for r in store.instantiation_records)

    # -- the two generation stages --
    #
    # Each stage dedups its candidates against the records already kept in
    # earlier rounds plus the candidates of the current stage.  Dropped
    # candidates never enter the seen set: that keeps the set exactly
    # reconstructible from a checkpoint, so a resumed run replays the same
    # decisions an uninterrupted one made.

    def conceptualize_stage(self, inputs: Sequence[SeedInput], round_no: int = 1) -> "StageResult[ConceptRecord]":
        """Generate, parse, dedup, and score concept candidates (no filtering)."""
        result: StageResult[ConceptRecord] = StageResult()
        seen = set(self._seen_keys)
        params = replace(self.cfg.conceptualization_params, num_samples=self.cfg.n_c)
        requests = []
        for triple, marked in inputs:
            if marked.text != triple.head:
                raise ValueError(f"marked head {marked.text!r} does not match triple head {triple.head!r}")
            prompt = build_conceptualization_prompt(
                (marked, triple.relation, triple.tail), self.conceptualization_exemplars, self.templates
            )
            requests.append((triple.id, prompt, params))
        outcomes = self.conceptualizer.generate_batch(requests, self.cfg.max_in_flight, self.cfg.rate)

        candidates: list[ConceptRecord] = []
        counter = 0
        for (triple, marked), outcome in zip(inputs, outcomes):
            if not outcome.ok:
                result.fail(round_no, "conceptualize", triple.id, outcome.error or "generation failed")
                continue
            concepts = self._surviving_candidates(outcome.result.completions, PromptMode.CONCEPTUALIZATION, result)
            for concept in concepts:
                record = ConceptRecord(
                    id=f"r{round_no}-c{counter:05d}",
                    source_triple_id=triple.id,
                    instance=marked.span_text,
                    concept=concept,
                    abstract_head=conceptualize_head(marked, concept),
                    relation=triple.relation,
                    tail=triple.tail,
                    round=round_no,
                    generator_id=outcome.result.backend_id,
                )
                counter += 1
                key = self._concept_key(record)
                if key in seen:
                    result.reject("duplicate")
                else:
                    seen.add(key)
                    candidates.append(record)

        score_items = [(r.original_head(), r.instance, r.concept) for r in candidates]
        for record, outcome in zip(candidates, self._score_conceptualizations(score_items)):
            if isinstance(outcome, str):
                result.fail(round_no, "score_concept", record.id, outcome)
            else:
                result.scored.append(replace(record, score=outcome))
        return result

    def instantiate_stage(
        self, concepts: Sequence[ConceptRecord], round_no: int = 1
    ) -> "StageResult[InstantiationRecord]":
        """Generate, parse, dedup, and score instantiations for concept records."""
        result: StageResult[InstantiationRecord] = StageResult()
        seen = set(self._seen_keys)
        requests = []
        for record in concepts:
            prompt = build_instantiation_prompt(
                (record.abstract_head, record.relation, record.tail), self.instantiation_exemplars, self.templates
            )
            requests.append((record.id, prompt, self.cfg.instantiation_params))
        outcomes = self.instantiater.generate_batch(requests, self.cfg.max_in_flight, self.cfg.rate)

        candidates: list[InstantiationRecord] = []
        counter = 0
        for record, outcome in zip(concepts, outcomes):
            if not outcome.ok:
                result.fail(round_no, "instantiate", record.id, outcome.error or "generation failed")
                continue
            instances = self._surviving_candidates(outcome.result.completions, PromptMode.INSTANTIATION, result)
            for instance in instances:
                inst_record = InstantiationRecord(
                    id=f"r{round_no}-i{counter:05d}",
                    source_concept_record_id=record.id,
                    instance=instance,
                    new_head=instantiate_head_marked(record.abstract_head, instance),
                    relation=record.relation,
                    tail=record.tail,
                    round=round_no,
                    generator_id=outcome.result.backend_id,
                )
                counter += 1
                key = self._instantiation_key(inst_record)
                if key in seen:
                    result.reject("duplicate")
                else:
                    seen.add(key)
                    candidates.append(inst_record)

        statements = [render_statement(r.new_head.text, r.relation, r.tail, self.templates) for r in candidates]
        for record, outcome in zip(candidates, self._score_statements(statements)):
            if isinstance(outcome, str):
                result.fail(round_no, "score_instantiation", record.id, outcome)
            else:
                result.scored.append(replace(record, score=outcome))
        return result

    def _surviving_candidates(
        self, completions: Sequence[str], mode: PromptMode, result: "StageResult"
    ) -> list[str]:
        parsed = [parse_generation(raw, mode) for raw in completions]
        for p in parsed:
            if not p.ok:
                result.reject(p.reason.value)
        survivors = [p.value for p in parsed if p.ok]
        deduped = dedup_records(survivors)
        result.reject("duplicate", len(survivors) - len(deduped))
        return deduped

    # -- one round --

    def run_round(
        self,
        inputs: Sequence[SeedInput],
        round_no: int = 1,
        store: KnowledgeStore | None = None,
    ) -> tuple[list[ConceptRecord], list[InstantiationRecord], RoundStats]:
        """Run one conceptualize-filter-instantiate-filter pass.

        Returns the kept records plus statistics computed over the raw
        pre-filter scores.  When a store is given, kept records, stats,
        and errors are appended to it.
        """
        stage1 = self.conceptualize_stage(inputs, round_no)
        kept_concepts, _ = filter_records(stage1.scored, self.cfg.tau)
        self._seen_keys.update(self._concept_key(r) for r in kept_concepts)
        stage2 = self.instantiate_stage(kept_concepts, round_no)
        kept_insts, _ = filter_records(stage2.scored, self.cfg.tau)
        self._seen_keys.update(self._instantiation_key(r) for r in kept_insts)

        rejects = dict(stage1.rejects)
        for reason, count in stage2.rejects.items():
            rejects[reason] = rejects.get(reason, 0) + count
        raw_scores = [r.score for r in stage1.scored] + [r.score for r in stage2.scored]
        stats = RoundStats(
            round=round_no,
            inputs=len(inputs),
            concepts_generated=len(stage1.scored),
            concepts_kept=len(kept_concepts),
            instantiations_generated=len(stage2.scored),
            instantiations_kept=len(kept_insts),
            rejects_by_reason=rejects,
            acceptance_by_tau=acceptance_grid(raw_scores),
        )
        errors = stage1.errors + stage2.errors
        if store is not None:
            store.add_concepts(kept_concepts)
            store.add_instantiations(kept_insts)
            store.round_stats.append(stats)
            store.errors.extend(errors)
        return kept_concepts, kept_insts, stats

    def _score_conceptualizations(
        self, items: Sequence[tuple[str, str, str]]
    ) -> list[Union[float, str]]:
        out: list[Union[float, str]] = []
        for head, instance, concept in items:
            try:
                out.append(self.critic.score_conceptualization(head, instance, concept))
            except Exception as exc:  # per-item failure, run continues
                out.append(f"{type(exc).__name__}: {exc}")
        return out

    def _score_statements(self, statements: Sequence[str]) -> list[Union[float, str]]:
        if not statements:
            return []
        try:
            return list(self.critic.score_statements(statements))
        except Exception:
            # Batch path failed; isolate failures item by item.
            out: list[Union[float, str]] = []
            for statement in statements:
                try:
                    out.append(self.critic.score_statement(statement))
                except Exception as exc:
                    out.append(f"{type(exc).__name__}: {exc}")
            return out

    # -- the full loop --

    def run_loop(self, seeds: Sequence[SeedInput]) -> KnowledgeStore:
        """Run ``cfg.rounds`` rounds, checkpointing and resuming if configured.

        Round k > 1 consumes the kept instantiations of round k - 1,
        re-marked as fresh instances.  Records are deduplicated globally
        across rounds on their normalized (head, relation, tail, text).
        """
        cfg_hash = self.cfg.config_hash()
        store: KnowledgeStore | None = None
        if self.cfg.checkpoint_dir and (Path(self.cfg.checkpoint_dir) / "manifest.json").exists():
            store = KnowledgeStore.load(self.cfg.checkpoint_dir, expected_config_hash=cfg_hash)
        if store is None:
            store = KnowledgeStore()
            for triple, marked in seeds:
                store.register_seed(triple, marked)
        self._rebuild_seen(store)

        start_round = len(store.round_stats) + 1
        for round_no in range(start_round, self.cfg.rounds + 1):
            if round_no == 1:
                inputs = store.seeds
            else:
                prev_kept = [r for r in store.instantiation_records if r.round == round_no - 1]
                inputs = derive_inputs(prev_kept)
                for triple, _ in inputs:
                    store.register_derived_triple(triple, triple.id.removeprefix("x-"))
            self.run_round(inputs, round_no, store)
            if self.cfg.checkpoint_dir:
                store.save(self.cfg.checkpoint_dir, cfg_hash)
        return store

"""Walk the full distillation loop offline, then look at what came out.

Runs two rounds over the bundled 54-triple demo CSKB with the mock
generator and heuristic critic, so everything here is deterministic and
finishes in well under a second.
"""

from cskb_distill.core import parse_triple_file, render_statement
from cskb_distill.critic import HeuristicCritic
from cskb_distill.data import mini_cskb_path
from cskb_distill.distill import Distiller, LoopConfig
from cskb_distill.gateway import Gateway, GenParams, MockBackend
from cskb_distill.metrics import soft_uniqueness_ratio, summarize

# 1. Load the bundled seed triples.  The fourth TSV column marks the
#    focus instance in brackets; that's the span the loop abstracts.
with open(mini_cskb_path(), "rb") as fh:
    entries, errors = parse_triple_file(fh, "tsv")
seeds = [(triple, marked) for triple, marked in entries if marked is not None]
print(f"{len(seeds)} seed triples, {len(errors)} malformed lines")

triple, marked = seeds[0]
print("example seed:", render_statement(triple.head, triple.relation, triple.tail))
print("  focus instance:", marked.span_text)

# 2. Configure the loop: 2 rounds, 20 concept samples per head, keep
#    anything scoring at least 0.9.
cfg = LoopConfig(
    rounds=2,
    n_c=20,
    tau=0.9,
    conceptualization_params=GenParams.conceptualization_profile(seed=7),
    instantiation_params=GenParams.instantiation_profile(seed=7),
)
gateway = Gateway(MockBackend(seed=7))
distiller = Distiller(gateway, gateway, HeuristicCritic(seed=7), cfg)

store = distiller.run_loop(seeds)

# 3. Every record carries provenance back to a seed triple.
record = store.instantiation_records[0]
concept = store.concept(record.source_concept_record_id)
print("\none distilled chain:")
print("  original   :", concept.original_head())
print("  abstracted :", concept.abstract_head.text, f"(score {concept.score:.3f})")
print("  re-grounded:", record.new_head.text, f"(score {record.score:.3f})")
print("  seed triple:", store.resolve_seed_triple(record))

# 4. Per-round statistics mirror the acceptance-rate grid.
for stats in store.round_stats:
    grid = ", ".join(f"tau {tau}: {ratio:.0%}" for tau, ratio in stats.acceptance_by_tau.items())
    print(f"\nround {stats.round}: {stats.inputs} inputs -> "
          f"{stats.concepts_kept}/{stats.concepts_generated} concepts kept, "
          f"{stats.instantiations_kept}/{stats.instantiations_generated} instantiations kept")
    print("  acceptance:", grid)

# 5. Store-level summary and a diversity metric.
summary = summarize(store)
print(f"\ntotals: {summary.concepts_total} concepts ({summary.concepts_unique} unique), "
      f"{summary.instantiations_total} instantiations, "
      f"avg {summary.avg_concepts_per_event:.1f} concepts/event")
items = [(r.concept, (r.original_head().casefold(), r.instance.casefold())) for r in store.concept_records]
print(f"concept soft-uniqueness: {soft_uniqueness_ratio(items):.1%}")

"""Turn distilled records into downstream training data.

Shows the three synthesizers: balanced discrimination pairs with
keyword-disjoint negatives, source/target lines for tail generators,
and multiple-choice QA items with keyword-disjoint distractors.
"""

from cskb_distill.core import parse_triple_file
from cskb_distill.critic import HeuristicCritic
from cskb_distill.data import mini_cskb_path
from cskb_distill.distill import Distiller, LoopConfig, derive_inputs
from cskb_distill.gateway import Gateway, GenParams, MockBackend
from cskb_distill.synth import synth_comet_lines, synth_event_disc, synth_qa_pairs

with open(mini_cskb_path(), "rb") as fh:
    entries, _ = parse_triple_file(fh, "tsv")
seeds = [(t, m) for t, m in entries if m is not None]

cfg = LoopConfig(
    rounds=1,
    n_c=10,
    tau=0.7,
    conceptualization_params=GenParams.conceptualization_profile(seed=11),
    instantiation_params=GenParams.instantiation_profile(seed=11),
)
gateway = Gateway(MockBackend(seed=11))
store = Distiller(gateway, gateway, HeuristicCritic(seed=11), cfg).run_loop(seeds)
print(f"distilled {len(store.concept_records)} concepts, {len(store.instantiation_records)} instantiations\n")

# Discrimination pairs: one positive and one negative per concept record.
# The negative concept comes from a different head event and shares no
# content token with this record's head.
pairs, skipped = synth_event_disc(store.concept_records, seed=1)
positive = next(p for p in pairs if p.label.value == "positive")
negative = next(p for p in pairs if p.label.value == "negative")
print(f"{len(pairs)} discrimination pairs ({len(skipped)} records skipped)")
print("  positive:", positive.render())
print("  negative:", negative.render())

# Seq2seq lines: the new heads plus their connectives become sources,
# the original tails become targets.
triples = [t for t, _ in derive_inputs(store.instantiation_records)]
lines = synth_comet_lines(triples)
print(f"\n{len(lines)} source/target lines")
print("  source:", lines[0][0])
print("  target:", lines[0][1])

# QA items: the head becomes the question, the tail the gold option, and
# the distractors are tails that share no keyword with the head.
items, skipped_qa = synth_qa_pairs(triples, option_count=3, seed=2)
print(f"\n{len(items)} QA items ({len(skipped_qa)} skipped)")
item = items[0]
print("  question:", item.question)
for index, option in enumerate(item.options):
    tag = "*" if index == item.gold_index else " "
    print(f"   {tag} {option}")

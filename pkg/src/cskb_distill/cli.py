"""Operator entry point: subcommands over the whole pipeline.

Every run writes a ``config_snapshot.json`` next to its outputs so a
result can be tied back to the exact flags that produced it.  Exit codes:
0 success, 1 fatal error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .core import (
    ConceptRecord,
    InstantiationRecord,
    TemplateTable,
    Triple,
    parse_triple_file,
    read_records,
    write_records,
)
from .critic import Critic, HeuristicCritic, RemoteCritic, filter_records
from .distill import Distiller, KnowledgeStore, LoopConfig
from .gateway import (
    DEFAULT_AUTH_ENV_VAR,
    Gateway,
    GenParams,
    MockBackend,
    RemoteBackend,
)
from .metrics import hypernym_distribution, load_taxonomy, novelty_ratio, soft_uniqueness_ratio, summarize
from .prompts import PromptMode, default_exemplars, load_exemplars
from .synth import synth_comet_lines, synth_event_disc, synth_qa_pairs, synth_triple_disc


def _tau(value: str) -> float:
    try:
        tau = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tau must be a number, got {value!r}")
    if not (0.0 <= tau <= 1.0):
        raise argparse.ArgumentTypeError(f"tau must be in [0, 1], got {tau}")
    return tau


def _positive_int(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {value!r}")
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {n}")
    return n


def _add_io_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", required=True, help="input file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--format", choices=["tsv", "jsonl"], default=None, help="input format (default: by extension)")


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=["mock", "remote"], default="mock")
    parser.add_argument("--endpoint", default=None, help="chat-completion endpoint URL for --backend remote")
    parser.add_argument("--model", default="default", help="model name sent to a remote backend")
    parser.add_argument("--token-env", default=DEFAULT_AUTH_ENV_VAR, help="environment variable holding the API token")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--max-in-flight", type=_positive_int, default=8)
    parser.add_argument("--rate", type=float, default=None, help="request rate cap in requests/second")


def _add_critic_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--critic", choices=["heuristic", "remote"], default="heuristic")
    parser.add_argument("--critic-endpoint", default=None, help="scoring service base URL for --critic remote")


def _add_prompt_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--conc-exemplars", default=None, help="conceptualization exemplar JSONL (default: bundled)")
    parser.add_argument("--inst-exemplars", default=None, help="instantiation exemplar JSONL (default: bundled)")
    parser.add_argument("--templates", default=None, help="JSON file overriding relation connectives")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cskb-distill", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and validate a triple file")
    _add_io_flags(p)

    p = sub.add_parser("conceptualize", help="generate and score concepts for marked triples")
    _add_io_flags(p)
    _add_backend_flags(p)
    _add_critic_flags(p)
    _add_prompt_flags(p)
    p.add_argument("--nc", type=_positive_int, default=20, help="samples per head event")

    p = sub.add_parser("instantiate", help="generate and score instantiations for concept records")
    _add_io_flags(p)
    _add_backend_flags(p)
    _add_critic_flags(p)
    _add_prompt_flags(p)
    p.add_argument("--fan-out", type=_positive_int, default=1, help="instantiations per concept")

    p = sub.add_parser("distill", help="run the full loop")
    _add_io_flags(p)
    _add_backend_flags(p)
    _add_critic_flags(p)
    _add_prompt_flags(p)
    p.add_argument("--nc", type=_positive_int, default=20)
    p.add_argument("--rounds", type=_positive_int, default=1)
    p.add_argument("--tau", type=_tau, default=0.9)
    p.add_argument("--fan-out", type=_positive_int, default=1)
    p.add_argument("--resume", action="store_true", help="resume from a checkpoint in --out")

    p = sub.add_parser("filter", help="partition scored records at a threshold")
    _add_io_flags(p)
    p.add_argument("--tau", type=_tau, default=0.9)

    p = sub.add_parser("stats", help="summarize a store or records file")
    p.add_argument("--store", default=None, help="store directory written by distill")
    p.add_argument("--input", default=None, help="records JSONL (alternative to --store)")
    p.add_argument("--out", default=None, help="directory for report.json (default: print only)")
    p.add_argument("--taxonomy", default=None, help="instance<TAB>hypernym<TAB>weight TSV")
    p.add_argument("--top-n", type=_positive_int, default=10)
    p.add_argument(
        "--diversity",
        action="store_true",
        help="add BLEU soft-uniqueness and novelty ratios (quadratic in group sizes)",
    )

    p = sub.add_parser("synth-disc", help="synthesize discrimination pairs from concept records")
    _add_io_flags(p)
    p.add_argument("--task", choices=["event", "triple"], default="event")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth-comet", help="linearize triples into source/target pairs")
    _add_io_flags(p)
    p.add_argument("--templates", default=None)

    p = sub.add_parser("synth-qa", help="synthesize multiple-choice QA items")
    _add_io_flags(p)
    p.add_argument("--options", type=_positive_int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--templates", default=None)

    return parser


# --- shared plumbing ---


def _snapshot(args: argparse.Namespace, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {k: v for k, v in sorted(vars(args).items()) if k != "command"}
    payload["command"] = args.command
    payload["version"] = __version__
    (out_dir / "config_snapshot.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8"
    )


def _infer_format(path: str, explicit: str | None) -> str:
    if explicit:
        return explicit
    return "jsonl" if path.endswith((".jsonl", ".json")) else "tsv"


def _load_triple_entries(args: argparse.Namespace) -> tuple[list, list]:
    with open(args.input, "rb") as fh:
        return parse_triple_file(fh, _infer_format(args.input, args.format))


def _usage_error(message: str) -> SystemExit:
    print(f"error: {message}", file=sys.stderr)
    return SystemExit(2)


def _make_gateway(args: argparse.Namespace) -> Gateway:
    if args.backend == "mock":
        backend = MockBackend(seed=args.seed)
    else:
        if not args.endpoint:
            raise _usage_error("--backend remote requires --endpoint")
        backend = RemoteBackend(endpoint=args.endpoint, model_name=args.model, auth_env_var=args.token_env)
    return Gateway(backend)


def _make_critic(args: argparse.Namespace) -> Critic:
    if args.critic == "heuristic":
        return HeuristicCritic(seed=args.seed)
    if not args.critic_endpoint:
        raise _usage_error("--critic remote requires --critic-endpoint")
    return RemoteCritic(base_url=args.critic_endpoint)


def _make_distiller(args: argparse.Namespace, cfg: LoopConfig) -> Distiller:
    gateway = _make_gateway(args)
    conc = load_exemplars(args.conc_exemplars) if args.conc_exemplars else default_exemplars(PromptMode.CONCEPTUALIZATION)
    inst = load_exemplars(args.inst_exemplars) if args.inst_exemplars else default_exemplars(PromptMode.INSTANTIATION)
    templates = TemplateTable.from_file(args.templates) if args.templates else TemplateTable.default()
    return Distiller(
        conceptualizer=gateway,
        instantiater=gateway,
        critic=_make_critic(args),
        cfg=cfg,
        conceptualization_exemplars=conc,
        instantiation_exemplars=inst,
        templates=templates,
    )


def _loop_config(args: argparse.Namespace, rounds: int, tau: float, checkpoint_dir: str | None) -> LoopConfig:
    return LoopConfig(
        rounds=rounds,
        n_c=getattr(args, "nc", 20),
        tau=tau,
        conceptualization_params=GenParams.conceptualization_profile(seed=args.seed),
        instantiation_params=replace(
            GenParams.instantiation_profile(seed=args.seed), num_samples=getattr(args, "fan_out", 1)
        ),
        max_in_flight=args.max_in_flight,
        rate=args.rate,
        checkpoint_dir=checkpoint_dir,
    )


def _records_to_triples(records: list, kind: type) -> list[Triple]:
    triples = []
    for record in records:
        if not isinstance(record, kind):
            continue
        head = record.new_head.text if isinstance(record, InstantiationRecord) else record.abstract_head.text
        triples.append(Triple(id=record.id, head=head, relation=record.relation, tail=record.tail))
    return triples


def _load_synth_triples(args: argparse.Namespace) -> list[Triple]:
    """Triples for synthesis: a triple file, or a records file.

    Record files contribute their instantiated triples; when a records
    file holds only concept records, the abstract triples are used.
    """
    if _infer_format(args.input, args.format) == "jsonl":
        try:
            records = read_records(args.input)
        except (KeyError, ValueError):
            records = []
        if records:
            triples = _records_to_triples(records, InstantiationRecord)
            return triples or _records_to_triples(records, ConceptRecord)
    entries, errors = _load_triple_entries(args)
    for err in errors:
        print(f"warning: line {err.line}: {err.message}", file=sys.stderr)
    return [triple for triple, _ in entries]


# --- subcommands ---


def _cmd_ingest(args: argparse.Namespace) -> int:
    entries, errors = _load_triple_entries(args)
    out = Path(args.out)
    _snapshot(args, out)
    with (out / "triples.jsonl").open("w", encoding="utf-8") as fh:
        for triple, marked in entries:
            obj = {"id": triple.id, "head": triple.head, "relation": triple.relation.value, "tail": triple.tail}
            if marked is not None:
                obj["span"] = list(marked.span)
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
    with (out / "errors.jsonl").open("w", encoding="utf-8") as fh:
        for err in errors:
            fh.write(json.dumps({"line": err.line, "message": err.message}) + "\n")
    print(f"ingested {len(entries)} triples, {len(errors)} malformed lines")
    return 0


def _marked_entries(args: argparse.Namespace) -> list:
    entries, errors = _load_triple_entries(args)
    for err in errors:
        print(f"warning: line {err.line}: {err.message}", file=sys.stderr)
    seeds = [(t, m) for t, m in entries if m is not None]
    unmarked = len(entries) - len(seeds)
    if unmarked:
        print(f"warning: skipped {unmarked} triples without a marked instance", file=sys.stderr)
    return seeds


def _cmd_conceptualize(args: argparse.Namespace) -> int:
    seeds = _marked_entries(args)
    cfg = _loop_config(args, rounds=1, tau=0.0, checkpoint_dir=None)
    distiller = _make_distiller(args, cfg)
    result = distiller.conceptualize_stage(seeds, round_no=1)
    out = Path(args.out)
    _snapshot(args, out)
    count = write_records(result.scored, out / "concepts.jsonl")
    _report_stage(result, count, "concept records")
    return 0


def _cmd_instantiate(args: argparse.Namespace) -> int:
    records = [r for r in read_records(args.input) if isinstance(r, ConceptRecord)]
    cfg = _loop_config(args, rounds=1, tau=0.0, checkpoint_dir=None)
    distiller = _make_distiller(args, cfg)
    result = distiller.instantiate_stage(records, round_no=1)
    out = Path(args.out)
    _snapshot(args, out)
    count = write_records(result.scored, out / "instantiations.jsonl")
    _report_stage(result, count, "instantiation records")
    return 0


def _report_stage(result, count: int, label: str) -> None:
    print(f"wrote {count} {label}")
    if result.rejects:
        print("rejects:", json.dumps(dict(sorted(result.rejects.items()))))
    for error in result.errors:
        print(f"error: {error.stage} {error.item_id}: {error.message}", file=sys.stderr)


def _cmd_distill(args: argparse.Namespace) -> int:
    seeds = _marked_entries(args)
    out = Path(args.out)
    if not args.resume and (out / "manifest.json").exists():
        raise SystemExit(f"error: {out} already holds a store; pass --resume to continue it")
    cfg = _loop_config(args, rounds=args.rounds, tau=args.tau, checkpoint_dir=str(out))
    distiller = _make_distiller(args, cfg)
    _snapshot(args, out)
    store = distiller.run_loop(seeds)
    summary = summarize(store)
    print(
        f"distilled {summary.concepts_total} concepts ({summary.concepts_unique} unique) and "
        f"{summary.instantiations_total} instantiations ({summary.instantiations_unique} unique) "
        f"over {len(store.round_stats)} round(s)"
    )
    return 0


def _cmd_filter(args: argparse.Namespace) -> int:
    records = read_records(args.input)
    kept, dropped = filter_records(records, args.tau)
    out = Path(args.out)
    _snapshot(args, out)
    write_records(kept, out / "kept.jsonl")
    write_records(dropped, out / "dropped.jsonl")
    print(f"kept {len(kept)} of {len(records)} records at tau={args.tau}")
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    if bool(args.store) == bool(args.input):
        raise SystemExit("error: pass exactly one of --store or --input")
    if args.store:
        store = KnowledgeStore.load(args.store)
    else:
        store = KnowledgeStore()
        records = read_records(args.input)
        store.add_concepts([r for r in records if isinstance(r, ConceptRecord)])
        store.add_instantiations([r for r in records if isinstance(r, InstantiationRecord)])
    summary = summarize(store)
    report = summary.to_dict()
    if args.taxonomy:
        taxonomy = load_taxonomy(args.taxonomy)
        concepts = [r.concept for r in store.concept_records]
        report["hypernym_distribution"] = [
            {"hypernym": h, "mass": m} for h, m in hypernym_distribution(concepts, taxonomy, args.top_n)
        ]
    if args.diversity:
        items = [(r.concept, (r.original_head().casefold(), r.instance.casefold())) for r in store.concept_records]
        report["concept_soft_uniqueness"] = soft_uniqueness_ratio(items)
        pairs = []
        for record in store.instantiation_records:
            try:
                source = store.concept(record.source_concept_record_id)
            except KeyError:
                continue
            pairs.append((record.new_head.text, source.original_head()))
        report["instantiation_novelty"] = novelty_ratio(pairs)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        out = Path(args.out)
        _snapshot(args, out)
        (out / "report.json").write_text(text + "\n", encoding="utf-8")
    return 0


def _cmd_synth_disc(args: argparse.Namespace) -> int:
    records = [r for r in read_records(args.input) if isinstance(r, ConceptRecord)]
    if args.task == "event":
        pairs, skipped = synth_event_disc(records, seed=args.seed)
    else:
        pairs, skipped = synth_triple_disc(records, seed=args.seed)
    out = Path(args.out)
    _snapshot(args, out)
    with (out / "pairs.jsonl").open("w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(pair.to_dict(), ensure_ascii=False) + "\n")
    print(f"wrote {len(pairs)} pairs ({len(skipped)} records skipped)")
    return 0


def _cmd_synth_comet(args: argparse.Namespace) -> int:
    triples = _load_synth_triples(args)
    templates = TemplateTable.from_file(args.templates) if args.templates else None
    lines = synth_comet_lines(triples, templates)
    out = Path(args.out)
    _snapshot(args, out)
    with (out / "comet.jsonl").open("w", encoding="utf-8") as fh:
        for source, target in lines:
            fh.write(json.dumps({"source": source, "target": target}, ensure_ascii=False) + "\n")
    print(f"wrote {len(lines)} source/target pairs")
    return 0


def _cmd_synth_qa(args: argparse.Namespace) -> int:
    triples = _load_synth_triples(args)
    templates = TemplateTable.from_file(args.templates) if args.templates else None
    items, skipped = synth_qa_pairs(triples, option_count=args.options, seed=args.seed, templates=templates)
    out = Path(args.out)
    _snapshot(args, out)
    with (out / "qa.jsonl").open("w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item.to_dict(), ensure_ascii=False) + "\n")
    print(f"wrote {len(items)} QA items ({len(skipped)} triples skipped)")
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "conceptualize": _cmd_conceptualize,
    "instantiate": _cmd_instantiate,
    "distill": _cmd_distill,
    "filter": _cmd_filter,
    "stats": _cmd_stats,
    "synth-disc": _cmd_synth_disc,
    "synth-comet": _cmd_synth_comet,
    "synth-qa": _cmd_synth_qa,
}


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SystemExit:
        raise
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

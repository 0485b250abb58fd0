"""Command-line launcher: build the app from flags and serve it."""

from __future__ import annotations

import argparse
import sys

import uvicorn

from .app import create_app
from .generator import BundledGenerator, TransformersGenerator
from .scorer import BundledScorer, TransformersScorer


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cskb-model-server")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8700)
    parser.add_argument("--seed", type=int, default=0, help="seed for the bundled generator/scorer")
    parser.add_argument("--generator-model", default=None, help="local text-generation checkpoint path")
    parser.add_argument("--scorer-model", default=None, help="local sequence-classification checkpoint path")
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv: list[str] | None = None) -> None:
    args = build_parser().parse_args(argv)
    try:
        generator = (
            TransformersGenerator(args.generator_model, args.device)
            if args.generator_model
            else BundledGenerator(seed=args.seed)
        )
        scorer = (
            TransformersScorer(args.scorer_model, args.device)
            if args.scorer_model
            else BundledScorer(seed=args.seed)
        )
    except RuntimeError as exc:
        print(f"startup abort: {exc}", file=sys.stderr)
        sys.exit(1)
    uvicorn.run(create_app(generator, scorer), host=args.host, port=args.port)


if __name__ == "__main__":
    main()

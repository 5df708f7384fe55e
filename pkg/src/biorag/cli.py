"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from . import __version__
from .config import load_config
from .corpus import ingest_file, read_corpus
from .embedding import REF256, EmbedderSpec
from .engine import Engine
from .errors import BioRagError
from .evaluation import TaskKind, evaluate_run, load_dataset, load_predictions
from .index import build_index, save_index_file
from .orchestrator import AblationFlags

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

logger = logging.getLogger("biorag")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _embedder_spec(value: str) -> EmbedderSpec:
    # "ref256" or "name:dimension" for a remote embedder
    if value == REF256.name:
        return REF256
    name, sep, dim = value.partition(":")
    if not sep or not dim.isdigit():
        raise UsageError(f"embedder must be 'ref256' or NAME:DIMENSION, got {value!r}")
    return EmbedderSpec(name, int(dim))


def cmd_ingest(args) -> int:
    stats = ingest_file(args.input, args.output, args.rules, args.stats)
    print(json.dumps(stats.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_index(args) -> int:
    spec = _embedder_spec(args.embedder)
    index = build_index(read_corpus(args.corpus), spec)
    save_index_file(index, args.out)
    print(f"indexed {len(index.docs)} documents with {spec.name} ({spec.dimension} dims) -> {args.out}")
    return EXIT_OK


def _ablation(names: Optional[str]) -> Optional[AblationFlags]:
    if not names:
        return None
    try:
        return AblationFlags.from_presets(n.strip() for n in names.split(",") if n.strip())
    except KeyError as exc:
        raise UsageError(f"unknown ablation preset {exc.args[0]!r}") from exc


def cmd_ask(args) -> int:
    if not args.question.strip():
        raise UsageError("question must be nonempty")
    if args.max_iterations is not None and args.max_iterations < 1:
        raise UsageError("--max-iterations must be positive")
    ablation = _ablation(args.ablation)
    engine = Engine.from_config(load_config(args.config))
    answer = engine.ask(args.question, max_iterations=args.max_iterations, ablation=ablation)
    print(answer.text)
    if args.trace:
        for step in answer.trace:
            line = f"{step.iteration}\t{step.phase}\t{step.input_digest}\t{step.output_digest}"
            if step.warnings:
                line += "\t" + "; ".join(step.warnings)
            print(line)
        print(f"trace-digest\t{answer.trace_digest()}")
    return EXIT_RUNTIME if answer.error else EXIT_OK


def cmd_eval(args) -> int:
    try:
        task = TaskKind.parse(args.task)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    with open(args.dataset, encoding="utf-8") as fh:
        examples = load_dataset(fh, task)
    with open(args.predictions, encoding="utf-8") as fh:
        predictions = load_predictions(fh)
    report = evaluate_run(examples, predictions, strict=args.strict)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import serve

    engine = Engine.from_config(load_config(args.config))
    serve(engine, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="biorag", description="Agentic retrieval-augmented QA over biomedical sources.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="clean and quality-filter a raw JSONL abstract dump")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--rules", help="cleaning rule set (JSON); defaults to the bundled rules")
    p.add_argument("--stats", help="write ingest statistics JSON here")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", help="embed a cleaned corpus into a binary index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--embedder", default=REF256.name)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("ask", help="answer one question")
    p.add_argument("question")
    p.add_argument("--config", help="engine config (YAML/JSON); defaults to $BIORAG_CONFIG")
    p.add_argument("--trace", action="store_true", help="print per-step digests")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--ablation", help="comma-separated presets, e.g. D1,C3")
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("eval", help="score predictions against a gold dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--task", required=True, help=", ".join(t.value for t in TaskKind))
    p.add_argument("--predictions", required=True)
    p.add_argument("--strict", action="store_true", help="disable answer normalization")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def dispatch_command(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"biorag: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BioRagError, OSError, ValueError) as exc:
        print(f"biorag: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(dispatch_command())


if __name__ == "__main__":
    main()

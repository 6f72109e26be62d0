"""Command line: synthgen, run, report, cost.

Exit codes: 0 success, 1 partial failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from . import version_stamp
from .config import ConfigError, RunConfig, load_config
from .experiments import EmptyReportError, estimate_matrix, run_matrix, write_report
from .providers.base import ProviderConfig, ProviderError
from .providers.cache import ResponseCache
from .providers.remote import MissingAPIKeyError, OpenAICompatibleProvider
from .providers.scripted import ScriptedProvider
from .synthgen import GenerationError, balance_audit, build_corpus

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("pairedcompletion")


def _say(msg: str) -> None:
    print(msg, flush=True)


def cmd_synthgen(args) -> int:
    try:
        if args.mock:
            provider = ScriptedProvider.from_file(args.mock)
        else:
            if not args.endpoint or not args.model:
                raise ConfigError("synthgen needs --mock or both --endpoint and --model")
            cfg = ProviderConfig(endpoint_url=args.endpoint, model_name=args.model, api_key_env=args.api_key_env)
            cache = ResponseCache(args.cache) if args.cache else None
            provider = OpenAICompatibleProvider(cfg, cache=cache)
    except (ConfigError, MissingAPIKeyError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        corpus = build_corpus(
            args.topic,
            provider,
            sentences_per_side=args.sentences,
            n_seeds=args.seeds,
            temperature=args.temperature,
            timestamp=args.timestamp,
        )
    except GenerationError as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        for t in exc.transcript:
            print(f"--- {t['step']} ({t['side']}) prompt:\n{t['prompt']}\n--- reply:\n{t['reply']}", file=sys.stderr)
        return EXIT_PARTIAL
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    corpus.save(out)
    _say(f"wrote {out} ({len(corpus.side_a.sentences)} + {len(corpus.side_b.sentences)} sentences)")
    try:
        report = balance_audit(corpus)
    except ValueError as exc:
        _say(f"balance audit skipped: {exc}")
    else:
        _say(report.format())
        if report.flags:
            _say("imbalance flagged: " + ", ".join(report.flags))
    return EXIT_OK


def _load(args) -> RunConfig:
    config = load_config(args.config)
    changes = {}
    if getattr(args, "output_dir", None):
        changes["output_dir"] = Path(args.output_dir)
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    return dataclasses.replace(config, **changes) if changes else config


def _print_estimate(config: RunConfig) -> None:
    ests = estimate_matrix(config)
    calls = sum(e.calls for e in ests)
    tin = sum(e.ledger.input_tokens for e in ests)
    tout = sum(e.ledger.output_tokens for e in ests)
    cost = sum(e.ledger.cost for e in ests)
    for e in ests:
        _say(f"{e.key.slug:<70} calls={e.calls:>8} in={e.ledger.input_tokens:>10} out={e.ledger.output_tokens:>8} cost={e.ledger.cost:.4f}")
    _say(f"TOTAL cells={len(ests)} calls={calls} input_tokens={tin} output_tokens={tout} projected_cost={cost:.4f}")


def cmd_cost(args) -> int:
    try:
        config = _load(args)
        _print_estimate(config)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        config = _load(args)
        if args.dry_run:
            _print_estimate(config)
            return EXIT_OK
        for spec in config.providers.values():
            var = spec.options.get("api_key_env")
            if spec.kind == "openai" and var and not os.environ.get(var):
                raise MissingAPIKeyError(var)
        corpora = config.load_corpora()
    except (ConfigError, MissingAPIKeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _say(f"pairedcompletion {version_stamp()}: running into {config.output_dir}")
    result = run_matrix(config, corpora=corpora, progress=_say)
    try:
        csv_path, json_path = write_report(config.output_dir / "cells", config.output_dir)
        _say(f"summary: {csv_path}\nplot data: {json_path}")
    except EmptyReportError as exc:
        _say(str(exc))
    if result.failed:
        _say(f"{len(result.failed)} cell(s) failed: " + ", ".join(c.key.slug for c in result.failed))
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        csv_path, json_path = write_report(args.cells_dir, args.out)
    except EmptyReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    _say(f"summary: {csv_path}\nplot data: {json_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pairedcompletion", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=version_stamp())
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthgen", help="generate a synthetic framing corpus")
    p.add_argument("--topic", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mock", help="scripted provider JSON instead of a remote model")
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--api-key-env", default="OPENAI_API_KEY")
    p.add_argument("--cache")
    p.add_argument("--sentences", type=int, default=50, help="bulk sentences per side")
    p.add_argument("--seeds", type=int, default=10, help="seed sentences per side")
    p.add_argument("--temperature", type=float, default=0.5)
    p.add_argument("--timestamp", help="fixed timestamp for reproducible output")
    p.set_defaults(func=cmd_synthgen)

    p = sub.add_parser("run", help="run the configured experiment matrix")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--dry-run", action="store_true", help="print call/cost projections only")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="summarise completed cells")
    p.add_argument("cells_dir")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("cost", help="projected calls, tokens and cost for a config")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_cost)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

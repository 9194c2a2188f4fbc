"""Command-line entry points for the extraction jobs.

Subcommands: corpus (per-token dump), sentences (sentence-embedding dump),
glosses (gloss-augmented inventory), wic (paired dump + sidecar). Flags
mirror ExtractionJob fields; --model takes "hash" (deterministic offline
encoder) or a transformers model name.
"""

from __future__ import annotations

import argparse
import sys

from .corpus import CorpusFormatError
from .extract import (
    ExtractionJob,
    extract_corpus,
    extract_glosses,
    extract_sentences,
    extract_wic,
)


def _parse_layers(raw: str) -> tuple:
    raw = raw.strip().lower()
    if raw == "last4":
        return (-1, -2, -3, -4)
    try:
        return tuple(int(tok) for tok in raw.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"layers must be 'last4' or comma-separated integers, got {raw!r}"
        ) from None


def _add_job_args(parser):
    parser.add_argument("--model", default="hash", help="'hash' or a transformers model name")
    parser.add_argument("--layers", type=_parse_layers, default=(-1, -2, -3, -4),
                        help="layer policy: 'last4' or e.g. '-1' or '-1,-2'")
    parser.add_argument("--pooling", choices=("mean", "first"), default="mean")
    parser.add_argument("--q", type=int, default=64, help="hash encoder dimension")
    parser.add_argument("--hash-layers", type=int, default=6, help="hash encoder depth")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-pieces", type=int, default=128)
    parser.add_argument("--batch-size", type=int, default=32)


def _job_from(args) -> ExtractionJob:
    return ExtractionJob(
        model=args.model,
        layers=args.layers,
        pooling=args.pooling,
        q=args.q,
        hash_layers=args.hash_layers,
        seed=args.seed,
        device=args.device,
        max_pieces=args.max_pieces,
        batch_size=args.batch_size,
    )


def _print_report(report):
    print(f"records written: {report.records}")
    print(f"sentences truncated: {report.truncated}")
    if report.skipped:
        print(f"skipped: {len(report.skipped)}")
        for where, reason in report.skipped:
            print(f"  {where}: {reason}", file=sys.stderr)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cdes-extract",
        description="Produce context dumps and gloss-augmented inventories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corpus", help="one record per annotated target token")
    p.add_argument("corpus", help="annotated corpus file")
    p.add_argument("out", help="output dump path")
    _add_job_args(p)

    p = sub.add_parser("sentences", help="sentence embeddings per annotated lemma")
    p.add_argument("corpus")
    p.add_argument("out")
    _add_job_args(p)

    p = sub.add_parser("glosses", help="gloss-augmented inventory")
    p.add_argument("inventory")
    p.add_argument("out")
    _add_job_args(p)

    p = sub.add_parser("wic", help="paired dump + sidecar from WiC TSV")
    p.add_argument("data", help="official WiC data TSV")
    p.add_argument("out_dump")
    p.add_argument("out_sidecar")
    p.add_argument("--gold", help="official gold T/F file")
    p.add_argument("--out-gold", help="aligned gold file for retained rows")
    _add_job_args(p)

    args = parser.parse_args(argv)
    try:
        job = _job_from(args)
        if args.command == "corpus":
            report = extract_corpus(job, args.corpus, args.out)
        elif args.command == "sentences":
            report = extract_sentences(job, args.corpus, args.out)
        elif args.command == "glosses":
            report = extract_glosses(job, args.inventory, args.out)
        else:
            report = extract_wic(
                job, args.data, args.out_dump, args.out_sidecar, args.gold, args.out_gold
            )
    except (CorpusFormatError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _print_report(report)
    return 0


if __name__ == "__main__":
    sys.exit(main())

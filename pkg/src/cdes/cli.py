"""Command-line front end: reproducible pipeline runs from a flat config.

Config files are diffable ``key = value`` lines (``#`` comments allowed);
any key can be overridden on the command line as ``--key value``, and
overrides win. One root seed feeds every stochastic stage through named
sub-seeds (train, kmeans:<lemma>, wic), so adding a stage never perturbs
another stage's randomness.

Exit codes: 0 success, 1 validation error (bad config, missing path,
malformed file), 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import bank as bank_mod
from . import projection, wic, wsd
from .errors import CdesError, FormatError, ValidationError
from .seeding import derive_seed
from .store import (
    describe_file,
    load_collocations,
    load_context_dump,
    load_gold_keys,
    load_sense_inventory,
    load_static_table,
)

DEFAULTS = {
    "seed": "0",
    "activation": "gelu",
    "learning_rate": "1e-4",
    "batch_size": "64",
    "epochs": "10",
    "adam_beta1": "0.9",
    "adam_beta2": "0.999",
    "adam_epsilon": "1e-8",
    "init_scheme": "xavier",
    "validation_fraction": "0.0",
    "k_candidates": "3",
    "fallback": "none",
    "fill_policy": "zero",
    "labeler": "majority",
    "window": "3",
    "max_sentences_per_lemma": "150",
    "ukb_words": "5",
    "kmeans_max_iter": "100",
    "lowercase": "false",
    "threads": "0",
    "wic_lr": "0.1",
    "wic_epochs": "2000",
    "wic_l2": "1e-4",
}

PATH_KEYS = (
    "static_table",
    "inventory",
    "train_dump",
    "eval_dump",
    "gold_keys",
    "corpus_dump",
    "collocations",
    "sentences",
    "labeler_file",
    "wic_train_dump",
    "wic_train_pairs",
    "wic_train_gold",
    "wic_test_dump",
    "wic_test_pairs",
    "wic_test_gold",
    "checkpoint",
    "bank",
    "output_dir",
)

_EVAL_KEY = re.compile(r"^eval\.([A-Za-z0-9_-]+)\.(dump|gold)$")


class RunConfig:
    """Flat key/value configuration with typed accessors."""

    def __init__(self, values: dict):
        self.values = values

    @classmethod
    def load(cls, path, overrides=None) -> "RunConfig":
        values = dict(DEFAULTS)
        path = Path(path)
        if not path.is_file():
            raise ValidationError(f"config file not found: {path}")
        for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError("expected 'key = value'", path=path, line=lineno)
            key, value = (part.strip() for part in line.split("=", 1))
            cls._check_key(key, where=f"{path}:{lineno}")
            values[key] = value
        for key, value in (overrides or {}).items():
            cls._check_key(key, where="command line")
            values[key] = value
        return cls(values)

    @staticmethod
    def _check_key(key: str, where: str) -> None:
        if key in DEFAULTS or key in PATH_KEYS or _EVAL_KEY.match(key):
            return
        raise ValidationError(f"unknown config key {key!r} ({where})")

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def path(self, key: str, required: bool = False):
        value = self.values.get(key)
        if value is None or value == "":
            if required:
                raise ValidationError(f"config key {key!r} is required for this command")
            return None
        p = Path(value)
        if key != "output_dir" and not p.exists():
            raise ValidationError(f"{key}: path does not exist: {p}")
        return p

    def intval(self, key: str) -> int:
        try:
            return int(self.values[key])
        except (KeyError, ValueError):
            raise ValidationError(f"config key {key!r} must be an integer") from None

    def floatval(self, key: str) -> float:
        try:
            return float(self.values[key])
        except (KeyError, ValueError):
            raise ValidationError(f"config key {key!r} must be a number") from None

    def boolval(self, key: str) -> bool:
        raw = self.values.get(key, "false").strip().lower()
        if raw in ("1", "true", "yes", "on"):
            return True
        if raw in ("0", "false", "no", "off"):
            return False
        raise ValidationError(f"config key {key!r} must be a boolean")

    def threads(self) -> int:
        n = self.intval("threads")
        if n < 0:
            raise ValidationError("threads must be >= 0")
        return n or (os.cpu_count() or 1)

    def output_dir(self) -> Path:
        out = self.path("output_dir", required=True)
        out.mkdir(parents=True, exist_ok=True)
        return out

    def eval_sets(self):
        """[(name, dump path, gold path)] from dotted keys, else the plain
        eval_dump/gold_keys pair."""
        named: dict = {}
        for key, value in self.values.items():
            match = _EVAL_KEY.match(key)
            if match:
                named.setdefault(match.group(1), {})[match.group(2)] = value
        sets = []
        for name in sorted(named):
            parts = named[name]
            if "dump" not in parts or "gold" not in parts:
                raise ValidationError(f"eval set {name!r} needs both .dump and .gold")
            dump, gold = Path(parts["dump"]), Path(parts["gold"])
            for p in (dump, gold):
                if not p.exists():
                    raise ValidationError(f"eval set {name!r}: path does not exist: {p}")
            sets.append((name, dump, gold))
        if sets:
            return sets
        dump = self.path("eval_dump", required=True)
        gold = self.path("gold_keys", required=True)
        return [(dump.stem, dump, gold)]


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_common(cfg: RunConfig):
    table = load_static_table(cfg.path("static_table", required=True), lowercase=cfg.boolval("lowercase"))
    inventory = load_sense_inventory(cfg.path("inventory", required=True))
    return table, inventory


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(cfg: RunConfig) -> int:
    out = cfg.output_dir()
    table, inventory = _load_common(cfg)
    records = load_context_dump(cfg.path("train_dump", required=True))
    train_config = projection.TrainConfig(
        learning_rate=cfg.floatval("learning_rate"),
        batch_size=cfg.intval("batch_size"),
        epochs=cfg.intval("epochs"),
        adam_beta1=cfg.floatval("adam_beta1"),
        adam_beta2=cfg.floatval("adam_beta2"),
        adam_epsilon=cfg.floatval("adam_epsilon"),
        init_scheme=projection.InitScheme.from_name(cfg.get("init_scheme")),
        seed=derive_seed(cfg.intval("seed"), "train"),
        validation_fraction=cfg.floatval("validation_fraction"),
    )
    activation = projection.Activation.from_name(cfg.get("activation"))
    model, report = projection.train(records, table, inventory, train_config, activation)

    ckpt_path = out / "checkpoint.cdem"
    projection.save_model(model, ckpt_path)
    _write_json(report.to_dict(), out / "train_report.json")
    lines = [
        f"checkpoint: {ckpt_path.name}",
        f"activation: {activation.name}",
        f"records skipped: {report.skipped_total} "
        f"(oov={report.skipped_oov}, no_gold={report.skipped_no_gold}, "
        f"unknown_sense={report.skipped_unknown_sense})",
        f"initial train loss (mean/record): {report.initial_train_loss:.6g}",
    ]
    for i, tl in enumerate(report.train_loss):
        vl = f", val {report.val_loss[i]:.6g}" if i < len(report.val_loss) else ""
        lines.append(f"epoch {i}: train {tl:.6g}{vl}")
    lines.append(f"model checksum: {report.model_checksum}")
    (out / "train_report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return 0


def _load_sentences(path: Path):
    sentences = []
    for raw in path.read_text(encoding="utf-8").splitlines():
        sentences.append(raw.split())
    return sentences


def cmd_build_bank(cfg: RunConfig) -> int:
    out = cfg.output_dir()
    ckpt = cfg.path("checkpoint") or out / "checkpoint.cdem"
    if not Path(ckpt).is_file():
        raise ValidationError(f"checkpoint not found: {ckpt}")
    model = projection.load_model(ckpt)
    table, inventory = _load_common(cfg)

    gloss_dim = inventory.gloss_dimension()
    if gloss_dim is not None and gloss_dim != model.q:
        raise ValidationError(
            f"inventory gloss vectors have q={gloss_dim}, checkpoint has q={model.q}"
        )
    gloss_segs = {
        sid: entry.gloss_vector.astype(np.float64)
        for sid, entry in inventory.senses.items()
        if entry.gloss_vector is not None
    }

    corpus_segs: dict = {}
    corpus_dump = cfg.path("corpus_dump")
    if corpus_dump is not None:
        seed = cfg.intval("seed")
        labeler = bank_mod.make_labeler(cfg.get("labeler"), cfg.path("labeler_file"))
        corpus_records = load_context_dump(corpus_dump)
        if corpus_records and corpus_records[0].vector.shape[0] != model.q:
            raise ValidationError(
                f"corpus dump q={corpus_records[0].vector.shape[0]} != checkpoint q={model.q}"
            )

        labels_by_index: dict = {}
        sentences_path = cfg.path("sentences")
        collocations_path = cfg.path("collocations")
        if sentences_path is not None and collocations_path is not None:
            sentences = _load_sentences(sentences_path)
            colls = load_collocations(collocations_path, inventory)
            assigned = bank_mod.extract_collocation_contexts(
                sentences, colls, window=cfg.intval("window")
            )
            for sense, idxs in assigned.items():
                for idx in idxs:
                    labels_by_index.setdefault(idx, []).append(sense)

        max_per_lemma = cfg.intval("max_sentences_per_lemma")
        per_lemma: dict = {}
        for rec in corpus_records:
            labels = []
            if rec.gold_sense is not None:
                labels.append(rec.gold_sense)
            if labels_by_index:
                # sentence dumps key records by the sentence file's line
                # index, optionally suffixed ("12" or "12.bank")
                try:
                    line_idx = int(rec.instance_id.split(".", 1)[0])
                except ValueError:
                    line_idx = None
                if line_idx is not None:
                    cands = inventory.candidates_for_lemma(rec.lemma)
                    for sense in labels_by_index.get(line_idx, ()):
                        if sense in cands and sense not in labels:
                            labels.append(sense)
            per_lemma.setdefault(rec.lemma, []).append(
                (rec.vector.astype(np.float64), labels or None)
            )
        for lemma, sents in per_lemma.items():
            corpus_segs.update(
                bank_mod.corpus_segments(
                    lemma,
                    sents[:max_per_lemma],
                    inventory,
                    labeler,
                    seed=derive_seed(seed, f"kmeans:{lemma}"),
                    max_iter=cfg.intval("kmeans_max_iter"),
                )
            )

    bank = bank_mod.assemble_bank(
        model, table, inventory, gloss_segs, corpus_segs, cfg.get("fill_policy")
    )
    bank_path = out / "bank.cdeb"
    bank_mod.save_bank(bank, bank_path)

    n = len(bank.entries)
    coverage = dict(bank.coverage)
    coverage["senses_in_bank"] = n
    coverage["labeler"] = cfg.get("labeler")
    coverage["ukb_words"] = cfg.intval("ukb_words")  # passed through to external labeler runs
    coverage["gloss_pct"] = 100.0 * coverage["with_gloss"] / n if n else 0.0
    coverage["corpus_pct"] = 100.0 * coverage["with_corpus"] / n if n else 0.0
    _write_json(coverage, out / "bank_coverage.json")
    print(
        f"bank: {bank_path.name} senses={n} "
        f"gloss={coverage['gloss_pct']:.1f}% corpus={coverage['corpus_pct']:.1f}%"
    )
    return 0


def cmd_eval_wsd(cfg: RunConfig) -> int:
    out = cfg.output_dir()
    bank_path = cfg.path("bank") or out / "bank.cdeb"
    if not Path(bank_path).is_file():
        raise ValidationError(f"bank not found: {bank_path}")
    bank = bank_mod.load_bank(bank_path)
    table, inventory = _load_common(cfg)

    reports = []
    text_lines = []
    per_dataset = {}
    for name, dump_path, gold_path in cfg.eval_sets():
        records = load_context_dump(dump_path)
        if not records:
            raise ValidationError(f"evaluation set {name!r} is empty")
        gold = load_gold_keys(gold_path)
        report, predictions, _skips = wsd.evaluate_wsd(
            records,
            bank,
            inventory,
            table,
            gold,
            k_candidates=cfg.intval("k_candidates"),
            fallback=cfg.get("fallback"),
            threads=cfg.threads(),
            name=name,
        )
        wsd.write_predictions(predictions, out / f"predictions_{name}.key")
        reports.append(report)
        per_dataset[name] = report.to_dict()
        text_lines.append(
            f"{name}: P={report.precision:.4f} R={report.recall:.4f} F1={report.f1:.4f} "
            f"(attempted={report.attempted}, correct={report.correct}, "
            f"gold={report.gold_total}, skipped={report.skipped})"
        )

    pooled = wsd.pool_reports(reports)
    text_lines.append(
        f"ALL: P={pooled.precision:.4f} R={pooled.recall:.4f} F1={pooled.f1:.4f}"
    )
    _write_json(
        {"datasets": per_dataset, "pooled": pooled.to_dict()}, out / "wsd_report.json"
    )
    (out / "wsd_report.txt").write_text("\n".join(text_lines) + "\n", encoding="utf-8")
    print("\n".join(text_lines))
    return 0


def cmd_eval_wic(cfg: RunConfig) -> int:
    out = cfg.output_dir()
    ckpt = cfg.path("checkpoint") or out / "checkpoint.cdem"
    bank_path = cfg.path("bank") or out / "bank.cdeb"
    for path, what in ((ckpt, "checkpoint"), (bank_path, "bank")):
        if not Path(path).is_file():
            raise ValidationError(f"{what} not found: {path}")
    model = projection.load_model(ckpt)
    bank = bank_mod.load_bank(bank_path)
    table, inventory = _load_common(cfg)

    train_pairs = wic.load_wic_pairs(
        cfg.path("wic_train_dump", required=True),
        cfg.path("wic_train_pairs", required=True),
        cfg.path("wic_train_gold", required=True),
    )
    test_pairs = wic.load_wic_pairs(
        cfg.path("wic_test_dump", required=True),
        cfg.path("wic_test_pairs", required=True),
        cfg.path("wic_test_gold", required=True),
    )

    X_train, gold_train, _, skips_train = wic.featurize_pairs(
        train_pairs, bank, inventory, table, model
    )
    if any(g is None for g in gold_train):
        raise ValidationError("training pairs must all carry gold labels")
    classifier = wic.train_logistic(
        list(zip(X_train, gold_train)),
        lr=cfg.floatval("wic_lr"),
        epochs=cfg.intval("wic_epochs"),
        l2=cfg.floatval("wic_l2"),
        seed=derive_seed(cfg.intval("seed"), "wic"),
    )

    X_test, gold_test, kept_test, skips_test = wic.featurize_pairs(
        test_pairs, bank, inventory, table, model
    )
    report = wic.evaluate_wic(
        classifier,
        list(zip(X_test, gold_test)),
        skipped=len(skips_test),
        pair_ids=[p.pair_id for p in kept_test],
    )

    _write_json(
        {
            "accuracy": report.accuracy,
            "evaluated": report.evaluated,
            "correct": report.correct,
            "skipped_test": report.skipped,
            "skipped_train": len(skips_train),
            "classifier": classifier.to_dict(),
        },
        out / "wic_report.json",
    )
    pred_lines = [
        f"{pid}\t{prob:.6f}\t{'T' if predicted else 'F'}\t{'T' if gold else 'F'}"
        for pid, prob, predicted, gold in report.outcomes
    ]
    (out / "wic_predictions.tsv").write_text(
        "\n".join(pred_lines) + ("\n" if pred_lines else ""), encoding="utf-8"
    )
    summary = (
        f"wic accuracy: {report.accuracy:.4f} "
        f"(evaluated={report.evaluated}, skipped={report.skipped})"
    )
    (out / "wic_report.txt").write_text(summary + "\n", encoding="utf-8")
    print(summary)
    return 0


def cmd_neighbors(args) -> int:
    bank = bank_mod.load_bank(args.bank)
    if (args.sense is None) == (args.vector_file is None):
        raise ValidationError("provide exactly one of --sense or --vector-file")
    if args.sense is not None:
        query = args.sense
    else:
        text = Path(args.vector_file).read_text(encoding="utf-8")
        try:
            query = np.array([float(tok) for tok in text.split()], dtype=np.float64)
        except ValueError:
            raise ValidationError(f"vector file {args.vector_file} holds non-numeric tokens") from None
    ranked = wsd.neighbors(query, bank, args.top)
    lines = [f"{i + 1}\t{sense}\t{score:.6f}" for i, (sense, score) in enumerate(ranked)]
    print("\n".join(lines) if lines else "(empty bank)")
    if args.json:
        _write_json([{"sense": s, "score": sc} for s, sc in ranked], Path(args.json))
    return 0


def cmd_inspect(args) -> int:
    info = describe_file(args.path)
    print(json.dumps(info, indent=2, sort_keys=True))
    if args.strict and info.get("warnings"):
        return 1
    return 0


# ---------------------------------------------------------------------------
# argument handling


def _parse_overrides(extras) -> dict:
    overrides = {}
    i = 0
    while i < len(extras):
        token = extras[i]
        if not token.startswith("--"):
            raise ValidationError(f"unexpected argument {token!r} (overrides are --key value)")
        key = token[2:].replace("-", "_")
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            if i + 1 >= len(extras):
                raise ValidationError(f"override {token!r} is missing a value")
            i += 1
            value = extras[i]
        overrides[key] = value
        i += 1
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdes",
        description="Sense-bank toolkit: train projections, build banks, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("train", cmd_train),
        ("build-bank", cmd_build_bank),
        ("eval-wsd", cmd_eval_wsd),
        ("eval-wic", cmd_eval_wic),
    ):
        p = sub.add_parser(name)
        p.add_argument("config", help="flat key=value config file")
        p.set_defaults(handler=fn, needs_config=True)

    p = sub.add_parser("neighbors")
    p.add_argument("bank", help="CDEB bank file")
    p.add_argument("--sense", help="query by sense id (self excluded)")
    p.add_argument("--vector-file", help="query by whitespace-separated vector file")
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--json", help="also write the ranking as JSON")
    p.set_defaults(handler=cmd_neighbors, needs_config=False)

    p = sub.add_parser("inspect")
    p.add_argument("path", help="any toolkit file (dump, checkpoint, bank, text formats)")
    p.add_argument("--strict", action="store_true", help="exit 1 when warnings are present")
    p.set_defaults(handler=cmd_inspect, needs_config=False)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)
    try:
        if args.needs_config:
            overrides = _parse_overrides(extras)
            cfg = RunConfig.load(args.config, overrides)
            return args.handler(cfg)
        if extras:
            raise ValidationError(f"unrecognized arguments: {' '.join(extras)}")
        return args.handler(args)
    except (ValidationError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CdesError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

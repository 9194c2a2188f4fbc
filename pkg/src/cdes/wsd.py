"""1-NN word sense disambiguation against a sense bank, plus scoring.

A query concatenates the lemma's static vector with two copies of the
instance's context vector, mirroring the bank's [static | gloss | corpus]
segment layout. Candidates are restricted to the instance's (lemma, POS)
list; ties break toward the earlier candidate-list position so rankings are
stable across platforms.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import backend
from .bank import SenseBank
from .errors import ValidationError
from .store import SenseInventory, StaticTable

FALLBACKS = ("none", "mfs")
MFS_SENTINEL_SCORE = -2.0


@dataclass(eq=False)
class WsdInstance:
    instance_id: str
    lemma: str
    pos: str
    vector: np.ndarray  # q floats
    has_static: Optional[bool] = None  # set when the static table is known

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float32)


@dataclass
class Prediction:
    instance_id: str
    ranking: list  # [(sense id, cosine score)], non-increasing scores
    fallback_used: bool = False

    @property
    def chosen(self) -> str:
        return self.ranking[0][0]


@dataclass
class EvalReport:
    """Precision/recall/F1 for one dataset (or the pooled run)."""

    name: str = "ALL"
    attempted: int = 0
    correct: int = 0
    gold_total: int = 0
    skipped: int = 0
    outcomes: list = field(default_factory=list)  # (instance_id, chosen, is_correct)

    @property
    def precision(self) -> float:
        return self.correct / self.attempted if self.attempted else 0.0

    @property
    def recall(self) -> float:
        return self.correct / self.gold_total if self.gold_total else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if (p + r) > 0 else 0.0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "attempted": self.attempted,
            "correct": self.correct,
            "gold_total": self.gold_total,
            "skipped": self.skipped,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def query_vector(g: np.ndarray, c: np.ndarray) -> np.ndarray:
    """g concatenated with two copies of c (length p + 2q)."""
    g = np.asarray(g, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if g.ndim != 1 or c.ndim != 1:
        raise ValidationError("query inputs must be 1-dimensional")
    return np.concatenate([g, c, c])


def cosine(a, b) -> float:
    """Cosine similarity, 0.0 when either vector has zero norm.

    Clamped to [-1, 1] to absorb rounding.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"length mismatch: {a.shape} vs {b.shape}")
    na = math.sqrt(float(np.dot(a, a)))
    nb = math.sqrt(float(np.dot(b, b)))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(min(1.0, max(-1.0, float(np.dot(a, b)) / (na * nb))))


def disambiguate(
    instance: WsdInstance,
    bank: SenseBank,
    inventory: SenseInventory,
    static_table: StaticTable,
    k_candidates: int = 1,
    fallback: str = "none",
) -> Optional[Prediction]:
    """Rank the instance's candidate senses by cosine against the bank.

    Returns None when the instance cannot be attempted (no static vector or
    no candidate with a bank entry) and fallback is "none"; with fallback
    "mfs" such instances predict the first-listed sense with a sentinel
    score. Raises for a (lemma, POS) pair absent from the inventory, which
    is a different condition than an empty candidate intersection.
    """
    if fallback not in FALLBACKS:
        raise ValidationError(f"unknown fallback {fallback!r}")
    if k_candidates < 1:
        raise ValidationError("k_candidates must be >= 1")
    key = (instance.lemma, instance.pos)
    candidates = inventory.index.get(key)
    if not candidates:
        raise ValidationError(f"no inventory entry for (lemma={instance.lemma!r}, pos={instance.pos})")

    def mfs_prediction() -> Prediction:
        return Prediction(
            instance_id=instance.instance_id,
            ranking=[(candidates[0], MFS_SENTINEL_SCORE)],
            fallback_used=True,
        )

    g = static_table.get(instance.lemma)
    if g is None:
        return mfs_prediction() if fallback == "mfs" else None
    in_bank = [s for s in candidates if s in bank.entries]
    if not in_bank:
        return mfs_prediction() if fallback == "mfs" else None

    query = query_vector(g, instance.vector)
    if query.shape[0] != bank.width:
        raise ValidationError(
            f"query length {query.shape[0]} != bank width {bank.width} "
            f"(p={bank.p}, q={bank.q})"
        )
    scored = [(s, cosine(query, bank.entries[s])) for s in in_bank]
    scored.sort(key=lambda item: -item[1])  # stable: ties keep candidate order
    return Prediction(instance.instance_id, scored[:k_candidates])


def score_wsd(predictions, gold: dict, instance_ids=None) -> EvalReport:
    """Score predictions against a gold keyfile.

    precision = correct/attempted, recall = correct/gold_total; an instance
    is correct when its chosen sense is among the gold ids. ``instance_ids``
    (when given) restricts the recall denominator to the evaluated set,
    since a keyfile may cover a superset of what was run.
    """
    report = EvalReport()
    if instance_ids is not None:
        ids = set(instance_ids)
        report.gold_total = sum(1 for i in gold if i in ids)
    else:
        report.gold_total = len(gold)
    for pred in predictions:
        if pred.instance_id not in gold:
            raise ValidationError(f"prediction for unknown instance id {pred.instance_id!r}")
        is_correct = pred.chosen in gold[pred.instance_id]
        report.attempted += 1
        report.correct += int(is_correct)
        report.outcomes.append((pred.instance_id, pred.chosen, is_correct))
    return report


def neighbors(query, bank: SenseBank, top_n: int) -> list:
    """Rank all bank entries by cosine against a vector or a sense id.

    Querying by sense id excludes the sense itself from the result.
    """
    if top_n < 1:
        raise ValidationError("top_n must be >= 1")
    exclude = None
    if isinstance(query, str):
        vec = bank.get(query)
        if vec is None:
            raise ValidationError(f"unknown sense id {query!r}")
        exclude = query
        query = vec
    qv = np.asarray(query, dtype=np.float64)
    if qv.shape != (bank.width,):
        raise ValidationError(f"query length {qv.shape} != bank width {bank.width}")
    ids, matrix = bank.matrix()
    scores = backend.cosine_scores(matrix, qv)
    order = np.argsort(-scores, kind="stable")
    out = []
    for row in order:
        sense = ids[row]
        if sense == exclude:
            continue
        out.append((sense, float(scores[row])))
        if len(out) == top_n:
            break
    return out


# ---------------------------------------------------------------------------
# evaluation driver


def evaluate_wsd(
    records,
    bank: SenseBank,
    inventory: SenseInventory,
    static_table: StaticTable,
    gold: dict,
    k_candidates: int = 1,
    fallback: str = "none",
    threads: int = 1,
    name: str = "ALL",
):
    """Disambiguate every record and score against the keyfile.

    Instances that cannot be attempted (unknown lemma/POS, missing static
    vector, or empty bank candidates under fallback "none") are skipped and
    counted, hurting recall only. Returns (EvalReport, predictions, skips).
    """
    instances = [
        WsdInstance(r.instance_id, r.lemma, r.pos, r.vector, has_static=r.lemma in static_table)
        for r in records
    ]

    def run_one(inst):
        try:
            return disambiguate(inst, bank, inventory, static_table, k_candidates, fallback)
        except ValidationError as exc:
            return ("skip", inst.instance_id, str(exc))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_one, instances))
    else:
        results = [run_one(inst) for inst in instances]

    predictions = []
    skips = []
    for inst, res in zip(instances, results):
        if res is None:
            skips.append((inst.instance_id, "no candidate sense in bank"))
        elif isinstance(res, tuple):
            skips.append((res[1], res[2]))
        else:
            predictions.append(res)

    report = score_wsd(predictions, gold, instance_ids=[i.instance_id for i in instances])
    report.name = name
    report.skipped = len(skips)
    return report, predictions, skips


def pool_reports(reports) -> EvalReport:
    """Micro-pooled report across datasets (counts summed, then P/R/F1)."""
    pooled = EvalReport(name="ALL")
    for rep in reports:
        pooled.attempted += rep.attempted
        pooled.correct += rep.correct
        pooled.gold_total += rep.gold_total
        pooled.skipped += rep.skipped
        pooled.outcomes.extend(rep.outcomes)
    return pooled


def write_predictions(predictions, path) -> None:
    """Write ``instance_id sense_id [sense_id score ...]`` lines.

    The first sense is the scored one; deeper ranks follow as alternating
    sense/score tokens for external inspection.
    """
    lines = []
    for pred in predictions:
        parts = [pred.instance_id, pred.ranking[0][0]]
        for sense, score in pred.ranking[1:]:
            parts.append(sense)
            parts.append(f"{score:.6f}")
        lines.append(" ".join(parts))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

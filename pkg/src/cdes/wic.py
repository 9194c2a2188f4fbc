"""Word-in-context discrimination: six cosine features over sense and query
vectors feed a binary logistic regression classifier.

Feature order for a pair (t1, t2) with disambiguated senses s_i, s_j and
queries z1, z2 (whose first p coordinates equal the lemma's static vector):

    1. cos(s_i, s_j)          2. cos(z1, z2)
    3. cos(s_i, head_p(z1))   4. cos(s_j, head_p(z2))
    5. cos(s_i, head_p(z2))   6. cos(s_j, head_p(z1))

Swapping the two sentences permutes the features as (1, 2, 4, 3, 6, 5).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .bank import SenseBank
from .errors import FormatError, ValidationError
from .projection import ProjectionModel, project_sense
from .store import SenseInventory, StaticTable, load_context_dump
from .wsd import WsdInstance, cosine, disambiguate, query_vector

N_FEATURES = 6


@dataclass(eq=False)
class WicPair:
    pair_id: str
    lemma: str
    pos: str
    c1: np.ndarray
    c2: np.ndarray
    gold: Optional[bool] = None  # True = same sense

    def __post_init__(self):
        self.c1 = np.asarray(self.c1, dtype=np.float32)
        self.c2 = np.asarray(self.c2, dtype=np.float32)
        if self.c1.shape != self.c2.shape:
            raise ValidationError(
                f"pair {self.pair_id!r}: context vector lengths differ"
            )

    def swapped(self) -> "WicPair":
        return WicPair(self.pair_id, self.lemma, self.pos, self.c2, self.c1, self.gold)


@dataclass
class LogisticModel:
    weights: np.ndarray  # 6 floats
    bias: float
    feature_mean: np.ndarray
    feature_std: np.ndarray
    iterations: int = 0
    final_loss: float = 0.0

    def to_dict(self) -> dict:
        return {
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "feature_mean": [float(m) for m in self.feature_mean],
            "feature_std": [float(s) for s in self.feature_std],
            "iterations": self.iterations,
            "final_loss": float(self.final_loss),
        }


# ---------------------------------------------------------------------------
# features


def wic_features(
    pair: WicPair,
    bank: SenseBank,
    inventory: SenseInventory,
    static_table: StaticTable,
    model: ProjectionModel,
) -> np.ndarray:
    """Six cosine features for one pair; raises ValidationError on pairs
    that cannot be featurized (OOV lemma, no disambiguatable sense)."""
    g = static_table.get(pair.lemma)
    if g is None:
        raise ValidationError(f"lemma {pair.lemma!r} has no static vector")
    pred1 = disambiguate(
        WsdInstance(pair.pair_id + ":1", pair.lemma, pair.pos, pair.c1),
        bank, inventory, static_table, k_candidates=1,
    )
    pred2 = disambiguate(
        WsdInstance(pair.pair_id + ":2", pair.lemma, pair.pos, pair.c2),
        bank, inventory, static_table, k_candidates=1,
    )
    if pred1 is None or pred2 is None:
        raise ValidationError(
            f"pair {pair.pair_id!r}: no candidate sense present in the bank"
        )
    g64 = np.asarray(g, dtype=np.float64)
    s_i = project_sense(model, pred1.chosen, g64)
    s_j = project_sense(model, pred2.chosen, g64)
    z1 = query_vector(g64, pair.c1)
    z2 = query_vector(g64, pair.c2)
    p = model.p
    h1, h2 = z1[:p], z2[:p]
    return np.array(
        [
            cosine(s_i, s_j),
            cosine(z1, z2),
            cosine(s_i, h1),
            cosine(s_j, h2),
            cosine(s_i, h2),
            cosine(s_j, h1),
        ]
    )


def featurize_pairs(pairs, bank, inventory, static_table, model):
    """Features for every featurizable pair.

    Returns (X, gold_list, kept_pairs, skips) where skips holds
    (pair_id, reason) for pairs dropped with a warning.
    """
    rows, gold, kept, skips = [], [], [], []
    for pair in pairs:
        try:
            rows.append(wic_features(pair, bank, inventory, static_table, model))
        except ValidationError as exc:
            skips.append((pair.pair_id, str(exc)))
            continue
        gold.append(pair.gold)
        kept.append(pair)
    X = np.stack(rows) if rows else np.zeros((0, N_FEATURES))
    return X, gold, kept, skips


# ---------------------------------------------------------------------------
# logistic regression


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss(weights, bias, X, y, l2: float) -> float:
    """Mean cross-entropy plus L2 penalty 0.5 * l2 * ||w||^2 (bias excluded)."""
    z = X @ weights + bias
    # log(1 + exp(-|z|)) form avoids overflow on both tails
    ce = np.logaddexp(0.0, -z) * y + np.logaddexp(0.0, z) * (1.0 - y)
    return float(ce.mean() + 0.5 * l2 * float(np.dot(weights, weights)))


def logistic_grad(weights, bias, X, y, l2: float):
    probs = _sigmoid(X @ weights + bias)
    diff = probs - y
    grad_w = X.T @ diff / X.shape[0] + l2 * weights
    grad_b = float(diff.mean())
    return grad_w, grad_b


def train_logistic(
    features,
    lr: float = 0.1,
    epochs: int = 2000,
    l2: float = 1e-4,
    seed: int = 0,
) -> LogisticModel:
    """Full-batch gradient descent on standardized features.

    Weights start at zero, so the run is deterministic regardless of seed
    (the seed is accepted for interface symmetry with the other trainers).
    Requires both classes to be present.
    """
    if not len(features):
        raise ValidationError("empty feature list")
    X = np.asarray([x for x, _ in features], dtype=np.float64)
    y = np.asarray([1.0 if label else 0.0 for _, label in features])
    if len(set(y.tolist())) < 2:
        raise ValidationError("training data must contain both classes")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    Xs = (X - mean) / std

    w = np.zeros(X.shape[1])
    b = 0.0
    for _ in range(epochs):
        grad_w, grad_b = logistic_grad(w, b, Xs, y, l2)
        w = w - lr * grad_w
        b = b - lr * grad_b
    return LogisticModel(
        weights=w,
        bias=b,
        feature_mean=mean,
        feature_std=std,
        iterations=epochs,
        final_loss=logistic_loss(w, b, Xs, y, l2),
    )


def predict_proba(model: LogisticModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Xs = (X - model.feature_mean) / model.feature_std
    return _sigmoid(Xs @ model.weights + model.bias)


@dataclass
class WicEvalReport:
    accuracy: float = 0.0
    evaluated: int = 0
    correct: int = 0
    skipped: int = 0
    outcomes: list = field(default_factory=list)  # (pair_id, prob, predicted, gold)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "evaluated": self.evaluated,
            "correct": self.correct,
            "skipped": self.skipped,
        }


def evaluate_wic(model: LogisticModel, features, skipped: int = 0, pair_ids=None) -> WicEvalReport:
    """Accuracy at threshold 0.5; skipped pairs count as errors."""
    report = WicEvalReport(skipped=skipped)
    if not len(features) and skipped == 0:
        return report
    for row, (x, gold) in enumerate(features):
        if gold is None:
            raise ValidationError("evaluation pair without a gold label")
        prob = float(predict_proba(model, x)[0])
        predicted = prob >= 0.5
        report.evaluated += 1
        report.correct += int(predicted == gold)
        pid = pair_ids[row] if pair_ids is not None else str(row)
        report.outcomes.append((pid, prob, predicted, gold))
    denom = report.evaluated + report.skipped
    report.accuracy = report.correct / denom if denom else 0.0
    return report


def wic_accuracy(model: LogisticModel, features, skipped: int = 0) -> float:
    """Fraction of pairs classified correctly (skips counted as wrong)."""
    return evaluate_wic(model, features, skipped=skipped).accuracy


# ---------------------------------------------------------------------------
# pair loading (dump + sidecar)


def load_wic_pairs(dump_path, sidecar_path, gold_path=None) -> list:
    """Assemble WicPairs from a context dump and its pair sidecar.

    Sidecar rows are tab-separated ``pair_id lemma pos instance_id_1
    instance_id_2``; the optional gold file holds one T/F line per sidecar
    row.
    """
    records = {r.instance_id: r for r in load_context_dump(dump_path)}
    sidecar_path = Path(sidecar_path)
    gold_labels = None
    if gold_path is not None:
        gold_labels = []
        for lineno, raw in enumerate(Path(gold_path).read_text(encoding="utf-8").splitlines(), 1):
            token = raw.strip()
            if not token:
                continue
            if token not in ("T", "F"):
                raise FormatError(f"expected T or F, found {token!r}", path=gold_path, line=lineno)
            gold_labels.append(token == "T")

    pairs = []
    with open(sidecar_path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            fields = [f.strip() for f in line.split("\t")]
            if len(fields) != 5 or not all(fields):
                raise FormatError(
                    "expected 5 tab-separated fields (pair_id, lemma, pos, id1, id2)",
                    path=sidecar_path,
                    line=lineno,
                )
            pair_id, lemma, pos, id1, id2 = fields
            if id1 not in records or id2 not in records:
                raise FormatError(
                    f"pair {pair_id!r} references a missing dump record", path=sidecar_path, line=lineno
                )
            gold = None
            if gold_labels is not None:
                idx = len(pairs)
                if idx >= len(gold_labels):
                    raise FormatError("fewer gold lines than sidecar rows", path=gold_path)
                gold = gold_labels[idx]
            pairs.append(WicPair(pair_id, lemma, pos, records[id1].vector, records[id2].vector, gold))
    if gold_labels is not None and len(gold_labels) != len(pairs):
        raise FormatError("more gold lines than sidecar rows", path=gold_path)
    return pairs

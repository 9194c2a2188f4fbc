"""Learning the context filter W and per-sense diagonal projections.

A trained model maps a lemma's static vector g to a sense-specific vector
``a_i * g`` (elementwise); training aligns the filtered context ``W c`` with
the (optionally nonlinearly activated) projected static vector by minimizing
summed squared residuals with minibatch Adam.

In-memory math is float64; the CDEM checkpoint stores float32, mirroring
the other on-disk formats.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import backend
from .errors import FormatError, TrainingError, ValidationError
from .store import StaticTable, SenseInventory, _Reader, _pack_str

MODEL_MAGIC = b"CDEM"
MODEL_VERSION = 1


class Activation(enum.IntEnum):
    LINEAR = backend.ACT_LINEAR
    RELU = backend.ACT_RELU
    GELU = backend.ACT_GELU

    @classmethod
    def from_name(cls, name: str) -> "Activation":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValidationError(
                f"unknown activation {name!r} (expected linear, relu, or gelu)"
            ) from None


class InitScheme(enum.Enum):
    XAVIER = "xavier"
    UNIFORM01 = "uniform01"

    @classmethod
    def from_name(cls, name: str) -> "InitScheme":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValidationError(f"unknown init scheme {name!r}") from None


class ProjectionModel:
    """Filter matrix W (p x q) plus one length-p diagonal per sense."""

    def __init__(self, p: int, q: int, W: np.ndarray, diagonals: dict, activation: Activation):
        self.p = int(p)
        self.q = int(q)
        self.W = np.asarray(W, dtype=np.float64)
        if self.W.shape != (self.p, self.q):
            raise ValidationError(f"W shape {self.W.shape} != ({self.p}, {self.q})")
        self.diagonals = diagonals
        self.activation = activation

    def __contains__(self, sense_id: str) -> bool:
        return sense_id in self.diagonals

    def checksum(self) -> str:
        return hashlib.sha256(serialize_model(self)).hexdigest()


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 64
    epochs: int = 10
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    init_scheme: InitScheme = InitScheme.XAVIER
    seed: int = 0
    validation_fraction: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValidationError("validation_fraction must be in [0, 1)")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    initial_train_loss: float = 0.0
    skipped_oov: int = 0
    skipped_no_gold: int = 0
    skipped_unknown_sense: int = 0
    model_checksum: str = ""
    # the alignment objective sums squared errors; training steps divide by
    # the actual batch length so the learning rate is batch-size invariant
    loss_convention: str = "mean"
    backend: str = ""

    @property
    def skipped_total(self) -> int:
        return self.skipped_oov + self.skipped_no_gold + self.skipped_unknown_sense

    def to_dict(self) -> dict:
        return {
            "train_loss": [float(x) for x in self.train_loss],
            "val_loss": [float(x) for x in self.val_loss],
            "initial_train_loss": float(self.initial_train_loss),
            "skipped_oov": self.skipped_oov,
            "skipped_no_gold": self.skipped_no_gold,
            "skipped_unknown_sense": self.skipped_unknown_sense,
            "model_checksum": self.model_checksum,
            "loss_convention": self.loss_convention,
            "backend": self.backend,
        }


# ---------------------------------------------------------------------------
# initialization


def init_model(
    p: int,
    q: int,
    sense_ids: list,
    scheme: InitScheme = InitScheme.XAVIER,
    seed: int = 0,
    activation: Activation = Activation.GELU,
) -> ProjectionModel:
    """Sample a fresh model, deterministically for a given seed.

    Xavier-uniform bounds are sqrt(6/(p+q)) for W; diagonals use fan (p+p).
    UNIFORM01 draws every entry uniformly from [0, 1]. Draw order is W first,
    then diagonals in the given sense order, so equal inputs give equal
    models.
    """
    if p < 1 or q < 1:
        raise ValidationError("p and q must be >= 1")
    if not sense_ids:
        raise ValidationError("sense_ids must be non-empty")
    if len(set(sense_ids)) != len(sense_ids):
        raise ValidationError("duplicate sense id in sense_ids")
    rng = np.random.default_rng(seed)
    if scheme == InitScheme.XAVIER:
        bound_w = np.sqrt(6.0 / (p + q))
        bound_a = np.sqrt(6.0 / (p + p))
        W = rng.uniform(-bound_w, bound_w, size=(p, q))
        diagonals = {s: rng.uniform(-bound_a, bound_a, size=p) for s in sense_ids}
    else:
        W = rng.uniform(0.0, 1.0, size=(p, q))
        diagonals = {s: rng.uniform(0.0, 1.0, size=p) for s in sense_ids}
    return ProjectionModel(p, q, W, diagonals, activation)


# ---------------------------------------------------------------------------
# forward / loss / gradients


def _check_pair(model: ProjectionModel, record, g: np.ndarray) -> str:
    sense = record.gold_sense
    if sense is None:
        raise ValidationError(f"record {record.instance_id!r} has no gold sense")
    if sense not in model.diagonals:
        raise ValidationError(f"no diagonal for sense {sense!r}")
    if g.shape != (model.p,):
        raise ValidationError(f"static vector length {g.shape} != p={model.p}")
    if record.vector.shape != (model.q,):
        raise ValidationError(
            f"context vector length {record.vector.shape[0]} != q={model.q}"
        )
    return sense


def forward(model: ProjectionModel, record, g: np.ndarray):
    """Return (projected_context, predicted_sense, residual) for one record."""
    g = np.asarray(g, dtype=np.float64)
    sense = _check_pair(model, record, g)
    c = np.asarray(record.vector, dtype=np.float64)
    projected = model.W @ c
    z = model.diagonals[sense] * g
    predicted = backend.activate(z, int(model.activation))
    return projected, predicted, projected - predicted


def _batch_arrays(model: ProjectionModel, batch):
    if not batch:
        raise ValidationError("empty batch")
    g_rows, c_rows, sense_names = [], [], []
    for record, g in batch:
        g = np.asarray(g, dtype=np.float64)
        sense_names.append(_check_pair(model, record, g))
        g_rows.append(g)
        c_rows.append(np.asarray(record.vector, dtype=np.float64))
    local_ids: dict = {}
    idx = np.empty(len(batch), dtype=np.int64)
    for i, name in enumerate(sense_names):
        idx[i] = local_ids.setdefault(name, len(local_ids))
    diags = np.stack([model.diagonals[name] for name in local_ids])
    return np.stack(g_rows), np.stack(c_rows), idx, list(local_ids), diags


def loss(model: ProjectionModel, batch) -> float:
    """Sum over the batch of squared residual norms (always >= 0)."""
    g, c, idx, _, diags = _batch_arrays(model, batch)
    proj = c @ model.W.T
    z = diags[idx] * g
    resid = proj - backend.activate(z, int(model.activation))
    return float(np.sum(resid * resid))


def gradients(model: ProjectionModel, batch):
    """Summed-convention gradients of the alignment objective.

    Returns (grad_W, grad_diagonals) where grad_diagonals maps only the
    senses present in the batch; an absent sense has an exactly-zero
    gradient.
    """
    g, c, idx, names, diags = _batch_arrays(model, batch)
    _, grad_w, grad_diag = backend.alignment_batch(
        model.W, diags, g, c, idx, int(model.activation)
    )
    return grad_w, {name: grad_diag[i] for i, name in enumerate(names)}


def project_sense(model: ProjectionModel, sense_id: str, g: np.ndarray) -> np.ndarray:
    """Sense-specific static vector: the diagonal applied to g, no activation."""
    if sense_id not in model.diagonals:
        raise ValidationError(f"unknown sense id {sense_id!r}")
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (model.p,):
        raise ValidationError(f"static vector length {g.shape} != p={model.p}")
    return model.diagonals[sense_id] * g


# ---------------------------------------------------------------------------
# training


class _AdamState:
    __slots__ = ("m", "v", "t")

    def __init__(self, shape):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, grad, lr, beta1, beta2, eps):
        self.t += 1
        self.m = beta1 * self.m + (1.0 - beta1) * grad
        self.v = beta2 * self.v + (1.0 - beta2) * (grad * grad)
        m_hat = self.m / (1.0 - beta1**self.t)
        v_hat = self.v / (1.0 - beta2**self.t)
        return lr * m_hat / (np.sqrt(v_hat) + eps)


def _filter_records(records, static_table: StaticTable, inventory: SenseInventory, report):
    kept = []
    for rec in records:
        if rec.gold_sense is None:
            report.skipped_no_gold += 1
            continue
        g = static_table.get(rec.lemma)
        if g is None:
            report.skipped_oov += 1
            continue
        if rec.gold_sense not in inventory.senses:
            report.skipped_unknown_sense += 1
            continue
        kept.append((rec, np.asarray(g, dtype=np.float64)))
    return kept


def train(
    records,
    static_table: StaticTable,
    inventory: SenseInventory,
    config: TrainConfig,
    activation: Activation = Activation.GELU,
):
    """Minibatch-Adam training of W and the per-sense diagonals.

    Deterministic given ``config.seed``: initialization, the one-time
    validation split, and every epoch's shuffle all flow from it. Records
    missing a gold sense, with an out-of-vocabulary lemma, or with a gold
    sense absent from the inventory are skipped and counted.
    """
    report = TrainReport(backend=backend.active_backend())
    usable = _filter_records(records, static_table, inventory, report)
    if not usable:
        raise ValidationError("no trainable records after filtering")
    qs = {rec.vector.shape[0] for rec, _ in usable}
    if len(qs) != 1:
        raise ValidationError(f"mixed context dimensions across records: {sorted(qs)}")
    q = qs.pop()

    model = init_model(
        static_table.dimension,
        q,
        list(inventory.senses),
        scheme=config.init_scheme,
        seed=config.seed,
        activation=activation,
    )

    rng = np.random.default_rng(config.seed)
    n = len(usable)
    perm = rng.permutation(n)
    n_val = int(config.validation_fraction * n)
    val_set = [usable[i] for i in perm[:n_val]]
    train_set = [usable[i] for i in perm[n_val:]]
    if not train_set:
        raise ValidationError("validation split left no training records")

    g_all = np.stack([g for _, g in train_set])
    c_all = np.stack([np.asarray(r.vector, dtype=np.float64) for r, _ in train_set])
    sense_names = [r.gold_sense for r, _ in train_set]

    report.initial_train_loss = loss(model, train_set) / len(train_set)

    w_state = _AdamState((model.p, model.q))
    diag_states: dict = {}
    code = int(model.activation)

    for epoch in range(config.epochs):
        order = rng.permutation(len(train_set))
        epoch_sum = 0.0
        for start in range(0, len(order), config.batch_size):
            rows = order[start : start + config.batch_size]
            local_ids: dict = {}
            idx = np.empty(len(rows), dtype=np.int64)
            for i, row in enumerate(rows):
                idx[i] = local_ids.setdefault(sense_names[row], len(local_ids))
            names = list(local_ids)
            diags = np.stack([model.diagonals[name] for name in names])

            batch_loss, grad_w, grad_diag = backend.alignment_batch(
                model.W, diags, g_all[rows], c_all[rows], idx, code
            )
            if not np.isfinite(batch_loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch starting at {start}"
                )
            epoch_sum += batch_loss

            scale = 1.0 / len(rows)
            model.W -= w_state.step(
                grad_w * scale,
                config.learning_rate,
                config.adam_beta1,
                config.adam_beta2,
                config.adam_epsilon,
            )
            for i, name in enumerate(names):
                state = diag_states.get(name)
                if state is None:
                    state = diag_states[name] = _AdamState(model.p)
                model.diagonals[name] = model.diagonals[name] - state.step(
                    grad_diag[i] * scale,
                    config.learning_rate,
                    config.adam_beta1,
                    config.adam_beta2,
                    config.adam_epsilon,
                )

        report.train_loss.append(epoch_sum / len(train_set))
        if val_set:
            report.val_loss.append(loss(model, val_set) / len(val_set))

    report.model_checksum = model.checksum()
    return model, report


# ---------------------------------------------------------------------------
# checkpoint format (CDEM)


def serialize_model(model: ProjectionModel) -> bytes:
    parts = [
        MODEL_MAGIC,
        struct.pack("<III", MODEL_VERSION, model.p, model.q),
        struct.pack("<B", int(model.activation)),
        np.asarray(model.W, dtype="<f4").tobytes(),
        struct.pack("<Q", len(model.diagonals)),
    ]
    for sense_id, diag in model.diagonals.items():
        parts.append(_pack_str(sense_id, "sense id"))
        parts.append(np.asarray(diag, dtype="<f4").tobytes())
    return b"".join(parts)


def save_model(model: ProjectionModel, path) -> None:
    Path(path).write_bytes(serialize_model(model))


def load_model(path) -> ProjectionModel:
    path = Path(path)
    reader = _Reader(path.read_bytes(), path)
    magic = reader.take(4, "magic")
    if magic != MODEL_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}", path=path)
    version = reader.u32("version")
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", path=path)
    p = reader.u32("p")
    q = reader.u32("q")
    if p == 0 or q == 0:
        raise FormatError("p and q must be positive", path=path)
    act_code = reader.take(1, "activation")[0]
    try:
        activation = Activation(act_code)
    except ValueError:
        raise FormatError(f"unknown activation code {act_code}", path=path) from None
    W = np.frombuffer(reader.take(4 * p * q, "W"), dtype="<f4").astype(np.float64)
    W = W.reshape(p, q)
    count = reader.u64("sense count")
    diagonals: dict = {}
    for i in range(count):
        sense_id = reader.string(f"sense {i} id")
        if sense_id in diagonals:
            raise FormatError(f"duplicate sense id {sense_id!r}", path=path)
        diag = np.frombuffer(reader.take(4 * p, f"sense {i} diagonal"), dtype="<f4")
        diagonals[sense_id] = diag.astype(np.float64)
    if not reader.done():
        raise FormatError("trailing bytes after last sense", path=path)
    return ProjectionModel(p, q, W, diagonals, activation)

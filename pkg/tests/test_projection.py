"""Trainer contracts: initialization, forward math, gradient correctness
against finite differences, Adam training behavior, checkpoints."""

import numpy as np
import pytest

from cdes import backend
from cdes.errors import FormatError, TrainingError, ValidationError
from cdes.projection import (
    Activation,
    InitScheme,
    TrainConfig,
    gradients,
    forward,
    init_model,
    load_model,
    loss,
    project_sense,
    save_model,
    serialize_model,
    train,
)
from cdes.store import ContextRecord

from helpers import planted_problem


def record_for(sense, vec, lemma="w", iid=None):
    vec = np.asarray(vec, dtype=np.float32)
    return ContextRecord(iid or f"r{id(vec) % 99999}", lemma, "NOUN", sense, vec)


def random_batch(model, n, seed, senses=None):
    rng = np.random.default_rng(seed)
    senses = senses or list(model.diagonals)
    batch = []
    for i in range(n):
        sense = senses[int(rng.integers(len(senses)))]
        rec = record_for(sense, rng.normal(size=model.q), iid=f"b{i}")
        batch.append((rec, rng.normal(size=model.p)))
    return batch


class TestInitModel:
    def test_deterministic_given_seed(self):
        a = init_model(2, 3, ["s1"], InitScheme.XAVIER, seed=7)
        b = init_model(2, 3, ["s1"], InitScheme.XAVIER, seed=7)
        np.testing.assert_array_equal(a.W, b.W)
        np.testing.assert_array_equal(a.diagonals["s1"], b.diagonals["s1"])

    def test_xavier_bounds(self):
        # bound recomputed independently: sqrt(6/(p+q)) for W, sqrt(6/2p) for a_i
        p, q = 2, 3
        model = init_model(p, q, [f"s{i}" for i in range(50)], InitScheme.XAVIER, seed=1)
        bound_w = (6.0 / (p + q)) ** 0.5
        bound_a = (6.0 / (2 * p)) ** 0.5
        assert np.all(np.abs(model.W) <= bound_w)
        for diag in model.diagonals.values():
            assert np.all(np.abs(diag) <= bound_a)

    def test_uniform01_in_unit_interval(self):
        model = init_model(4, 5, ["s1", "s2"], InitScheme.UNIFORM01, seed=3)
        assert np.all((model.W >= 0.0) & (model.W <= 1.0))
        for diag in model.diagonals.values():
            assert np.all((diag >= 0.0) & (diag <= 1.0))

    def test_duplicate_sense_ids_rejected(self):
        with pytest.raises(ValidationError, match="duplicate"):
            init_model(2, 2, ["s1", "s1"], InitScheme.XAVIER, seed=0)

    def test_bad_dims_rejected(self):
        with pytest.raises(ValidationError):
            init_model(0, 2, ["s1"], InitScheme.XAVIER, seed=0)


class TestForward:
    def test_all_zero_model_gives_zero_residual(self):
        model = init_model(2, 2, ["s1"], InitScheme.XAVIER, 0, Activation.LINEAR)
        model.W[:] = 0.0
        model.diagonals["s1"][:] = 0.0
        rec = record_for("s1", [1.0, 2.0])
        _, _, residual = forward(model, rec, np.array([3.0, 4.0]))
        np.testing.assert_array_equal(residual, np.zeros(2))
        assert loss(model, [(rec, np.array([3.0, 4.0]))]) == 0.0

    def test_perfect_alignment(self):
        model = init_model(2, 2, ["s1"], InitScheme.XAVIER, 0, Activation.LINEAR)
        model.W = np.eye(2)
        model.diagonals["s1"] = np.ones(2)
        rec = record_for("s1", [1.0, 2.0])
        projected, predicted, residual = forward(model, rec, np.array([1.0, 2.0]))
        np.testing.assert_array_equal(projected, [1.0, 2.0])
        np.testing.assert_array_equal(predicted, [1.0, 2.0])
        np.testing.assert_array_equal(residual, [0.0, 0.0])

    def test_relu_clamps_negative_coordinates(self):
        model = init_model(2, 2, ["s1"], InitScheme.XAVIER, 0, Activation.RELU)
        model.diagonals["s1"] = np.array([-1.0, 1.0])
        g = np.array([1.0, 2.0])  # a*g = (-1, 2) -> relu (0, 2)
        _, predicted, _ = forward(model, record_for("s1", [0.0, 0.0]), g)
        np.testing.assert_array_equal(predicted, [0.0, 2.0])

    def test_missing_sense_rejected(self):
        model = init_model(2, 2, ["s1"], InitScheme.XAVIER, 0)
        with pytest.raises(ValidationError, match="diagonal"):
            forward(model, record_for("nope", [0.0, 0.0]), np.zeros(2))

    def test_dimension_mismatch_rejected(self):
        model = init_model(2, 2, ["s1"], InitScheme.XAVIER, 0)
        with pytest.raises(ValidationError, match="length"):
            forward(model, record_for("s1", [0.0, 0.0]), np.zeros(3))


class TestLoss:
    def test_three_four_five(self):
        # W c = (3, 4), prediction 0 -> residual norm 5 -> loss 25
        model = init_model(2, 2, ["s1"], InitScheme.XAVIER, 0, Activation.LINEAR)
        model.W = np.array([[3.0, 0.0], [0.0, 4.0]])
        model.diagonals["s1"] = np.zeros(2)
        batch = [(record_for("s1", [1.0, 1.0]), np.zeros(2))]
        assert loss(model, batch) == pytest.approx(25.0)

    def test_matches_independent_scalar_recomputation(self):
        model = init_model(3, 4, ["s1", "s2"], InitScheme.XAVIER, 5, Activation.GELU)
        batch = random_batch(model, 5, seed=9)
        import math

        def scalar_loss():
            total = 0.0
            for rec, g in batch:
                a = model.diagonals[rec.gold_sense]
                for i in range(model.p):
                    proj = sum(model.W[i, j] * float(rec.vector[j]) for j in range(model.q))
                    z = a[i] * g[i]
                    pred = z * 0.5 * (1.0 + math.erf(z / math.sqrt(2)))
                    total += (proj - pred) ** 2
            return total

        assert loss(model, batch) == pytest.approx(scalar_loss(), rel=1e-6)

    def test_empty_batch_rejected(self):
        model = init_model(2, 2, ["s1"], InitScheme.XAVIER, 0)
        with pytest.raises(ValidationError, match="empty"):
            loss(model, [])

    def test_scale_consistency_concatenated_batches(self):
        model = init_model(3, 4, ["s1", "s2"], InitScheme.XAVIER, 5)
        b1 = random_batch(model, 4, seed=1)
        b2 = random_batch(model, 7, seed=2)
        assert loss(model, b1 + b2) == pytest.approx(loss(model, b1) + loss(model, b2), rel=1e-12)


def finite_difference_grads(model, batch, h=1e-4):
    """Central differences of the summed loss over every parameter."""
    grad_w = np.zeros_like(model.W)
    for i in range(model.p):
        for j in range(model.q):
            orig = model.W[i, j]
            model.W[i, j] = orig + h
            up = loss(model, batch)
            model.W[i, j] = orig - h
            down = loss(model, batch)
            model.W[i, j] = orig
            grad_w[i, j] = (up - down) / (2 * h)
    grad_diag = {}
    for sense in model.diagonals:
        g = np.zeros(model.p)
        for i in range(model.p):
            orig = model.diagonals[sense][i]
            model.diagonals[sense][i] = orig + h
            up = loss(model, batch)
            model.diagonals[sense][i] = orig - h
            down = loss(model, batch)
            model.diagonals[sense][i] = orig
            g[i] = (up - down) / (2 * h)
        grad_diag[sense] = g
    return grad_w, grad_diag


def assert_grads_close(analytic, numeric, rel=1e-4, absolute=1e-6):
    diff = np.abs(analytic - numeric)
    ok = (diff <= rel * np.abs(numeric)) | (diff <= absolute)
    assert np.all(ok), f"max abs diff {diff.max()}"


class TestGradients:
    def test_zero_residual_gives_zero_gradients(self):
        model = init_model(2, 2, ["s1"], InitScheme.XAVIER, 0, Activation.LINEAR)
        model.W = np.eye(2)
        model.diagonals["s1"] = np.ones(2)
        batch = [(record_for("s1", [1.0, 2.0]), np.array([1.0, 2.0]))]
        grad_w, grad_diag = gradients(model, batch)
        np.testing.assert_array_equal(grad_w, np.zeros((2, 2)))
        np.testing.assert_array_equal(grad_diag["s1"], np.zeros(2))

    @pytest.mark.parametrize("activation", [Activation.LINEAR, Activation.RELU, Activation.GELU])
    @pytest.mark.parametrize(
        "name", ["numpy"] + (["numba"] if backend.HAVE_NUMBA else [])
    )
    def test_matches_finite_differences(self, activation, name):
        previous = backend.active_backend()
        backend.set_backend(name)
        try:
            model = init_model(3, 4, ["s1", "s2"], InitScheme.XAVIER, 11, activation)
            batch = random_batch(model, 6, seed=13)
            grad_w, grad_diag = gradients(model, batch)
            fd_w, fd_diag = finite_difference_grads(model, batch)
            assert_grads_close(grad_w, fd_w)
            for sense in model.diagonals:
                analytic = grad_diag.get(sense, np.zeros(model.p))
                assert_grads_close(analytic, fd_diag[sense])
        finally:
            backend.set_backend(previous)

    def test_absent_sense_has_zero_gradient(self):
        model = init_model(3, 4, ["s1", "s2"], InitScheme.XAVIER, 2)
        batch = random_batch(model, 5, seed=3, senses=["s1"])
        _, grad_diag = gradients(model, batch)
        assert "s1" in grad_diag
        assert "s2" not in grad_diag  # sparse result: absent means exactly zero


class TestGradientDescentMonotonic:
    def test_linear_full_batch_descent_never_increases(self):
        # plain GD (not Adam) on the convex linear instance
        model = init_model(3, 4, ["s1", "s2"], InitScheme.XAVIER, 6, Activation.LINEAR)
        batch = random_batch(model, 12, seed=8)
        eta = 1e-4
        previous = loss(model, batch)
        for _ in range(40):
            grad_w, grad_diag = gradients(model, batch)
            model.W -= eta * grad_w
            for sense, g in grad_diag.items():
                model.diagonals[sense] = model.diagonals[sense] - eta * g
            current = loss(model, batch)
            assert current <= previous + 1e-9
            previous = current




class TestTrain:
    def test_synthetic_recovery(self, tmp_path):
        records, table, inventory = planted_problem(tmp_path)
        config = TrainConfig(learning_rate=0.01, batch_size=64, epochs=300, seed=4)
        model, report = train(records, table, inventory, config, Activation.GELU)
        assert report.initial_train_loss > 0
        assert report.train_loss[-1] < 0.01 * report.initial_train_loss

    def test_zero_epochs_equals_init(self, tmp_path):
        records, table, inventory = planted_problem(tmp_path, n=20)
        config = TrainConfig(epochs=0, seed=9)
        model, report = train(records, table, inventory, config, Activation.LINEAR)
        reference = init_model(
            table.dimension, 4, list(inventory.senses), config.init_scheme, 9, Activation.LINEAR
        )
        assert report.train_loss == []
        assert model.checksum() == reference.checksum()

    def test_determinism_across_runs(self, tmp_path):
        records, table, inventory = planted_problem(tmp_path, n=40)
        config = TrainConfig(learning_rate=0.01, batch_size=16, epochs=5, seed=77,
                             validation_fraction=0.2)
        m1, r1 = train(records, table, inventory, config, Activation.RELU)
        m2, r2 = train(records, table, inventory, config, Activation.RELU)
        assert r1.model_checksum == r2.model_checksum
        assert r1.train_loss == r2.train_loss
        assert r1.val_loss == r2.val_loss

    def test_validation_losses_populated(self, tmp_path):
        records, table, inventory = planted_problem(tmp_path, n=50)
        config = TrainConfig(epochs=3, seed=1, validation_fraction=0.3)
        _, report = train(records, table, inventory, config)
        assert len(report.val_loss) == 3
        assert all(np.isfinite(v) and v >= 0 for v in report.val_loss)

    def test_skip_counting(self, tmp_path):
        records, table, inventory = planted_problem(tmp_path, n=10)
        extra = [
            ContextRecord("oov", "unknownlemma", "NOUN", "la%00", np.zeros(4, np.float32)),
            ContextRecord("nogold", "la", "NOUN", None, np.zeros(4, np.float32)),
            ContextRecord("badsense", "la", "NOUN", "la%99", np.zeros(4, np.float32)),
        ]
        config = TrainConfig(epochs=1, seed=0)
        _, report = train(records + extra, table, inventory, config)
        assert report.skipped_oov == 1
        assert report.skipped_no_gold == 1
        assert report.skipped_unknown_sense == 1

    def test_all_filtered_out_rejected(self, tmp_path):
        _, table, inventory = planted_problem(tmp_path, n=4)
        nogold = [ContextRecord("x", "la", "NOUN", None, np.zeros(4, np.float32))]
        with pytest.raises(ValidationError, match="no trainable records"):
            train(nogold, table, inventory, TrainConfig(epochs=1))

    def test_nonfinite_loss_aborts_with_location(self, tmp_path):
        # an absurd learning rate blows W up after the first step; the next
        # batch's squared residuals overflow float64
        records, table, inventory = planted_problem(tmp_path, n=8)
        config = TrainConfig(learning_rate=1e160, batch_size=4, epochs=2, seed=0)
        with pytest.raises(TrainingError, match="epoch"):
            train(records, table, inventory, config)

    def test_sense_locality_under_batches(self, tmp_path):
        # training on one lemma's records must leave the other sense's
        # diagonal and Adam state untouched
        records, table, inventory = planted_problem(tmp_path, n=30)
        only_la = [r for r in records if r.lemma == "la"]
        config = TrainConfig(learning_rate=0.05, epochs=2, seed=3)
        model, _ = train(only_la, table, inventory, config)
        reference = init_model(
            table.dimension, 4, list(inventory.senses), config.init_scheme, 3, Activation.GELU
        )
        np.testing.assert_array_equal(model.diagonals["lb%00"], reference.diagonals["lb%00"])
        assert not np.array_equal(model.diagonals["la%00"], reference.diagonals["la%00"])


class TestProjectSense:
    def test_identity_diagonal(self):
        model = init_model(3, 3, ["s1"], InitScheme.XAVIER, 0)
        model.diagonals["s1"] = np.ones(3)
        g = np.array([1.5, -2.0, 0.25])
        np.testing.assert_array_equal(project_sense(model, "s1", g), g)

    def test_elementwise_scaling(self):
        model = init_model(2, 2, ["s1"], InitScheme.XAVIER, 0)
        model.diagonals["s1"] = np.array([2.0, 0.0])
        np.testing.assert_array_equal(
            project_sense(model, "s1", np.array([3.0, 5.0])), [6.0, 0.0]
        )

    def test_distinct_diagonals_give_distinct_projections(self):
        rng = np.random.default_rng(14)
        model = init_model(4, 4, ["s1", "s2", "s3"], InitScheme.XAVIER, 14)
        g = rng.normal(size=4)
        assert np.all(g != 0)
        projections = [project_sense(model, s, g) for s in ("s1", "s2", "s3")]
        for i in range(3):
            for j in range(i + 1, 3):
                assert not np.array_equal(projections[i], projections[j])

    def test_unknown_sense_rejected(self):
        model = init_model(2, 2, ["s1"], InitScheme.XAVIER, 0)
        with pytest.raises(ValidationError, match="unknown sense"):
            project_sense(model, "nope", np.zeros(2))


class TestCheckpoint:
    def test_roundtrip_float32_exact(self, tmp_path):
        model = init_model(3, 5, ["s1", "s2"], InitScheme.XAVIER, 8, Activation.RELU)
        path = tmp_path / "m.cdem"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.p == 3 and loaded.q == 5
        assert loaded.activation == Activation.RELU
        np.testing.assert_array_equal(
            loaded.W.astype(np.float32), model.W.astype(np.float32)
        )
        for sense in model.diagonals:
            np.testing.assert_array_equal(
                loaded.diagonals[sense].astype(np.float32),
                model.diagonals[sense].astype(np.float32),
            )
        assert loaded.checksum() == model.checksum()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "m.cdem"
        path.write_bytes(b"XXXX" + b"\x00" * 20)
        with pytest.raises(FormatError, match="magic"):
            load_model(path)

    def test_unknown_version_rejected(self, tmp_path):
        model = init_model(2, 2, ["s1"], InitScheme.XAVIER, 0)
        blob = bytearray(serialize_model(model))
        blob[4:8] = (99).to_bytes(4, "little")
        path = tmp_path / "m.cdem"
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="version"):
            load_model(path)

    def test_truncation_rejected(self, tmp_path):
        model = init_model(2, 2, ["s1"], InitScheme.XAVIER, 0)
        blob = serialize_model(model)
        path = tmp_path / "m.cdem"
        path.write_bytes(blob[:-3])
        with pytest.raises(FormatError, match="truncated"):
            load_model(path)

"""Network forward/backward correctness, optimization, training determinism,
and model persistence."""

import json
import math
import struct

import numpy as np
import pytest
from pytest import approx

from qgesture.cnn import (
    MODEL_MAGIC,
    Architecture,
    CnnModel,
    adam_step,
    batch_index_ranges,
    forward,
    init_model,
    init_optimizer,
    load_model,
    loss_and_grad,
    param_shapes,
    predict,
    save_model,
    train,
)
from qgesture.config import TrainConfig
from qgesture.errors import (
    ArchitectureMismatchError,
    BadMagicError,
    ConfigError,
    InvalidInputError,
    TruncatedFileError,
)

SMALL = Architecture(input_shape=(3, 8, 6), conv_channels=(2, 2), hidden=8, classes=3)


def zero_model(arch=Architecture()):
    return CnnModel(arch=arch, params={n: np.zeros(s) for n, s in param_shapes(arch).items()})


def toy_batch(arch, n, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=(n,) + arch.input_shape)
    y = rng.integers(0, arch.classes, size=n)
    return x, y


class TestArchitecture:
    def test_default_parameter_shapes(self):
        shapes = param_shapes(Architecture())
        assert shapes["conv0_w"] == (8, 3, 3, 3)
        assert shapes["conv1_w"] == (16, 8, 3, 3)
        # two 2x2 poolings: 64x30 -> 32x15 -> 16x7 (floor)
        assert shapes["fc0_w"] == (128, 16 * 16 * 7)
        assert shapes["fc1_w"] == (10, 128)

    def test_even_kernel_rejected(self):
        with pytest.raises(ConfigError):
            Architecture(kernel=4)

    def test_round_trip_dict(self):
        arch = Architecture(input_shape=(3, 32, 16), conv_channels=(4,), hidden=10, classes=5)
        assert Architecture.from_dict(arch.to_dict()) == arch


class TestForward:
    def test_zero_model_is_uniform(self):
        model = zero_model(SMALL)
        x, _ = toy_batch(SMALL, 4)
        probs = forward(model, x)
        np.testing.assert_allclose(probs, 1.0 / SMALL.classes, atol=1e-12)

    def test_rows_sum_to_one(self):
        model = init_model(SMALL, seed=1)
        x, _ = toy_batch(SMALL, 5)
        probs = forward(model, x)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(probs >= 0)

    def test_batch_permutation_equivariant(self):
        model = init_model(SMALL, seed=2)
        x, _ = toy_batch(SMALL, 6)
        perm = np.array([3, 0, 5, 1, 4, 2])
        np.testing.assert_allclose(forward(model, x)[perm], forward(model, x[perm]), atol=1e-12)

    def test_shape_mismatch_rejected(self):
        model = init_model(SMALL, seed=0)
        with pytest.raises(InvalidInputError):
            forward(model, np.zeros((1, 3, 9, 9)))

    def test_glorot_init_bounds(self):
        model = init_model(Architecture(), seed=5)
        w = model.params["conv0_w"]
        fan_in = 3 * 9
        fan_out = 8 * 9
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        assert np.abs(w).max() <= limit
        assert np.all(model.params["conv0_b"] == 0)
        a = init_model(Architecture(), seed=5)
        np.testing.assert_array_equal(a.params["fc0_w"], model.params["fc0_w"])


class TestLossAndGradients:
    def test_uniform_loss_is_log_classes(self):
        model = zero_model(SMALL)
        x, y = toy_batch(SMALL, 8)
        loss, _ = loss_and_grad(model, x, y)
        assert loss == approx(math.log(SMALL.classes), rel=1e-12)

    def test_confident_correct_model_has_tiny_loss(self):
        model = zero_model(SMALL)
        model.params["fc1_b"][:] = (-50.0, -50.0, -50.0)
        model.params["fc1_b"][1] = 50.0
        x, _ = toy_batch(SMALL, 4)
        loss, _ = loss_and_grad(model, x, np.ones(4, dtype=int))
        assert loss <= 1e-6

    def test_bad_labels_rejected(self):
        model = init_model(SMALL, seed=0)
        x, _ = toy_batch(SMALL, 2)
        with pytest.raises(InvalidInputError):
            loss_and_grad(model, x, [0, 3])
        with pytest.raises(InvalidInputError):
            loss_and_grad(model, x, [0, -1])

    def test_gradients_match_finite_differences(self):
        model = init_model(SMALL, seed=3)
        x, y = toy_batch(SMALL, 3, seed=3)
        _, grads = loss_and_grad(model, x, y)
        rng = np.random.default_rng(4)
        eps = 1e-6
        worst = 0.0
        for name, p in model.params.items():
            flat = p.reshape(-1)
            for idx in rng.choice(flat.size, size=min(6, flat.size), replace=False):
                orig = flat[idx]
                flat[idx] = orig + eps
                lp, _ = loss_and_grad(model, x, y)
                flat[idx] = orig - eps
                lm, _ = loss_and_grad(model, x, y)
                flat[idx] = orig
                numeric = (lp - lm) / (2.0 * eps)
                analytic = grads[name].reshape(-1)[idx]
                denom = max(abs(numeric), abs(analytic), 1e-8)
                worst = max(worst, abs(numeric - analytic) / denom)
        assert worst <= 1e-4


class TestAdam:
    def test_first_step_is_signed_learning_rate(self):
        model = zero_model(SMALL)
        opt = init_optimizer(model)
        cfg = TrainConfig(learning_rate=0.01, eps=1e-8)
        grads = {n: np.full(s, 2.5) for n, s in param_shapes(SMALL).items()}
        grads["fc0_b"] = -grads["fc0_b"]
        adam_step(model, grads, opt, cfg)
        # bias-corrected first step reduces to -lr * sign(g) up to eps
        np.testing.assert_allclose(model.params["fc1_w"], -0.01, rtol=1e-6)
        np.testing.assert_allclose(model.params["fc0_b"], 0.01, rtol=1e-6)
        assert opt.t == 1

    def test_zero_gradient_keeps_parameters(self):
        model = init_model(SMALL, seed=6)
        before = {n: p.copy() for n, p in model.params.items()}
        opt = init_optimizer(model)
        grads = {n: np.zeros(s) for n, s in param_shapes(SMALL).items()}
        adam_step(model, grads, opt, TrainConfig())
        for name in before:
            np.testing.assert_array_equal(model.params[name], before[name])


class TestTraining:
    def test_batch_index_ranges(self):
        ranges = batch_index_ranges(420, 32)
        assert len(ranges) == 14
        assert ranges[0] == (0, 32)
        assert ranges[-1] == (416, 420)
        assert batch_index_ranges(32, 32) == [(0, 32)]

    def test_bit_deterministic(self):
        x, y = toy_batch(SMALL, 12, seed=7)
        cfg = TrainConfig(epochs=3, seed=7)
        a = train((x, y), (x, y), cfg, SMALL)
        b = train((x, y), (x, y), cfg, SMALL)
        for name in a.final_model.params:
            np.testing.assert_array_equal(a.final_model.params[name], b.final_model.params[name])
        assert a.history == b.history

    def test_history_layout(self):
        x, y = toy_batch(SMALL, 10, seed=8)
        result = train((x, y), (x, y), TrainConfig(epochs=4, seed=8), SMALL)
        assert [h["epoch"] for h in result.history] == [1, 2, 3, 4]
        assert all(h["lr"] == 0.001 for h in result.history)
        assert result.best_val_accuracy == max(h["val_acc"] for h in result.history)

    def test_learns_separable_toy_problem(self):
        rng = np.random.default_rng(9)
        x = np.zeros((30,) + SMALL.input_shape)
        y = rng.integers(0, SMALL.classes, size=30)
        for i, label in enumerate(y):
            x[i, 0, label, :] = 1.0
        result = train((x, y), (x, y), TrainConfig(epochs=150, seed=9), SMALL)
        assert result.best_val_accuracy == 1.0

    def test_empty_split_rejected(self):
        x, y = toy_batch(SMALL, 4)
        with pytest.raises(ConfigError):
            train((x[:0], y[:0]), (x, y), TrainConfig(epochs=1), SMALL)

    def test_predict_tie_breaks_lowest_index(self):
        model = zero_model(SMALL)
        x, _ = toy_batch(SMALL, 1)
        cls, probs = predict(model, x[0])
        assert cls == 0
        assert probs.shape == (SMALL.classes,)


class TestPersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        model = init_model(SMALL, seed=10)
        opt = init_optimizer(model)
        opt.t = 5
        opt.m = {n: np.random.default_rng(1).standard_normal(s) for n, s in param_shapes(SMALL).items()}
        path = tmp_path / "model.qgcnn"
        save_model(path, model, opt)
        loaded, loaded_opt = load_model(path)
        assert loaded.arch == model.arch
        for name in model.params:
            np.testing.assert_array_equal(loaded.params[name], model.params[name])
            np.testing.assert_array_equal(loaded_opt.m[name], opt.m[name])
        assert loaded_opt.t == 5

    def test_without_optimizer(self, tmp_path):
        model = init_model(SMALL, seed=11)
        path = tmp_path / "model.qgcnn"
        save_model(path, model)
        _, opt = load_model(path)
        assert opt is None

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.qgcnn"
        path.write_bytes(b"NOTAMODEL" + b"\x00" * 64)
        with pytest.raises(BadMagicError):
            load_model(path)

    def test_truncated_payload(self, tmp_path):
        model = init_model(SMALL, seed=12)
        path = tmp_path / "model.qgcnn"
        save_model(path, model)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 100])
        with pytest.raises(TruncatedFileError):
            load_model(path)

    def test_architecture_mismatch(self, tmp_path):
        model = init_model(SMALL, seed=13)
        path = tmp_path / "model.qgcnn"
        save_model(path, model)
        blob = path.read_bytes()
        off = len(MODEL_MAGIC)
        (hlen,) = struct.unpack_from("<I", blob, off)
        header = json.loads(blob[off + 4 : off + 4 + hlen])
        header["params"][-1]["shape"] = [99]  # declared table no longer matches
        new_header = json.dumps(header, sort_keys=True).encode()
        path.write_bytes(
            MODEL_MAGIC + struct.pack("<I", len(new_header)) + new_header + blob[off + 4 + hlen :]
        )
        with pytest.raises(ArchitectureMismatchError):
            load_model(path)

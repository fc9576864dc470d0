# Copyright 2026 tactile-cal contributors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

from typing import Any, Dict

import numpy as np
import pytest
import torch
from rp2.rp2_error import RP2TypeError, RP2ValueError

from tactile_cal.calibration_error import NumericError, TrainingError
from tactile_cal.dataset import Dataset
from tactile_cal.depth_gt import DepthMap
from tactile_cal.probe_plan import PlanSplit
from tactile_cal.sensor_sim import TactileImage
from tactile_cal.touchnet import (
    EVAL_MODE,
    TRAIN_MODE,
    TouchNetConfig,
    TrainConfig,
    coordinate_embedding,
    epochs_for_fraction,
    forward,
    make_optimizer,
    new_model,
    predict_depth,
    predict_gradients,
    prepare_input,
    train,
)


def _random_image(rows: int, cols: int, seed: int = 0) -> TactileImage:
    return TactileImage(np.random.default_rng(seed).integers(0, 256, size=(rows, cols, 3), dtype=np.uint8))


def _state(model: torch.nn.Module) -> Dict[str, torch.Tensor]:
    return {name: tensor.detach().clone() for name, tensor in model.state_dict().items()}


def _same_state(first: Dict[str, torch.Tensor], second: Dict[str, torch.Tensor]) -> bool:
    return first.keys() == second.keys() and all(torch.equal(first[name], second[name]) for name in first)


class TestTouchNetConfig:
    def test_default(self) -> None:
        config = TouchNetConfig().validate()
        assert len(config.module_channels) == 9
        assert max(config.module_channels) == 256
        assert config.module_channels[-1] == 2
        assert config.input_channels == 5

    @pytest.mark.parametrize(
        "config",
        [
            TouchNetConfig(module_channels=(32, 64, 128, 256, 128, 64, 32, 2)),
            TouchNetConfig(module_channels=(32, 64, 128, 256, 256, 128, 64, 32, 3)),
            TouchNetConfig(module_channels=(32, 64, 128, 512, 256, 128, 64, 32, 2)),
            TouchNetConfig(kernel_size=4),
            TouchNetConfig(dropout_p=1.0),
            TouchNetConfig(input_channels=3),
        ],
    )
    def test_invalid(self, config: TouchNetConfig) -> None:
        with pytest.raises(RP2ValueError):
            config.validate()

    def test_invalid_train_config(self) -> None:
        with pytest.raises(RP2ValueError):
            TrainConfig(learning_rate=0.0).validate()
        with pytest.raises(RP2ValueError):
            TrainConfig(epochs=0).validate()


class TestCoordinateEmbedding:
    def test_single_pixel(self) -> None:
        assert coordinate_embedding(1, 1).tolist() == [[[-1.0]], [[-1.0]]]

    def test_center_and_corners(self) -> None:
        embedding = coordinate_embedding(3, 3)
        assert embedding[:, 1, 1].tolist() == [0.0, 0.0]
        assert embedding[:, 0, 0].tolist() == [-1.0, -1.0]
        assert embedding[:, 2, 2].tolist() == [1.0, 1.0]

    def test_orientation(self) -> None:
        embedding = coordinate_embedding(4, 6)
        assert embedding.shape == (2, 4, 6)
        assert np.all(np.diff(embedding[0], axis=1) > 0)
        assert not np.any(np.diff(embedding[0], axis=0))
        assert np.all(np.diff(embedding[1], axis=0) > 0)

    def test_invalid(self) -> None:
        with pytest.raises(RP2ValueError):
            coordinate_embedding(0, 4)

    def test_prepare_input(self) -> None:
        image = _random_image(4, 6)
        batch = prepare_input(image.pixels[None])
        assert tuple(batch.shape) == (1, 5, 4, 6)
        np.testing.assert_allclose(batch[0, :3].numpy(), np.transpose(image.pixels, (2, 0, 1)) / 255.0, rtol=1e-6)
        assert not torch.any(prepare_input(image.pixels[None], zero_embedding=True)[0, 3:])


class TestForward:
    @pytest.mark.parametrize("shape", [(3, 3), (5, 7), (16, 12), (21, 10)])
    def test_shape_preserved(self, tiny_network_config: TouchNetConfig, shape: Any) -> None:
        gradient_map = forward(new_model(tiny_network_config), _random_image(*shape))
        assert gradient_map.gx.shape == shape
        assert gradient_map.gy.shape == shape

    def test_eval_mode_is_pure(self, tiny_network_config: TouchNetConfig) -> None:
        model = new_model(tiny_network_config, seed=3)
        image = _random_image(16, 12)
        before = _state(model)
        first = forward(model, image, EVAL_MODE)
        second = forward(model, image, EVAL_MODE)
        assert np.array_equal(first.gx, second.gx)
        assert np.array_equal(first.gy, second.gy)
        assert _same_state(before, _state(model))

    def test_outputs_are_signed(self, tiny_network_config: TouchNetConfig) -> None:
        gradient_map = forward(new_model(tiny_network_config), _random_image(16, 12))
        assert gradient_map.gx.min() < 0 < gradient_map.gx.max()

    def test_train_mode_dropout(self, tiny_network_config: TouchNetConfig) -> None:
        image = _random_image(16, 12)
        first = forward(new_model(tiny_network_config), image, TRAIN_MODE, seed=1)
        repeated = forward(new_model(tiny_network_config), image, TRAIN_MODE, seed=1)
        other = forward(new_model(tiny_network_config), image, TRAIN_MODE, seed=2)
        assert np.array_equal(first.gx, repeated.gx)
        assert not np.array_equal(first.gx, other.gx)

    def test_translation_covariance(self, tiny_network_config: TouchNetConfig) -> None:
        model = new_model(tiny_network_config, seed=5)
        image = _random_image(40, 40, 1)
        shifted = TactileImage(np.roll(image.pixels, 2, axis=1))
        interior = (slice(12, -12), slice(12, -12))

        plain = forward(model, image, zero_embedding=True).gx
        moved = forward(model, shifted, zero_embedding=True).gx
        np.testing.assert_allclose(moved[interior], np.roll(plain, 2, axis=1)[interior], atol=1e-4)

        embedded = forward(model, image).gx
        embedded_moved = forward(model, shifted).gx
        assert np.abs(embedded_moved[interior] - np.roll(embedded, 2, axis=1)[interior]).max() > 1e-3

    def test_non_finite_activation(self, tiny_network_config: TouchNetConfig) -> None:
        model = new_model(tiny_network_config)
        with torch.no_grad():
            model.blocks[0][0].weight[0, 0, 0, 0] = float("nan")
        with pytest.raises(NumericError) as excinfo:
            forward(model, _random_image(8, 8))
        assert excinfo.value.module_name == "module_0"

    def test_invalid_arguments(self, tiny_network_config: TouchNetConfig) -> None:
        model = new_model(tiny_network_config)
        with pytest.raises(RP2TypeError):
            forward(model, np.zeros((8, 8, 3), dtype=np.uint8))  # type: ignore
        with pytest.raises(RP2ValueError):
            forward(model, _random_image(2, 8))
        with pytest.raises(RP2ValueError):
            forward(model, _random_image(8, 8), "inference")

    def test_batched_prediction(self, tiny_network_config: TouchNetConfig) -> None:
        model = new_model(tiny_network_config, seed=2)
        images = np.stack([_random_image(16, 12, seed).pixels for seed in range(3)])
        predictions = predict_gradients(model, images, batch_size=2)
        assert predictions.shape == (3, 16, 12, 2)
        single = forward(model, TactileImage(images[1]))
        np.testing.assert_allclose(predictions[1, :, :, 0], single.gx, atol=1e-5)
        np.testing.assert_allclose(predictions[1, :, :, 1], single.gy, atol=1e-5)

    def test_predict_depth(self, tiny_network_config: TouchNetConfig) -> None:
        depth_map = predict_depth(new_model(tiny_network_config), _random_image(16, 12), 0.5)
        assert isinstance(depth_map, DepthMap)
        assert depth_map.values.shape == (16, 12)
        assert depth_map.pitch_mm_per_px == 0.5


class TestInitialization:
    def test_seeded(self, tiny_network_config: TouchNetConfig) -> None:
        assert _same_state(_state(new_model(tiny_network_config, 4)), _state(new_model(tiny_network_config, 4)))
        assert not _same_state(_state(new_model(tiny_network_config, 4)), _state(new_model(tiny_network_config, 5)))

    def test_global_generator_untouched(self, tiny_network_config: TouchNetConfig) -> None:
        torch.manual_seed(123)
        expected = torch.rand(3)
        torch.manual_seed(123)
        new_model(tiny_network_config, 9)
        assert torch.equal(torch.rand(3), expected)

    def test_parameter_shapes(self) -> None:
        model = new_model()
        conv = model.blocks[0][0]
        assert tuple(conv.weight.shape) == (32, 5, 3, 3)
        assert tuple(model.blocks[8][0].weight.shape) == (2, 32, 3, 3)
        for block in model.blocks:
            assert torch.all(block[1].running_var > 0)
            assert torch.all(block[1].weight == 1) and not torch.any(block[1].bias)
            assert not torch.any(block[0].bias)
        assert len(model.blocks[8]) == 2


class TestOptimizer:
    def test_decay_groups(self, tiny_network_config: TouchNetConfig) -> None:
        optimizer = make_optimizer(new_model(tiny_network_config), TrainConfig())
        decay, no_decay = optimizer.param_groups
        assert decay["weight_decay"] == 1e-4
        assert no_decay["weight_decay"] == 0.0
        assert all(parameter.ndim == 4 for parameter in decay["params"])
        assert all(parameter.ndim == 1 for parameter in no_decay["params"])
        assert len(decay["params"]) == 9
        assert optimizer.defaults["betas"] == (0.9, 0.999)
        assert optimizer.defaults["eps"] == 1e-8

    def test_zero_gradient_step_is_a_no_op(self, tiny_network_config: TouchNetConfig) -> None:
        model = new_model(tiny_network_config)
        before = _state(model)
        optimizer = make_optimizer(model, TrainConfig(weight_decay=0.0))
        for parameter in model.parameters():
            parameter.grad = torch.zeros_like(parameter)
        optimizer.step()
        assert _same_state(before, _state(model))

    @pytest.mark.parametrize("fraction_p, epochs", [(0.80, 60), (0.40, 120), (0.20, 240), (0.10, 480), (0.05, 960), (0.01, 4800)])
    def test_epochs_for_fraction(self, fraction_p: float, epochs: int) -> None:
        assert epochs_for_fraction(fraction_p) == epochs

    def test_epochs_for_invalid_fraction(self) -> None:
        with pytest.raises(RP2ValueError):
            epochs_for_fraction(0.0)


class TestTrain:
    def test_deterministic(self, tiny_network_config: TouchNetConfig, tiny_dataset: Dataset, tiny_split: PlanSplit) -> None:
        train_config = TrainConfig(batch_size=8, epochs=2, seed=11)
        first_model, first_history = train(new_model(tiny_network_config, 1), tiny_dataset, tiny_split, train_config, show_progress=False)
        second_model, second_history = train(new_model(tiny_network_config, 1), tiny_dataset, tiny_split, train_config, show_progress=False)
        assert first_history == second_history
        assert len(first_history.train_mse) == len(first_history.val_mse) == 2
        assert _same_state(_state(first_model), _state(second_model))

    def test_loss_decreases(self, tiny_dataset: Dataset) -> None:
        config = TouchNetConfig(module_channels=(8, 8, 8, 8, 8, 8, 8, 8, 2), dropout_p=0.0)
        split = PlanSplit(train_indices=(6,), val_indices=(), fraction_p=0.05, seed=0)
        _, history = train(new_model(config, 0), tiny_dataset, split, TrainConfig(learning_rate=1e-3, batch_size=2, epochs=40), show_progress=False)
        assert np.isnan(history.val_mse[-1])
        assert history.train_mse[-1] < history.train_mse[0]

    def test_no_training_samples(self, tiny_network_config: TouchNetConfig, tiny_dataset: Dataset) -> None:
        split = PlanSplit(train_indices=(999,), val_indices=(0,), fraction_p=0.05, seed=0)
        with pytest.raises(RP2ValueError, match="no samples"):
            train(new_model(tiny_network_config), tiny_dataset, split, TrainConfig(epochs=1), show_progress=False)

    def test_divergence(self, mocker: Any, tiny_network_config: TouchNetConfig, tiny_dataset: Dataset, tiny_split: PlanSplit) -> None:
        mocker.patch(
            "tactile_cal.touchnet.prepare_target",
            side_effect=lambda labels: torch.full((len(labels), 2) + labels.shape[1:3], float("nan")),
        )
        with pytest.raises(TrainingError, match="^P=0.2: Loss diverged at epoch 0") as excinfo:
            train(new_model(tiny_network_config), tiny_dataset, tiny_split, TrainConfig(epochs=3), fraction_p=0.2, show_progress=False)
        assert excinfo.value.epoch == 0
        assert excinfo.value.fraction_p == 0.2

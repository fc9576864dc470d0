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

import math
from contextlib import nullcontext
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import torch
from numpy.typing import NDArray
from progressbar import ProgressBar
from progressbar.widgets import AdaptiveETA, Bar, Percentage, Timer
from rp2.rp2_error import RP2TypeError, RP2ValueError
from torch import nn

from tactile_cal.calibration_error import NumericError, TrainingError
from tactile_cal.configuration import (
    BASE_EPOCHS,
    DEFAULT_BATCH_SIZE,
    DEFAULT_LEARNING_RATE,
    DEFAULT_WEIGHT_DECAY,
    MAX_TRAINING_FRACTION,
)
from tactile_cal.dataset import Dataset
from tactile_cal.depth_gt import DepthMap
from tactile_cal.logger import LOGGER
from tactile_cal.poisson import MATCHED_SCHEME, integrate
from tactile_cal.probe_plan import PlanSplit, round_half_up
from tactile_cal.sensor_sim import GradientMap, TactileImage

MODULE_COUNT: int = 9
INPUT_CHANNELS: int = 5
OUTPUT_CHANNELS: int = 2
MAX_WIDTH: int = 256
TRAIN_MODE: str = "train"
EVAL_MODE: str = "eval"
_INFERENCE_BATCH: int = 32


class TouchNetConfig(NamedTuple):
    module_channels: Tuple[int, ...] = (32, 64, 128, 256, 256, 128, 64, 32, 2)
    kernel_size: int = 3
    dropout_p: float = 0.1
    input_channels: int = INPUT_CHANNELS

    def validate(self) -> "TouchNetConfig":
        if len(self.module_channels) != MODULE_COUNT:
            raise RP2ValueError(f"TouchNet has exactly {MODULE_COUNT} modules, {len(self.module_channels)} widths given")
        if self.module_channels[-1] != OUTPUT_CHANNELS:
            raise RP2ValueError(f"Last module width must be {OUTPUT_CHANNELS}: {self.module_channels[-1]}")
        if any(width < 1 or width > MAX_WIDTH for width in self.module_channels):
            raise RP2ValueError(f"Module widths must be in [1, {MAX_WIDTH}]: {self.module_channels}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise RP2ValueError(f"kernel_size must be a positive odd integer: {self.kernel_size}")
        if not 0 <= self.dropout_p < 1:
            raise RP2ValueError(f"dropout_p must be in [0, 1): {self.dropout_p}")
        if self.input_channels != INPUT_CHANNELS:
            raise RP2ValueError(f"input_channels is fixed to {INPUT_CHANNELS}: {self.input_channels}")
        return self


class TrainConfig(NamedTuple):
    learning_rate: float = DEFAULT_LEARNING_RATE
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    batch_size: int = DEFAULT_BATCH_SIZE
    epochs: int = BASE_EPOCHS
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if not self.learning_rate > 0:
            raise RP2ValueError(f"learning_rate must be positive: {self.learning_rate}")
        if self.weight_decay < 0:
            raise RP2ValueError(f"weight_decay must be >= 0: {self.weight_decay}")
        if self.batch_size < 1 or self.epochs < 1:
            raise RP2ValueError(f"batch_size and epochs must be positive: {self.batch_size}, {self.epochs}")
        if self.seed < 0:
            raise RP2ValueError(f"seed must be an unsigned integer: {self.seed}")
        return self


class LossHistory(NamedTuple):
    train_mse: Tuple[float, ...]
    val_mse: Tuple[float, ...]


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


# conv -> batch norm -> ReLU -> spatial dropout, except the last module which stops after batch norm
class TouchNet(nn.Module):
    def __init__(self, config: TouchNetConfig = TouchNetConfig()) -> None:
        super().__init__()
        self.config: TouchNetConfig = config.validate()
        modules: List[nn.Sequential] = []
        in_channels: int = config.input_channels
        for index, out_channels in enumerate(config.module_channels):
            layers: List[nn.Module] = [
                nn.Conv2d(in_channels, out_channels, config.kernel_size, padding=config.kernel_size // 2),
                nn.BatchNorm2d(out_channels, momentum=0.1),
            ]
            if index < MODULE_COUNT - 1:
                layers.extend([nn.ReLU(), nn.Dropout2d(config.dropout_p)])
            modules.append(nn.Sequential(*layers))
            in_channels = out_channels
        self.blocks: nn.ModuleList = nn.ModuleList(modules)
        self.reset_parameters()

    def reset_parameters(self) -> None:
        for module in self.modules():
            if isinstance(module, nn.Conv2d):
                nn.init.kaiming_normal_(module.weight, mode="fan_in", nonlinearity="relu")
                nn.init.zeros_(module.bias)
            elif isinstance(module, nn.BatchNorm2d):
                module.reset_parameters()

    def forward(self, x: torch.Tensor) -> torch.Tensor:  # pylint: disable=arguments-differ
        for block in self.blocks:
            x = block(x)
        return x

    # Same as forward, but stops at the first module producing a non-finite activation
    def forward_checked(self, x: torch.Tensor) -> torch.Tensor:
        if not bool(torch.isfinite(x).all()):
            raise NumericError("Non-finite values in the network input", "input")
        for index, block in enumerate(self.blocks):
            x = block(x)
            if not bool(torch.isfinite(x).all()):
                raise NumericError(f"Non-finite activation in module {index}", f"module_{index}")
        return x


# Initial parameters depend only on seed; the global torch generator is left untouched
def new_model(config: TouchNetConfig = TouchNetConfig(), seed: int = 0) -> TouchNet:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return TouchNet(config)


def coordinate_embedding(rows: int, cols: int) -> NDArray[np.float32]:
    if rows < 1 or cols < 1:
        raise RP2ValueError(f"rows and cols must be >= 1: {rows}, {cols}")
    # A single sample maps to the lower bound
    xs: NDArray[np.float64] = np.linspace(-1.0, 1.0, cols) if cols > 1 else np.full(1, -1.0)
    ys: NDArray[np.float64] = np.linspace(-1.0, 1.0, rows) if rows > 1 else np.full(1, -1.0)
    grid_x, grid_y = np.meshgrid(xs, ys)
    return np.stack([grid_x, grid_y]).astype(np.float32)


# N x H x W x 3 uint8 -> N x 5 x H x W float32 (RGB in [0, 1] followed by the coordinate embedding)
def prepare_input(images: NDArray[np.uint8], zero_embedding: bool = False) -> torch.Tensor:
    if images.ndim != 4 or images.shape[3] != 3:
        raise RP2ValueError(f"Images must be N x H x W x 3, instead shape was {images.shape}")
    count, rows, cols, _ = images.shape
    rgb: NDArray[np.float32] = np.transpose(images.astype(np.float32) / 255.0, (0, 3, 1, 2))
    embedding: NDArray[np.float32] = coordinate_embedding(rows, cols)
    if zero_embedding:
        embedding = np.zeros_like(embedding)
    stacked: NDArray[np.float32] = np.concatenate([rgb, np.broadcast_to(embedding, (count, 2, rows, cols))], axis=1)
    return torch.from_numpy(np.ascontiguousarray(stacked))


# N x H x W x 2 labels -> N x 2 x H x W
def prepare_target(labels: NDArray[np.floating]) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(np.transpose(labels.astype(np.float32), (0, 3, 1, 2))))


def _check_image(model: TouchNet, image: TactileImage) -> None:
    if not isinstance(image, TactileImage):
        raise RP2TypeError(f"image is not a TactileImage: {image}")
    image.validate()
    if image.rows < model.config.kernel_size or image.cols < model.config.kernel_size:
        raise RP2ValueError(f"Image {image.rows}x{image.cols} is smaller than the kernel size {model.config.kernel_size}")


def forward(model: TouchNet, image: TactileImage, mode: str = EVAL_MODE, seed: int = 0, zero_embedding: bool = False) -> GradientMap:
    _check_image(model, image)
    if mode not in (TRAIN_MODE, EVAL_MODE):
        raise RP2ValueError(f"mode must be '{TRAIN_MODE}' or '{EVAL_MODE}': {mode}")
    batch: torch.Tensor = prepare_input(image.pixels[None], zero_embedding)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        if mode == TRAIN_MODE:
            model.train()
            output: torch.Tensor = model.forward_checked(batch).detach()
        else:
            model.eval()
            with torch.no_grad():
                output = model.forward_checked(batch)
    result: NDArray[np.float64] = output[0].numpy().astype(np.float64)
    return GradientMap(result[0], result[1])


# Eval-mode predictions for a stack of images: N x H x W x 2
def predict_gradients(model: TouchNet, images: NDArray[np.uint8], batch_size: int = _INFERENCE_BATCH) -> NDArray[np.float64]:
    model.eval()
    outputs: List[NDArray[np.float64]] = []
    with torch.no_grad():
        for start in range(0, len(images), batch_size):
            output: torch.Tensor = model.forward_checked(prepare_input(images[start : start + batch_size]))
            outputs.append(np.transpose(output.numpy().astype(np.float64), (0, 2, 3, 1)))
    return np.concatenate(outputs) if outputs else np.zeros((0,) + images.shape[1:3] + (2,))


def predict_depth(model: TouchNet, image: TactileImage, pitch: float, scheme: str = MATCHED_SCHEME) -> DepthMap:
    return integrate(forward(model, image, EVAL_MODE), pitch, scheme)


# Epoch count giving every ablation fraction the same number of gradient steps as the reference fraction
def epochs_for_fraction(fraction_p: float, base_epochs: int = BASE_EPOCHS, reference: float = MAX_TRAINING_FRACTION) -> int:
    if not fraction_p > 0:
        raise RP2ValueError(f"fraction_P must be positive: {fraction_p}")
    return round_half_up(base_epochs * reference / fraction_p)


def _parameter_groups(model: nn.Module, weight_decay: float) -> List[Dict[str, object]]:
    decay: List[nn.Parameter] = []
    no_decay: List[nn.Parameter] = []
    for module in model.modules():
        if isinstance(module, nn.Conv2d):
            decay.append(module.weight)
            if module.bias is not None:
                no_decay.append(module.bias)
        elif isinstance(module, nn.BatchNorm2d):
            no_decay.extend([module.weight, module.bias])
    return [{"params": decay, "weight_decay": weight_decay}, {"params": no_decay, "weight_decay": 0.0}]


def make_optimizer(model: nn.Module, train_config: TrainConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(
        _parameter_groups(model, train_config.weight_decay),
        lr=train_config.learning_rate,
        betas=(0.9, 0.999),
        eps=1e-8,
        weight_decay=train_config.weight_decay,
    )


def _mean_squared_error(model: TouchNet, inputs: torch.Tensor, targets: torch.Tensor, batch_size: int) -> float:
    if len(inputs) == 0:
        return math.nan
    model.eval()
    total: float = 0.0
    with torch.no_grad():
        for start in range(0, len(inputs), batch_size):
            error: torch.Tensor = model(inputs[start : start + batch_size]) - targets[start : start + batch_size]
            total += float(torch.sum(error.double() ** 2))
    return total / float(targets.numel())


def train(
    model: TouchNet,
    dataset: Dataset,
    split: PlanSplit,
    train_config: TrainConfig,
    fraction_p: Optional[float] = None,
    show_progress: bool = True,
) -> Tuple[TouchNet, LossHistory]:
    train_config.validate()
    train_indices: List[int] = dataset.sample_indices_for(split.train_indices)
    if not train_indices:
        raise RP2ValueError("Dataset has no samples on the training coordinates")
    val_indices: List[int] = dataset.sample_indices_for(split.val_indices)

    train_inputs: torch.Tensor = prepare_input(dataset.images(train_indices))
    train_targets: torch.Tensor = prepare_target(dataset.labels(train_indices))
    val_inputs: torch.Tensor = prepare_input(dataset.images(val_indices)) if val_indices else torch.zeros(0)
    val_targets: torch.Tensor = prepare_target(dataset.labels(val_indices)) if val_indices else torch.zeros(0)

    optimizer: torch.optim.AdamW = make_optimizer(model, train_config)
    loss_function: nn.MSELoss = nn.MSELoss()
    train_history: List[float] = []
    val_history: List[float] = []
    LOGGER.info(
        "Training on %d samples (%d coordinates), validating on %d samples, %d epochs", len(train_indices), len(split.train_indices), len(val_indices), train_config.epochs
    )

    progress_bar = ProgressBar(
        max_value=train_config.epochs,
        widgets=[Percentage(), " ", Bar(), " ", Timer(), " ", AdaptiveETA()],
    )
    with torch.random.fork_rng(devices=[]):
        with progress_bar if show_progress else nullcontext():
            for epoch in range(train_config.epochs):
                # Shuffling and dropout masks depend only on (seed, epoch)
                epoch_seed: int = derive_seed(train_config.seed, epoch)
                torch.manual_seed(epoch_seed)
                generator: torch.Generator = torch.Generator().manual_seed(epoch_seed)
                permutation: torch.Tensor = torch.randperm(len(train_inputs), generator=generator)
                model.train()
                total: float = 0.0
                for start in range(0, len(permutation), train_config.batch_size):
                    batch: torch.Tensor = permutation[start : start + train_config.batch_size]
                    optimizer.zero_grad()
                    loss: torch.Tensor = loss_function(model(train_inputs[batch]), train_targets[batch])
                    if not bool(torch.isfinite(loss)):
                        raise TrainingError(f"Loss diverged at epoch {epoch}: {float(loss)}", epoch, fraction_p)
                    loss.backward()
                    optimizer.step()
                    total += float(loss.detach().double()) * len(batch)
                train_history.append(total / len(permutation))
                val_history.append(_mean_squared_error(model, val_inputs, val_targets, train_config.batch_size))
                LOGGER.debug("Epoch %d: train MSE %g, validation MSE %g", epoch, train_history[-1], val_history[-1])
                if show_progress:
                    progress_bar.update(epoch + 1)
    LOGGER.info("Training done: final train MSE %g, validation MSE %g", train_history[-1], val_history[-1])
    return model, LossHistory(tuple(train_history), tuple(val_history))

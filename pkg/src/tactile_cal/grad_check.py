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

# Finite-difference check of the reverse-mode gradients of a small network slice, at float64.

import copy
from typing import Callable, List

import numpy as np
import torch
from rp2.rp2_error import RP2ValueError
from torch import nn

from tactile_cal.logger import LOGGER

MAX_SPATIAL_SIZE: int = 8
DEFAULT_EPSILON: float = 1e-6
_RELATIVE_FLOOR: float = 1e-4


def _relative_error(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    # Entries much smaller than the tensor's largest gradient are compared against that scale
    floor: float = max(_RELATIVE_FLOOR * float(torch.max(torch.abs(analytic))), 1e-12)
    denominator: torch.Tensor = torch.clamp(torch.maximum(torch.abs(analytic), torch.abs(numeric)), min=floor)
    return float(torch.max(torch.abs(analytic - numeric) / denominator))


def grad_check(model_slice: nn.Module, input_tensor: torch.Tensor, epsilon: float = DEFAULT_EPSILON, seed: int = 0) -> float:
    if input_tensor.ndim != 4:
        raise RP2ValueError(f"Input must be N x C x H x W, instead shape was {tuple(input_tensor.shape)}")
    if input_tensor.shape[2] > MAX_SPATIAL_SIZE or input_tensor.shape[3] > MAX_SPATIAL_SIZE:
        raise RP2ValueError(f"Gradient check is limited to {MAX_SPATIAL_SIZE}x{MAX_SPATIAL_SIZE} inputs: {tuple(input_tensor.shape)}")
    if not epsilon > 0:
        raise RP2ValueError(f"epsilon must be positive: {epsilon}")

    module: nn.Module = copy.deepcopy(model_slice).double()
    x: torch.Tensor = input_tensor.detach().double().clone().requires_grad_(True)
    with torch.no_grad():
        probe: torch.Tensor = module(x.detach())
    # Random projection of the output to a scalar, so that no gradient cancels out by symmetry
    projection: torch.Tensor = torch.from_numpy(np.random.default_rng(seed).standard_normal(tuple(probe.shape)))

    def objective() -> torch.Tensor:
        # Dropout masks must be the same in every evaluation
        torch.manual_seed(seed)
        return torch.sum(module(x) * projection)

    with torch.random.fork_rng(devices=[]):
        module.zero_grad()
        objective().backward()
        targets: List[torch.Tensor] = [x] + [parameter for parameter in module.parameters()]
        analytic: List[torch.Tensor] = [torch.zeros_like(target) if target.grad is None else target.grad.detach().clone() for target in targets]

        worst: float = 0.0
        with torch.no_grad():
            for target, gradient in zip(targets, analytic):
                numeric: torch.Tensor = _central_differences(target, objective, epsilon)
                worst = max(worst, _relative_error(gradient, numeric))
    LOGGER.debug("Gradient check: max relative error %g", worst)
    return worst


def _central_differences(target: torch.Tensor, objective: Callable[[], torch.Tensor], epsilon: float) -> torch.Tensor:
    result: torch.Tensor = torch.zeros_like(target)
    flat_target: torch.Tensor = target.data.view(-1)
    flat_result: torch.Tensor = result.view(-1)
    for i in range(flat_target.numel()):
        original: float = float(flat_target[i])
        flat_target[i] = original + epsilon
        plus: float = float(objective())
        flat_target[i] = original - epsilon
        minus: float = float(objective())
        flat_target[i] = original
        flat_result[i] = (plus - minus) / (2.0 * epsilon)
    return result

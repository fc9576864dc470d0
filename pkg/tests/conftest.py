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

from typing import Any, List

import pytest

from tactile_cal.dataset import Dataset, capture
from tactile_cal.gcode import ProbeRunConfig
from tactile_cal.plugin.sensor.simulated import SensorPlugin
from tactile_cal.probe_plan import PlanSplit, ProbePlan, generate_grid, split_plan
from tactile_cal.sensor_geometry import SensorGeometry
from tactile_cal.sensor_sim import IlluminationModel, default_illumination
from tactile_cal.touchnet import TouchNetConfig

# 6 x 8 mm gel imaged by a 12 x 16 camera at 0.5 mm/px: small enough for every test to train in seconds
TINY_GEOMETRY: SensorGeometry = SensorGeometry(rows=16, cols=12, pitch_mm_per_px=0.5, extent_mm=(6.0, 8.0))
TINY_CHANNELS = (4, 4, 8, 8, 8, 8, 4, 4, 2)


def pytest_addoption(parser: Any) -> None:
    parser.addoption("--run-slow", action="store_true", default=False, help="Run the slow end-to-end acceptance tests")


def pytest_configure(config: Any) -> None:
    config.addinivalue_line("markers", "slow: end-to-end acceptance runs (minutes to hours on a CPU)")


def pytest_collection_modifyitems(config: Any, items: List[Any]) -> None:
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def tiny_geometry() -> SensorGeometry:
    return TINY_GEOMETRY


@pytest.fixture(scope="session")
def tiny_illumination() -> IlluminationModel:
    return default_illumination(TINY_GEOMETRY, noise_sigma=1.0)


@pytest.fixture(scope="session")
def tiny_plan() -> ProbePlan:
    return generate_grid((6.0, 8.0), 2.0, 1.0, 2)


@pytest.fixture(scope="session")
def tiny_split(tiny_plan: ProbePlan) -> PlanSplit:
    return split_plan(tiny_plan, 0.8, 0)


@pytest.fixture(scope="session")
def run_config() -> ProbeRunConfig:
    return ProbeRunConfig(z_touch_mm=5.0, travel_z_mm=10.0)


@pytest.fixture
def tiny_sensor(tiny_illumination: IlluminationModel) -> SensorPlugin:
    return SensorPlugin(geometry=TINY_GEOMETRY, illumination=tiny_illumination)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_plan: ProbePlan, tiny_split: PlanSplit, tiny_illumination: IlluminationModel, run_config: ProbeRunConfig) -> Dataset:
    return capture(tiny_plan, tiny_split, SensorPlugin(geometry=TINY_GEOMETRY, illumination=tiny_illumination), run_config, seed=7)


@pytest.fixture(scope="session")
def tiny_network_config() -> TouchNetConfig:
    return TouchNetConfig(module_channels=TINY_CHANNELS)

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

from pathlib import Path
from typing import Any

import numpy as np
import pytest
from rp2.rp2_error import RP2TypeError, RP2ValueError

from tactile_cal.abstract_sensor_plugin import AbstractSensorPlugin
from tactile_cal.gcode import ProbeEvent
from tactile_cal.plugin.printer.ender3 import PrinterPlugin as Ender3PrinterPlugin
from tactile_cal.plugin.printer.generic import PrinterPlugin as GenericPrinterPlugin
from tactile_cal.plugin.sensor.callback import SensorPlugin as CallbackSensorPlugin
from tactile_cal.plugin.sensor.simulated import SensorPlugin as SimulatedSensorPlugin
from tactile_cal.probe_plan import ProbePoint
from tactile_cal.sensor_geometry import DIGIT_LIKE, SensorGeometry
from tactile_cal.sensor_sim import GradientMap, IlluminationModel, default_illumination, render

_CAPTURE_MODULE = """
import numpy as np

def gray_frame(event, frame_index, frame_depth_mm):
    return np.full((16, 12, 3), 10 * frame_index, dtype=np.uint8)

def wrong_frame(event, frame_index, frame_depth_mm):
    return np.zeros((4, 4, 3), dtype=np.uint8)

NOT_A_FUNCTION = 3
"""

_EVENT: ProbeEvent = ProbeEvent(0, ProbePoint(1.0, 2.0, 1.0), (1.0, 2.0, 4.0), (0, 1))


@pytest.fixture(name="capture_module")
def capture_module_fixture(tmp_path: Path, monkeypatch: Any) -> str:
    (tmp_path / "fake_sensor_driver.py").write_text(_CAPTURE_MODULE, encoding="utf-8")
    monkeypatch.syspath_prepend(str(tmp_path))
    return "fake_sensor_driver"


class TestPrinterPlugins:
    def test_ender3(self) -> None:
        printer = Ender3PrinterPlugin(z_touch=5.0, travel_z=10.0)
        assert printer.name() == "ender3"
        assert printer.machine_limits() == (220.0, 220.0, 250.0)
        run_config = printer.run_config()
        assert (run_config.z_touch_mm, run_config.travel_z_mm) == (5.0, 10.0)
        assert (run_config.feed_travel, run_config.feed_probe) == (3000.0, 300.0)
        assert run_config.machine_limits == (220.0, 220.0, 250.0)

    def test_generic(self) -> None:
        printer = GenericPrinterPlugin(z_touch=2.0, travel_z=8.0, limit_x=300.0, limit_y=300.0, limit_z=400.0, feed_probe=120.0)
        assert printer.name() == "generic"
        assert printer.run_config().machine_limits == (300.0, 300.0, 400.0)
        assert printer.run_config().feed_probe == 120.0

    def test_travel_below_touch(self) -> None:
        with pytest.raises(RP2ValueError):
            Ender3PrinterPlugin(z_touch=10.0, travel_z=10.0)

    def test_invalid_limits(self) -> None:
        with pytest.raises(RP2ValueError):
            GenericPrinterPlugin(z_touch=2.0, travel_z=8.0, limit_x=300.0, limit_y=0.0, limit_z=400.0)


class TestSimulatedSensorPlugin:
    def test_defaults(self) -> None:
        sensor = SimulatedSensorPlugin()
        assert sensor.name() == "simulated-digit"
        assert sensor.geometry == DIGIT_LIKE
        assert sensor.is_parallel_capture_supported
        assert sensor.config_hash() == sensor.illumination.digest()

    def test_downsampled_with_origin(self) -> None:
        sensor = SimulatedSensorPlugin(preset="gelsight_mini", downsample=2, origin_x=100.0, origin_y=50.0)
        assert (sensor.geometry.rows, sensor.geometry.cols) == (80, 60)
        assert sensor.geometry.origin_mm == (100.0, 50.0)

    def test_capture_renders_the_label(self, tiny_geometry: SensorGeometry, tiny_illumination: IlluminationModel) -> None:
        sensor = SimulatedSensorPlugin(geometry=tiny_geometry, illumination=tiny_illumination)
        label = GradientMap(np.full((16, 12), 0.3), np.full((16, 12), -0.1))
        image = sensor.capture(_EVENT, 1, 0.5, label, 42)
        assert np.array_equal(image.pixels, render(label, tiny_illumination, 42).pixels)

    def test_illumination_mismatch(self, tiny_geometry: SensorGeometry) -> None:
        with pytest.raises(RP2ValueError):
            SimulatedSensorPlugin(geometry=tiny_geometry, illumination=default_illumination(DIGIT_LIKE))


class TestCallbackSensorPlugin:
    def test_capture(self, capture_module: str, tiny_geometry: SensorGeometry) -> None:
        sensor = CallbackSensorPlugin(f"{capture_module}:gray_frame", geometry=tiny_geometry)
        assert sensor.name() == f"callback-{capture_module}:gray_frame"
        assert not sensor.is_parallel_capture_supported
        image = sensor.capture(_EVENT, 2, 1.0, GradientMap.zeros(16, 12), 0)
        assert image.pixels.shape == (16, 12, 3)
        assert np.all(image.pixels == 20)

    def test_config_hash(self, capture_module: str, tiny_geometry: SensorGeometry) -> None:
        first = CallbackSensorPlugin(f"{capture_module}:gray_frame", geometry=tiny_geometry)
        second = CallbackSensorPlugin(f"{capture_module}:gray_frame", geometry=tiny_geometry)
        other = CallbackSensorPlugin(f"{capture_module}:wrong_frame", geometry=tiny_geometry)
        assert first.config_hash() == second.config_hash() != other.config_hash()

    def test_wrong_frame_size(self, capture_module: str, tiny_geometry: SensorGeometry) -> None:
        sensor = CallbackSensorPlugin(f"{capture_module}:wrong_frame", geometry=tiny_geometry)
        with pytest.raises(RP2ValueError):
            sensor.capture(_EVENT, 0, 0.0, GradientMap.zeros(16, 12), 0)

    def test_invalid_capture_function(self, capture_module: str) -> None:
        with pytest.raises(RP2ValueError):
            CallbackSensorPlugin("gray_frame")
        with pytest.raises(RP2TypeError):
            CallbackSensorPlugin(f"{capture_module}:NOT_A_FUNCTION")
        with pytest.raises(ModuleNotFoundError):
            CallbackSensorPlugin("no_such_driver_module:gray_frame")


class TestAbstractSensorPlugin:
    def test_abstract_methods(self, tiny_geometry: SensorGeometry) -> None:
        sensor = AbstractSensorPlugin(tiny_geometry)
        with pytest.raises(NotImplementedError):
            sensor.name()
        with pytest.raises(NotImplementedError):
            sensor.capture(_EVENT, 0, 0.0, GradientMap.zeros(16, 12), 0)
        sensor.connect()
        sensor.close()

    def test_geometry_type(self) -> None:
        with pytest.raises(RP2TypeError):
            AbstractSensorPlugin((16, 12))  # type: ignore

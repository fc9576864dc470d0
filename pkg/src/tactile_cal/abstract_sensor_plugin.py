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

from rp2.rp2_error import RP2TypeError

from tactile_cal.gcode import ProbeEvent
from tactile_cal.sensor_geometry import SensorGeometry
from tactile_cal.sensor_sim import GradientMap, TactileImage


class AbstractSensorPlugin:
    def __init__(self, geometry: SensorGeometry) -> None:
        if not isinstance(geometry, SensorGeometry):
            raise RP2TypeError(f"geometry is not a SensorGeometry: {geometry}")
        self.__geometry: SensorGeometry = geometry.validate()

    @property
    def geometry(self) -> SensorGeometry:
        return self.__geometry

    def name(self) -> str:
        raise NotImplementedError("Abstract method: it must be implemented in the plugin class")

    # Identifies the sensor configuration in dataset manifests
    def config_hash(self) -> str:
        raise NotImplementedError("Abstract method: it must be implemented in the plugin class")

    # True if capture() may be called concurrently for different probe events
    @property
    def is_parallel_capture_supported(self) -> bool:
        return False

    def connect(self) -> None:
        pass

    # Called once per frame at an M400 barrier. label is the analytic gradient map of the frame.
    def capture(self, event: ProbeEvent, frame_index: int, frame_depth_mm: float, label: GradientMap, seed: int) -> TactileImage:
        raise NotImplementedError("Abstract method: it must be implemented in the plugin class")

    def close(self) -> None:
        pass

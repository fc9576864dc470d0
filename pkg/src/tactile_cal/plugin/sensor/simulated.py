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

from typing import Optional

from rp2.rp2_error import RP2ValueError

from tactile_cal.abstract_sensor_plugin import AbstractSensorPlugin
from tactile_cal.configuration import DEFAULT_NOISE_SIGMA
from tactile_cal.gcode import ProbeEvent
from tactile_cal.sensor_geometry import SensorGeometry, sensor_preset
from tactile_cal.sensor_sim import GradientMap, IlluminationModel, TactileImage, default_illumination, render


# Photometric simulator standing in for a physical sensor: each frame is its label rendered through the illumination model.
class SensorPlugin(AbstractSensorPlugin):
    def __init__(
        self,
        preset: str = "digit",
        downsample: int = 1,
        noise_sigma: float = DEFAULT_NOISE_SIGMA,
        origin_x: float = 0.0,
        origin_y: float = 0.0,
        geometry: Optional[SensorGeometry] = None,
        illumination: Optional[IlluminationModel] = None,
    ) -> None:
        if geometry is None:
            geometry = sensor_preset(preset).downsampled(downsample)._replace(origin_mm=(origin_x, origin_y))
        super().__init__(geometry)
        if illumination is None:
            illumination = default_illumination(self.geometry, noise_sigma)
        if (illumination.rows, illumination.cols) != (self.geometry.rows, self.geometry.cols):
            raise RP2ValueError(f"Illumination is {illumination.rows}x{illumination.cols}, sensor is {self.geometry.rows}x{self.geometry.cols}")
        self.__preset: str = preset
        self.__illumination: IlluminationModel = illumination.validate()

    def name(self) -> str:
        return f"simulated-{self.__preset}"

    def config_hash(self) -> str:
        return self.__illumination.digest()

    @property
    def illumination(self) -> IlluminationModel:
        return self.__illumination

    @property
    def is_parallel_capture_supported(self) -> bool:
        return True

    def capture(self, event: ProbeEvent, frame_index: int, frame_depth_mm: float, label: GradientMap, seed: int) -> TactileImage:
        return render(label, self.__illumination, seed)

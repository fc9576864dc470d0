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

import hashlib
import logging
from importlib import import_module
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray
from rp2.rp2_error import RP2TypeError, RP2ValueError

from tactile_cal.abstract_sensor_plugin import AbstractSensorPlugin
from tactile_cal.gcode import ProbeEvent
from tactile_cal.logger import plugin_logger
from tactile_cal.sensor_geometry import SensorGeometry, sensor_preset
from tactile_cal.sensor_sim import GradientMap, TactileImage

CaptureFunction = Callable[[ProbeEvent, int, float], NDArray[np.uint8]]


# Real-sensor capture path: a user function, given as "package.module:function", returns one rows x cols x 3 uint8 frame
# per call. Vendor drivers live in user code.
class SensorPlugin(AbstractSensorPlugin):
    def __init__(
        self,
        capture_function: str,
        preset: str = "digit",
        downsample: int = 1,
        geometry: Optional[SensorGeometry] = None,
    ) -> None:
        super().__init__(geometry if geometry is not None else sensor_preset(preset).downsampled(downsample))
        if not isinstance(capture_function, str) or ":" not in capture_function:
            raise RP2ValueError(f"capture_function must have the form 'package.module:function': {capture_function}")
        module_name, function_name = capture_function.split(":", 1)
        function: object = getattr(import_module(module_name), function_name, None)
        if not callable(function):
            raise RP2TypeError(f"'{capture_function}' is not a callable")
        self.__capture_function_name: str = capture_function
        self.__capture_function: CaptureFunction = function  # type: ignore
        self.__logger: logging.Logger = plugin_logger("sensor", f"callback/{function_name}")

    def name(self) -> str:
        return f"callback-{self.__capture_function_name}"

    def config_hash(self) -> str:
        return hashlib.sha256(f"{self.__capture_function_name}|{self.geometry}".encode("utf-8")).hexdigest()

    def capture(self, event: ProbeEvent, frame_index: int, frame_depth_mm: float, label: GradientMap, seed: int) -> TactileImage:
        self.__logger.debug("Capturing frame %d of probe event %d at depth %f", frame_index, event.plan_index, frame_depth_mm)
        pixels: NDArray[np.uint8] = np.asarray(self.__capture_function(event, frame_index, frame_depth_mm))
        return TactileImage(pixels).validate(self.geometry)

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

from rp2.rp2_error import RP2ValueError

from tactile_cal.configuration import DEFAULT_FEED_PROBE, DEFAULT_FEED_TRAVEL
from tactile_cal.gcode import Position, ProbeRunConfig


class AbstractPrinterPlugin:
    def __init__(
        self,
        z_touch: float,
        travel_z: float,
        feed_travel: float = DEFAULT_FEED_TRAVEL,
        feed_probe: float = DEFAULT_FEED_PROBE,
    ) -> None:
        if not travel_z > z_touch:
            raise RP2ValueError(f"travel_z ({travel_z}) must be greater than z_touch ({z_touch})")
        self.__z_touch: float = z_touch
        self.__travel_z: float = travel_z
        self.__feed_travel: float = feed_travel
        self.__feed_probe: float = feed_probe

    def name(self) -> str:
        raise NotImplementedError("Abstract method: it must be implemented in the plugin class")

    def machine_limits(self) -> Position:
        raise NotImplementedError("Abstract method: it must be implemented in the plugin class")

    def run_config(self) -> ProbeRunConfig:
        return ProbeRunConfig(self.__z_touch, self.__travel_z, self.__feed_travel, self.__feed_probe, self.machine_limits()).validate()

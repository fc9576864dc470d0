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

from tactile_cal.abstract_printer_plugin import AbstractPrinterPlugin
from tactile_cal.configuration import DEFAULT_FEED_PROBE, DEFAULT_FEED_TRAVEL
from tactile_cal.gcode import Position


# Any G-code printer: build volume given in the configuration
class PrinterPlugin(AbstractPrinterPlugin):
    def __init__(
        self,
        z_touch: float,
        travel_z: float,
        limit_x: float,
        limit_y: float,
        limit_z: float,
        feed_travel: float = DEFAULT_FEED_TRAVEL,
        feed_probe: float = DEFAULT_FEED_PROBE,
    ) -> None:
        super().__init__(z_touch, travel_z, feed_travel, feed_probe)
        if not (limit_x > 0 and limit_y > 0 and limit_z > 0):
            raise RP2ValueError(f"Machine limits must be positive: {limit_x}, {limit_y}, {limit_z}")
        self.__limits: Position = (limit_x, limit_y, limit_z)

    def name(self) -> str:
        return "generic"

    def machine_limits(self) -> Position:
        return self.__limits

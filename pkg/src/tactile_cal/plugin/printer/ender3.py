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

from tactile_cal.abstract_printer_plugin import AbstractPrinterPlugin
from tactile_cal.gcode import Position

# Creality Ender 3 build volume
_ENDER3_LIMITS: Position = (220.0, 220.0, 250.0)


class PrinterPlugin(AbstractPrinterPlugin):
    def name(self) -> str:
        return "ender3"

    def machine_limits(self) -> Position:
        return _ENDER3_LIMITS

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
import re
from enum import Enum
from types import MappingProxyType
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from rp2.rp2_error import RP2TypeError, RP2ValueError

from tactile_cal.calibration_error import ParseError, ProtocolError, RangeError
from tactile_cal.configuration import DEFAULT_FEED_PROBE, DEFAULT_FEED_TRAVEL
from tactile_cal.probe_plan import ProbePlan, ProbePoint

Position = Tuple[float, float, float]

AXES: Tuple[str, str, str] = ("X", "Y", "Z")
PARAMETER_LETTERS: Tuple[str, str, str, str] = ("X", "Y", "Z", "F")

_OPCODE_REGEX = re.compile(r"^([GM])(\d+)$")
_PARAMETER_REGEX = re.compile(r"^([A-Z])([+-]?(?:\d+\.?\d*|\.\d+)(?:E[+-]?\d+)?)$")


class Opcode(Enum):
    G0 = "G0"
    G1 = "G1"
    G28 = "G28"
    G90 = "G90"
    G91 = "G91"
    M400 = "M400"


MOTION_OPCODE_SET = {Opcode.G0, Opcode.G1}


class GCodeCommand(NamedTuple):
    opcode: Opcode
    params: Mapping[str, float] = MappingProxyType({})

    def validate(self) -> "GCodeCommand":
        if not isinstance(self.opcode, Opcode):
            raise RP2TypeError(f"opcode is not an Opcode: {self.opcode}")
        if self.params and self.opcode not in MOTION_OPCODE_SET:
            raise RP2ValueError(f"{self.opcode.value} takes no parameters: {self.params}")
        for letter, value in self.params.items():
            if letter not in PARAMETER_LETTERS:
                raise RP2ValueError(f"Unsupported parameter letter '{letter}' in {self.opcode.value}")
            if not math.isfinite(value):
                raise RP2ValueError(f"Parameter {letter} of {self.opcode.value} is not finite: {value}")
        if "F" in self.params and not self.params["F"] > 0:
            raise RP2ValueError(f"Feed F must be positive: {self.params['F']}")
        return self


class PrinterState(NamedTuple):
    position: Position
    homed: bool
    absolute_mode: bool
    feed_mm_per_min: float


class ProbeEvent(NamedTuple):
    plan_index: int
    commanded: ProbePoint
    achieved: Position
    frame_indices: Tuple[int, ...]


class ProbeRunConfig(NamedTuple):
    z_touch_mm: float
    travel_z_mm: float
    feed_travel: float = DEFAULT_FEED_TRAVEL
    feed_probe: float = DEFAULT_FEED_PROBE
    machine_limits: Position = (220.0, 220.0, 250.0)

    def validate(self) -> "ProbeRunConfig":
        if not self.travel_z_mm > self.z_touch_mm:
            raise RP2ValueError(f"travel_z ({self.travel_z_mm}) must be greater than z_touch ({self.z_touch_mm})")
        if not (self.feed_travel > 0 and self.feed_probe > 0):
            raise RP2ValueError(f"Feeds must be positive: travel={self.feed_travel}, probe={self.feed_probe}")
        if not all(limit > 0 for limit in self.machine_limits):
            raise RP2ValueError(f"Machine limits must be positive: {self.machine_limits}")
        if self.travel_z_mm > self.machine_limits[2]:
            raise RP2ValueError(f"travel_z ({self.travel_z_mm}) exceeds the machine z limit {self.machine_limits[2]}")
        return self

    # Same arithmetic as the generated program, so achieved positions compare bit-exactly.
    def commanded_position(self, point: ProbePoint) -> Position:
        return (point.x_mm, point.y_mm, self.z_touch_mm - point.depth_mm)


def _within_limits(position: Position, limits: Position) -> bool:
    return all(0.0 <= value <= limit for value, limit in zip(position, limits))


def plan_to_gcode(plan: ProbePlan, run_config: ProbeRunConfig) -> List[GCodeCommand]:
    run_config.validate()
    result: List[GCodeCommand] = [GCodeCommand(Opcode.G28), GCodeCommand(Opcode.G90)]
    if not plan.points:
        return result

    for index, point in enumerate(plan.points):
        plunge: Position = run_config.commanded_position(point)
        if not _within_limits(plunge, run_config.machine_limits):
            raise RangeError(
                f"Point {index} ({point.x_mm}, {point.y_mm}, depth {point.depth_mm}) is outside the machine limits {run_config.machine_limits}", index
            )

    result.append(GCodeCommand(Opcode.G0, {"Z": run_config.travel_z_mm, "F": run_config.feed_travel}))
    for point in plan.points:
        x_mm, y_mm, z_mm = run_config.commanded_position(point)
        result.append(GCodeCommand(Opcode.G0, {"X": x_mm, "Y": y_mm, "Z": run_config.travel_z_mm, "F": run_config.feed_travel}))
        result.append(GCodeCommand(Opcode.G1, {"Z": z_mm, "F": run_config.feed_probe}))
        result.append(GCodeCommand(Opcode.M400))
        result.append(GCodeCommand(Opcode.G1, {"Z": run_config.travel_z_mm, "F": run_config.feed_probe}))
    return result


def _format_value(value: float) -> str:
    # Shortest positional digit string that parses back to the same double
    return np.format_float_positional(value, unique=True, trim="-")


def render_command(command: GCodeCommand) -> str:
    fields: List[str] = [command.opcode.value]
    for letter in PARAMETER_LETTERS:
        if letter in command.params:
            fields.append(f"{letter}{_format_value(command.params[letter])}")
    return " ".join(fields)


def render_gcode(commands: Sequence[GCodeCommand]) -> str:
    return "".join(f"{render_command(command)}\n" for command in commands)


def parse_gcode(text: str) -> List[GCodeCommand]:
    result: List[GCodeCommand] = []
    for line_number, raw_line in enumerate(text.split("\n"), 1):
        line: str = raw_line.split(";", 1)[0].strip().upper()
        if not line:
            continue
        tokens: List[str] = line.split()
        match = _OPCODE_REGEX.match(tokens[0])
        if match is None:
            raise ParseError(f"Unknown opcode '{tokens[0]}'", line_number)
        normalized: str = f"{match.group(1)}{int(match.group(2))}"
        try:
            opcode: Opcode = Opcode(normalized)
        except ValueError as exc:
            raise ParseError(f"Unsupported opcode '{tokens[0]}'", line_number) from exc

        params: Dict[str, float] = {}
        for token in tokens[1:]:
            parameter_match = _PARAMETER_REGEX.match(token)
            if parameter_match is None:
                raise ParseError(f"Malformed parameter '{token}'", line_number)
            letter: str = parameter_match.group(1)
            if letter not in PARAMETER_LETTERS:
                raise ParseError(f"Unsupported parameter letter '{letter}'", line_number)
            if letter in params:
                raise ParseError(f"Duplicate parameter '{letter}'", line_number)
            params[letter] = float(parameter_match.group(2))

        try:
            result.append(GCodeCommand(opcode, params).validate())
        except RP2ValueError as exc:
            raise ParseError(str(exc), line_number) from exc
    return result


# Deterministic interpreter of the supported opcode subset. An M400 issued while the tool is at or below z_touch
# is a capture barrier and produces a ProbeEvent.
class GCodeInterpreter:
    def __init__(self, run_config: ProbeRunConfig, frames_per_indent: int, plan: Optional[ProbePlan] = None) -> None:
        if frames_per_indent < 1:
            raise RP2ValueError(f"frames_per_indent must be >= 1: {frames_per_indent}")
        self.__run_config: ProbeRunConfig = run_config.validate()
        self.__frames_per_indent: int = frames_per_indent
        self.__plan: Optional[ProbePlan] = plan
        self.__state: PrinterState = PrinterState((0.0, 0.0, 0.0), False, True, run_config.feed_travel)
        self.__event_count: int = 0

    @property
    def state(self) -> PrinterState:
        return self.__state

    def step(self, command: GCodeCommand, command_index: int = 0) -> Optional[ProbeEvent]:
        command.validate()
        state: PrinterState = self.__state
        if command.opcode == Opcode.G28:
            self.__state = state._replace(position=(0.0, 0.0, 0.0), homed=True)
        elif command.opcode == Opcode.G90:
            self.__state = state._replace(absolute_mode=True)
        elif command.opcode == Opcode.G91:
            self.__state = state._replace(absolute_mode=False)
        elif command.opcode in MOTION_OPCODE_SET:
            if not state.homed:
                raise ProtocolError(f"Command {command_index} ({render_command(command)}): motion before homing (G28)")
            target: List[float] = list(state.position)
            for axis_index, axis in enumerate(AXES):
                if axis in command.params:
                    target[axis_index] = command.params[axis] if state.absolute_mode else target[axis_index] + command.params[axis]
            position: Position = (target[0], target[1], target[2])
            if not _within_limits(position, self.__run_config.machine_limits):
                raise RangeError(
                    f"Command {command_index} ({render_command(command)}): target {position} outside travel limits {self.__run_config.machine_limits}",
                    command_index,
                )
            self.__state = state._replace(position=position, feed_mm_per_min=command.params.get("F", state.feed_mm_per_min))
        elif command.opcode == Opcode.M400:
            if state.homed and state.position[2] <= self.__run_config.z_touch_mm:
                return self.__make_event()
        else:
            raise RP2ValueError(f"Internal error: unhandled opcode {command.opcode}")
        return None

    def __make_event(self) -> ProbeEvent:
        index: int = self.__event_count
        self.__event_count += 1
        x_mm, y_mm, z_mm = self.__state.position
        commanded: ProbePoint
        if self.__plan is not None and index < len(self.__plan.points):
            commanded = self.__plan.points[index]
        else:
            commanded = ProbePoint(x_mm, y_mm, self.__run_config.z_touch_mm - z_mm)
        first_frame: int = index * self.__frames_per_indent
        return ProbeEvent(index, commanded, self.__state.position, tuple(range(first_frame, first_frame + self.__frames_per_indent)))


def virtual_execute(
    commands: Sequence[GCodeCommand],
    frames_per_indent: int,
    run_config: ProbeRunConfig,
    plan: Optional[ProbePlan] = None,
) -> Tuple[PrinterState, List[ProbeEvent]]:
    interpreter: GCodeInterpreter = GCodeInterpreter(run_config, frames_per_indent, plan)
    events: List[ProbeEvent] = []
    for index, command in enumerate(commands):
        event: Optional[ProbeEvent] = interpreter.step(command, index)
        if event is not None:
            events.append(event)
    return interpreter.state, events

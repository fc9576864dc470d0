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

import time
from enum import Enum
from threading import Event
from typing import Callable, Iterator, Optional, Sequence

import serial
from rp2.rp2_error import RP2ValueError

from tactile_cal.calibration_error import TransportError
from tactile_cal.configuration import DEFAULT_ACK_TIMEOUT_S, DEFAULT_BAUD
from tactile_cal.gcode import GCodeCommand, GCodeInterpreter, ProbeEvent, ProbeRunConfig, render_command
from tactile_cal.logger import LOGGER
from tactile_cal.probe_plan import ProbePlan

ACKNOWLEDGEMENT_PREFIX: str = "ok"

CaptureCallback = Callable[[ProbeEvent], None]


class RunStatus(Enum):
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    ABORTED = "aborted"


# Line-oriented transport to a G-code peer.
class AbstractTransport:
    def send_line(self, line: str) -> None:
        raise NotImplementedError("Abstract method: it must be implemented in the transport class")

    # Returns None if no complete line arrived within timeout seconds
    def read_line(self, timeout: float) -> Optional[str]:
        raise NotImplementedError("Abstract method: it must be implemented in the transport class")

    @property
    def is_open(self) -> bool:
        raise NotImplementedError("Abstract method: it must be implemented in the transport class")

    def close(self) -> None:
        raise NotImplementedError("Abstract method: it must be implemented in the transport class")


class SerialTransport(AbstractTransport):
    def __init__(self, port: str, baud: int = DEFAULT_BAUD) -> None:
        if baud <= 0:
            raise RP2ValueError(f"baud must be positive: {baud}")
        self.__serial: serial.Serial = serial.Serial(port, baud, timeout=DEFAULT_ACK_TIMEOUT_S)
        self.__port: str = port

    def __str__(self) -> str:
        return f"SerialTransport({self.__port})"

    def send_line(self, line: str) -> None:
        self.__serial.write(f"{line}\n".encode("ascii"))
        self.__serial.flush()

    def read_line(self, timeout: float) -> Optional[str]:
        self.__serial.timeout = max(timeout, 0.0)
        raw: bytes = self.__serial.readline()
        if not raw.endswith(b"\n"):
            return None
        return raw.decode("ascii", errors="replace").strip()

    @property
    def is_open(self) -> bool:
        return bool(self.__serial.is_open)

    def close(self) -> None:
        self.__serial.close()


# Streams commands one at a time, waiting for the peer's "ok" after each. The same interpreter used by the
# virtual printer tracks position, so the emitted events are identical to virtual_execute's.
class SerialRunner:
    def __init__(
        self,
        transport: AbstractTransport,
        run_config: ProbeRunConfig,
        frames_per_indent: int,
        capture_callback: Optional[CaptureCallback] = None,
        plan: Optional[ProbePlan] = None,
        ack_timeout: float = DEFAULT_ACK_TIMEOUT_S,
        cancel_event: Optional[Event] = None,
    ) -> None:
        if not ack_timeout > 0:
            raise RP2ValueError(f"ack_timeout must be positive: {ack_timeout}")
        self.__transport: AbstractTransport = transport
        self.__interpreter: GCodeInterpreter = GCodeInterpreter(run_config, frames_per_indent, plan)
        self.__capture_callback: Optional[CaptureCallback] = capture_callback
        self.__ack_timeout: float = ack_timeout
        self.__cancel_event: Event = cancel_event if cancel_event is not None else Event()
        self.__status: RunStatus = RunStatus.PENDING

    @property
    def status(self) -> RunStatus:
        return self.__status

    def abort(self) -> None:
        self.__cancel_event.set()

    def run(self, commands: Sequence[GCodeCommand]) -> Iterator[ProbeEvent]:
        self.__status = RunStatus.RUNNING
        for index, command in enumerate(commands):
            if self.__cancel_event.is_set() or not self.__transport.is_open:
                LOGGER.info("Serial run aborted before command %d of %d", index, len(commands))
                self.__status = RunStatus.ABORTED
                return
            line: str = render_command(command)
            self.__transport.send_line(line)
            if not self.__await_acknowledgement(index, line):
                LOGGER.info("Transport closed while waiting for acknowledgement of command %d (%s)", index, line)
                self.__status = RunStatus.ABORTED
                return
            event: Optional[ProbeEvent] = self.__interpreter.step(command, index)
            if event is not None:
                LOGGER.debug("Probe event %d at %s", event.plan_index, event.achieved)
                if self.__capture_callback is not None:
                    self.__capture_callback(event)
                yield event
        self.__status = RunStatus.COMPLETED

    def __await_acknowledgement(self, index: int, line: str) -> bool:
        deadline: float = time.monotonic() + self.__ack_timeout
        while True:
            if not self.__transport.is_open:
                return False
            remaining: float = deadline - time.monotonic()
            if remaining <= 0:
                raise TransportError(f"No acknowledgement for command {index} ({line}) within {self.__ack_timeout} s")
            reply: Optional[str] = self.__transport.read_line(remaining)
            if reply is None:
                continue
            if reply.startswith(ACKNOWLEDGEMENT_PREFIX):
                return True
            LOGGER.debug("Printer: %s", reply)


def serial_run(
    commands: Sequence[GCodeCommand],
    transport: AbstractTransport,
    run_config: ProbeRunConfig,
    frames_per_indent: int,
    capture_callback: Optional[CaptureCallback] = None,
    plan: Optional[ProbePlan] = None,
    ack_timeout: float = DEFAULT_ACK_TIMEOUT_S,
    cancel_event: Optional[Event] = None,
) -> Iterator[ProbeEvent]:
    runner: SerialRunner = SerialRunner(transport, run_config, frames_per_indent, capture_callback, plan, ack_timeout, cancel_event)
    return runner.run(commands)

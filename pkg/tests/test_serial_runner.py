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
from threading import Event
from typing import Any, List, Optional

import pytest

from tactile_cal.calibration_error import TransportError
from tactile_cal.gcode import ProbeEvent, ProbeRunConfig, parse_gcode, plan_to_gcode, virtual_execute
from tactile_cal.probe_plan import generate_grid
from tactile_cal.serial_runner import AbstractTransport, RunStatus, SerialRunner, SerialTransport, serial_run

RUN_CONFIG: ProbeRunConfig = ProbeRunConfig(z_touch_mm=10.0, travel_z_mm=15.0)


# Printer stand-in: echoes a chatty line before acknowledging each command
class EchoTransport(AbstractTransport):
    def __init__(self, close_after: Optional[int] = None, acknowledge: bool = True) -> None:
        self.sent: List[str] = []
        self.__pending: List[str] = []
        self.__close_after: Optional[int] = close_after
        self.__acknowledge: bool = acknowledge
        self.__open: bool = True

    def send_line(self, line: str) -> None:
        self.sent.append(line)
        if self.__close_after is not None and len(self.sent) > self.__close_after:
            self.__open = False
            return
        if self.__acknowledge:
            self.__pending.extend(["echo: busy processing", "ok"])

    def read_line(self, timeout: float) -> Optional[str]:
        if self.__pending:
            return self.__pending.pop(0)
        time.sleep(min(timeout, 0.01))
        return None

    @property
    def is_open(self) -> bool:
        return self.__open

    def close(self) -> None:
        self.__open = False


class TestSerialRun:
    def test_matches_virtual_printer(self) -> None:
        plan = generate_grid((1.0, 1.0), 0.5, 0.8, 30)
        program = plan_to_gcode(plan, RUN_CONFIG)
        transport = EchoTransport()
        captured: List[ProbeEvent] = []

        events = list(serial_run(program, transport, RUN_CONFIG, 30, captured.append, plan))

        _, expected = virtual_execute(program, 30, RUN_CONFIG, plan)
        assert events == expected
        assert captured == expected
        assert parse_gcode("\n".join(transport.sent)) == program

    def test_never_acknowledged(self) -> None:
        program = plan_to_gcode(generate_grid((1.0, 1.0), 0.5, 0.8, 30), RUN_CONFIG)
        start = time.monotonic()
        with pytest.raises(TransportError, match="No acknowledgement for command 0"):
            list(serial_run(program, EchoTransport(acknowledge=False), RUN_CONFIG, 30, ack_timeout=0.2))
        assert time.monotonic() - start >= 0.2

    @pytest.mark.parametrize("abort_after", [0, 1, 4])
    def test_abort_after_events(self, abort_after: int) -> None:
        plan = generate_grid((1.0, 1.0), 0.5, 0.8, 30)
        cancel = Event()
        if abort_after == 0:
            cancel.set()
        captured: List[ProbeEvent] = []

        def capture(event: ProbeEvent) -> None:
            captured.append(event)
            if len(captured) == abort_after:
                cancel.set()

        runner = SerialRunner(EchoTransport(), RUN_CONFIG, 30, capture, plan, cancel_event=cancel)
        assert runner.status == RunStatus.PENDING
        events = list(runner.run(plan_to_gcode(plan, RUN_CONFIG)))
        assert len(events) == abort_after
        assert runner.status == RunStatus.ABORTED

    def test_abort_method(self) -> None:
        plan = generate_grid((1.0, 1.0), 0.5, 0.8, 30)
        runner = SerialRunner(EchoTransport(), RUN_CONFIG, 30, plan=plan)
        events: List[ProbeEvent] = []
        for event in runner.run(plan_to_gcode(plan, RUN_CONFIG)):
            events.append(event)
            if len(events) == 2:
                runner.abort()
        assert len(events) == 2
        assert runner.status == RunStatus.ABORTED

    def test_transport_closed(self) -> None:
        plan = generate_grid((1.0, 1.0), 0.5, 0.8, 30)
        runner = SerialRunner(EchoTransport(close_after=8), RUN_CONFIG, 30, plan=plan)
        events = list(runner.run(plan_to_gcode(plan, RUN_CONFIG)))
        # G28, G90, G0 Z, then one point takes 4 commands: the ninth send closes before its acknowledgement
        assert len(events) == 1
        assert runner.status == RunStatus.ABORTED

    def test_completed_status(self) -> None:
        plan = generate_grid((1.0, 1.0), 0.5, 0.8, 30)
        runner = SerialRunner(EchoTransport(), RUN_CONFIG, 30, plan=plan)
        list(runner.run(plan_to_gcode(plan, RUN_CONFIG)))
        assert runner.status == RunStatus.COMPLETED


class TestSerialTransport:
    def test_line_framing(self, mocker: Any) -> None:
        port = mocker.MagicMock()
        port.readline.side_effect = [b"ok\n", b"ok T:20"]
        port.is_open = True
        mocker.patch("tactile_cal.serial_runner.serial.Serial", return_value=port)

        transport = SerialTransport("/dev/ttyUSB0", 250000)
        transport.send_line("G28")
        port.write.assert_called_once_with(b"G28\n")
        assert transport.read_line(1.0) == "ok"
        assert transport.read_line(1.0) is None
        assert transport.is_open
        transport.close()
        port.close.assert_called_once()

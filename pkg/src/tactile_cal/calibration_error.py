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

from typing import TYPE_CHECKING, List, Optional

from rp2.rp2_error import RP2RuntimeError, RP2ValueError

if TYPE_CHECKING:
    from tactile_cal.dataset import Dataset


class ParseError(RP2ValueError):
    def __init__(self, message: str, line_number: Optional[int] = None) -> None:
        super().__init__(f"line {line_number}: {message}" if line_number is not None else message)
        self.line_number: Optional[int] = line_number


class FormatError(RP2ValueError):
    pass


class RangeError(RP2ValueError):
    def __init__(self, message: str, index: Optional[int] = None) -> None:
        super().__init__(message)
        self.index: Optional[int] = index


class EmptyIntersectionError(RP2ValueError):
    pass


class AlignmentError(RP2ValueError):
    pass


class ProtocolError(RP2RuntimeError):
    pass


class TransportError(RP2RuntimeError):
    pass


class NumericError(RP2RuntimeError):
    def __init__(self, message: str, module_name: Optional[str] = None) -> None:
        super().__init__(message)
        self.module_name: Optional[str] = module_name


class TrainingError(RP2RuntimeError):
    def __init__(self, message: str, epoch: int, fraction_p: Optional[float] = None) -> None:
        super().__init__(message if fraction_p is None else f"P={fraction_p}: {message}")
        self.epoch: int = epoch
        self.fraction_p: Optional[float] = fraction_p


class CaptureError(RP2RuntimeError):
    def __init__(self, message: str, partial_dataset: "Dataset", completed_indices: List[int], failed_index: int) -> None:
        super().__init__(message)
        self.partial_dataset: "Dataset" = partial_dataset
        self.completed_indices: List[int] = completed_indices
        self.failed_index: int = failed_index


class ChecksumError(RP2RuntimeError):
    pass


class FormatVersionError(RP2RuntimeError):
    pass

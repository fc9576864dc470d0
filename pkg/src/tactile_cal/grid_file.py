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

# Shared binary grid format:
#   8 bytes   magic "3DCGRID1"
#   u32       rows (little endian)
#   u32       cols
#   u32       channels
#   u8        units tag
#   f32 * N   values, row-major, channels interleaved (rows x cols x channels)
#   u32       CRC32 of every preceding byte

import struct
import zlib
from enum import IntEnum
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np
from numpy.typing import NDArray
from rp2.rp2_error import RP2TypeError, RP2ValueError

from tactile_cal.calibration_error import ChecksumError, FormatVersionError, ParseError

GRID_MAGIC_PREFIX: bytes = b"3DCGRID"
GRID_VERSION: bytes = b"1"
GRID_MAGIC: bytes = GRID_MAGIC_PREFIX + GRID_VERSION

_HEADER: struct.Struct = struct.Struct("<8sIIIB")
_CRC: struct.Struct = struct.Struct("<I")
_VALUE_DTYPE: str = "<f4"


class GridUnits(IntEnum):
    MM = 0
    UM = 1
    DIMENSIONLESS = 2


class Grid(NamedTuple):
    values: NDArray[np.float32]
    units: GridUnits

    @property
    def rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def cols(self) -> int:
        return int(self.values.shape[1])

    @property
    def channels(self) -> int:
        return 1 if self.values.ndim == 2 else int(self.values.shape[2])


def encode_grid(values: NDArray[np.floating], units: GridUnits) -> bytes:
    if not isinstance(units, GridUnits):
        raise RP2TypeError(f"units is not a GridUnits: {units}")
    array: NDArray[np.floating] = np.asarray(values)
    if array.ndim not in (2, 3):
        raise RP2ValueError(f"Grid values must be 2D or 3D, instead shape was {array.shape}")
    rows: int = int(array.shape[0])
    cols: int = int(array.shape[1])
    channels: int = 1 if array.ndim == 2 else int(array.shape[2])
    body: bytes = _HEADER.pack(GRID_MAGIC, rows, cols, channels, int(units)) + np.ascontiguousarray(array, dtype=_VALUE_DTYPE).tobytes()
    return body + _CRC.pack(zlib.crc32(body))


def decode_grid(data: bytes) -> Grid:
    if len(data) < _HEADER.size + _CRC.size:
        raise ParseError(f"Grid data too short ({len(data)} bytes)")
    magic: bytes = data[:8]
    if not magic.startswith(GRID_MAGIC_PREFIX):
        raise ParseError(f"Not a grid file (magic {magic!r})")
    if magic != GRID_MAGIC:
        raise FormatVersionError(f"Unsupported grid format version {magic[len(GRID_MAGIC_PREFIX):]!r} (expected {GRID_VERSION!r})")
    (expected_crc,) = _CRC.unpack(data[-_CRC.size :])
    if zlib.crc32(data[: -_CRC.size]) != expected_crc:
        raise ChecksumError("Grid checksum mismatch: file is corrupted")
    _, rows, cols, channels, units_tag = _HEADER.unpack(data[: _HEADER.size])
    try:
        units: GridUnits = GridUnits(units_tag)
    except ValueError as exc:
        raise ParseError(f"Unknown grid units tag {units_tag}") from exc
    payload: bytes = data[_HEADER.size : -_CRC.size]
    if len(payload) != rows * cols * channels * 4:
        raise ParseError(f"Grid payload has {len(payload)} bytes, header declares {rows}x{cols}x{channels} floats")
    values: NDArray[np.float32] = np.frombuffer(payload, dtype=_VALUE_DTYPE).astype(np.float32)
    shape = (rows, cols) if channels == 1 else (rows, cols, channels)
    return Grid(values.reshape(shape), units)


def save_grid(path: Union[str, Path], values: NDArray[np.floating], units: GridUnits) -> None:
    Path(path).write_bytes(encode_grid(values, units))


def load_grid(path: Union[str, Path]) -> Grid:
    return decode_grid(Path(path).read_bytes())

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

# Checkpoint layout: magic | u32 length + JSON config | u32 length + JSON name index | one length-prefixed grid
# block per tensor, in index order | CRC32 of everything before the trailer.

import json
import struct
import zlib
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np
import torch
from numpy.typing import NDArray
from rp2.rp2_error import RP2TypeError

from tactile_cal.calibration_error import ChecksumError, FormatVersionError, ParseError
from tactile_cal.grid_file import GridUnits, decode_grid, encode_grid
from tactile_cal.logger import LOGGER
from tactile_cal.touchnet import TouchNet, TouchNetConfig

CHECKPOINT_MAGIC_PREFIX: bytes = b"3DCNET"
CHECKPOINT_VERSION: bytes = b"1"
CHECKPOINT_MAGIC: bytes = CHECKPOINT_MAGIC_PREFIX + CHECKPOINT_VERSION

_LENGTH: struct.Struct = struct.Struct("<I")
_CRC: struct.Struct = struct.Struct("<I")


def _length_prefixed(data: bytes) -> bytes:
    return _LENGTH.pack(len(data)) + data


# Any tensor is stored as a 2D grid: leading dimension by the product of the rest
def _as_grid(values: NDArray[np.float32]) -> NDArray[np.float32]:
    if values.ndim == 0:
        return values.reshape(1, 1)
    if values.ndim == 1:
        return values.reshape(1, -1)
    return values.reshape(values.shape[0], -1)


def encode_checkpoint(model: TouchNet) -> bytes:
    if not isinstance(model, TouchNet):
        raise RP2TypeError(f"model is not a TouchNet: {model}")
    config: Dict[str, Any] = model.config._asdict()
    config["module_channels"] = list(config["module_channels"])
    state: Dict[str, torch.Tensor] = model.state_dict()
    index: List[Dict[str, Any]] = [{"name": name, "shape": list(tensor.shape), "dtype": str(tensor.dtype).replace("torch.", "")} for name, tensor in state.items()]

    body: bytearray = bytearray(CHECKPOINT_MAGIC)
    body += _length_prefixed(json.dumps(config, sort_keys=True).encode("utf-8"))
    body += _length_prefixed(json.dumps(index).encode("utf-8"))
    for tensor in state.values():
        body += _length_prefixed(encode_grid(_as_grid(tensor.detach().cpu().numpy().astype(np.float32)), GridUnits.DIMENSIONLESS))
    return bytes(body) + _CRC.pack(zlib.crc32(bytes(body)))


class _Reader:
    def __init__(self, data: bytes, offset: int) -> None:
        self.__data: bytes = data
        self.__offset: int = offset

    def block(self) -> bytes:
        if self.__offset + _LENGTH.size > len(self.__data):
            raise ParseError("Checkpoint truncated while reading a block length")
        (length,) = _LENGTH.unpack_from(self.__data, self.__offset)
        start: int = self.__offset + _LENGTH.size
        if start + length > len(self.__data):
            raise ParseError(f"Checkpoint truncated: block of {length} bytes at offset {start}")
        self.__offset = start + length
        return self.__data[start : self.__offset]

    @property
    def exhausted(self) -> bool:
        return self.__offset == len(self.__data)


def decode_checkpoint(data: bytes) -> TouchNet:
    if len(data) < len(CHECKPOINT_MAGIC) + _CRC.size:
        raise ParseError(f"Checkpoint data too short ({len(data)} bytes)")
    magic: bytes = data[: len(CHECKPOINT_MAGIC)]
    if not magic.startswith(CHECKPOINT_MAGIC_PREFIX):
        raise ParseError(f"Not a checkpoint file (magic {magic!r})")
    if magic != CHECKPOINT_MAGIC:
        raise FormatVersionError(f"Unsupported checkpoint version {magic[len(CHECKPOINT_MAGIC_PREFIX):]!r} (expected {CHECKPOINT_VERSION!r})")
    body: bytes = data[: -_CRC.size]
    (expected_crc,) = _CRC.unpack(data[-_CRC.size :])
    if zlib.crc32(body) != expected_crc:
        raise ChecksumError("Checkpoint checksum mismatch: file is corrupted")

    reader: _Reader = _Reader(body, len(CHECKPOINT_MAGIC))
    try:
        raw_config: Dict[str, Any] = json.loads(reader.block().decode("utf-8"))
        index: List[Dict[str, Any]] = json.loads(reader.block().decode("utf-8"))
        config: TouchNetConfig = TouchNetConfig(
            module_channels=tuple(int(width) for width in raw_config["module_channels"]),
            kernel_size=int(raw_config["kernel_size"]),
            dropout_p=float(raw_config["dropout_p"]),
            input_channels=int(raw_config["input_channels"]),
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"Malformed checkpoint header: {exc}") from exc

    model: TouchNet = TouchNet(config)
    expected: Dict[str, torch.Tensor] = model.state_dict()
    state: Dict[str, torch.Tensor] = {}
    for entry in index:
        name: str = entry["name"]
        shape: Tuple[int, ...] = tuple(entry["shape"])
        if name not in expected or tuple(expected[name].shape) != shape:
            raise ParseError(f"Checkpoint tensor '{name}' {shape} does not match the configured model")
        values: NDArray[np.float32] = decode_grid(reader.block()).values
        state[name] = torch.from_numpy(values.reshape(shape).copy()).to(expected[name].dtype)
    if not reader.exhausted:
        raise ParseError("Trailing data after the last checkpoint tensor")
    missing: List[str] = sorted(set(expected) - set(state))
    if missing:
        raise ParseError(f"Checkpoint is missing tensors: {missing}")
    model.load_state_dict(state)
    model.eval()
    return model


def save_checkpoint(model: TouchNet, path: Union[str, Path]) -> None:
    Path(path).write_bytes(encode_checkpoint(model))
    LOGGER.info("Saved checkpoint to %s", path)


def load_checkpoint(path: Union[str, Path]) -> TouchNet:
    return decode_checkpoint(Path(path).read_bytes())

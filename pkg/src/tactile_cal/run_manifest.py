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
from configparser import ConfigParser
from pathlib import Path
from types import MappingProxyType
from typing import Dict, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

from rp2.rp2_error import RP2ValueError

from tactile_cal.configuration import SUBCOMMAND_SET, Keyword

RUN_MANIFEST_FILE: str = "run_manifest.ini"
_RUN_SECTION: str = "run"
_CONFIGURATION_SECTION: str = "configuration"


class RunManifest(NamedTuple):
    subcommand: str
    config_path: Optional[str]
    seeds: Tuple[int, ...]
    inputs: Tuple[str, ...]
    outputs: Tuple[str, ...]
    tool_version: str
    config_hash: str
    settings: Mapping[str, str] = MappingProxyType({})

    def validate(self) -> "RunManifest":
        if self.subcommand not in SUBCOMMAND_SET:
            raise RP2ValueError(f"Unknown subcommand '{self.subcommand}'")
        return self


# Digest of the effective settings, independent of their order
def settings_hash(settings: Mapping[str, str]) -> str:
    digest = hashlib.sha256()
    for key in sorted(settings):
        digest.update(f"{key}={settings[key]}\n".encode("utf-8"))
    return digest.hexdigest()


def make_run_manifest(
    subcommand: str,
    settings: Mapping[str, str],
    tool_version: str,
    config_path: Optional[str] = None,
    seeds: Sequence[int] = (),
    inputs: Sequence[Union[str, Path]] = (),
    outputs: Sequence[Union[str, Path]] = (),
) -> RunManifest:
    return RunManifest(
        subcommand,
        config_path,
        tuple(seeds),
        tuple(str(path) for path in inputs),
        tuple(str(path) for path in outputs),
        tool_version,
        settings_hash(settings),
        dict(settings),
    ).validate()


def _join(values: Sequence[object]) -> str:
    return ",".join(str(value) for value in values)


def _split(value: str) -> Tuple[str, ...]:
    return tuple(item for item in value.split(",") if item)


def write_run_manifest(manifest: RunManifest, directory: Union[str, Path]) -> Path:
    parser: ConfigParser = ConfigParser(interpolation=None)
    parser[_RUN_SECTION] = {
        Keyword.SUBCOMMAND.value: manifest.subcommand,
        Keyword.CONFIG_PATH.value: manifest.config_path or "",
        Keyword.SEEDS.value: _join(manifest.seeds),
        Keyword.INPUTS.value: _join(manifest.inputs),
        Keyword.OUTPUTS.value: _join(manifest.outputs),
        Keyword.TOOL_VERSION.value: manifest.tool_version,
        Keyword.CONFIG_HASH.value: manifest.config_hash,
    }
    parser[_CONFIGURATION_SECTION] = dict(sorted(manifest.settings.items()))
    path: Path = Path(directory) / RUN_MANIFEST_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as manifest_file:
        parser.write(manifest_file)
    return path


def read_run_manifest(path: Union[str, Path]) -> RunManifest:
    parser: ConfigParser = ConfigParser(interpolation=None)
    if not parser.read(path, encoding="utf-8") or not parser.has_section(_RUN_SECTION):
        raise RP2ValueError(f"'{path}' is not a run manifest")
    section = parser[_RUN_SECTION]
    settings: Dict[str, str] = dict(parser[_CONFIGURATION_SECTION]) if parser.has_section(_CONFIGURATION_SECTION) else {}
    return RunManifest(
        section[Keyword.SUBCOMMAND.value],
        section.get(Keyword.CONFIG_PATH.value) or None,
        tuple(int(seed) for seed in _split(section.get(Keyword.SEEDS.value, ""))),
        _split(section.get(Keyword.INPUTS.value, "")),
        _split(section.get(Keyword.OUTPUTS.value, "")),
        section[Keyword.TOOL_VERSION.value],
        section[Keyword.CONFIG_HASH.value],
        settings,
    ).validate()

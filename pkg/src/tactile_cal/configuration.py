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

import os
from enum import Enum
from typing import Dict, Set, Tuple

from rp2.rp2_error import RP2ValueError

THREADS_ENVIRONMENT_VARIABLE: str = "TACTILE_CAL_THREADS"
PROFILER_ENVIRONMENT_VARIABLE: str = "TACTILE_CAL_ENABLE_PROFILER"


# Configuration file and manifest keywords
class Keyword(Enum):
    ABLATE = "ablate"
    ALPHA = "alpha"
    BATCH_SIZE = "batch_size"
    BAUD = "baud"
    CHANNELS = "channels"
    CAPTURE_SIM = "capture-sim"
    COMPARISON_COUNT = "comparison_count"
    CONFIG_HASH = "config_hash"
    CONFIG_PATH = "config_path"
    DEMO = "demo"
    DEPTH = "depth"
    DOWNSAMPLE = "downsample"
    DROPOUT = "dropout"
    EPOCHS = "epochs"
    EVAL = "eval"
    EXTENT = "extent"
    FIT = "fit"
    FEED_PROBE = "feed_probe"
    FEED_TRAVEL = "feed_travel"
    FORMAT_VERSION = "format_version"
    FOV_FILTER = "fov_filter"
    FRACTION = "fraction"
    FRACTIONS = "fractions"
    FRAME_DEPTH_RULE = "frame_depth_rule"
    FRAMES = "frames"
    GCODE = "gcode"
    HOLDOUT_SEED = "holdout_seed"
    ILLUMINATION_HASH = "illumination_hash"
    INDENT_DEPTH = "indent_depth"
    INFER = "infer"
    INPUTS = "inputs"
    LEARNING_RATE = "learning_rate"
    NOISE_SIGMA = "noise_sigma"
    OBJECTS = "objects"
    ORIGIN = "origin"
    OUTPUTS = "outputs"
    PLAN = "plan"
    PLAN_HASH = "plan_hash"
    PORT = "port"
    PRINTER = "printer"
    PROBE = "probe"
    PROBE_RADIUS = "probe_radius"
    SAMPLE_COUNT = "sample_count"
    SCHEME = "scheme"
    SEED = "seed"
    SEEDS = "seeds"
    SENSOR = "sensor"
    SPACING = "spacing"
    SPLIT_SEED = "split_seed"
    SUBCOMMAND = "subcommand"
    TIMEOUT = "timeout"
    TOOL_VERSION = "tool_version"
    TRAIN = "train"
    TRAVEL_Z = "travel_z"
    WEIGHT_DECAY = "weight_decay"
    Z_TOUCH = "z_touch"

    @classmethod
    def has_value(cls, value: str) -> bool:
        return value in _keyword_values

    @classmethod
    def type_check_from_string(cls, keyword: str) -> "Keyword":
        if not Keyword.has_value(keyword.lower()):
            raise RP2ValueError(f"Invalid keyword: {keyword}")
        return Keyword[keyword.upper().replace("-", "_")]


_keyword_values: Set[str] = {item.value for item in Keyword}

SUBCOMMAND_SET: Set[str] = {
    Keyword.ABLATE.value,
    Keyword.CAPTURE_SIM.value,
    Keyword.DEMO.value,
    Keyword.EVAL.value,
    Keyword.GCODE.value,
    Keyword.INFER.value,
    Keyword.PLAN.value,
    Keyword.PROBE.value,
    Keyword.TRAIN.value,
}

# Probing
DEFAULT_SPACING_MM: float = 0.5
DEFAULT_PROBE_DEPTH_MM: float = 1.0
DEFAULT_PROBE_RADIUS_MM: float = 2.0
DEFAULT_FRAMES_PER_INDENT: int = 30
HOLDOUT_FRACTION: float = 0.20
MAX_TRAINING_FRACTION: float = 0.80

# Printer
DEFAULT_FEED_TRAVEL: float = 3000.0
DEFAULT_FEED_PROBE: float = 300.0
DEFAULT_BAUD: int = 115200
DEFAULT_ACK_TIMEOUT_S: float = 30.0
DEFAULT_PRINTER: str = "ender3"
DEFAULT_Z_TOUCH_MM: float = 5.0
DEFAULT_TRAVEL_Z_MM: float = 10.0

# Simulator
DEFAULT_NOISE_SIGMA: float = 2.0
LIGHT_AZIMUTHS_DEG: Tuple[float, float, float] = (0.0, 120.0, 240.0)
LIGHT_ELEVATION_DEG: float = 45.0
GAIN_FALLOFF: float = 0.4
DEFAULT_SENSOR: str = "digit"

# Training
DEFAULT_LEARNING_RATE: float = 1e-4
DEFAULT_WEIGHT_DECAY: float = 1e-4
DEFAULT_BATCH_SIZE: int = 64
BASE_EPOCHS: int = 60
DESK_SCALE_DOWNSAMPLE: int = 2

# Analysis
KDE_BANDWIDTH: float = 0.0015
SIGNIFICANCE_ALPHA: float = 0.01
COMPARISON_COUNT: int = 5
ABLATION_FRACTIONS: Tuple[float, ...] = (0.80, 0.40, 0.20, 0.10, 0.05, 0.01)
DEPTH_SCALE_BOUNDS: Tuple[float, float] = (0.5, 2.0)
DEFAULT_OBJECTS: Tuple[str, ...] = ("hemispheres", "pill", "pawn")
DEFAULT_OBJECT_INDENT_MM: float = 1.0

DEFAULT_CHANNELS: Tuple[int, ...] = (32, 64, 128, 256, 256, 128, 64, 32, 2)


def _join(values: Tuple[object, ...]) -> str:
    return ",".join(str(value) for value in values)


_PLAN_DEFAULTS: Dict[str, str] = {
    Keyword.EXTENT.value: "16x18",
    Keyword.SPACING.value: str(DEFAULT_SPACING_MM),
    Keyword.DEPTH.value: str(DEFAULT_PROBE_DEPTH_MM),
    Keyword.FRAMES.value: str(DEFAULT_FRAMES_PER_INDENT),
    Keyword.ORIGIN.value: "0,0",
}
_SPLIT_DEFAULTS: Dict[str, str] = {
    Keyword.FRACTION.value: str(MAX_TRAINING_FRACTION),
    Keyword.SEED.value: "0",
    Keyword.HOLDOUT_SEED.value: "0",
}
_PRINTER_DEFAULTS: Dict[str, str] = {
    Keyword.PRINTER.value: DEFAULT_PRINTER,
    Keyword.Z_TOUCH.value: str(DEFAULT_Z_TOUCH_MM),
    Keyword.TRAVEL_Z.value: str(DEFAULT_TRAVEL_Z_MM),
    Keyword.FEED_TRAVEL.value: str(DEFAULT_FEED_TRAVEL),
    Keyword.FEED_PROBE.value: str(DEFAULT_FEED_PROBE),
}
_SENSOR_DEFAULTS: Dict[str, str] = {
    Keyword.SENSOR.value: DEFAULT_SENSOR,
    Keyword.DOWNSAMPLE.value: "1",
    Keyword.NOISE_SIGMA.value: str(DEFAULT_NOISE_SIGMA),
    Keyword.PROBE_RADIUS.value: str(DEFAULT_PROBE_RADIUS_MM),
}
_TRAINING_DEFAULTS: Dict[str, str] = {
    Keyword.EPOCHS.value: "",
    Keyword.LEARNING_RATE.value: str(DEFAULT_LEARNING_RATE),
    Keyword.WEIGHT_DECAY.value: str(DEFAULT_WEIGHT_DECAY),
    Keyword.BATCH_SIZE.value: str(DEFAULT_BATCH_SIZE),
    Keyword.CHANNELS.value: _join(DEFAULT_CHANNELS),
    Keyword.DROPOUT.value: "0.1",
}
_EVALUATION_DEFAULTS: Dict[str, str] = {
    Keyword.OBJECTS.value: _join(DEFAULT_OBJECTS),
    Keyword.INDENT_DEPTH.value: str(DEFAULT_OBJECT_INDENT_MM),
    Keyword.FIT.value: "scale",
    Keyword.SCHEME.value: "matched",
    Keyword.SEED.value: "0",
}

# Built-in value of every setting, by subcommand. An empty string means "derived at run time".
DEFAULT_CONFIGURATION: Dict[str, Dict[str, str]] = {
    Keyword.PLAN.value: {**_PLAN_DEFAULTS, **_SPLIT_DEFAULTS},
    Keyword.GCODE.value: {**_PRINTER_DEFAULTS},
    Keyword.PROBE.value: {
        **_PRINTER_DEFAULTS,
        Keyword.FRAMES.value: str(DEFAULT_FRAMES_PER_INDENT),
        Keyword.PORT.value: "",
        Keyword.BAUD.value: str(DEFAULT_BAUD),
        Keyword.TIMEOUT.value: str(DEFAULT_ACK_TIMEOUT_S),
    },
    Keyword.CAPTURE_SIM.value: {
        **_PRINTER_DEFAULTS,
        **_SENSOR_DEFAULTS,
        **_SPLIT_DEFAULTS,
        Keyword.FRAMES.value: str(DEFAULT_FRAMES_PER_INDENT),
        Keyword.ORIGIN.value: "0,0",
    },
    Keyword.TRAIN.value: {**_SPLIT_DEFAULTS, **_TRAINING_DEFAULTS},
    Keyword.ABLATE.value: {
        **_TRAINING_DEFAULTS,
        Keyword.EPOCHS.value: str(BASE_EPOCHS),
        Keyword.FRACTIONS.value: _join(ABLATION_FRACTIONS),
        Keyword.SEEDS.value: "0",
        Keyword.HOLDOUT_SEED.value: "0",
        Keyword.FOV_FILTER.value: "true",
        Keyword.ALPHA.value: str(SIGNIFICANCE_ALPHA),
        Keyword.COMPARISON_COUNT.value: str(COMPARISON_COUNT),
    },
    Keyword.INFER.value: {
        Keyword.SENSOR.value: DEFAULT_SENSOR,
        Keyword.SCHEME.value: "matched",
    },
    Keyword.EVAL.value: {**_SENSOR_DEFAULTS, **_EVALUATION_DEFAULTS},
    Keyword.DEMO.value: {
        **_PLAN_DEFAULTS,
        **_SPLIT_DEFAULTS,
        **_PRINTER_DEFAULTS,
        **_SENSOR_DEFAULTS,
        **_TRAINING_DEFAULTS,
        **_EVALUATION_DEFAULTS,
        Keyword.EXTENT.value: "",
        Keyword.FRAMES.value: "6",
        Keyword.DOWNSAMPLE.value: str(DESK_SCALE_DOWNSAMPLE),
        Keyword.EPOCHS.value: str(BASE_EPOCHS),
    },
}


def is_subcommand_section(section_name: str) -> bool:
    return section_name in SUBCOMMAND_SET


def is_plugin_section(section_name: str) -> bool:
    return section_name.split(" ", 1)[0].startswith("tactile_cal.plugin.")


def get_thread_count(default: int = 1) -> int:
    value: str = os.environ.get(THREADS_ENVIRONMENT_VARIABLE, "")
    if not value:
        return default
    try:
        result: int = int(value)
    except ValueError as exc:
        raise RP2ValueError(f"{THREADS_ENVIRONMENT_VARIABLE} must be a positive integer, instead it was: {value}") from exc
    if result < 1:
        raise RP2ValueError(f"{THREADS_ENVIRONMENT_VARIABLE} must be a positive integer, instead it was: {value}")
    return result

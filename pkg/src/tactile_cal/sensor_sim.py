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
import math
from configparser import ConfigParser
from pathlib import Path
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from rp2.rp2_error import RP2TypeError, RP2ValueError
from scipy import ndimage

from tactile_cal.configuration import DEFAULT_NOISE_SIGMA, GAIN_FALLOFF, LIGHT_AZIMUTHS_DEG, LIGHT_ELEVATION_DEG
from tactile_cal.grid_file import GridUnits, load_grid, save_grid
from tactile_cal.sensor_geometry import SensorGeometry

CHANNEL_NAMES: Tuple[str, str, str] = ("r", "g", "b")
_GAIN_FILE: str = "gain.grid"
_BASELINE_FILE: str = "baseline.grid"
_ILLUMINATION_INI_FILE: str = "illumination.ini"
_ILLUMINATION_SECTION: str = "illumination"
_UNIT_TOLERANCE: float = 1e-9


# Indentation depth in mm on the sensor pixel grid, 0 = undisturbed gel
class HeightField(NamedTuple):
    values: NDArray[np.float64]
    pitch_mm_per_px: float

    @property
    def rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def cols(self) -> int:
        return int(self.values.shape[1])

    def validate(self) -> "HeightField":
        if self.values.ndim != 2:
            raise RP2ValueError(f"Height field must be 2D, instead shape was {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise RP2ValueError("Height field contains non-finite values")
        if np.any(self.values < 0):
            raise RP2ValueError("Height field contains negative values")
        if not self.pitch_mm_per_px > 0:
            raise RP2ValueError(f"pitch_mm_per_px must be positive: {self.pitch_mm_per_px}")
        return self


class GradientMap(NamedTuple):
    gx: NDArray[np.float64]
    gy: NDArray[np.float64]

    @property
    def rows(self) -> int:
        return int(self.gx.shape[0])

    @property
    def cols(self) -> int:
        return int(self.gx.shape[1])

    # rows x cols x 2, channel 0 = gx
    def stacked(self) -> NDArray[np.float64]:
        return np.stack([self.gx, self.gy], axis=-1)

    @classmethod
    def from_stacked(cls, values: NDArray[np.floating]) -> "GradientMap":
        if values.ndim != 3 or values.shape[2] != 2:
            raise RP2ValueError(f"Stacked gradient map must be rows x cols x 2, instead shape was {values.shape}")
        return cls(np.asarray(values[:, :, 0], dtype=np.float64), np.asarray(values[:, :, 1], dtype=np.float64))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "GradientMap":
        return cls(np.zeros((rows, cols)), np.zeros((rows, cols)))


class IlluminationModel(NamedTuple):
    light_directions: NDArray[np.float64]  # 3 x 3, one unit vector per channel
    gain: NDArray[np.float64]  # rows x cols x 3
    baseline: NDArray[np.uint8]  # rows x cols x 3
    noise_sigma: float

    @property
    def rows(self) -> int:
        return int(self.gain.shape[0])

    @property
    def cols(self) -> int:
        return int(self.gain.shape[1])

    def validate(self) -> "IlluminationModel":
        if self.light_directions.shape != (3, 3):
            raise RP2ValueError(f"light_directions must be 3 x 3, instead shape was {self.light_directions.shape}")
        if np.any(np.abs(np.linalg.norm(self.light_directions, axis=1) - 1.0) > _UNIT_TOLERANCE):
            raise RP2ValueError(f"Light directions must be unit vectors: {self.light_directions}")
        if self.gain.ndim != 3 or self.gain.shape[2] != 3:
            raise RP2ValueError(f"gain must be rows x cols x 3, instead shape was {self.gain.shape}")
        if not np.all(self.gain > 0):
            raise RP2ValueError("gain must be positive everywhere")
        if self.baseline.shape != self.gain.shape or self.baseline.dtype != np.uint8:
            raise RP2ValueError(f"baseline must be a uint8 array of shape {self.gain.shape}")
        if self.noise_sigma < 0:
            raise RP2ValueError(f"noise_sigma must be >= 0: {self.noise_sigma}")
        return self

    def without_noise(self) -> "IlluminationModel":
        return self._replace(noise_sigma=0.0)

    def digest(self) -> str:
        sha = hashlib.sha256()
        sha.update(np.ascontiguousarray(self.light_directions, dtype="<f8").tobytes())
        sha.update(np.ascontiguousarray(self.gain, dtype="<f8").tobytes())
        sha.update(np.ascontiguousarray(self.baseline).tobytes())
        sha.update(repr(float(self.noise_sigma)).encode("ascii"))
        return sha.hexdigest()


class TactileImage(NamedTuple):
    pixels: NDArray[np.uint8]

    @property
    def rows(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def cols(self) -> int:
        return int(self.pixels.shape[1])

    def validate(self, geometry: Optional[SensorGeometry] = None) -> "TactileImage":
        if self.pixels.dtype != np.uint8 or self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise RP2TypeError(f"Tactile image must be a rows x cols x 3 uint8 array, instead it was {self.pixels.dtype} {self.pixels.shape}")
        if geometry is not None and (self.rows, self.cols) != (geometry.rows, geometry.cols):
            raise RP2ValueError(f"Image is {self.rows}x{self.cols}, sensor resolution is {geometry.rows}x{geometry.cols}")
        return self


def light_direction(azimuth_deg: float, elevation_deg: float = LIGHT_ELEVATION_DEG) -> NDArray[np.float64]:
    azimuth: float = math.radians(azimuth_deg)
    elevation: float = math.radians(elevation_deg)
    result: NDArray[np.float64] = np.array([math.cos(elevation) * math.cos(azimuth), math.cos(elevation) * math.sin(azimuth), math.sin(elevation)])
    return result / np.linalg.norm(result)


# Radial falloff 1 - falloff * (r / r_max)^2 with a per-channel centre displaced towards the channel's light,
# plus a 20-50 count baseline ramp along the light azimuth.
def default_illumination(geometry: SensorGeometry, noise_sigma: float = DEFAULT_NOISE_SIGMA, falloff: float = GAIN_FALLOFF) -> IlluminationModel:
    if not 0 <= falloff < 1:
        raise RP2ValueError(f"falloff must be in [0, 1): {falloff}")
    rows: int = geometry.rows
    cols: int = geometry.cols
    # Normalized coordinates in [-1, 1]
    u: NDArray[np.float64] = np.linspace(-1.0, 1.0, cols) if cols > 1 else np.zeros(1)
    v: NDArray[np.float64] = np.linspace(-1.0, 1.0, rows) if rows > 1 else np.zeros(1)
    grid_u, grid_v = np.meshgrid(u, v)
    directions: NDArray[np.float64] = np.stack([light_direction(azimuth) for azimuth in LIGHT_AZIMUTHS_DEG])
    gain: NDArray[np.float64] = np.empty((rows, cols, 3))
    baseline: NDArray[np.float64] = np.empty((rows, cols, 3))
    for channel, azimuth_deg in enumerate(LIGHT_AZIMUTHS_DEG):
        cos_a: float = math.cos(math.radians(azimuth_deg))
        sin_a: float = math.sin(math.radians(azimuth_deg))
        du: NDArray[np.float64] = grid_u - 0.15 * cos_a
        dv: NDArray[np.float64] = grid_v - 0.15 * sin_a
        radius_squared: NDArray[np.float64] = du**2 + dv**2
        gain[:, :, channel] = 1.0 - falloff * radius_squared / float(np.max(radius_squared) or 1.0)
        baseline[:, :, channel] = 35.0 + 15.0 * (grid_u * cos_a + grid_v * sin_a) / math.sqrt(2.0)
    # Gains are stored at float32 precision in the grid format
    gain = gain.astype(np.float32).astype(np.float64)
    return IlluminationModel(directions, gain, np.rint(baseline).astype(np.uint8), float(noise_sigma)).validate()


def indent_sphere(center_xy_mm: Tuple[float, float], depth_mm: float, probe_radius_mm: float, sensor_geometry: SensorGeometry) -> HeightField:
    if not probe_radius_mm > 0:
        raise RP2ValueError(f"probe_radius_mm must be positive: {probe_radius_mm}")
    if not 0 <= depth_mm <= probe_radius_mm:
        raise RP2ValueError(f"depth_mm must be in [0, {probe_radius_mm}]: {depth_mm}")
    if not sensor_geometry.in_extent(center_xy_mm[0], center_xy_mm[1]):
        raise RP2ValueError(f"Probe centre {center_xy_mm} is outside the sensor extent")
    xs, ys = sensor_geometry.pixel_centers_mm()
    grid_x, grid_y = np.meshgrid(xs, ys)
    r_squared: NDArray[np.float64] = (grid_x - center_xy_mm[0]) ** 2 + (grid_y - center_xy_mm[1]) ** 2
    radius: float = float(probe_radius_mm)
    values: NDArray[np.float64] = np.maximum(0.0, depth_mm - radius + np.sqrt(np.maximum(0.0, radius * radius - r_squared)))
    return HeightField(values, sensor_geometry.pitch_mm_per_px)


def gradients_of(height_field: HeightField) -> GradientMap:
    if height_field.rows < 3 or height_field.cols < 3:
        raise RP2ValueError(f"Height field must be at least 3x3, instead it was {height_field.rows}x{height_field.cols}")
    gy, gx = np.gradient(np.asarray(height_field.values, dtype=np.float64), height_field.pitch_mm_per_px)
    return GradientMap(gx, gy)


def render(gradient_map: GradientMap, illumination: IlluminationModel, seed: int) -> TactileImage:
    if (gradient_map.rows, gradient_map.cols) != (illumination.rows, illumination.cols):
        raise RP2ValueError(f"Gradient map is {gradient_map.rows}x{gradient_map.cols}, illumination is {illumination.rows}x{illumination.cols}")
    gx: NDArray[np.float64] = np.asarray(gradient_map.gx, dtype=np.float64)
    gy: NDArray[np.float64] = np.asarray(gradient_map.gy, dtype=np.float64)
    norm: NDArray[np.float64] = np.sqrt(gx * gx + gy * gy + 1.0)
    normals: NDArray[np.float64] = np.stack([-gx / norm, -gy / norm, 1.0 / norm], axis=-1)
    shading: NDArray[np.float64] = np.maximum(0.0, normals @ illumination.light_directions.T)
    intensity: NDArray[np.float64] = np.clip(illumination.baseline.astype(np.float64) + illumination.gain * shading * 255.0, 0.0, 255.0)
    if illumination.noise_sigma > 0:
        intensity = intensity + np.random.default_rng(seed).normal(0.0, illumination.noise_sigma, size=intensity.shape)
    return TactileImage(np.clip(np.rint(intensity), 0, 255).astype(np.uint8))


# Reference frame of the undisturbed gel, without sensor noise
def no_contact_frame(illumination: IlluminationModel) -> TactileImage:
    return render(GradientMap.zeros(illumination.rows, illumination.cols), illumination.without_noise(), 0)


def shift_field(values: NDArray[np.floating], shift_px: Tuple[float, float]) -> NDArray[np.float64]:
    shift_x, shift_y = shift_px
    source: NDArray[np.float64] = np.asarray(values, dtype=np.float64)
    if float(shift_x).is_integer() and float(shift_y).is_integer():
        result: NDArray[np.float64] = np.zeros_like(source)
        dx: int = int(shift_x)
        dy: int = int(shift_y)
        rows, cols = source.shape
        if abs(dx) >= cols or abs(dy) >= rows:
            return result
        result[max(dy, 0) : rows + min(dy, 0), max(dx, 0) : cols + min(dx, 0)] = source[max(-dy, 0) : rows + min(-dy, 0), max(-dx, 0) : cols + min(-dx, 0)]
        return result
    return np.asarray(ndimage.shift(source, (shift_y, shift_x), order=1, mode="constant", cval=0.0), dtype=np.float64)


# The object profile is pressed so that exactly indent_depth of it penetrates the gel plane.
def render_object(
    object_height_field: HeightField,
    pose_shift_xy: Tuple[float, float],
    indent_depth: float,
    illumination: IlluminationModel,
    seed: int,
) -> Tuple[TactileImage, HeightField]:
    object_height_field.validate()
    peak: float = float(np.max(object_height_field.values))
    if indent_depth < 0:
        raise RP2ValueError(f"indent_depth must be >= 0: {indent_depth}")
    if indent_depth > peak:
        raise RP2ValueError(f"indent_depth {indent_depth} exceeds the object height {peak}")
    pitch: float = object_height_field.pitch_mm_per_px
    shifted: NDArray[np.float64] = shift_field(object_height_field.values, (pose_shift_xy[0] / pitch, pose_shift_xy[1] / pitch))
    if peak > 0 and not np.any(shifted > 0):
        raise RP2ValueError(f"Pose shift {pose_shift_xy} mm moves the whole object off the sensor grid")
    effective: HeightField = HeightField(np.maximum(0.0, shifted - (peak - indent_depth)), pitch)
    return render(gradients_of(effective), illumination, seed), effective


def save_illumination(illumination: IlluminationModel, directory: Union[str, Path]) -> None:
    path: Path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    save_grid(path / _GAIN_FILE, illumination.gain, GridUnits.DIMENSIONLESS)
    save_grid(path / _BASELINE_FILE, illumination.baseline.astype(np.float32), GridUnits.DIMENSIONLESS)
    ini_config: ConfigParser = ConfigParser()
    ini_config[_ILLUMINATION_SECTION] = {
        f"light_{name}": ",".join(repr(float(value)) for value in illumination.light_directions[channel])
        for channel, name in enumerate(CHANNEL_NAMES)
    }
    ini_config[_ILLUMINATION_SECTION]["noise_sigma"] = repr(float(illumination.noise_sigma))
    with open(path / _ILLUMINATION_INI_FILE, "w", encoding="utf-8") as ini_file:
        ini_config.write(ini_file)


def load_illumination(directory: Union[str, Path]) -> IlluminationModel:
    path: Path = Path(directory)
    ini_config: ConfigParser = ConfigParser()
    if not ini_config.read(path / _ILLUMINATION_INI_FILE, encoding="utf-8"):
        raise FileNotFoundError(f"Illumination configuration not found in {path}")
    section = ini_config[_ILLUMINATION_SECTION]
    directions: NDArray[np.float64] = np.array([[float(value) for value in section[f"light_{name}"].split(",")] for name in CHANNEL_NAMES])
    gain: NDArray[np.float64] = load_grid(path / _GAIN_FILE).values.astype(np.float64)
    baseline: NDArray[np.uint8] = load_grid(path / _BASELINE_FILE).values.astype(np.uint8)
    return IlluminationModel(directions, gain, baseline, section.getfloat("noise_sigma")).validate()

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

from typing import Dict, NamedTuple, Tuple

import numpy as np
from numpy.typing import NDArray
from rp2.rp2_error import RP2TypeError, RP2ValueError


# Gel-frame coordinates have their origin at the gel corner; printer-frame coordinates add origin_mm.
# The camera images a window of cols x rows pixels of side pitch_mm_per_px, whose corner sits at fov_offset_mm
# in the gel frame. Image rows grow with y, image columns grow with x.
class SensorGeometry(NamedTuple):
    rows: int
    cols: int
    pitch_mm_per_px: float
    extent_mm: Tuple[float, float]
    origin_mm: Tuple[float, float] = (0.0, 0.0)
    fov_offset_mm: Tuple[float, float] = (0.0, 0.0)

    def validate(self) -> "SensorGeometry":
        if not isinstance(self.rows, int) or not isinstance(self.cols, int):
            raise RP2TypeError(f"rows and cols must be integers: {self.rows}, {self.cols}")
        if self.rows < 1 or self.cols < 1:
            raise RP2ValueError(f"rows and cols must be positive: {self.rows}, {self.cols}")
        if not self.pitch_mm_per_px > 0:
            raise RP2ValueError(f"pitch_mm_per_px must be positive: {self.pitch_mm_per_px}")
        if not (self.extent_mm[0] > 0 and self.extent_mm[1] > 0):
            raise RP2ValueError(f"extent_mm must be positive: {self.extent_mm}")
        return self

    @property
    def field_of_view_mm(self) -> Tuple[float, float]:
        return (self.cols * self.pitch_mm_per_px, self.rows * self.pitch_mm_per_px)

    def to_gel_frame(self, x_mm: float, y_mm: float) -> Tuple[float, float]:
        return (x_mm - self.origin_mm[0], y_mm - self.origin_mm[1])

    def in_extent(self, x_mm: float, y_mm: float) -> bool:
        gel_x, gel_y = self.to_gel_frame(x_mm, y_mm)
        return 0.0 <= gel_x <= self.extent_mm[0] and 0.0 <= gel_y <= self.extent_mm[1]

    def in_field_of_view(self, x_mm: float, y_mm: float) -> bool:
        gel_x, gel_y = self.to_gel_frame(x_mm, y_mm)
        fov_x: float = gel_x - self.fov_offset_mm[0]
        fov_y: float = gel_y - self.fov_offset_mm[1]
        width, height = self.field_of_view_mm
        return 0.0 <= fov_x < width and 0.0 <= fov_y < height

    # Pixel centres in the printer frame: (x of each column, y of each row)
    def pixel_centers_mm(self) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
        xs: NDArray[np.float64] = self.origin_mm[0] + self.fov_offset_mm[0] + (np.arange(self.cols, dtype=np.float64) + 0.5) * self.pitch_mm_per_px
        ys: NDArray[np.float64] = self.origin_mm[1] + self.fov_offset_mm[1] + (np.arange(self.rows, dtype=np.float64) + 0.5) * self.pitch_mm_per_px
        return xs, ys

    def downsampled(self, factor: int) -> "SensorGeometry":
        if factor < 1 or self.rows % factor or self.cols % factor:
            raise RP2ValueError(f"Downsampling factor {factor} must divide {self.rows}x{self.cols}")
        return self._replace(rows=self.rows // factor, cols=self.cols // factor, pitch_mm_per_px=self.pitch_mm_per_px * factor)


# 15 x 20 mm camera window centred on a 16 x 18 mm gel: the outermost probe columns fall outside the image.
DIGIT_LIKE: SensorGeometry = SensorGeometry(rows=160, cols=120, pitch_mm_per_px=0.125, extent_mm=(16.0, 18.0), fov_offset_mm=(0.5, -1.0))
GELSIGHT_MINI_LIKE: SensorGeometry = SensorGeometry(rows=160, cols=120, pitch_mm_per_px=0.125, extent_mm=(15.0, 19.0), fov_offset_mm=(0.0, -0.5))

SENSOR_PRESETS: Dict[str, SensorGeometry] = {
    "digit": DIGIT_LIKE,
    "gelsight_mini": GELSIGHT_MINI_LIKE,
}


def sensor_preset(name: str) -> SensorGeometry:
    if name not in SENSOR_PRESETS:
        raise RP2ValueError(f"Unknown sensor preset '{name}': must be one of {', '.join(sorted(SENSOR_PRESETS))}")
    return SENSOR_PRESETS[name]

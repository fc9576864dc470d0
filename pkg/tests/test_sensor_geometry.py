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

import numpy as np
import pytest
from rp2.rp2_error import RP2TypeError, RP2ValueError

from tactile_cal.sensor_geometry import DIGIT_LIKE, GELSIGHT_MINI_LIKE, SensorGeometry, sensor_preset


class TestSensorGeometry:
    def test_presets_match_probe_grids(self) -> None:
        assert sensor_preset("digit") is DIGIT_LIKE
        assert sensor_preset("gelsight_mini") is GELSIGHT_MINI_LIKE
        assert DIGIT_LIKE.extent_mm == (16.0, 18.0)
        assert GELSIGHT_MINI_LIKE.extent_mm == (15.0, 19.0)
        assert (DIGIT_LIKE.rows, DIGIT_LIKE.cols) == (160, 120)
        assert DIGIT_LIKE.field_of_view_mm == (15.0, 20.0)

    def test_unknown_preset(self) -> None:
        with pytest.raises(RP2ValueError, match="Unknown sensor preset"):
            sensor_preset("gelsight_max")

    def test_extent_is_inclusive(self) -> None:
        geometry = SensorGeometry(rows=4, cols=4, pitch_mm_per_px=0.5, extent_mm=(2.0, 2.0), origin_mm=(10.0, 20.0))
        assert geometry.in_extent(10.0, 20.0)
        assert geometry.in_extent(12.0, 22.0)
        assert not geometry.in_extent(12.01, 22.0)
        assert not geometry.in_extent(0.0, 0.0)

    def test_field_of_view_is_half_open(self) -> None:
        geometry = SensorGeometry(rows=4, cols=2, pitch_mm_per_px=0.5, extent_mm=(2.0, 2.0), fov_offset_mm=(0.5, 0.0))
        assert geometry.field_of_view_mm == (1.0, 2.0)
        assert geometry.in_field_of_view(0.5, 0.0)
        assert geometry.in_field_of_view(1.4, 1.9)
        assert not geometry.in_field_of_view(1.5, 1.0)
        assert not geometry.in_field_of_view(0.4, 1.0)
        assert not geometry.in_field_of_view(1.0, 2.0)

    def test_digit_outer_columns_are_outside_the_image(self) -> None:
        assert not DIGIT_LIKE.in_field_of_view(0.0, 9.0)
        assert not DIGIT_LIKE.in_field_of_view(16.0, 9.0)
        assert DIGIT_LIKE.in_field_of_view(0.5, 0.0)

    def test_pixel_centers(self) -> None:
        geometry = SensorGeometry(rows=2, cols=3, pitch_mm_per_px=0.5, extent_mm=(2.0, 2.0), origin_mm=(10.0, 20.0), fov_offset_mm=(0.25, 0.0))
        xs, ys = geometry.pixel_centers_mm()
        np.testing.assert_allclose(xs, [10.5, 11.0, 11.5])
        np.testing.assert_allclose(ys, [20.25, 20.75])

    def test_downsampled(self) -> None:
        half = DIGIT_LIKE.downsampled(2)
        assert (half.rows, half.cols, half.pitch_mm_per_px) == (80, 60, 0.25)
        assert half.field_of_view_mm == DIGIT_LIKE.field_of_view_mm
        assert DIGIT_LIKE.downsampled(1) == DIGIT_LIKE
        with pytest.raises(RP2ValueError):
            DIGIT_LIKE.downsampled(7)
        with pytest.raises(RP2ValueError):
            DIGIT_LIKE.downsampled(0)

    @pytest.mark.parametrize(
        "geometry",
        [
            SensorGeometry(rows=0, cols=4, pitch_mm_per_px=0.5, extent_mm=(2.0, 2.0)),
            SensorGeometry(rows=4, cols=4, pitch_mm_per_px=0.0, extent_mm=(2.0, 2.0)),
            SensorGeometry(rows=4, cols=4, pitch_mm_per_px=0.5, extent_mm=(2.0, -2.0)),
        ],
    )
    def test_invalid(self, geometry: SensorGeometry) -> None:
        with pytest.raises(RP2ValueError):
            geometry.validate()

    def test_non_integer_resolution(self) -> None:
        with pytest.raises(RP2TypeError):
            SensorGeometry(rows=4.0, cols=4, pitch_mm_per_px=0.5, extent_mm=(2.0, 2.0)).validate()  # type: ignore

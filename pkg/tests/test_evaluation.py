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

import math
from typing import Any, List

import numpy as np
import pytest
from rp2.rp2_error import RP2TypeError, RP2ValueError
from scipy import stats
from scipy.integrate import trapezoid

from tactile_cal.calibration_error import AlignmentError
from tactile_cal.dataset import Dataset
from tactile_cal.depth_gt import DepthMap
from tactile_cal.evaluation import (
    DEPTH_FIT,
    align_xcorr,
    bonferroni_threshold,
    cross_section,
    error_report,
    evaluate_object,
    fit_depth_scale,
    fit_indent_depth,
    histogram,
    kernel_density,
    mann_whitney_u,
    per_coordinate_mse,
    pressed_profile,
    shift_map,
    student_t_test,
    welch_t_test,
)
from tactile_cal.grid_file import GridUnits
from tactile_cal.object_library import object_height_field
from tactile_cal.probe_plan import PlanSplit
from tactile_cal.sensor_geometry import SensorGeometry
from tactile_cal.sensor_sim import HeightField, default_illumination, indent_sphere, shift_field
from tactile_cal.touchnet import TouchNetConfig, new_model

MAP_GEOMETRY: SensorGeometry = SensorGeometry(rows=40, cols=40, pitch_mm_per_px=0.25, extent_mm=(10.0, 10.0))
OBJECT_GEOMETRY: SensorGeometry = SensorGeometry(rows=48, cols=48, pitch_mm_per_px=0.25, extent_mm=(12.0, 12.0))


def _cap(center_xy: Any = (5.0, 5.0), depth: float = 1.0) -> DepthMap:
    return DepthMap(indent_sphere(center_xy, depth, 3.0, MAP_GEOMETRY).values, MAP_GEOMETRY.pitch_mm_per_px)


def _perfect_predictor(dataset: Dataset, sample_indices: List[int]) -> np.ndarray:
    return dataset.labels(sample_indices)


class TestAlignment:
    def test_identical_maps(self) -> None:
        assert align_xcorr(_cap(), _cap()) == (0, 0)

    def test_constructed_shift(self) -> None:
        predicted = _cap()
        assert align_xcorr(predicted, shift_map(predicted, 3, -2)) == (-3, 2)
        assert align_xcorr(shift_map(predicted, 3, -2), predicted) == (3, -2)

    def test_noisy_prediction(self) -> None:
        truth = _cap()
        noise = np.random.default_rng(0).normal(scale=float(np.std(truth.values)) / 10.0, size=truth.values.shape)
        assert align_xcorr(truth._replace(values=truth.values + noise), truth) == (0, 0)

    def test_ties_prefer_small_then_lexicographic_shifts(self) -> None:
        truth = np.zeros((9, 9))
        truth[4, 4] = 1.0
        prediction = np.zeros((9, 9))
        prediction[4, 3] = 1.0
        prediction[4, 5] = 1.0
        assert align_xcorr(DepthMap(prediction, 1.0), DepthMap(truth, 1.0)) == (-1, 0)

    def test_units_are_normalized(self) -> None:
        predicted = _cap()
        micrometers = DepthMap(shift_map(predicted, 1, 1).values * 1000.0, predicted.pitch_mm_per_px, GridUnits.UM)
        assert align_xcorr(predicted, micrometers) == (-1, -1)

    def test_zero_ground_truth(self) -> None:
        with pytest.raises(AlignmentError):
            align_xcorr(_cap(), DepthMap(np.zeros((40, 40)), 0.25))

    def test_invalid_arguments(self) -> None:
        with pytest.raises(RP2ValueError):
            align_xcorr(_cap(), DepthMap(np.ones((20, 40)), 0.25))
        with pytest.raises(RP2TypeError):
            align_xcorr(np.ones((40, 40)), _cap())  # type: ignore


class TestDepthFit:
    @pytest.mark.parametrize("scale", [1.0, 2.0, 0.75])
    def test_exact_scale(self, scale: float) -> None:
        truth = _cap()
        assert fit_depth_scale(truth, truth._replace(values=scale * truth.values)) == pytest.approx(scale, rel=1e-12)

    def test_matches_dense_sweep(self) -> None:
        truth = _cap()
        prediction = truth.values + 0.05 * (truth.values > 0)
        closed_form = fit_depth_scale(truth, truth._replace(values=prediction))
        scales = np.linspace(0.5, 2.0, 1_500_001)
        gg = float(np.sum(truth.values * truth.values))
        gp = float(np.sum(truth.values * prediction))
        pp = float(np.sum(prediction * prediction))
        swept = scales[np.argmin(scales * scales * gg - 2.0 * scales * gp + pp)]
        assert abs(closed_form - swept) < 1e-6

    @pytest.mark.parametrize("scale, clamped", [(3.0, 2.0), (0.1, 0.5)])
    def test_clamped(self, scale: float, clamped: float) -> None:
        truth = _cap()
        assert fit_depth_scale(truth, truth._replace(values=scale * truth.values)) == clamped

    def test_zero_ground_truth(self) -> None:
        with pytest.raises(RP2ValueError):
            fit_depth_scale(DepthMap(np.zeros((40, 40)), 0.25), _cap())

    def test_indent_depth(self) -> None:
        profile = object_height_field("pill", OBJECT_GEOMETRY)
        assert fit_indent_depth(profile, pressed_profile(profile, 0.7)) == pytest.approx(0.7, abs=1e-6)

    def test_pressed_profile(self) -> None:
        profile = HeightField(np.array([[0.0, 1.0, 2.0]]), 0.1)
        assert pressed_profile(profile, 0.5).values.tolist() == [[0.0, 0.0, 0.5]]

    def test_flat_profile(self) -> None:
        with pytest.raises(RP2ValueError):
            fit_indent_depth(HeightField(np.zeros((4, 4)), 0.1), DepthMap(np.zeros((4, 4)), 0.1))


class TestErrorReport:
    def test_perfect_prediction(self) -> None:
        report = error_report(_cap(), _cap())
        assert (report.overall_um, report.type1_um, report.type2_um) == (0.0, 0.0, 0.0)

    def test_constant_offset(self) -> None:
        truth = _cap()
        report = error_report(truth._replace(values=truth.values + 0.010), truth)
        assert report.overall_um == pytest.approx(10.0, abs=1e-9)
        assert report.type1_um == pytest.approx(10.0, abs=1e-9)
        assert report.type2_um == pytest.approx(10.0, abs=1e-9)

    def test_decomposition(self) -> None:
        truth = _cap()
        prediction = truth.values + np.random.default_rng(1).normal(scale=0.02, size=truth.values.shape)
        report = error_report(truth._replace(values=prediction), truth)
        assert report.type1_count == int(np.count_nonzero(truth.values == 0))
        assert report.type1_count + report.type2_count == truth.values.size
        weighted = (report.type1_count * report.type1_um + report.type2_count * report.type2_um) / truth.values.size
        assert report.overall_um == pytest.approx(weighted, rel=1e-12)
        assert report.overall_um == pytest.approx(float(np.mean(report.error_map_um)), rel=1e-12)

    def test_empty_class(self) -> None:
        truth = DepthMap(np.ones((4, 4)), 0.1)
        report = error_report(truth._replace(values=np.full((4, 4), 1.002)), truth)
        assert np.isnan(report.type1_um)
        assert report.overall_um == pytest.approx(2.0)

    def test_display_populations(self) -> None:
        truth = _cap()
        prediction = truth.values + np.random.default_rng(2).normal(scale=0.02, size=truth.values.shape)
        report = error_report(truth._replace(values=prediction), truth)
        display = report.type1_display()
        assert 0 < display.size < report.type1_count
        assert display.max() <= np.percentile(report.error_map_um[report.type1_mask], 95.0)
        assert report.type2_display().size == report.type2_count

    def test_cross_section(self) -> None:
        positions, values = cross_section(_cap())
        assert positions[0] == pytest.approx(0.125)
        assert values.max() == pytest.approx(_cap().values[20].max())
        with pytest.raises(RP2ValueError):
            cross_section(_cap(), 40)


class TestDensity:
    def test_single_value(self) -> None:
        support, density = kernel_density(np.array([0.02]), 0.0015)
        assert support[np.argmax(density)] == pytest.approx(0.02, abs=1e-4)
        assert density.max() == pytest.approx(1.0 / (0.0015 * np.sqrt(2.0 * np.pi)), rel=1e-3)

    def test_normalized(self) -> None:
        values = np.random.default_rng(3).gamma(2.0, 0.01, size=50)
        support, density = kernel_density(values)
        assert np.all(density >= 0)
        assert trapezoid(density, support) == pytest.approx(1.0, abs=1e-3)

    def test_histogram(self) -> None:
        values = np.array([0.0001, 0.0014, 0.0016, 0.0040])
        edges, counts = histogram(values, 0.0015)
        np.testing.assert_allclose(np.diff(edges), 0.0015)
        assert counts.tolist() == [2, 1, 1]

    @pytest.mark.parametrize("values, bandwidth", [(np.array([]), 0.0015), (np.array([1.0]), 0.0)])
    def test_invalid(self, values: np.ndarray, bandwidth: float) -> None:
        with pytest.raises(RP2ValueError):
            kernel_density(values, bandwidth)


class TestPerCoordinateMse:
    def test_perfect_predictor(self, tiny_dataset: Dataset, tiny_split: PlanSplit) -> None:
        distribution = per_coordinate_mse(_perfect_predictor, tiny_dataset, tiny_split.val_indices, fov_filter=False)
        assert distribution.plan_indices == tuple(sorted(tiny_split.val_indices))
        assert not np.any(distribution.values)
        assert distribution.std == 0.0
        assert trapezoid(distribution.density, distribution.support) == pytest.approx(1.0, abs=1e-3)

    def test_field_of_view_filter(self, tiny_dataset: Dataset, tiny_split: PlanSplit) -> None:
        inside = [index for index in tiny_split.val_indices if tiny_dataset.sensor_geometry.in_field_of_view(*tiny_dataset.plan.points[index][:2])]
        if not inside:
            pytest.skip("Every validation coordinate is outside the field of view")
        distribution = per_coordinate_mse(_perfect_predictor, tiny_dataset, tiny_split.val_indices)
        assert distribution.plan_indices == tuple(sorted(inside))
        assert distribution.coordinates_mm.shape == (len(inside), 2)

    def test_model(self, tiny_dataset: Dataset, tiny_split: PlanSplit, tiny_network_config: TouchNetConfig) -> None:
        distribution = per_coordinate_mse(new_model(tiny_network_config), tiny_dataset, tiny_split.val_indices, fov_filter=False)
        assert np.all(distribution.values > 0)
        assert distribution.mean == pytest.approx(float(np.mean(distribution.values)))

    def test_empty(self, tiny_dataset: Dataset) -> None:
        with pytest.raises(RP2ValueError):
            per_coordinate_mse(_perfect_predictor, tiny_dataset, [])


class TestSignificance:
    def test_bonferroni(self) -> None:
        assert bonferroni_threshold() == pytest.approx(0.002)
        assert bonferroni_threshold(0.05, 4) == pytest.approx(0.0125)
        with pytest.raises(RP2ValueError):
            bonferroni_threshold(0.01, 0)

    def test_identical_samples(self) -> None:
        result = welch_t_test([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0])
        assert result.statistic == 0.0
        assert result.p_value == pytest.approx(1.0)
        assert not result.significant

    def test_zero_variance(self) -> None:
        equal = welch_t_test([2.0, 2.0, 2.0], [2.0, 2.0])
        assert (equal.p_value, equal.significant) == (1.0, False)
        different = welch_t_test([1.0, 1.0], [3.0, 3.0])
        assert different.p_value == 0.0
        assert different.significant
        assert different.statistic == -np.inf

    def test_matches_reference_welch(self) -> None:
        rng = np.random.default_rng(4)
        first = rng.normal(0.0, 1.0, size=12)
        second = rng.normal(0.5, 3.0, size=20)
        expected = stats.ttest_ind(first, second, equal_var=False)
        result = welch_t_test(first, second)
        assert result.statistic == pytest.approx(float(expected.statistic), rel=1e-12)
        assert result.p_value == pytest.approx(float(expected.pvalue), rel=1e-12)

    def test_welch_equals_student_for_equal_sizes(self) -> None:
        rng = np.random.default_rng(5)
        first = rng.normal(0.0, 1.0, size=15)
        second = rng.normal(0.3, 1.0, size=15)
        assert abs(welch_t_test(first, second).statistic - student_t_test(first, second).statistic) < 1e-12

    def test_large_shift(self) -> None:
        rng = np.random.default_rng(6)
        first = rng.normal(size=1000)
        second = rng.normal(size=1000) + 5.0
        result = welch_t_test(first, second, threshold=0.002)
        assert result.p_value < 1e-10
        assert result.significant
        assert mann_whitney_u(first, second).p_value < 1e-10

    def test_exact_mann_whitney(self) -> None:
        result = mann_whitney_u([1.0, 2.0, 3.0], [101.0, 102.0, 103.0])
        assert result.statistic == 0.0
        assert result.p_value == pytest.approx(0.1)
        assert not result.significant

    def test_exact_mann_whitney_mid_size(self) -> None:
        first = np.arange(15.0)
        result = mann_whitney_u(first, first + 100.0)
        assert result.statistic == 0.0
        assert result.p_value == pytest.approx(2.0 / math.comb(30, 15), rel=1e-9)
        assert result.significant

    def test_mann_whitney_ties(self) -> None:
        result = mann_whitney_u([1.0, 2.0, 2.0, 3.0], [2.0, 3.0, 3.0, 4.0])
        assert 0.0 <= result.p_value <= 1.0
        constant = mann_whitney_u([1.0, 1.0], [1.0, 1.0, 1.0])
        assert (constant.statistic, constant.p_value) == (3.0, 1.0)

    @pytest.mark.parametrize("test", [welch_t_test, student_t_test, mann_whitney_u])
    def test_too_few_values(self, test: Any) -> None:
        with pytest.raises(RP2ValueError):
            test([1.0], [1.0, 2.0])


class TestEvaluateObject:
    def test_scale_fit(self, mocker: Any, tiny_network_config: TouchNetConfig) -> None:
        profile = object_height_field("pill", OBJECT_GEOMETRY)
        prediction = shift_map(pressed_profile(profile, 0.8), 2, -1)
        mocker.patch("tactile_cal.evaluation.predict_depth", return_value=prediction._replace(values=1.2 * prediction.values))
        evaluation = evaluate_object(new_model(tiny_network_config), "pill", OBJECT_GEOMETRY, default_illumination(OBJECT_GEOMETRY), 0.8)
        assert evaluation.shift_px == (2, -1)
        assert evaluation.fitted_value == pytest.approx(1.2, rel=1e-9)
        assert evaluation.report.overall_um == pytest.approx(0.0, abs=1e-6)
        assert evaluation.image.pixels.shape == (48, 48, 3)

    def test_depth_fit(self, mocker: Any, tiny_network_config: TouchNetConfig) -> None:
        profile = object_height_field("pill", OBJECT_GEOMETRY)
        shifted = HeightField(shift_field(profile.values, (2.0, -1.0)), profile.pitch_mm_per_px)
        mocker.patch("tactile_cal.evaluation.predict_depth", return_value=pressed_profile(shifted, 0.6))
        evaluation = evaluate_object(
            new_model(tiny_network_config), "pill", OBJECT_GEOMETRY, default_illumination(OBJECT_GEOMETRY), 0.8, fit=DEPTH_FIT
        )
        assert evaluation.shift_px == (2, -1)
        assert evaluation.fitted_value == pytest.approx(0.6, abs=1e-6)
        assert evaluation.report.overall_um == pytest.approx(0.0, abs=1e-2)

    def test_unknown_fit(self, tiny_network_config: TouchNetConfig) -> None:
        with pytest.raises(RP2ValueError):
            evaluate_object(new_model(tiny_network_config), "pill", OBJECT_GEOMETRY, default_illumination(OBJECT_GEOMETRY), 0.8, fit="offset")

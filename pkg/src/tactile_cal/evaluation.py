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
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from rp2.rp2_error import RP2TypeError, RP2ValueError
from scipy import optimize, signal, stats

from tactile_cal.calibration_error import AlignmentError
from tactile_cal.configuration import COMPARISON_COUNT, DEPTH_SCALE_BOUNDS, KDE_BANDWIDTH, SIGNIFICANCE_ALPHA
from tactile_cal.dataset import Dataset
from tactile_cal.depth_gt import DepthMap
from tactile_cal.grid_file import GridUnits
from tactile_cal.logger import LOGGER
from tactile_cal.object_library import object_height_field
from tactile_cal.poisson import MATCHED_SCHEME
from tactile_cal.sensor_geometry import SensorGeometry
from tactile_cal.sensor_sim import HeightField, IlluminationModel, TactileImage, render_object, shift_field
from tactile_cal.touchnet import TouchNet, predict_depth, predict_gradients

KDE_MIN_POINTS: int = 512
KDE_SUPPORT_BANDWIDTHS: float = 4.0
DISPLAY_PERCENTILE: float = 95.0
EXACT_U_MAX_SIZE: int = 20
SCALE_FIT: str = "scale"
DEPTH_FIT: str = "depth"
_CORRELATION_TOLERANCE: float = 1e-9

# (dataset, sample indices) -> N x H x W x 2 predicted gradients
Predictor = Callable[[Dataset, List[int]], NDArray[np.floating]]


class ErrorReport(NamedTuple):
    overall_um: float
    type1_um: float
    type2_um: float
    error_map_um: NDArray[np.float64]
    type1_mask: NDArray[np.bool_]
    type1_count: int
    type2_count: int

    # Type-1 population truncated at its 95th percentile: for plots only, the means use every pixel
    def type1_display(self) -> NDArray[np.float64]:
        population: NDArray[np.float64] = self.error_map_um[self.type1_mask]
        if population.size == 0:
            return population
        return population[population <= np.percentile(population, DISPLAY_PERCENTILE)]

    def type2_display(self) -> NDArray[np.float64]:
        return self.error_map_um[~self.type1_mask]


class MseDistribution(NamedTuple):
    plan_indices: Tuple[int, ...]
    coordinates_mm: NDArray[np.float64]
    values: NDArray[np.float64]
    support: NDArray[np.float64]
    density: NDArray[np.float64]
    mean: float
    std: float


class TestResult(NamedTuple):
    statistic: float
    p_value: float
    significant: bool


class ObjectEvaluation(NamedTuple):
    object_name: str
    image: TactileImage
    predicted: DepthMap
    ground_truth: DepthMap
    shift_px: Tuple[int, int]
    fitted_value: float
    report: ErrorReport


def _check_same_shape(first: NDArray[np.floating], second: NDArray[np.floating]) -> None:
    if first.shape != second.shape:
        raise RP2ValueError(f"Maps must have the same dimensions: {first.shape} vs {second.shape}")


def _millimeters(depth_map: DepthMap) -> NDArray[np.float64]:
    if not isinstance(depth_map, DepthMap):
        raise RP2TypeError(f"Parameter is not a DepthMap: {depth_map}")
    return np.asarray(depth_map.in_millimeters().values, dtype=np.float64)


# Returns the integer shift (x, y) that, applied to the ground truth with shift_map, best overlays it on the prediction.
# Ties go to the smallest shift magnitude, then to the lexicographically smallest (x, y).
def align_xcorr(predicted: DepthMap, ground_truth: DepthMap) -> Tuple[int, int]:
    prediction_values: NDArray[np.float64] = _millimeters(predicted)
    truth_values: NDArray[np.float64] = _millimeters(ground_truth)
    _check_same_shape(prediction_values, truth_values)
    if not np.any(truth_values):
        raise AlignmentError("Ground truth is zero everywhere: alignment is undefined")
    correlation: NDArray[np.float64] = signal.correlate(prediction_values, truth_values, mode="full", method="fft")
    best: float = float(np.max(correlation))
    tolerance: float = _CORRELATION_TOLERANCE * max(abs(best), float(np.max(np.abs(correlation))), 1e-300)
    lag_rows, lag_cols = np.nonzero(correlation >= best - tolerance)
    candidates: List[Tuple[int, int, int]] = []
    for row, col in zip(lag_rows, lag_cols):
        shift_y: int = int(row) - (truth_values.shape[0] - 1)
        shift_x: int = int(col) - (truth_values.shape[1] - 1)
        candidates.append((shift_x * shift_x + shift_y * shift_y, shift_x, shift_y))
    _, shift_x, shift_y = min(candidates)
    LOGGER.debug("Cross-correlation alignment: shift (%d, %d) px", shift_x, shift_y)
    return shift_x, shift_y


# Integer translation with zero fill
def shift_map(depth_map: DepthMap, shift_x_px: int, shift_y_px: int) -> DepthMap:
    return depth_map._replace(values=shift_field(depth_map.values, (float(shift_x_px), float(shift_y_px))))


def fit_depth_scale(aligned_gt: DepthMap, predicted: DepthMap) -> float:
    truth_values: NDArray[np.float64] = _millimeters(aligned_gt)
    prediction_values: NDArray[np.float64] = _millimeters(predicted)
    _check_same_shape(truth_values, prediction_values)
    energy: float = float(np.sum(truth_values * truth_values))
    if energy == 0:
        raise RP2ValueError("Ground truth is zero everywhere: depth scale is undefined")
    scale: float = float(np.sum(truth_values * prediction_values)) / energy
    low, high = DEPTH_SCALE_BOUNDS
    if not low <= scale <= high:
        LOGGER.warning("Fitted depth scale %g is outside [%g, %g]: clamping", scale, low, high)
        scale = min(max(scale, low), high)
    return scale


def pressed_profile(profile: HeightField, indent_depth: float) -> DepthMap:
    peak: float = float(np.max(profile.values))
    return DepthMap(np.maximum(0.0, profile.values - (peak - indent_depth)), profile.pitch_mm_per_px)


# Offset alternative to the scale fit: the indentation depth at which the object profile best matches the prediction.
def fit_indent_depth(profile: HeightField, predicted: DepthMap) -> float:
    profile.validate()
    prediction_values: NDArray[np.float64] = _millimeters(predicted)
    _check_same_shape(profile.values, prediction_values)
    peak: float = float(np.max(profile.values))
    if peak <= 0:
        raise RP2ValueError("Object profile is flat: indentation depth is undefined")

    def mean_squared_error(depth: float) -> float:
        return float(np.mean((pressed_profile(profile, depth).values - prediction_values) ** 2))

    result = optimize.minimize_scalar(mean_squared_error, bounds=(0.0, peak), method="bounded", options={"xatol": 1e-9})
    return float(result.x)


def error_report(predicted: DepthMap, adjusted_gt: DepthMap) -> ErrorReport:
    prediction_um: NDArray[np.float64] = np.asarray(predicted.in_micrometers().values, dtype=np.float64)
    truth_um: NDArray[np.float64] = np.asarray(adjusted_gt.in_micrometers().values, dtype=np.float64)
    _check_same_shape(prediction_um, truth_um)
    error_map: NDArray[np.float64] = np.abs(prediction_um - truth_um)
    type1_mask: NDArray[np.bool_] = truth_um == 0
    type1_count: int = int(np.count_nonzero(type1_mask))
    type2_count: int = int(error_map.size - type1_count)
    type1: float = float(np.mean(error_map[type1_mask])) if type1_count else math.nan
    type2: float = float(np.mean(error_map[~type1_mask])) if type2_count else math.nan
    weighted: float = (type1_count * type1 if type1_count else 0.0) + (type2_count * type2 if type2_count else 0.0)
    overall: float = weighted / (type1_count + type2_count)
    return ErrorReport(overall, type1, type2, error_map, type1_mask, type1_count, type2_count)


def cross_section(depth_map: DepthMap, row: Optional[int] = None) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    row_index: int = depth_map.rows // 2 if row is None else row
    if not 0 <= row_index < depth_map.rows:
        raise RP2ValueError(f"Row {row_index} outside the map ({depth_map.rows} rows)")
    positions: NDArray[np.float64] = (np.arange(depth_map.cols, dtype=np.float64) + 0.5) * depth_map.pitch_mm_per_px
    return positions, np.asarray(depth_map.values[row_index], dtype=np.float64)


# Gaussian KDE on a support extending 4 bandwidths past the data, sampled finely enough for the density to integrate to 1
def kernel_density(values: NDArray[np.floating], bandwidth: float = KDE_BANDWIDTH) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    data: NDArray[np.float64] = np.asarray(values, dtype=np.float64)
    if data.size == 0:
        raise RP2ValueError("Cannot estimate the density of an empty sample")
    if not bandwidth > 0:
        raise RP2ValueError(f"bandwidth must be positive: {bandwidth}")
    low: float = float(np.min(data)) - KDE_SUPPORT_BANDWIDTHS * bandwidth
    high: float = float(np.max(data)) + KDE_SUPPORT_BANDWIDTHS * bandwidth
    points: int = max(KDE_MIN_POINTS, int(math.ceil(8.0 * (high - low) / bandwidth)) + 1)
    support: NDArray[np.float64] = np.linspace(low, high, points)
    density: NDArray[np.float64] = np.zeros(points)
    for value in data:
        density += stats.norm.pdf(support, loc=value, scale=bandwidth)
    return support, density / data.size


def histogram(values: NDArray[np.floating], bin_width: float = KDE_BANDWIDTH) -> Tuple[NDArray[np.float64], NDArray[np.int64]]:
    data: NDArray[np.float64] = np.asarray(values, dtype=np.float64)
    if data.size == 0 or not bin_width > 0:
        raise RP2ValueError(f"Histogram needs data and a positive bin width: {data.size} values, width {bin_width}")
    first: float = math.floor(float(np.min(data)) / bin_width) * bin_width
    count: int = max(1, int(math.floor((float(np.max(data)) - first) / bin_width)) + 1)
    edges: NDArray[np.float64] = first + np.arange(count + 1) * bin_width
    counts, _ = np.histogram(data, bins=edges)
    return edges, counts.astype(np.int64)


def _model_predictor(model: TouchNet) -> Predictor:
    def predict(dataset: Dataset, sample_indices: List[int]) -> NDArray[np.floating]:
        return predict_gradients(model, dataset.images(sample_indices))

    return predict


def per_coordinate_mse(
    model: Union[TouchNet, Predictor],
    dataset: Dataset,
    val_indices: Sequence[int],
    fov_filter: bool = True,
    bandwidth: float = KDE_BANDWIDTH,
) -> MseDistribution:
    predictor: Predictor = _model_predictor(model) if isinstance(model, TouchNet) else model
    plan_indices: List[int] = []
    coordinates: List[Tuple[float, float]] = []
    values: List[float] = []
    skipped: int = 0
    for plan_index in sorted(val_indices):
        point = dataset.plan.points[plan_index]
        if fov_filter and not dataset.sensor_geometry.in_field_of_view(point.x_mm, point.y_mm):
            skipped += 1
            continue
        sample_indices: List[int] = dataset.sample_indices_for([plan_index])
        if not sample_indices:
            continue
        predictions: NDArray[np.float64] = np.asarray(predictor(dataset, sample_indices), dtype=np.float64)
        labels: NDArray[np.float64] = dataset.labels(sample_indices).astype(np.float64)
        # Every frame has the same pixel count, so the mean of frame MSEs is the mean over all entries
        values.append(float(np.mean((predictions - labels) ** 2)))
        plan_indices.append(plan_index)
        coordinates.append((point.x_mm, point.y_mm))
    if not values:
        raise RP2ValueError("Validation set is empty (after the field-of-view filter)")
    if skipped:
        LOGGER.debug("Field-of-view filter excluded %d validation coordinates", skipped)
    mse_values: NDArray[np.float64] = np.array(values)
    support, density = kernel_density(mse_values, bandwidth)
    return MseDistribution(tuple(plan_indices), np.array(coordinates), mse_values, support, density, float(np.mean(mse_values)), float(np.std(mse_values)))


def bonferroni_threshold(alpha: float = SIGNIFICANCE_ALPHA, comparison_count: int = COMPARISON_COUNT) -> float:
    if not 0 < alpha < 1 or comparison_count < 1:
        raise RP2ValueError(f"Invalid Bonferroni parameters: alpha={alpha}, m={comparison_count}")
    return alpha / comparison_count


def _check_samples(first: NDArray[np.float64], second: NDArray[np.float64]) -> None:
    if first.size < 2 or second.size < 2:
        raise RP2ValueError(f"Both samples need at least 2 values: {first.size}, {second.size}")


def _degenerate_t_test(first: NDArray[np.float64], second: NDArray[np.float64], threshold: float) -> Optional[TestResult]:
    if np.var(first) > 0 or np.var(second) > 0:
        return None
    difference: float = float(np.mean(first) - np.mean(second))
    if difference == 0:
        return TestResult(0.0, 1.0, False)
    LOGGER.warning("Both samples have zero variance and different means: reporting the p = 0 limit")
    return TestResult(math.copysign(math.inf, difference), 0.0, 0.0 < threshold)


def welch_t_test(a: Sequence[float], b: Sequence[float], threshold: Optional[float] = None) -> TestResult:
    return _t_test(a, b, equal_variance=False, threshold=threshold)


def student_t_test(a: Sequence[float], b: Sequence[float], threshold: Optional[float] = None) -> TestResult:
    return _t_test(a, b, equal_variance=True, threshold=threshold)


def _t_test(a: Sequence[float], b: Sequence[float], equal_variance: bool, threshold: Optional[float]) -> TestResult:
    first: NDArray[np.float64] = np.asarray(a, dtype=np.float64)
    second: NDArray[np.float64] = np.asarray(b, dtype=np.float64)
    _check_samples(first, second)
    limit: float = bonferroni_threshold() if threshold is None else threshold
    degenerate: Optional[TestResult] = _degenerate_t_test(first, second, limit)
    if degenerate is not None:
        return degenerate
    result = stats.ttest_ind(first, second, equal_var=equal_variance)
    p_value: float = min(1.0, max(0.0, float(result.pvalue)))
    return TestResult(float(result.statistic), p_value, p_value < limit)


# Exact null distribution for small samples without ties, normal approximation with tie correction otherwise
def mann_whitney_u(a: Sequence[float], b: Sequence[float], threshold: Optional[float] = None) -> TestResult:
    first: NDArray[np.float64] = np.asarray(a, dtype=np.float64)
    second: NDArray[np.float64] = np.asarray(b, dtype=np.float64)
    _check_samples(first, second)
    limit: float = bonferroni_threshold() if threshold is None else threshold
    combined: NDArray[np.float64] = np.concatenate([first, second])
    if np.all(combined == combined[0]):
        return TestResult(first.size * second.size / 2.0, 1.0, False)
    has_ties: bool = np.unique(combined).size < combined.size
    method: str = "exact" if max(first.size, second.size) <= EXACT_U_MAX_SIZE and not has_ties else "asymptotic"
    result = stats.mannwhitneyu(first, second, alternative="two-sided", method=method)
    p_value: float = min(1.0, max(0.0, float(result.pvalue)))
    return TestResult(float(result.statistic), p_value, p_value < limit)


def evaluate_object(
    model: TouchNet,
    object_name: str,
    geometry: SensorGeometry,
    illumination: IlluminationModel,
    indent_depth: float,
    pose_shift_xy: Tuple[float, float] = (0.0, 0.0),
    seed: int = 0,
    fit: str = SCALE_FIT,
    scheme: str = MATCHED_SCHEME,
) -> ObjectEvaluation:
    if fit not in (SCALE_FIT, DEPTH_FIT):
        raise RP2ValueError(f"fit must be '{SCALE_FIT}' or '{DEPTH_FIT}': {fit}")
    pitch: float = geometry.pitch_mm_per_px
    profile: HeightField = object_height_field(object_name, geometry)

    image, _ = render_object(profile, pose_shift_xy, indent_depth, illumination, seed)
    predicted: DepthMap = predict_depth(model, image, pitch, scheme)
    nominal: DepthMap = pressed_profile(profile, indent_depth)
    shift_x, shift_y = align_xcorr(predicted, nominal)

    fitted_value: float
    if fit == SCALE_FIT:
        aligned: DepthMap = shift_map(nominal, shift_x, shift_y)
        fitted_value = fit_depth_scale(aligned, predicted)
        ground_truth: DepthMap = DepthMap(aligned.values * fitted_value, pitch, GridUnits.MM)
    else:
        shifted_profile: HeightField = HeightField(shift_field(profile.values, (float(shift_x), float(shift_y))), pitch)
        fitted_value = fit_indent_depth(shifted_profile, predicted)
        ground_truth = pressed_profile(shifted_profile, fitted_value)

    report: ErrorReport = error_report(predicted, ground_truth)
    LOGGER.info(
        "%s: shift (%d, %d) px, fitted %s %g, error overall %.3f um, type 1 %.3f um, type 2 %.3f um",
        object_name,
        shift_x,
        shift_y,
        fit,
        fitted_value,
        report.overall_um,
        report.type1_um,
        report.type2_um,
    )
    return ObjectEvaluation(object_name, image, predicted, ground_truth, (shift_x, shift_y), fitted_value, report)

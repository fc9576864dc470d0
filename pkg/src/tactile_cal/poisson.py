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

# Fast Poisson integration of gradient maps: the discrete Laplacian with zero Dirichlet boundary is
# diagonalized by the type-I discrete sine transform, so a solve is two transforms and a division.
#
# Two discretizations are available:
# - "matched": the Laplacian obtained by composing central differences with central differences (five-point
#   stencil with 2h spacing). It is the exact adjoint pair of gradients_of/divergence, so integrating the
#   gradients of a field with a zero border at least 3 pixels wide recovers the field to round-off.
# - "compact": the classic unit-spacing five-point stencil. It couples neighbouring pixels and damps
#   checkerboard noise in predicted gradients, at the cost of an O(h) bias near slope discontinuities.

import math
from typing import NamedTuple, Tuple

import numpy as np
from numpy.typing import NDArray
from rp2.rp2_error import RP2ValueError
from scipy.fft import dstn, idstn

from tactile_cal.calibration_error import NumericError
from tactile_cal.depth_gt import DepthMap
from tactile_cal.grid_file import GridUnits
from tactile_cal.sensor_sim import GradientMap

MATCHED_SCHEME: str = "matched"
COMPACT_SCHEME: str = "compact"
SCHEMES: Tuple[str, str] = (MATCHED_SCHEME, COMPACT_SCHEME)


class DivergenceField(NamedTuple):
    values: NDArray[np.float64]


def _stride(scheme: str) -> int:
    if scheme == MATCHED_SCHEME:
        return 2
    if scheme == COMPACT_SCHEME:
        return 1
    raise RP2ValueError(f"Unknown integration scheme '{scheme}': must be one of {', '.join(SCHEMES)}")


def _check_shape(rows: int, cols: int) -> None:
    if rows < 3 or cols < 3:
        raise RP2ValueError(f"Poisson integration needs at least 3x3 pixels, instead it was {rows}x{cols}")


def divergence(gradient_map: GradientMap, pitch: float) -> DivergenceField:
    _check_shape(gradient_map.rows, gradient_map.cols)
    if not pitch > 0:
        raise RP2ValueError(f"pitch must be positive: {pitch}")
    d_gx: NDArray[np.float64] = np.gradient(np.asarray(gradient_map.gx, dtype=np.float64), pitch, axis=1)
    d_gy: NDArray[np.float64] = np.gradient(np.asarray(gradient_map.gy, dtype=np.float64), pitch, axis=0)
    return DivergenceField(d_gx + d_gy)


def _eigenvalues(rows: int, cols: int, pitch: float, scheme: str) -> NDArray[np.float64]:
    theta_rows: NDArray[np.float64] = math.pi * np.arange(1, rows + 1) / (rows + 1)
    theta_cols: NDArray[np.float64] = math.pi * np.arange(1, cols + 1) / (cols + 1)
    if _stride(scheme) == 2:
        return -(np.sin(theta_rows)[:, None] ** 2 + np.sin(theta_cols)[None, :] ** 2) / pitch**2
    return ((2.0 * np.cos(theta_rows) - 2.0)[:, None] + (2.0 * np.cos(theta_cols) - 2.0)[None, :]) / pitch**2


def solve_poisson(divergence_values: NDArray[np.floating], pitch: float, scheme: str = MATCHED_SCHEME) -> NDArray[np.float64]:
    values: NDArray[np.float64] = np.asarray(divergence_values, dtype=np.float64)
    _check_shape(values.shape[0], values.shape[1])
    if not np.all(np.isfinite(values)):
        raise NumericError("Divergence field contains non-finite values")
    coefficients: NDArray[np.float64] = dstn(values, type=1, norm="ortho")
    coefficients /= _eigenvalues(values.shape[0], values.shape[1], pitch, scheme)
    return np.asarray(idstn(coefficients, type=1, norm="ortho"), dtype=np.float64)


# The raw solution is returned: negative depths are not clamped.
def integrate(gradient_map: GradientMap, pitch: float, scheme: str = MATCHED_SCHEME) -> DepthMap:
    _check_shape(gradient_map.rows, gradient_map.cols)
    if not (np.all(np.isfinite(gradient_map.gx)) and np.all(np.isfinite(gradient_map.gy))):
        raise NumericError("Gradient map contains non-finite values")
    return DepthMap(solve_poisson(divergence(gradient_map, pitch).values, pitch, scheme), pitch, GridUnits.MM)


def _second_difference(values: NDArray[np.float64], axis: int, stride: int, pitch: float) -> NDArray[np.float64]:
    moved: NDArray[np.float64] = np.moveaxis(values, axis, 0)
    zero: NDArray[np.float64] = np.zeros((1,) + moved.shape[1:])
    # Odd extension about the virtual zero rows at -1 and n
    prefix: NDArray[np.float64] = np.concatenate([-moved[: stride - 1][::-1], zero])
    suffix: NDArray[np.float64] = np.concatenate([zero, -moved[moved.shape[0] - stride + 1 :][::-1]])
    extended: NDArray[np.float64] = np.concatenate([prefix, moved, suffix])
    result: NDArray[np.float64] = (extended[2 * stride :] - 2.0 * extended[stride:-stride] + extended[: -2 * stride]) / (stride * pitch) ** 2
    return np.moveaxis(result, 0, axis)


# Discrete Laplacian that solve_poisson inverts, for residual checks
def laplacian(values: NDArray[np.floating], pitch: float, scheme: str = MATCHED_SCHEME) -> NDArray[np.float64]:
    field: NDArray[np.float64] = np.asarray(values, dtype=np.float64)
    _check_shape(field.shape[0], field.shape[1])
    stride: int = _stride(scheme)
    return _second_difference(field, 0, stride, pitch) + _second_difference(field, 1, stride, pitch)

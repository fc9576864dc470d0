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

import csv
import hashlib
import io
import math
from typing import Iterable, List, NamedTuple, Optional, Sequence, Set, Tuple

import numpy as np
from rp2.rp2_error import RP2TypeError, RP2ValueError

from tactile_cal.calibration_error import ParseError, RangeError
from tactile_cal.configuration import DEFAULT_FRAMES_PER_INDENT, HOLDOUT_FRACTION, MAX_TRAINING_FRACTION
from tactile_cal.sensor_geometry import SensorGeometry

PLAN_CSV_HEADER: Tuple[str, str, str] = ("x_mm", "y_mm", "depth_mm")
SPLIT_CSV_HEADER: Tuple[str, str] = ("index", "role")
TRAIN_ROLE: str = "train"
VAL_ROLE: str = "val"

# CSV precision: coordinates are kept at this many decimal places so that write/read round trips are exact.
_DECIMALS: int = 6
# Absorbs floating point noise in extent / spacing before flooring
_COUNT_EPSILON: float = 1e-9


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


class ProbePoint(NamedTuple):
    x_mm: float
    y_mm: float
    depth_mm: float


class ProbePlan:
    def __init__(
        self,
        points: Sequence[ProbePoint],
        spacing_mm: float,
        extent_mm: Tuple[float, float],
        frames_per_indent: int,
    ) -> None:
        if not isinstance(frames_per_indent, int) or isinstance(frames_per_indent, bool):
            raise RP2TypeError(f"frames_per_indent is not an integer: {frames_per_indent}")
        if frames_per_indent < 1:
            raise RP2ValueError(f"frames_per_indent must be >= 1: {frames_per_indent}")
        if spacing_mm < 0:
            raise RP2ValueError(f"spacing_mm must be >= 0: {spacing_mm}")
        seen: Set[ProbePoint] = set()
        for index, point in enumerate(points):
            if not isinstance(point, ProbePoint):
                raise RP2TypeError(f"Point {index} is not a ProbePoint: {point}")
            if not all(math.isfinite(value) for value in point):
                raise RP2ValueError(f"Point {index} has non-finite coordinates: {point}")
            if point.depth_mm < 0:
                raise RP2ValueError(f"Point {index} has negative depth: {point.depth_mm}")
            if point in seen:
                raise RP2ValueError(f"Point {index} is a duplicate: {point}")
            seen.add(point)

        self.__points: Tuple[ProbePoint, ...] = tuple(points)
        self.__spacing_mm: float = float(spacing_mm)
        self.__extent_mm: Tuple[float, float] = (float(extent_mm[0]), float(extent_mm[1]))
        self.__frames_per_indent: int = frames_per_indent

    @property
    def points(self) -> Tuple[ProbePoint, ...]:
        return self.__points

    @property
    def spacing_mm(self) -> float:
        return self.__spacing_mm

    @property
    def extent_mm(self) -> Tuple[float, float]:
        return self.__extent_mm

    @property
    def frames_per_indent(self) -> int:
        return self.__frames_per_indent

    def __len__(self) -> int:
        return len(self.__points)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProbePlan):
            return NotImplemented
        return (
            self.points == other.points
            and self.spacing_mm == other.spacing_mm
            and self.extent_mm == other.extent_mm
            and self.frames_per_indent == other.frames_per_indent
        )

    def __hash__(self) -> int:
        return hash((self.points, self.spacing_mm, self.extent_mm, self.frames_per_indent))

    def __str__(self) -> str:
        return (
            f"ProbePlan(points={len(self.points)}, spacing_mm={self.spacing_mm}, extent_mm={self.extent_mm}, frames_per_indent={self.frames_per_indent})"
        )

    def digest(self) -> str:
        return hashlib.sha256(f"{write_plan_csv(self)}frames_per_indent={self.frames_per_indent}\n".encode("utf-8")).hexdigest()

    def check_within(self, geometry: SensorGeometry) -> None:
        for index, point in enumerate(self.points):
            if not geometry.in_extent(point.x_mm, point.y_mm):
                raise RangeError(f"Point {index} ({point.x_mm}, {point.y_mm}) is outside the sensor extent {geometry.extent_mm}", index)


class PlanSplit(NamedTuple):
    train_indices: Tuple[int, ...]
    val_indices: Tuple[int, ...]
    fraction_p: float
    seed: int


def generate_grid(
    extent_mm: Tuple[float, float],
    spacing_mm: float,
    depth_mm: float,
    frames_per_indent: int,
    origin_mm: Tuple[float, float] = (0.0, 0.0),
) -> ProbePlan:
    if not spacing_mm > 0:
        raise RP2ValueError(f"spacing_mm must be positive: {spacing_mm}")
    if not (extent_mm[0] > 0 and extent_mm[1] > 0):
        raise RP2ValueError(f"extent_mm must be positive: {extent_mm}")
    if depth_mm < 0:
        raise RP2ValueError(f"depth_mm must be >= 0: {depth_mm}")

    x_count: int = math.floor(extent_mm[0] / spacing_mm + _COUNT_EPSILON) + 1
    y_count: int = math.floor(extent_mm[1] / spacing_mm + _COUNT_EPSILON) + 1
    points: List[ProbePoint] = []
    for j in range(y_count):
        y_mm: float = round(origin_mm[1] + j * spacing_mm, _DECIMALS)
        for i in range(x_count):
            points.append(ProbePoint(round(origin_mm[0] + i * spacing_mm, _DECIMALS), y_mm, float(depth_mm)))
    return ProbePlan(points, spacing_mm, extent_mm, frames_per_indent)


# The validation holdout is a function of the plan size and its own seed only, so every training subset shares it.
def master_holdout(point_count: int, holdout_seed: int = 0) -> Tuple[int, ...]:
    if point_count < 1:
        raise RP2ValueError("Cannot hold out points from an empty plan")
    val_count: int = round_half_up(HOLDOUT_FRACTION * point_count)
    permutation = np.random.default_rng(holdout_seed).permutation(point_count)
    return tuple(sorted(int(index) for index in permutation[:val_count]))


def split_plan(plan: ProbePlan, fraction_p: float, seed: int, holdout_seed: int = 0) -> PlanSplit:
    if not isinstance(seed, int) or seed < 0:
        raise RP2ValueError(f"seed must be an unsigned integer: {seed}")
    if not 0 < fraction_p <= MAX_TRAINING_FRACTION:
        raise RP2ValueError(f"fraction_P must be in (0, {MAX_TRAINING_FRACTION}] (larger values overlap the validation holdout): {fraction_p}")

    point_count: int = len(plan)
    val_indices: Tuple[int, ...] = master_holdout(point_count, holdout_seed)
    val_set: Set[int] = set(val_indices)
    available: List[int] = [index for index in range(point_count) if index not in val_set]
    train_count: int = min(round_half_up(fraction_p * point_count), len(available))
    if train_count < 1:
        raise RP2ValueError(f"fraction_P={fraction_p} selects no training coordinates out of {point_count}")
    chosen = np.random.default_rng(seed).choice(np.asarray(available, dtype=np.int64), size=train_count, replace=False)
    return PlanSplit(tuple(sorted(int(index) for index in chosen)), val_indices, float(fraction_p), seed)


def write_plan_csv(plan: ProbePlan) -> str:
    output: io.StringIO = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(PLAN_CSV_HEADER)
    for point in plan.points:
        writer.writerow([f"{point.x_mm:.{_DECIMALS}f}", f"{point.y_mm:.{_DECIMALS}f}", f"{point.depth_mm:.{_DECIMALS}f}"])
    return output.getvalue()


def _parse_real(field: str, name: str, line_number: int) -> float:
    try:
        value: float = float(field.strip())
    except ValueError as exc:
        raise ParseError(f"{name} is not a decimal number: '{field}'", line_number) from exc
    if not math.isfinite(value):
        raise ParseError(f"{name} is not finite: '{field}'", line_number)
    return value


def _infer_spacing(values: Iterable[float]) -> float:
    unique_values: List[float] = sorted(set(values))
    gaps: List[float] = [round(b - a, _DECIMALS) for a, b in zip(unique_values, unique_values[1:])]
    return min(gaps) if gaps else 0.0


# Spacing and extent are not stored in the CSV: unless given, they are inferred from the point cloud.
def read_plan_csv(
    text: str,
    frames_per_indent: int = DEFAULT_FRAMES_PER_INDENT,
    spacing_mm: Optional[float] = None,
    extent_mm: Optional[Tuple[float, float]] = None,
) -> ProbePlan:
    reader = csv.reader(io.StringIO(text))
    header: Optional[List[str]] = next(reader, None)
    if header is None or tuple(field.strip() for field in header) != PLAN_CSV_HEADER:
        raise ParseError(f"Expected header '{','.join(PLAN_CSV_HEADER)}', found '{','.join(header or [])}'", 1)

    points: List[ProbePoint] = []
    for row in reader:
        line_number: int = reader.line_num
        if not row or all(not field.strip() for field in row):
            continue
        if len(row) != len(PLAN_CSV_HEADER):
            raise ParseError(f"Expected {len(PLAN_CSV_HEADER)} columns, found {len(row)}", line_number)
        x_mm: float = _parse_real(row[0], "x_mm", line_number)
        y_mm: float = _parse_real(row[1], "y_mm", line_number)
        depth_mm: float = _parse_real(row[2], "depth_mm", line_number)
        if depth_mm < 0:
            raise RP2ValueError(f"line {line_number}: depth_mm must be >= 0: {depth_mm}")
        points.append(ProbePoint(x_mm, y_mm, depth_mm))

    if spacing_mm is None:
        spacing_mm = min((s for s in (_infer_spacing(p.x_mm for p in points), _infer_spacing(p.y_mm for p in points)) if s > 0), default=0.0)
    if extent_mm is None:
        if points:
            extent_mm = (
                round(max(p.x_mm for p in points) - min(p.x_mm for p in points), _DECIMALS),
                round(max(p.y_mm for p in points) - min(p.y_mm for p in points), _DECIMALS),
            )
        else:
            extent_mm = (0.0, 0.0)
    return ProbePlan(points, spacing_mm, extent_mm, frames_per_indent)


def write_split_csv(split: PlanSplit) -> str:
    output: io.StringIO = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(SPLIT_CSV_HEADER)
    roles = sorted([(index, TRAIN_ROLE) for index in split.train_indices] + [(index, VAL_ROLE) for index in split.val_indices])
    for index, role in roles:
        writer.writerow([index, role])
    return output.getvalue()


def read_split_csv(text: str, fraction_p: float, seed: int) -> PlanSplit:
    reader = csv.reader(io.StringIO(text))
    header: Optional[List[str]] = next(reader, None)
    if header is None or tuple(field.strip() for field in header) != SPLIT_CSV_HEADER:
        raise ParseError(f"Expected header '{','.join(SPLIT_CSV_HEADER)}'", 1)
    train: List[int] = []
    val: List[int] = []
    for row in reader:
        line_number: int = reader.line_num
        if not row:
            continue
        if len(row) != len(SPLIT_CSV_HEADER):
            raise ParseError(f"Expected {len(SPLIT_CSV_HEADER)} columns, found {len(row)}", line_number)
        try:
            index: int = int(row[0].strip())
        except ValueError as exc:
            raise ParseError(f"index is not an integer: '{row[0]}'", line_number) from exc
        role: str = row[1].strip()
        if role == TRAIN_ROLE:
            train.append(index)
        elif role == VAL_ROLE:
            val.append(index)
        else:
            raise ParseError(f"role must be '{TRAIN_ROLE}' or '{VAL_ROLE}': '{role}'", line_number)
    if set(train) & set(val):
        raise RP2ValueError("Split file assigns the same index to both train and val")
    return PlanSplit(tuple(sorted(train)), tuple(sorted(val)), float(fraction_p), seed)

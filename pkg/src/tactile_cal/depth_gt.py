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

import re
import struct
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from rp2.rp2_error import RP2ValueError
from scipy.spatial.transform import Rotation

from tactile_cal.calibration_error import EmptyIntersectionError, FormatError, ParseError
from tactile_cal.grid_file import GridUnits
from tactile_cal.sensor_geometry import SensorGeometry

_BINARY_HEADER_SIZE: int = 80
_BINARY_RECORD_DTYPE = np.dtype([("normal", "<f4", (3,)), ("vertices", "<f4", (3, 3)), ("attribute", "<u2")])
_DETERMINANT_EPSILON: float = 1e-9
_DEGENERATE_AREA: float = 1e-12
_VERTEX_REGEX = re.compile(rb"^\s*vertex\s+(\S+)\s+(\S+)\s+(\S+)\s*$", re.IGNORECASE)
_UP: NDArray[np.float64] = np.array([0.0, 0.0, 1.0])


class TriangleMesh(NamedTuple):
    vertices: NDArray[np.float64]  # n x 3, mm
    triangles: NDArray[np.int64]  # m x 3 vertex indices

    def validate(self) -> "TriangleMesh":
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise RP2ValueError(f"vertices must be n x 3, instead shape was {self.vertices.shape}")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise RP2ValueError(f"triangles must be m x 3, instead shape was {self.triangles.shape}")
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise RP2ValueError("Triangle vertex index out of range")
        return self

    # Unit normals from the counter-clockwise winding
    def normals(self) -> NDArray[np.float64]:
        corners: NDArray[np.float64] = self.vertices[self.triangles]
        cross: NDArray[np.float64] = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        return cross / np.linalg.norm(cross, axis=1, keepdims=True)


class DepthMap(NamedTuple):
    values: NDArray[np.float64]
    pitch_mm_per_px: float
    units: GridUnits = GridUnits.MM

    @property
    def rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def cols(self) -> int:
        return int(self.values.shape[1])

    def in_micrometers(self) -> "DepthMap":
        if self.units == GridUnits.UM:
            return self
        if self.units != GridUnits.MM:
            raise RP2ValueError(f"Depth map units must be mm or um, instead they were {self.units.name}")
        return DepthMap(self.values * 1000.0, self.pitch_mm_per_px, GridUnits.UM)

    def in_millimeters(self) -> "DepthMap":
        if self.units == GridUnits.MM:
            return self
        if self.units != GridUnits.UM:
            raise RP2ValueError(f"Depth map units must be mm or um, instead they were {self.units.name}")
        return DepthMap(self.values / 1000.0, self.pitch_mm_per_px, GridUnits.MM)


# Pixel (0, 0) has its corner at origin_xy_mm in the mesh frame; rows grow with y.
class GridSpec(NamedTuple):
    rows: int
    cols: int
    pitch_mm_per_px: float
    origin_xy_mm: Tuple[float, float] = (0.0, 0.0)

    def pixel_centers(self) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
        xs: NDArray[np.float64] = self.origin_xy_mm[0] + (np.arange(self.cols) + 0.5) * self.pitch_mm_per_px
        ys: NDArray[np.float64] = self.origin_xy_mm[1] + (np.arange(self.rows) + 0.5) * self.pitch_mm_per_px
        return xs, ys

    @classmethod
    def centered_on(cls, geometry: SensorGeometry, center_xy_mm: Tuple[float, float] = (0.0, 0.0)) -> "GridSpec":
        width, height = geometry.field_of_view_mm
        return cls(geometry.rows, geometry.cols, geometry.pitch_mm_per_px, (center_xy_mm[0] - width / 2.0, center_xy_mm[1] - height / 2.0))


def _weld(corners: NDArray[np.float64]) -> TriangleMesh:
    flat: NDArray[np.float64] = corners.reshape(-1, 3)
    vertices, inverse = np.unique(flat, axis=0, return_inverse=True)
    triangles: NDArray[np.int64] = np.asarray(inverse, dtype=np.int64).reshape(-1, 3)
    cross: NDArray[np.float64] = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    area: NDArray[np.float64] = 0.5 * np.linalg.norm(cross, axis=1)
    distinct = (triangles[:, 0] != triangles[:, 1]) & (triangles[:, 1] != triangles[:, 2]) & (triangles[:, 0] != triangles[:, 2])
    return TriangleMesh(np.asarray(vertices, dtype=np.float64), triangles[distinct & (area > _DEGENERATE_AREA)]).validate()


def _parse_ascii_stl(data: bytes) -> TriangleMesh:
    facets: List[List[Tuple[float, float, float]]] = []
    current: Optional[List[Tuple[float, float, float]]] = None
    ended: bool = False
    for line_number, line in enumerate(data.splitlines(), 1):
        tokens: List[bytes] = line.split()
        keyword: bytes = tokens[0].lower() if tokens else b""
        if keyword == b"facet":
            if current is not None:
                raise ParseError("facet without endfacet", line_number)
            current = []
        elif keyword == b"vertex":
            match = _VERTEX_REGEX.match(line)
            if current is None or match is None:
                raise ParseError("Malformed or misplaced vertex", line_number)
            try:
                current.append((float(match.group(1)), float(match.group(2)), float(match.group(3))))
            except ValueError as exc:
                raise ParseError("Vertex coordinate is not a number", line_number) from exc
        elif keyword == b"endfacet":
            if current is None or len(current) != 3:
                raise ParseError("Facet must have exactly 3 vertices", line_number)
            facets.append(current)
            current = None
        elif keyword == b"endsolid":
            ended = True
            break
    if current is not None or not ended:
        raise ParseError("Truncated ASCII STL: missing endfacet or endsolid")
    if not facets:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    return _weld(np.asarray(facets, dtype=np.float64))


def _looks_ascii(data: bytes) -> bool:
    head: bytes = data.lstrip().lower()
    return head.startswith(b"solid") and (b"facet" in head or b"endsolid" in head)


def parse_stl(data: bytes) -> TriangleMesh:
    if len(data) >= _BINARY_HEADER_SIZE + 4:
        (count,) = struct.unpack_from("<I", data, _BINARY_HEADER_SIZE)
        body_size: int = len(data) - _BINARY_HEADER_SIZE - 4
        if body_size == count * _BINARY_RECORD_DTYPE.itemsize:
            records = np.frombuffer(data, dtype=_BINARY_RECORD_DTYPE, count=count, offset=_BINARY_HEADER_SIZE + 4)
            # Stored normals are ignored: winding defines orientation
            return _weld(records["vertices"].astype(np.float64))
        if not _looks_ascii(data):
            raise ParseError(f"Binary STL declares {count} facets but holds {body_size / _BINARY_RECORD_DTYPE.itemsize:g} records")
    if _looks_ascii(data):
        return _parse_ascii_stl(data)
    raise FormatError("Data is neither a binary nor an ASCII STL file")


def _align_to_up(vertices: NDArray[np.float64], view_axis: Tuple[float, float, float]) -> NDArray[np.float64]:
    axis: NDArray[np.float64] = np.asarray(view_axis, dtype=np.float64)
    norm: float = float(np.linalg.norm(axis))
    if norm == 0:
        raise RP2ValueError("view_axis must be non-zero")
    axis = axis / norm
    if np.allclose(axis, _UP):
        return vertices
    if np.allclose(axis, -_UP):
        return np.asarray(Rotation.from_euler("x", 180.0, degrees=True).apply(vertices), dtype=np.float64)
    rotation, _ = Rotation.align_vectors([_UP], [axis])
    return np.asarray(rotation.apply(vertices), dtype=np.float64)


# Casts one vertical ray per pixel (pointing along -z) through every triangle (Moller-Trumbore) and keeps
# the highest hit. Also counts hits per pixel.
def _cast_rays(vertices: NDArray[np.float64], mesh: TriangleMesh, grid_spec: GridSpec) -> Tuple[NDArray[np.float64], NDArray[np.int64]]:
    xs, ys = grid_spec.pixel_centers()
    top: NDArray[np.float64] = np.full((grid_spec.rows, grid_spec.cols), -np.inf)
    counts: NDArray[np.int64] = np.zeros((grid_spec.rows, grid_spec.cols), dtype=np.int64)
    if not len(mesh.triangles):
        return top, counts
    ray_z: float = float(vertices[:, 2].max()) + 1.0
    pitch: float = grid_spec.pitch_mm_per_px
    for triangle in vertices[mesh.triangles]:
        v0, v1, v2 = triangle
        e1: NDArray[np.float64] = v1 - v0
        e2: NDArray[np.float64] = v2 - v0
        # With direction (0, 0, -1): pvec = (e2y, -e2x, 0)
        det: float = float(e1[0] * e2[1] - e1[1] * e2[0])
        if abs(det) < _DETERMINANT_EPSILON:
            continue
        col_lo: int = max(int(np.ceil((triangle[:, 0].min() - grid_spec.origin_xy_mm[0]) / pitch - 0.5)), 0)
        col_hi: int = min(int(np.floor((triangle[:, 0].max() - grid_spec.origin_xy_mm[0]) / pitch - 0.5)), grid_spec.cols - 1)
        row_lo: int = max(int(np.ceil((triangle[:, 1].min() - grid_spec.origin_xy_mm[1]) / pitch - 0.5)), 0)
        row_hi: int = min(int(np.floor((triangle[:, 1].max() - grid_spec.origin_xy_mm[1]) / pitch - 0.5)), grid_spec.rows - 1)
        if col_lo > col_hi or row_lo > row_hi:
            continue
        inverse_det: float = 1.0 / det
        tvec_x, tvec_y = np.meshgrid(xs[col_lo : col_hi + 1] - v0[0], ys[row_lo : row_hi + 1] - v0[1])
        tvec_z: float = ray_z - float(v0[2])
        u: NDArray[np.float64] = (tvec_x * e2[1] - tvec_y * e2[0]) * inverse_det
        # qvec = tvec x e1
        q_x: NDArray[np.float64] = tvec_y * e1[2] - tvec_z * e1[1]
        q_y: NDArray[np.float64] = tvec_z * e1[0] - tvec_x * e1[2]
        q_z: NDArray[np.float64] = tvec_x * e1[1] - tvec_y * e1[0]
        v: NDArray[np.float64] = -q_z * inverse_det
        t: NDArray[np.float64] = (e2[0] * q_x + e2[1] * q_y + e2[2] * q_z) * inverse_det
        hit = (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > 0.0)
        if not np.any(hit):
            continue
        window = (slice(row_lo, row_hi + 1), slice(col_lo, col_hi + 1))
        top[window] = np.where(hit, np.maximum(top[window], ray_z - t), top[window])
        counts[window] += hit
    return top, counts


def ray_hit_counts(mesh: TriangleMesh, grid_spec: GridSpec, view_axis: Tuple[float, float, float] = (0.0, 0.0, 1.0)) -> NDArray[np.int64]:
    _, counts = _cast_rays(_align_to_up(mesh.vertices, view_axis), mesh, grid_spec)
    return counts


# Depth is the top surface height above reference_z (default: the lowest mesh vertex), 0 where no geometry is hit.
def mesh_to_depthmap(
    mesh: TriangleMesh,
    grid_spec: GridSpec,
    view_axis: Tuple[float, float, float] = (0.0, 0.0, 1.0),
    reference_z: Optional[float] = None,
) -> DepthMap:
    mesh.validate()
    vertices: NDArray[np.float64] = _align_to_up(mesh.vertices, view_axis)
    top, _ = _cast_rays(vertices, mesh, grid_spec)
    hit = np.isfinite(top)
    if not np.any(hit):
        raise EmptyIntersectionError(f"No triangle of the mesh intersects the {grid_spec.rows}x{grid_spec.cols} grid at {grid_spec.origin_xy_mm}")
    reference: float = float(vertices[:, 2].min()) if reference_z is None else reference_z
    values: NDArray[np.float64] = np.where(hit, np.maximum(top - reference, 0.0), 0.0)
    return DepthMap(values, grid_spec.pitch_mm_per_px, GridUnits.MM)

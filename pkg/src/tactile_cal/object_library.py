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

# Procedural test objects on a 10 x 10 mm footprint centred on the origin, tessellated from a height function
# into a top surface closed by a flat bottom face at z = 0.

from pathlib import Path
from typing import Callable, Dict, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from rp2.rp2_error import RP2ValueError
from stl import mesh as stl_mesh

from tactile_cal.depth_gt import DepthMap, GridSpec, TriangleMesh, mesh_to_depthmap
from tactile_cal.sensor_geometry import SensorGeometry
from tactile_cal.sensor_sim import HeightField

HeightFunction = Callable[[NDArray[np.float64], NDArray[np.float64]], NDArray[np.float64]]

FOOTPRINT_MM: float = 10.0
DEFAULT_TESSELLATION: int = 81


def _sphere(x: NDArray[np.float64], y: NDArray[np.float64], center: Tuple[float, float], radius: float) -> NDArray[np.float64]:
    return np.sqrt(np.maximum(0.0, radius**2 - (x - center[0]) ** 2 - (y - center[1]) ** 2))


def hemisphere(radius_mm: float) -> HeightFunction:
    def height(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
        return _sphere(x, y, (0.0, 0.0), radius_mm)

    return height


def hemispheres(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.maximum(_sphere(x, y, (-2.5, 0.0), 2.25), _sphere(x, y, (2.5, 0.0), 2.25))


# Capsule lying along x
def pill(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    radius: float = 2.4
    axis_x: NDArray[np.float64] = np.clip(x, -2.4, 2.4)
    return np.sqrt(np.maximum(0.0, radius**2 - (x - axis_x) ** 2 - y**2))


# Solid of revolution lying along x: wide base, tapered body, narrow neck and a round head
def pawn(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    body: NDArray[np.float64] = np.where(x < -3.0, 2.4, np.where(x < 0.8, 2.4 - 1.6 * (x + 3.0) / 3.8, 0.0))
    body = np.where((x < -4.8) | (x > 0.8), 0.0, body)
    head: NDArray[np.float64] = np.sqrt(np.maximum(0.0, 2.0**2 - (x - 2.8) ** 2))
    profile: NDArray[np.float64] = np.maximum(body, head)
    return np.sqrt(np.maximum(0.0, profile**2 - y**2))


OBJECTS: Dict[str, HeightFunction] = {
    "hemispheres": hemispheres,
    "pill": pill,
    "pawn": pawn,
}


def height_function(name: str) -> HeightFunction:
    if name not in OBJECTS:
        raise RP2ValueError(f"Unknown test object '{name}': must be one of {', '.join(sorted(OBJECTS))}")
    return OBJECTS[name]


def tessellate(height: HeightFunction, footprint_mm: float = FOOTPRINT_MM, resolution: int = DEFAULT_TESSELLATION) -> TriangleMesh:
    if resolution < 2:
        raise RP2ValueError(f"resolution must be >= 2: {resolution}")
    half: float = footprint_mm / 2.0
    axis: NDArray[np.float64] = np.linspace(-half, half, resolution)
    grid_x, grid_y = np.meshgrid(axis, axis)
    grid_z: NDArray[np.float64] = np.asarray(height(grid_x, grid_y), dtype=np.float64)
    # Footprint border sits on the base plane
    grid_z[0, :] = grid_z[-1, :] = grid_z[:, 0] = grid_z[:, -1] = 0.0

    top_vertices: NDArray[np.float64] = np.column_stack([grid_x.ravel(), grid_y.ravel(), grid_z.ravel()])
    index: NDArray[np.int64] = np.arange(resolution * resolution, dtype=np.int64).reshape(resolution, resolution)
    a = index[:-1, :-1].ravel()
    b = index[:-1, 1:].ravel()
    c = index[1:, 1:].ravel()
    d = index[1:, :-1].ravel()
    top_triangles: NDArray[np.int64] = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])

    base: int = len(top_vertices)
    bottom_vertices: NDArray[np.float64] = np.array([[-half, -half, 0.0], [half, -half, 0.0], [half, half, 0.0], [-half, half, 0.0]])
    bottom_triangles: NDArray[np.int64] = np.array([[base, base + 2, base + 1], [base, base + 3, base + 2]], dtype=np.int64)
    return TriangleMesh(np.vstack([top_vertices, bottom_vertices]), np.vstack([top_triangles, bottom_triangles])).validate()


def object_mesh(name: str, resolution: int = DEFAULT_TESSELLATION) -> TriangleMesh:
    return tessellate(height_function(name), FOOTPRINT_MM, resolution)


def write_stl(mesh: TriangleMesh, path: Union[str, Path]) -> None:
    result = stl_mesh.Mesh(np.zeros(len(mesh.triangles), dtype=stl_mesh.Mesh.dtype))
    result.vectors[:] = mesh.vertices[mesh.triangles]
    result.save(str(path))


# Ground-truth profile of a test object centred in the camera window of the given sensor
def object_depth_map(name: str, geometry: SensorGeometry, resolution: int = DEFAULT_TESSELLATION) -> DepthMap:
    return mesh_to_depthmap(object_mesh(name, resolution), GridSpec.centered_on(geometry))


def object_height_field(name: str, geometry: SensorGeometry, resolution: int = DEFAULT_TESSELLATION) -> HeightField:
    depth_map: DepthMap = object_depth_map(name, geometry, resolution)
    return HeightField(depth_map.values, depth_map.pitch_mm_per_px)

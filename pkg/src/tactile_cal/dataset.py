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
import io
import zlib
from configparser import ConfigParser
from multiprocessing.pool import ThreadPool
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Set, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from PIL import Image
from rp2.rp2_error import RP2TypeError, RP2ValueError

from tactile_cal.abstract_sensor_plugin import AbstractSensorPlugin
from tactile_cal.calibration_error import CaptureError, ChecksumError, FormatVersionError, ParseError
from tactile_cal.configuration import DEFAULT_PROBE_RADIUS_MM, Keyword
from tactile_cal.gcode import ProbeEvent, ProbeRunConfig, plan_to_gcode, virtual_execute
from tactile_cal.grid_file import GridUnits, load_grid, save_grid
from tactile_cal.logger import LOGGER
from tactile_cal.probe_plan import PlanSplit, ProbePlan, ProbePoint, read_plan_csv, read_split_csv, write_plan_csv, write_split_csv
from tactile_cal.sensor_geometry import SensorGeometry
from tactile_cal.sensor_sim import GradientMap, IlluminationModel, TactileImage, gradients_of, indent_sphere, load_illumination, save_illumination
from tactile_cal.serial_runner import AbstractTransport, SerialRunner

DATASET_FORMAT_VERSION: int = 1
FRAME_DEPTH_RULE: str = "linear"

_MANIFEST_FILE: str = "manifest.ini"
_PLAN_FILE: str = "plan.csv"
_SPLIT_FILE: str = "split.csv"
_SAMPLES_FILE: str = "samples.csv"
_IMAGES_DIR: str = "images"
_LABELS_DIR: str = "labels"
_ILLUMINATION_DIR: str = "illumination"
_DATASET_SECTION: str = "dataset"
_GEOMETRY_SECTION: str = "geometry"
_SAMPLES_HEADER: Tuple[str, str, str, str] = ("sample", "plan_index", "frame_depth_mm", "image_crc32")


class Sample(NamedTuple):
    image: TactileImage
    label: GradientMap
    probe: ProbePoint
    frame_depth_mm: float
    plan_index: int

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.probe == other.probe
            and self.frame_depth_mm == other.frame_depth_mm
            and self.plan_index == other.plan_index
            and np.array_equal(self.image.pixels, other.image.pixels)
            and np.array_equal(self.label.gx, other.label.gx)
            and np.array_equal(self.label.gy, other.label.gy)
        )

    def __ne__(self, other: object) -> bool:
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    def __hash__(self) -> int:
        return hash((self.probe, self.frame_depth_mm, self.plan_index))


class DatasetManifest(NamedTuple):
    seed: int
    probe_radius_mm: float
    sensor_name: str
    sensor_config_hash: str
    plan_hash: str
    frame_depth_rule: str = FRAME_DEPTH_RULE
    format_version: int = DATASET_FORMAT_VERSION


class Dataset:
    def __init__(
        self,
        samples: Sequence[Sample],
        sensor_geometry: SensorGeometry,
        probe_radius_mm: float,
        manifest: DatasetManifest,
        plan: ProbePlan,
        split: PlanSplit,
        illumination: Optional[IlluminationModel] = None,
    ) -> None:
        if not isinstance(sensor_geometry, SensorGeometry):
            raise RP2TypeError(f"sensor_geometry is not a SensorGeometry: {sensor_geometry}")
        for index, sample in enumerate(samples):
            if (sample.image.rows, sample.image.cols) != (sensor_geometry.rows, sensor_geometry.cols):
                raise RP2ValueError(f"Sample {index} does not match the sensor geometry {sensor_geometry.rows}x{sensor_geometry.cols}")
        self.__samples: Tuple[Sample, ...] = tuple(samples)
        self.__sensor_geometry: SensorGeometry = sensor_geometry
        self.__probe_radius_mm: float = probe_radius_mm
        self.__manifest: DatasetManifest = manifest
        self.__plan: ProbePlan = plan
        self.__split: PlanSplit = split
        self.__illumination: Optional[IlluminationModel] = illumination

    @property
    def samples(self) -> Tuple[Sample, ...]:
        return self.__samples

    @property
    def sensor_geometry(self) -> SensorGeometry:
        return self.__sensor_geometry

    @property
    def probe_radius_mm(self) -> float:
        return self.__probe_radius_mm

    @property
    def manifest(self) -> DatasetManifest:
        return self.__manifest

    @property
    def plan(self) -> ProbePlan:
        return self.__plan

    @property
    def split(self) -> PlanSplit:
        return self.__split

    @property
    def illumination(self) -> Optional[IlluminationModel]:
        return self.__illumination

    def __len__(self) -> int:
        return len(self.__samples)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.samples == other.samples
            and self.sensor_geometry == other.sensor_geometry
            and self.probe_radius_mm == other.probe_radius_mm
            and self.manifest == other.manifest
            and self.plan == other.plan
            and self.split == other.split
            and (self.illumination is None) == (other.illumination is None)
            and (self.illumination is None or other.illumination is None or self.illumination.digest() == other.illumination.digest())
        )

    def __hash__(self) -> int:
        return hash((len(self.samples), self.manifest))

    def with_split(self, split: PlanSplit) -> "Dataset":
        return Dataset(self.samples, self.sensor_geometry, self.probe_radius_mm, self.manifest, self.plan, split, self.illumination)

    def completed_plan_indices(self) -> List[int]:
        return sorted({sample.plan_index for sample in self.samples})

    def sample_indices_for(self, plan_indices: Sequence[int]) -> List[int]:
        wanted: Set[int] = set(plan_indices)
        return [index for index, sample in enumerate(self.samples) if sample.plan_index in wanted]

    # N x H x W x 3 uint8
    def images(self, sample_indices: Sequence[int]) -> NDArray[np.uint8]:
        return np.stack([self.samples[index].image.pixels for index in sample_indices])

    # N x H x W x 2 float32
    def labels(self, sample_indices: Sequence[int]) -> NDArray[np.float32]:
        return np.stack([self.samples[index].label.stacked() for index in sample_indices]).astype(np.float32)


# Labels are kept at float32 precision, the precision of the grid format, so that datasets round trip exactly.
def make_label(probe_xy: Tuple[float, float], frame_depth: float, probe_radius: float, sensor_geometry: SensorGeometry) -> GradientMap:
    gradient_map: GradientMap = gradients_of(indent_sphere(probe_xy, frame_depth, probe_radius, sensor_geometry))
    return GradientMap(gradient_map.gx.astype(np.float32).astype(np.float64), gradient_map.gy.astype(np.float32).astype(np.float64))


# k-th of n equally spaced depths from depth/n to depth
def frame_depths(depth_mm: float, frames_per_indent: int) -> List[float]:
    return [k * depth_mm / frames_per_indent for k in range(1, frames_per_indent + 1)]


# Independent of capture order, so resumed and uninterrupted captures see the same noise.
def frame_seed(seed: int, plan_index: int, frame: int) -> int:
    return int(np.random.SeedSequence([seed, plan_index, frame]).generate_state(1)[0])


class _CaptureContext(NamedTuple):
    backend: AbstractSensorPlugin
    geometry: SensorGeometry
    probe_radius_mm: float
    frames_per_indent: int
    seed: int


def _capture_event(context: _CaptureContext, event: ProbeEvent) -> List[Sample]:
    result: List[Sample] = []
    point: ProbePoint = event.commanded
    for frame, (frame_index, depth) in enumerate(zip(event.frame_indices, frame_depths(point.depth_mm, context.frames_per_indent)), 1):
        label: GradientMap = make_label((point.x_mm, point.y_mm), depth, context.probe_radius_mm, context.geometry)
        image: TactileImage = context.backend.capture(event, frame_index, depth, label, frame_seed(context.seed, event.plan_index, frame))
        result.append(Sample(image.validate(context.geometry), label, point, depth, event.plan_index))
    return result


def capture(
    plan: ProbePlan,
    split: PlanSplit,
    sensor_backend: AbstractSensorPlugin,
    run_config: ProbeRunConfig,
    seed: int,
    probe_radius_mm: float = DEFAULT_PROBE_RADIUS_MM,
    transport: Optional[AbstractTransport] = None,
    thread_count: int = 1,
    resume_from: Optional[Dataset] = None,
) -> Dataset:
    geometry: SensorGeometry = sensor_backend.geometry
    if split.train_indices and max(split.train_indices) >= len(plan) or split.val_indices and max(split.val_indices) >= len(plan):
        raise RP2ValueError(f"Split references indices beyond the {len(plan)}-point plan")
    if any(point.depth_mm > probe_radius_mm for point in plan.points):
        raise RP2ValueError(f"Probe depths must not exceed the probe radius {probe_radius_mm}")
    plan.check_within(geometry)

    samples_by_point: Dict[int, List[Sample]] = {}
    if resume_from is not None:
        if resume_from.plan != plan or resume_from.manifest.seed != seed:
            raise RP2ValueError("Cannot resume from a dataset captured with a different plan or seed")
        for sample in resume_from.samples:
            samples_by_point.setdefault(sample.plan_index, []).append(sample)
    pending: List[int] = [index for index in range(len(plan)) if index not in samples_by_point]
    LOGGER.info("Capturing %d of %d probe points (%d frames each) with sensor '%s'", len(pending), len(plan), plan.frames_per_indent, sensor_backend.name())

    illumination: Optional[IlluminationModel] = getattr(sensor_backend, "illumination", None)
    manifest: DatasetManifest = DatasetManifest(seed, probe_radius_mm, sensor_backend.name(), sensor_backend.config_hash(), plan.digest())

    def make_dataset() -> Dataset:
        samples: List[Sample] = [sample for index in sorted(samples_by_point) for sample in samples_by_point[index]]
        return Dataset(samples, geometry, probe_radius_mm, manifest, plan, split, illumination)

    # The program only visits pending points: event i maps back to plan index pending[i]
    pending_plan: ProbePlan = ProbePlan([plan.points[index] for index in pending], plan.spacing_mm, plan.extent_mm, plan.frames_per_indent)
    commands = plan_to_gcode(pending_plan, run_config)
    context: _CaptureContext = _CaptureContext(sensor_backend, geometry, probe_radius_mm, plan.frames_per_indent, seed)

    def remap(event: ProbeEvent) -> ProbeEvent:
        plan_index: int = pending[event.plan_index]
        first_frame: int = plan_index * plan.frames_per_indent
        return event._replace(plan_index=plan_index, frame_indices=tuple(range(first_frame, first_frame + plan.frames_per_indent)))

    sensor_backend.connect()
    current: int = pending[0] if pending else -1
    try:
        if transport is None:
            _, events = virtual_execute(commands, plan.frames_per_indent, run_config, pending_plan)
            remapped: List[ProbeEvent] = [remap(event) for event in events]
            if sensor_backend.is_parallel_capture_supported and thread_count > 1:
                with ThreadPool(thread_count) as pool:
                    results = pool.imap(lambda event: _capture_event(context, event), remapped)
                    for event in remapped:
                        current = event.plan_index
                        samples_by_point[event.plan_index] = next(results)
            else:
                for event in remapped:
                    current = event.plan_index
                    samples_by_point[event.plan_index] = _capture_event(context, event)
        else:
            runner: SerialRunner = SerialRunner(transport, run_config, plan.frames_per_indent, plan=pending_plan)
            for event in runner.run(commands):
                event = remap(event)
                current = event.plan_index
                samples_by_point[event.plan_index] = _capture_event(context, event)
    except Exception as exc:
        partial: Dataset = make_dataset()
        completed: List[int] = partial.completed_plan_indices()
        LOGGER.error("Capture failed at probe point %d after %d completed points", current, len(completed))
        raise CaptureError(f"Capture failed at probe point {current}: {exc}", partial, completed, current) from exc
    finally:
        sensor_backend.close()

    result: Dataset = make_dataset()
    if len(result.completed_plan_indices()) != len(plan):
        raise CaptureError("Capture ended before every probe point was visited", result, result.completed_plan_indices(), current)
    LOGGER.info("Captured %d samples", len(result))
    return result


def _encode_png(pixels: NDArray[np.uint8]) -> bytes:
    output: io.BytesIO = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(pixels)).save(output, format="PNG", optimize=False)
    return output.getvalue()


def save_dataset(dataset: Dataset, path: Union[str, Path]) -> None:
    root: Path = Path(path)
    (root / _IMAGES_DIR).mkdir(parents=True, exist_ok=True)
    (root / _LABELS_DIR).mkdir(parents=True, exist_ok=True)

    manifest: DatasetManifest = dataset.manifest
    geometry: SensorGeometry = dataset.sensor_geometry
    ini_config: ConfigParser = ConfigParser()
    ini_config[_DATASET_SECTION] = {
        Keyword.FORMAT_VERSION.value: str(manifest.format_version),
        Keyword.SEED.value: str(manifest.seed),
        Keyword.PROBE_RADIUS.value: repr(manifest.probe_radius_mm),
        Keyword.SENSOR.value: manifest.sensor_name,
        Keyword.ILLUMINATION_HASH.value: manifest.sensor_config_hash,
        Keyword.PLAN_HASH.value: manifest.plan_hash,
        Keyword.FRAME_DEPTH_RULE.value: manifest.frame_depth_rule,
        Keyword.SAMPLE_COUNT.value: str(len(dataset)),
        Keyword.FRAMES.value: str(dataset.plan.frames_per_indent),
        Keyword.SPACING.value: repr(dataset.plan.spacing_mm),
        Keyword.EXTENT.value: f"{dataset.plan.extent_mm[0]!r},{dataset.plan.extent_mm[1]!r}",
        Keyword.FRACTION.value: repr(dataset.split.fraction_p),
        Keyword.SPLIT_SEED.value: str(dataset.split.seed),
    }
    ini_config[_GEOMETRY_SECTION] = {
        "rows": str(geometry.rows),
        "cols": str(geometry.cols),
        "pitch_mm_per_px": repr(geometry.pitch_mm_per_px),
        "extent_mm": f"{geometry.extent_mm[0]!r},{geometry.extent_mm[1]!r}",
        "origin_mm": f"{geometry.origin_mm[0]!r},{geometry.origin_mm[1]!r}",
        "fov_offset_mm": f"{geometry.fov_offset_mm[0]!r},{geometry.fov_offset_mm[1]!r}",
    }
    with open(root / _MANIFEST_FILE, "w", encoding="utf-8") as manifest_file:
        ini_config.write(manifest_file)

    (root / _PLAN_FILE).write_text(write_plan_csv(dataset.plan), encoding="utf-8")
    (root / _SPLIT_FILE).write_text(write_split_csv(dataset.split), encoding="utf-8")
    if dataset.illumination is not None:
        save_illumination(dataset.illumination, root / _ILLUMINATION_DIR)

    with open(root / _SAMPLES_FILE, "w", encoding="utf-8", newline="") as samples_file:
        writer = csv.writer(samples_file, lineterminator="\n")
        writer.writerow(_SAMPLES_HEADER)
        for index, sample in enumerate(dataset.samples):
            png: bytes = _encode_png(sample.image.pixels)
            (root / _IMAGES_DIR / f"{index:06d}.png").write_bytes(png)
            save_grid(root / _LABELS_DIR / f"{index:06d}.grid", sample.label.stacked(), GridUnits.DIMENSIONLESS)
            writer.writerow([index, sample.plan_index, repr(sample.frame_depth_mm), zlib.crc32(png)])
    LOGGER.info("Saved %d samples to %s", len(dataset), root)


def _pair(value: str) -> Tuple[float, float]:
    first, second = value.split(",")
    return (float(first), float(second))


def load_dataset(path: Union[str, Path]) -> Dataset:
    root: Path = Path(path)
    ini_config: ConfigParser = ConfigParser()
    if not ini_config.read(root / _MANIFEST_FILE, encoding="utf-8"):
        raise FileNotFoundError(f"Dataset manifest not found: {root / _MANIFEST_FILE}")
    if not ini_config.has_section(_DATASET_SECTION):
        raise FormatVersionError(f"Dataset manifest {root / _MANIFEST_FILE} has no [{_DATASET_SECTION}] section")
    section = ini_config[_DATASET_SECTION]
    version: Optional[str] = section.get(Keyword.FORMAT_VERSION.value)
    if version is None or version.strip() != str(DATASET_FORMAT_VERSION):
        raise FormatVersionError(f"Dataset format version {version} is not supported (expected {DATASET_FORMAT_VERSION})")

    geometry_section = ini_config[_GEOMETRY_SECTION]
    geometry: SensorGeometry = SensorGeometry(
        rows=geometry_section.getint("rows"),
        cols=geometry_section.getint("cols"),
        pitch_mm_per_px=geometry_section.getfloat("pitch_mm_per_px"),
        extent_mm=_pair(geometry_section["extent_mm"]),
        origin_mm=_pair(geometry_section["origin_mm"]),
        fov_offset_mm=_pair(geometry_section["fov_offset_mm"]),
    ).validate()
    manifest: DatasetManifest = DatasetManifest(
        seed=section.getint(Keyword.SEED.value),
        probe_radius_mm=section.getfloat(Keyword.PROBE_RADIUS.value),
        sensor_name=section[Keyword.SENSOR.value],
        sensor_config_hash=section[Keyword.ILLUMINATION_HASH.value],
        plan_hash=section[Keyword.PLAN_HASH.value],
        frame_depth_rule=section[Keyword.FRAME_DEPTH_RULE.value],
        format_version=DATASET_FORMAT_VERSION,
    )
    plan: ProbePlan = read_plan_csv(
        (root / _PLAN_FILE).read_text(encoding="utf-8"),
        frames_per_indent=section.getint(Keyword.FRAMES.value),
        spacing_mm=section.getfloat(Keyword.SPACING.value),
        extent_mm=_pair(section[Keyword.EXTENT.value]),
    )
    if plan.digest() != manifest.plan_hash:
        raise ChecksumError(f"Plan file {root / _PLAN_FILE} does not match the manifest plan hash")
    split: PlanSplit = read_split_csv(
        (root / _SPLIT_FILE).read_text(encoding="utf-8"), section.getfloat(Keyword.FRACTION.value), section.getint(Keyword.SPLIT_SEED.value)
    )
    illumination: Optional[IlluminationModel] = load_illumination(root / _ILLUMINATION_DIR) if (root / _ILLUMINATION_DIR).is_dir() else None

    samples: List[Sample] = []
    with open(root / _SAMPLES_FILE, encoding="utf-8", newline="") as samples_file:
        reader = csv.reader(samples_file)
        header: Optional[List[str]] = next(reader, None)
        if header is None or tuple(header) != _SAMPLES_HEADER:
            raise ParseError(f"Expected header '{','.join(_SAMPLES_HEADER)}' in {root / _SAMPLES_FILE}", 1)
        for row in reader:
            if len(row) != len(_SAMPLES_HEADER):
                raise ParseError(f"Expected {len(_SAMPLES_HEADER)} columns", reader.line_num)
            index: int = int(row[0])
            plan_index: int = int(row[1])
            png: bytes = (root / _IMAGES_DIR / f"{index:06d}.png").read_bytes()
            if zlib.crc32(png) != int(row[3]):
                raise ChecksumError(f"Image {index:06d}.png checksum mismatch: file is corrupted")
            with Image.open(io.BytesIO(png)) as image:
                pixels: NDArray[np.uint8] = np.asarray(image.convert("RGB"), dtype=np.uint8).copy()
            label: GradientMap = GradientMap.from_stacked(load_grid(root / _LABELS_DIR / f"{index:06d}.grid").values.astype(np.float64))
            samples.append(Sample(TactileImage(pixels), label, plan.points[plan_index], float(row[2]), plan_index))
    if len(samples) != section.getint(Keyword.SAMPLE_COUNT.value):
        raise ParseError(f"Manifest declares {section.getint(Keyword.SAMPLE_COUNT.value)} samples, {len(samples)} found")
    return Dataset(samples, geometry, manifest.probe_radius_mm, manifest, plan, split, illumination)

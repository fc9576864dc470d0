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

import cProfile
import os
import sys
from argparse import ArgumentParser, BooleanOptionalAction, Namespace, RawTextHelpFormatter
from configparser import ConfigParser
from importlib import import_module
from inspect import Parameter, Signature, signature
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, NoReturn, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch
from numpy.typing import NDArray
from PIL import Image
from rp2.logger import LOG_FILE
from rp2.rp2_error import RP2RuntimeError, RP2TypeError, RP2ValueError

from tactile_cal.ablation import AblationReport, run_ablation
from tactile_cal.abstract_printer_plugin import AbstractPrinterPlugin
from tactile_cal.abstract_sensor_plugin import AbstractSensorPlugin
from tactile_cal.calibration_error import CaptureError, ChecksumError, FormatVersionError, TransportError
from tactile_cal.configuration import (
    DEFAULT_CONFIGURATION,
    PROFILER_ENVIRONMENT_VARIABLE,
    SUBCOMMAND_SET,
    Keyword,
    get_thread_count,
    is_plugin_section,
    is_subcommand_section,
)
from tactile_cal.dataset import Dataset, capture, load_dataset, save_dataset
from tactile_cal.evaluation import MseDistribution, ObjectEvaluation, evaluate_object, per_coordinate_mse
from tactile_cal.gcode import GCodeCommand, ProbeEvent, ProbeRunConfig, plan_to_gcode, render_gcode, virtual_execute
from tactile_cal.grid_file import GridUnits, save_grid
from tactile_cal.logger import LOGGER
from tactile_cal.model_checkpoint import load_checkpoint, save_checkpoint
from tactile_cal.plugin.sensor.simulated import SensorPlugin as SimulatedSensorPlugin
from tactile_cal.probe_plan import PlanSplit, ProbePlan, generate_grid, read_plan_csv, split_plan, write_plan_csv, write_split_csv
from tactile_cal.report_generator import write_ablation_report, write_loss_curves, write_object_report, write_summary
from tactile_cal.run_manifest import make_run_manifest, write_run_manifest
from tactile_cal.sensor_geometry import SensorGeometry, sensor_preset
from tactile_cal.sensor_sim import IlluminationModel, TactileImage, default_illumination
from tactile_cal.serial_runner import SerialTransport, serial_run
from tactile_cal.touchnet import TouchNet, TouchNetConfig, TrainConfig, epochs_for_fraction, new_model, predict_depth, train

_VERSION: str = "0.1.0"

EXIT_SUCCESS: int = 0
EXIT_VALIDATION_ERROR: int = 1
EXIT_IO_ERROR: int = 2

_PRINTER_PLUGIN_PACKAGE: str = "tactile_cal.plugin.printer"
_DATASET_DIRECTORY: str = "dataset"
_REPORT_DIRECTORY: str = "report"
_MODEL_FILE: str = "model.ckpt"
_DEMO_SUMMARY_FILE: str = "demo_summary.txt"


class _ArgumentParser(ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION_ERROR, f"{self.prog}: error: {message}\n")


class _RunOutcome(NamedTuple):
    inputs: List[Path]
    outputs: List[Path]
    seeds: List[int]
    manifest_directory: Path


# Effective value of every setting of a subcommand: command-line flag, then INI section, then built-in default
class _Settings:
    def __init__(self, subcommand: str, args: Namespace, ini_config: Optional[ConfigParser]) -> None:
        values: Dict[str, str] = dict(DEFAULT_CONFIGURATION[subcommand])
        if ini_config is not None and ini_config.has_section(subcommand):
            for key, value in ini_config[subcommand].items():
                Keyword.type_check_from_string(key)
                if key not in values:
                    raise RP2ValueError(f"Setting '{key}' is not valid in section [{subcommand}]")
                values[key] = value.strip()
        for key in values:
            flag: Any = getattr(args, key, None)
            if flag is not None:
                values[key] = str(flag)
        self.__values: Dict[str, str] = values

    @property
    def values(self) -> Dict[str, str]:
        return dict(self.__values)

    def string(self, key: Keyword) -> str:
        return self.__values[key.value]

    def integer(self, key: Keyword) -> int:
        return int(self.__convert(key, int))

    def real(self, key: Keyword) -> float:
        return float(self.__convert(key, float))

    def boolean(self, key: Keyword) -> bool:
        value: str = self.string(key).lower()
        if value in ("1", "yes", "true", "on"):
            return True
        if value in ("0", "no", "false", "off"):
            return False
        raise RP2ValueError(f"Setting '{key.value}' is not a boolean: '{value}'")

    def optional_integer(self, key: Keyword) -> Optional[int]:
        return self.integer(key) if self.string(key) else None

    def reals(self, key: Keyword) -> Tuple[float, ...]:
        return tuple(self.__element(key, item, float) for item in self.string(key).split(",") if item.strip())

    def integers(self, key: Keyword) -> Tuple[int, ...]:
        return tuple(int(self.__element(key, item, int)) for item in self.string(key).split(",") if item.strip())

    def pair(self, key: Keyword, separator: str) -> Tuple[float, float]:
        items: List[str] = self.string(key).lower().split(separator)
        if len(items) != 2:
            raise RP2ValueError(f"Setting '{key.value}' must have the form A{separator}B: '{self.string(key)}'")
        return (float(self.__element(key, items[0], float)), float(self.__element(key, items[1], float)))

    def __convert(self, key: Keyword, conversion: Callable[[str], Union[int, float]]) -> Union[int, float]:
        return self.__element(key, self.string(key), conversion)

    @staticmethod
    def __element(key: Keyword, value: str, conversion: Callable[[str], Union[int, float]]) -> Union[int, float]:
        try:
            return conversion(value.strip())
        except ValueError as exc:
            raise RP2ValueError(f"Setting '{key.value}' has an invalid value: '{value}'") from exc


def tactile_cal_entry() -> None:
    sys.exit(tactile_cal_main(sys.argv[1:]))


def tactile_cal_main(argv: Optional[Sequence[str]] = None) -> int:
    if PROFILER_ENVIRONMENT_VARIABLE in os.environ:
        result: List[int] = []
        cProfile.runctx("result.append(cli_dispatch(argv))", globals(), locals())
        return result[0]
    return cli_dispatch(argv)


def cli_dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser: ArgumentParser = _setup_argument_parser()
    try:
        args: Namespace = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION_ERROR

    try:
        ini_config: Optional[ConfigParser] = _read_configuration(args.config)
        settings: _Settings = _Settings(args.subcommand, args, ini_config)
        thread_count: int = args.thread_count if args.thread_count is not None else get_thread_count(default=0)
        if thread_count < 0:
            raise RP2ValueError(f"thread count must be >= 0: {thread_count}")
        if thread_count > 0:
            torch.set_num_threads(thread_count)
        outcome: _RunOutcome = _SUBCOMMAND_HANDLERS[args.subcommand](args, settings, ini_config, max(thread_count, 1))
        manifest_path: Path = write_run_manifest(
            make_run_manifest(args.subcommand, settings.values, _VERSION, args.config, outcome.seeds, outcome.inputs, outcome.outputs),
            outcome.manifest_directory,
        )
        LOGGER.debug("Run manifest: %s", manifest_path)
    except (OSError, ChecksumError, FormatVersionError, TransportError) as exc:
        LOGGER.error("I/O error: %s", exc)
        return EXIT_IO_ERROR
    except CaptureError as exc:
        LOGGER.error("%s (%d probe points completed)", exc, len(exc.completed_indices))
        return EXIT_IO_ERROR if isinstance(exc.__cause__, (OSError, TransportError)) else EXIT_VALIDATION_ERROR
    except (RP2ValueError, RP2TypeError, RP2RuntimeError) as exc:
        LOGGER.error("%s", exc)
        return EXIT_VALIDATION_ERROR
    except Exception:  # pylint: disable=broad-except
        LOGGER.exception("Fatal exception occurred:")
        return EXIT_VALIDATION_ERROR

    LOGGER.info("Log file: %s", LOG_FILE)
    LOGGER.info("Done")
    return EXIT_SUCCESS


def _read_configuration(path: Optional[str]) -> Optional[ConfigParser]:
    if path is None:
        return None
    if not Path(path).exists():
        raise FileNotFoundError(f"Configuration file '{path}' not found")
    ini_config: ConfigParser = ConfigParser(interpolation=None)
    ini_config.read(path, encoding="utf-8")
    for section_name in ini_config.sections():
        if not is_subcommand_section(section_name) and not is_plugin_section(section_name):
            raise RP2ValueError(f"Unknown section [{section_name}] in '{path}'")
    return ini_config


# Typecheck plugin section parameters against the plugin constructor signature and build an initialization parameter dictionary.
# Parameters missing from the section keep their constructor default.
def _validate_plugin_configuration(ini_config: ConfigParser, plugin_name: str, constructor_signature: Signature) -> Dict[str, Union[str, int, float, bool, None]]:
    result: Dict[str, Union[str, int, float, bool, None]] = {}

    for key in ini_config[plugin_name]:
        if key not in constructor_signature.parameters:
            raise RP2ValueError(f"Unknown parameter '{key}' in plugin section [{plugin_name}]")

    for parameter in constructor_signature.parameters:
        annotation: Any = constructor_signature.parameters[parameter].annotation
        has_default: bool = constructor_signature.parameters[parameter].default is not Parameter.empty
        if ini_config[plugin_name].get(parameter) is None:
            if has_default:
                continue
            raise RP2ValueError(f"Missing required parameter '{parameter}' in plugin section [{plugin_name}]")
        if getattr(annotation, "__origin__", None) is Union and len(annotation.__args__) == 2 and annotation.__args__[1] is type(None):
            annotation = annotation.__args__[0]
        try:
            if annotation is str:
                result[parameter] = ini_config[plugin_name][parameter]
            elif annotation is int:
                result[parameter] = ini_config.getint(plugin_name, parameter)
            elif annotation is float:
                result[parameter] = ini_config.getfloat(plugin_name, parameter)
            elif annotation is bool:
                result[parameter] = ini_config.getboolean(plugin_name, parameter)
            else:
                raise RP2ValueError(
                    f"Unsupported type for parameter '{parameter}' in plugin '{plugin_name}' constructor (only str, int, float and bool are allowed)"
                )
        except ValueError as exc:
            raise RP2ValueError(f"Invalid value for parameter '{parameter}' in plugin section [{plugin_name}]: {exc}") from exc

    return result


class _Plugins(NamedTuple):
    printer: Optional[AbstractPrinterPlugin]
    sensor: Optional[AbstractSensorPlugin]


def _load_plugins(ini_config: Optional[ConfigParser]) -> _Plugins:
    printer: Optional[AbstractPrinterPlugin] = None
    sensor: Optional[AbstractSensorPlugin] = None
    if ini_config is None:
        return _Plugins(printer, sensor)
    for section_name in ini_config.sections():
        if not is_plugin_section(section_name):
            continue
        # Plugin sections can have extra trailing words, which are ignored
        plugin_module = import_module(section_name.split(" ", 1)[0])
        if hasattr(plugin_module, "PrinterPlugin"):
            if printer is not None:
                raise RP2ValueError(f"More than one printer plugin section: [{section_name}]")
            printer = plugin_module.PrinterPlugin(**_validate_plugin_configuration(ini_config, section_name, signature(plugin_module.PrinterPlugin)))
            if not isinstance(printer, AbstractPrinterPlugin):
                raise RP2TypeError(f"Plugin '{section_name}' is not a printer plugin")
            LOGGER.info("Initialized printer plugin '%s'", section_name)
        elif hasattr(plugin_module, "SensorPlugin"):
            if sensor is not None:
                raise RP2ValueError(f"More than one sensor plugin section: [{section_name}]")
            sensor = plugin_module.SensorPlugin(**_validate_plugin_configuration(ini_config, section_name, signature(plugin_module.SensorPlugin)))
            if not isinstance(sensor, AbstractSensorPlugin):
                raise RP2TypeError(f"Plugin '{section_name}' is not a sensor plugin")
            LOGGER.info("Initialized sensor plugin '%s'", section_name)
        else:
            raise RP2ValueError(f"Module '{section_name}' defines neither a PrinterPlugin nor a SensorPlugin")
    return _Plugins(printer, sensor)


def _run_config(settings: _Settings, ini_config: Optional[ConfigParser]) -> ProbeRunConfig:
    printer: Optional[AbstractPrinterPlugin] = _load_plugins(ini_config).printer
    if printer is None:
        name: str = settings.string(Keyword.PRINTER)
        plugin_module = import_module(f"{_PRINTER_PLUGIN_PACKAGE}.{name}")
        available: Dict[str, Any] = {
            Keyword.Z_TOUCH.value: settings.real(Keyword.Z_TOUCH),
            Keyword.TRAVEL_Z.value: settings.real(Keyword.TRAVEL_Z),
            Keyword.FEED_TRAVEL.value: settings.real(Keyword.FEED_TRAVEL),
            Keyword.FEED_PROBE.value: settings.real(Keyword.FEED_PROBE),
        }
        parameters = signature(plugin_module.PrinterPlugin).parameters
        missing: List[str] = [key for key, value in parameters.items() if key not in available and value.default is Parameter.empty]
        if missing:
            raise RP2ValueError(f"Printer '{name}' needs {', '.join(missing)}: configure it in a [{_PRINTER_PLUGIN_PACKAGE}.{name}] section")
        printer = plugin_module.PrinterPlugin(**{key: value for key, value in available.items() if key in parameters})
    LOGGER.info("Printer: %s, limits %s", printer.name(), printer.machine_limits())
    return printer.run_config()


def _sensor_geometry(settings: _Settings) -> SensorGeometry:
    return sensor_preset(settings.string(Keyword.SENSOR)).downsampled(settings.integer(Keyword.DOWNSAMPLE))


def _sensor_plugin(settings: _Settings, ini_config: Optional[ConfigParser]) -> AbstractSensorPlugin:
    sensor: Optional[AbstractSensorPlugin] = _load_plugins(ini_config).sensor
    if sensor is not None:
        return sensor
    origin_x, origin_y = settings.pair(Keyword.ORIGIN, ",")
    return SimulatedSensorPlugin(
        preset=settings.string(Keyword.SENSOR),
        downsample=settings.integer(Keyword.DOWNSAMPLE),
        noise_sigma=settings.real(Keyword.NOISE_SIGMA),
        origin_x=origin_x,
        origin_y=origin_y,
    )


def _read_plan(path: str, frames_per_indent: int) -> ProbePlan:
    plan: ProbePlan = read_plan_csv(Path(path).read_text(encoding="utf-8"), frames_per_indent)
    LOGGER.info("Read %d-point plan from %s", len(plan), path)
    return plan


def _model_config(settings: _Settings) -> TouchNetConfig:
    return TouchNetConfig(module_channels=settings.integers(Keyword.CHANNELS), dropout_p=settings.real(Keyword.DROPOUT)).validate()


def _train_config(settings: _Settings, epochs: int, seed: int) -> TrainConfig:
    return TrainConfig(
        learning_rate=settings.real(Keyword.LEARNING_RATE),
        weight_decay=settings.real(Keyword.WEIGHT_DECAY),
        batch_size=settings.integer(Keyword.BATCH_SIZE),
        epochs=epochs,
        seed=seed,
    ).validate()


def _read_image(path: str) -> TactileImage:
    with Image.open(path) as image:
        pixels: NDArray[np.uint8] = np.asarray(image.convert("RGB"), dtype=np.uint8)
    return TactileImage(np.ascontiguousarray(pixels)).validate()


def _output_file(path: str) -> Path:
    result: Path = Path(path)
    result.parent.mkdir(parents=True, exist_ok=True)
    return result


def _output_directory(path: str) -> Path:
    result: Path = Path(path)
    if result.exists() and not result.is_dir():
        raise NotADirectoryError(f"'{path}' exists but it's not a directory")
    result.mkdir(parents=True, exist_ok=True)
    return result


def _run_plan(args: Namespace, settings: _Settings, _ini_config: Optional[ConfigParser], _thread_count: int) -> _RunOutcome:
    plan: ProbePlan = generate_grid(
        settings.pair(Keyword.EXTENT, "x"),
        settings.real(Keyword.SPACING),
        settings.real(Keyword.DEPTH),
        settings.integer(Keyword.FRAMES),
        settings.pair(Keyword.ORIGIN, ","),
    )
    out: Path = _output_file(args.out)
    out.write_text(write_plan_csv(plan), encoding="utf-8")
    LOGGER.info("Generated %d-point plan: %s", len(plan), out)
    outputs: List[Path] = [out]
    seeds: List[int] = []
    if args.split_out is not None:
        split: PlanSplit = split_plan(plan, settings.real(Keyword.FRACTION), settings.integer(Keyword.SEED), settings.integer(Keyword.HOLDOUT_SEED))
        split_path: Path = _output_file(args.split_out)
        split_path.write_text(write_split_csv(split), encoding="utf-8")
        LOGGER.info("Split: %d training and %d validation coordinates: %s", len(split.train_indices), len(split.val_indices), split_path)
        outputs.append(split_path)
        seeds = [split.seed, settings.integer(Keyword.HOLDOUT_SEED)]
    return _RunOutcome([], outputs, seeds, out.parent)


def _run_gcode(args: Namespace, settings: _Settings, ini_config: Optional[ConfigParser], _thread_count: int) -> _RunOutcome:
    plan: ProbePlan = _read_plan(args.plan, 1)
    commands: List[GCodeCommand] = plan_to_gcode(plan, _run_config(settings, ini_config))
    out: Path = _output_file(args.out)
    out.write_text(render_gcode(commands), encoding="utf-8")
    LOGGER.info("Wrote %d G-code commands: %s", len(commands), out)
    return _RunOutcome([Path(args.plan)], [out], [], out.parent)


def _event_rows(events: Sequence[ProbeEvent]) -> List[Dict[str, Any]]:
    return [
        {
            "plan_index": event.plan_index,
            "commanded_x_mm": event.commanded.x_mm,
            "commanded_y_mm": event.commanded.y_mm,
            "commanded_depth_mm": event.commanded.depth_mm,
            "achieved_x_mm": event.achieved[0],
            "achieved_y_mm": event.achieved[1],
            "achieved_z_mm": event.achieved[2],
            "first_frame": event.frame_indices[0],
            "frame_count": len(event.frame_indices),
        }
        for event in events
    ]


def _run_probe(args: Namespace, settings: _Settings, ini_config: Optional[ConfigParser], _thread_count: int) -> _RunOutcome:
    frames: int = settings.integer(Keyword.FRAMES)
    plan: ProbePlan = _read_plan(args.plan, frames)
    run_config: ProbeRunConfig = _run_config(settings, ini_config)
    commands: List[GCodeCommand] = plan_to_gcode(plan, run_config)
    port: str = settings.string(Keyword.PORT)
    events: List[ProbeEvent]
    if args.virtual:
        _, events = virtual_execute(commands, frames, run_config, plan)
    elif port:
        transport: SerialTransport = SerialTransport(port, settings.integer(Keyword.BAUD))
        try:
            events = list(serial_run(commands, transport, run_config, frames, plan=plan, ack_timeout=settings.real(Keyword.TIMEOUT)))
        finally:
            transport.close()
    else:
        raise RP2ValueError("Either --virtual or --port is required")
    out: Path = _output_file(args.out)
    pd.DataFrame(_event_rows(events)).to_csv(out, index=False)
    LOGGER.info("Logged %d probe events: %s", len(events), out)
    return _RunOutcome([Path(args.plan)], [out], [], out.parent)


def _run_capture_sim(args: Namespace, settings: _Settings, ini_config: Optional[ConfigParser], thread_count: int) -> _RunOutcome:
    plan: ProbePlan = _read_plan(args.plan, settings.integer(Keyword.FRAMES))
    seed: int = settings.integer(Keyword.SEED)
    split: PlanSplit = split_plan(plan, settings.real(Keyword.FRACTION), seed, settings.integer(Keyword.HOLDOUT_SEED))
    resume_from: Optional[Dataset] = load_dataset(args.resume) if args.resume is not None else None
    out: Path = _output_directory(args.out)
    inputs: List[Path] = [Path(args.plan)] + ([Path(args.resume)] if args.resume is not None else [])
    try:
        dataset: Dataset = capture(
            plan,
            split,
            _sensor_plugin(settings, ini_config),
            _run_config(settings, ini_config),
            seed,
            settings.real(Keyword.PROBE_RADIUS),
            thread_count=thread_count,
            resume_from=resume_from,
        )
    except CaptureError as exc:
        save_dataset(exc.partial_dataset, out)
        LOGGER.info("Saved the partial dataset to %s: resume with --resume %s", out, out)
        raise
    save_dataset(dataset, out)
    return _RunOutcome(inputs, [out], [seed, split.seed], out)


def _run_train(args: Namespace, settings: _Settings, _ini_config: Optional[ConfigParser], _thread_count: int) -> _RunOutcome:
    dataset: Dataset = load_dataset(args.dataset)
    fraction_p: float = settings.real(Keyword.FRACTION)
    seed: int = settings.integer(Keyword.SEED)
    split: PlanSplit = split_plan(dataset.plan, fraction_p, seed, settings.integer(Keyword.HOLDOUT_SEED))
    epochs: Optional[int] = settings.optional_integer(Keyword.EPOCHS)
    train_config: TrainConfig = _train_config(settings, epochs if epochs is not None else epochs_for_fraction(fraction_p), seed)
    model: TouchNet = load_checkpoint(args.init_model) if args.init_model is not None else new_model(_model_config(settings), seed)
    model, history = train(model, dataset, split, train_config, fraction_p)
    out: Path = _output_file(args.out)
    save_checkpoint(model, out)
    outputs: List[Path] = [out] + write_loss_curves({f"P={fraction_p * 100:g}%": history}, out.parent)
    inputs: List[Path] = [Path(args.dataset)] + ([Path(args.init_model)] if args.init_model is not None else [])
    return _RunOutcome(inputs, outputs, [seed], out.parent)


def _run_ablate(args: Namespace, settings: _Settings, _ini_config: Optional[ConfigParser], _thread_count: int) -> _RunOutcome:
    dataset: Dataset = load_dataset(args.dataset)
    seeds: Tuple[int, ...] = settings.integers(Keyword.SEEDS)
    report: AblationReport = run_ablation(
        dataset,
        settings.reals(Keyword.FRACTIONS),
        seeds,
        _train_config(settings, settings.integer(Keyword.EPOCHS), seeds[0] if seeds else 0),
        _model_config(settings),
        holdout_seed=settings.integer(Keyword.HOLDOUT_SEED),
        fov_filter=settings.boolean(Keyword.FOV_FILTER),
        alpha=settings.real(Keyword.ALPHA),
        comparison_count=settings.integer(Keyword.COMPARISON_COUNT),
    )
    out: Path = _output_directory(args.out)
    return _RunOutcome([Path(args.dataset)], write_ablation_report(report, out), list(seeds), out)


def _run_infer(args: Namespace, settings: _Settings, _ini_config: Optional[ConfigParser], _thread_count: int) -> _RunOutcome:
    model: TouchNet = load_checkpoint(args.model)
    image: TactileImage = _read_image(args.image)
    pitch: float
    if args.pitch is not None:
        pitch = args.pitch
    else:
        # Downsampled frames keep the full field of view
        preset: SensorGeometry = sensor_preset(settings.string(Keyword.SENSOR))
        pitch = preset.pitch_mm_per_px * preset.cols / image.cols
    depth_map = predict_depth(model, image, pitch, settings.string(Keyword.SCHEME))
    out: Path = _output_file(args.out)
    save_grid(out, depth_map.values, GridUnits.MM)
    LOGGER.info("Depth map %dx%d, max depth %.4f mm: %s", depth_map.rows, depth_map.cols, float(np.max(depth_map.values)), out)
    return _RunOutcome([Path(args.model), Path(args.image)], [out], [], out.parent)


def _evaluate_objects(model: TouchNet, settings: _Settings, geometry: SensorGeometry, illumination: IlluminationModel) -> List[ObjectEvaluation]:
    objects: List[str] = [name.strip() for name in settings.string(Keyword.OBJECTS).split(",") if name.strip()]
    return [
        evaluate_object(
            model,
            name,
            geometry,
            illumination,
            settings.real(Keyword.INDENT_DEPTH),
            seed=settings.integer(Keyword.SEED),
            fit=settings.string(Keyword.FIT),
            scheme=settings.string(Keyword.SCHEME),
        )
        for name in objects
    ]


def _run_eval(args: Namespace, settings: _Settings, _ini_config: Optional[ConfigParser], _thread_count: int) -> _RunOutcome:
    model: TouchNet = load_checkpoint(args.model)
    inputs: List[Path] = [Path(args.model)]
    geometry: SensorGeometry
    illumination: Optional[IlluminationModel]
    if args.dataset is not None:
        dataset: Dataset = load_dataset(args.dataset)
        geometry, illumination = dataset.sensor_geometry, dataset.illumination
        if illumination is None:
            raise RP2ValueError(f"Dataset '{args.dataset}' was not captured with the simulator: it has no illumination model")
        inputs.append(Path(args.dataset))
    else:
        geometry = _sensor_geometry(settings)
        illumination = default_illumination(geometry, settings.real(Keyword.NOISE_SIGMA))
    out: Path = _output_directory(args.out)
    outputs: List[Path] = write_object_report(_evaluate_objects(model, settings, geometry, illumination), out)
    return _RunOutcome(inputs, outputs, [settings.integer(Keyword.SEED)], out)


def _run_demo(args: Namespace, settings: _Settings, ini_config: Optional[ConfigParser], thread_count: int) -> _RunOutcome:
    out: Path = _output_directory(args.out)
    seed: int = settings.integer(Keyword.SEED)
    sensor: AbstractSensorPlugin = _sensor_plugin(settings, ini_config)
    if not isinstance(sensor, SimulatedSensorPlugin):
        raise RP2ValueError("The demo runs on the simulated sensor only")
    geometry: SensorGeometry = sensor.geometry
    extent: Tuple[float, float] = settings.pair(Keyword.EXTENT, "x") if settings.string(Keyword.EXTENT) else geometry.extent_mm
    plan: ProbePlan = generate_grid(extent, settings.real(Keyword.SPACING), settings.real(Keyword.DEPTH), settings.integer(Keyword.FRAMES), geometry.origin_mm)
    fraction_p: float = settings.real(Keyword.FRACTION)
    split: PlanSplit = split_plan(plan, fraction_p, seed, settings.integer(Keyword.HOLDOUT_SEED))
    LOGGER.info("Demo: %d-point plan, %d training coordinates, sensor %dx%d", len(plan), len(split.train_indices), geometry.rows, geometry.cols)

    dataset: Dataset = capture(plan, split, sensor, _run_config(settings, ini_config), seed, settings.real(Keyword.PROBE_RADIUS), thread_count=thread_count)
    save_dataset(dataset, out / _DATASET_DIRECTORY)

    model_config: TouchNetConfig = _model_config(settings)
    baseline: MseDistribution = per_coordinate_mse(new_model(model_config, seed), dataset, split.val_indices, fov_filter=False)
    epochs: Optional[int] = settings.optional_integer(Keyword.EPOCHS)
    train_config: TrainConfig = _train_config(settings, epochs if epochs is not None else epochs_for_fraction(fraction_p), seed)
    model, history = train(new_model(model_config, seed), dataset, split, train_config, fraction_p)
    save_checkpoint(model, out / _MODEL_FILE)
    trained: MseDistribution = per_coordinate_mse(model, dataset, split.val_indices, fov_filter=False)

    report_directory: Path = out / _REPORT_DIRECTORY
    outputs: List[Path] = [out / _DATASET_DIRECTORY, out / _MODEL_FILE]
    outputs.extend(write_loss_curves({f"P={fraction_p * 100:g}%": history}, report_directory))
    evaluations: List[ObjectEvaluation] = _evaluate_objects(model, settings, geometry, sensor.illumination)
    outputs.extend(write_object_report(evaluations, report_directory))

    indent_depth_um: float = settings.real(Keyword.INDENT_DEPTH) * 1000.0
    summary: List[str] = [
        f"Validation gradient MSE: untrained {baseline.mean:.6g}, trained {trained.mean:.6g} (ratio {trained.mean / baseline.mean:.4f})",
    ]
    for evaluation in evaluations:
        summary.append(
            f"{evaluation.object_name}: overall depth error {evaluation.report.overall_um:.2f} um "
            f"({100.0 * evaluation.report.overall_um / indent_depth_um:.1f}% of the {indent_depth_um:g} um indentation)"
        )
    outputs.append(write_summary(summary, report_directory / _DEMO_SUMMARY_FILE))
    for line in summary:
        LOGGER.info("%s", line)
    return _RunOutcome([], outputs, [seed, split.seed], out)


_SUBCOMMAND_HANDLERS: Dict[str, Callable[[Namespace, _Settings, Optional[ConfigParser], int], _RunOutcome]] = {
    Keyword.PLAN.value: _run_plan,
    Keyword.GCODE.value: _run_gcode,
    Keyword.PROBE.value: _run_probe,
    Keyword.CAPTURE_SIM.value: _run_capture_sim,
    Keyword.TRAIN.value: _run_train,
    Keyword.ABLATE.value: _run_ablate,
    Keyword.INFER.value: _run_infer,
    Keyword.EVAL.value: _run_eval,
    Keyword.DEMO.value: _run_demo,
}


def _add_split_arguments(parser: ArgumentParser) -> None:
    parser.add_argument("--fraction", type=float, help="Fraction P of the probe coordinates used for training (at most 0.8)")
    parser.add_argument("--seed", type=int, help="Seed of the training subset draw")
    parser.add_argument("--holdout-seed", type=int, help="Seed of the shared 20%% validation holdout")


def _add_printer_arguments(parser: ArgumentParser) -> None:
    parser.add_argument("--printer", type=str, help="Printer plugin name (ender3); other printers are configured in an INI plugin section")
    parser.add_argument("--z-touch", type=float, help="Printer z (mm) at which the probe tip touches the gel surface")
    parser.add_argument("--travel-z", type=float, help="Safe travel height (mm)")
    parser.add_argument("--feed-travel", type=float, help="Travel feed rate (mm/min)")
    parser.add_argument("--feed-probe", type=float, help="Plunge feed rate (mm/min)")


def _add_sensor_arguments(parser: ArgumentParser) -> None:
    parser.add_argument("--sensor", type=str, help="Sensor preset: digit or gelsight_mini")
    parser.add_argument("--downsample", type=int, help="Image downsampling factor (2 gives the desk-scale 80x60 frames)")
    parser.add_argument("--noise-sigma", type=float, help="Simulated camera noise, in 8-bit counts")
    parser.add_argument("--probe-radius", type=float, help="Spherical probe tip radius (mm)")


def _add_training_arguments(parser: ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int, help="Training epochs")
    parser.add_argument("--learning-rate", type=float, help="AdamW learning rate")
    parser.add_argument("--weight-decay", type=float, help="AdamW decoupled weight decay")
    parser.add_argument("--batch-size", type=int, help="Mini-batch size")
    parser.add_argument("--channels", type=str, help="Comma-separated output widths of the 9 TouchNet modules")
    parser.add_argument("--dropout", type=float, help="Spatial dropout probability")


def _add_evaluation_arguments(parser: ArgumentParser) -> None:
    parser.add_argument("--objects", type=str, help="Comma-separated test objects: hemispheres, pill, pawn")
    parser.add_argument("--indent-depth", type=float, help="Indentation depth of the test objects (mm)")
    parser.add_argument("--fit", type=str, choices=("scale", "depth"), help="Ground-truth adjustment: depth scale or indentation depth")
    parser.add_argument("--scheme", type=str, choices=("matched", "compact"), help="Poisson integration stencil")
    parser.add_argument("--seed", type=int, help="Seed of the simulated camera noise")


def _setup_argument_parser() -> ArgumentParser:
    parser: ArgumentParser = _ArgumentParser(
        prog="tactile_cal",
        description=(
            "Calibrate vision-based tactile sensors with a 3D printer: plan probe grids, drive the printer, capture labelled\n"
            "datasets, train TouchNet and evaluate depth reconstruction."
        ),
        formatter_class=RawTextHelpFormatter,
    )
    parser.add_argument("-v", "--version", action="version", version=f"tactile_cal {_VERSION}", help="Print tactile_cal version")

    common: ArgumentParser = ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", type=str, help="INI configuration file: command-line flags win over it", metavar="INI_FILE")
    common.add_argument("-t", "--thread-count", type=int, help="Worker threads (default: TACTILE_CAL_THREADS, otherwise torch's default)")

    subparsers = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND", parser_class=_ArgumentParser)

    plan_parser = subparsers.add_parser(Keyword.PLAN.value, parents=[common], help="Generate a probe plan CSV")
    plan_parser.add_argument("--extent", type=str, help="Grid extent WxH in mm, e.g. 16x18")
    plan_parser.add_argument("--spacing", type=float, help="Grid spacing (mm)")
    plan_parser.add_argument("--depth", type=float, help="Indentation depth (mm)")
    plan_parser.add_argument("--frames", type=int, help="Frames per indentation")
    plan_parser.add_argument("--origin", type=str, help="Printer-frame grid origin X,Y in mm")
    _add_split_arguments(plan_parser)
    plan_parser.add_argument("--split-out", type=str, help="Also write the train/val split CSV")
    plan_parser.add_argument("--out", type=str, required=True, help="Plan CSV to write")

    gcode_parser = subparsers.add_parser(Keyword.GCODE.value, parents=[common], help="Translate a probe plan into G-code")
    gcode_parser.add_argument("--plan", type=str, required=True, help="Probe plan CSV")
    _add_printer_arguments(gcode_parser)
    gcode_parser.add_argument("--out", type=str, required=True, help="G-code program to write")

    probe_parser = subparsers.add_parser(Keyword.PROBE.value, parents=[common], help="Execute a probe plan and log probe events")
    probe_parser.add_argument("--plan", type=str, required=True, help="Probe plan CSV")
    probe_parser.add_argument("--virtual", action="store_true", help="Run on the virtual printer")
    probe_parser.add_argument("--port", type=str, help="Serial port of the printer")
    probe_parser.add_argument("--baud", type=int, help="Serial baud rate")
    probe_parser.add_argument("--timeout", type=float, help="Acknowledgement timeout (s)")
    probe_parser.add_argument("--frames", type=int, help="Frames per indentation")
    _add_printer_arguments(probe_parser)
    probe_parser.add_argument("--out", type=str, default="probe_events.csv", help="Probe event log CSV")

    capture_parser = subparsers.add_parser(Keyword.CAPTURE_SIM.value, parents=[common], help="Capture a labelled dataset with the simulated sensor")
    capture_parser.add_argument("--plan", type=str, required=True, help="Probe plan CSV")
    capture_parser.add_argument("--frames", type=int, help="Frames per indentation")
    capture_parser.add_argument("--origin", type=str, help="Printer-frame position X,Y of the gel corner (mm)")
    _add_split_arguments(capture_parser)
    _add_sensor_arguments(capture_parser)
    _add_printer_arguments(capture_parser)
    capture_parser.add_argument("--resume", type=str, help="Partial dataset directory to resume from")
    capture_parser.add_argument("--out", type=str, required=True, help="Dataset directory")

    train_parser = subparsers.add_parser(Keyword.TRAIN.value, parents=[common], help="Train TouchNet on a dataset")
    train_parser.add_argument("--dataset", type=str, required=True, help="Dataset directory")
    _add_split_arguments(train_parser)
    _add_training_arguments(train_parser)
    train_parser.add_argument("--init-model", type=str, help="Checkpoint to fine-tune instead of a fresh model")
    train_parser.add_argument("--out", type=str, required=True, help="Checkpoint to write")

    ablate_parser = subparsers.add_parser(Keyword.ABLATE.value, parents=[common], help="Training-fraction ablation study")
    ablate_parser.add_argument("--dataset", type=str, required=True, help="Dataset directory")
    ablate_parser.add_argument("--fractions", type=str, help="Comma-separated training fractions, including 0.8")
    ablate_parser.add_argument("--seeds", type=str, help="Comma-separated seeds")
    ablate_parser.add_argument("--holdout-seed", type=int, help="Seed of the shared 20%% validation holdout")
    _add_training_arguments(ablate_parser)
    ablate_parser.add_argument("--fov-filter", action=BooleanOptionalAction, default=None, help="Skip validation coordinates outside the field of view")
    ablate_parser.add_argument("--alpha", type=float, help="Family-wise significance level")
    ablate_parser.add_argument("--comparison-count", type=int, help="Number of comparisons for the Bonferroni correction")
    ablate_parser.add_argument("--out", type=str, required=True, help="Report directory")

    infer_parser = subparsers.add_parser(Keyword.INFER.value, parents=[common], help="Reconstruct a depth map from one tactile image")
    infer_parser.add_argument("--model", type=str, required=True, help="Checkpoint")
    infer_parser.add_argument("--image", type=str, required=True, help="Tactile image (PNG)")
    infer_parser.add_argument("--sensor", type=str, help="Sensor preset, used to derive the pixel pitch")
    infer_parser.add_argument("--pitch", type=float, help="Pixel pitch in mm (overrides the sensor preset)")
    infer_parser.add_argument("--scheme", type=str, choices=("matched", "compact"), help="Poisson integration stencil")
    infer_parser.add_argument("--out", type=str, required=True, help="Depth grid file to write")

    eval_parser = subparsers.add_parser(Keyword.EVAL.value, parents=[common], help="Evaluate depth reconstruction on simulated test objects")
    eval_parser.add_argument("--model", type=str, required=True, help="Checkpoint")
    eval_parser.add_argument("--dataset", type=str, help="Dataset whose sensor geometry and illumination are used")
    _add_sensor_arguments(eval_parser)
    _add_evaluation_arguments(eval_parser)
    eval_parser.add_argument("--out", type=str, required=True, help="Report directory")

    demo_parser = subparsers.add_parser(Keyword.DEMO.value, parents=[common], help="Full simulated pipeline at desk scale")
    demo_parser.add_argument("--extent", type=str, help="Grid extent WxH in mm (default: the sensor gel)")
    demo_parser.add_argument("--spacing", type=float, help="Grid spacing (mm)")
    demo_parser.add_argument("--depth", type=float, help="Indentation depth (mm)")
    demo_parser.add_argument("--frames", type=int, help="Frames per indentation")
    demo_parser.add_argument("--fraction", type=float, help="Fraction P of the probe coordinates used for training")
    demo_parser.add_argument("--holdout-seed", type=int, help="Seed of the shared 20%% validation holdout")
    _add_sensor_arguments(demo_parser)
    _add_printer_arguments(demo_parser)
    _add_training_arguments(demo_parser)
    _add_evaluation_arguments(demo_parser)
    demo_parser.add_argument("--out", type=str, required=True, help="Output directory")

    return parser


if __name__ == "__main__":
    tactile_cal_entry()

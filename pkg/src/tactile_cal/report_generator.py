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

from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # pylint: disable=wrong-import-position
import numpy as np  # pylint: disable=wrong-import-position
import pandas as pd  # pylint: disable=wrong-import-position
from matplotlib.figure import Figure  # pylint: disable=wrong-import-position

from tactile_cal.ablation import AblationReport  # pylint: disable=wrong-import-position
from tactile_cal.evaluation import ObjectEvaluation, cross_section, histogram  # pylint: disable=wrong-import-position
from tactile_cal.logger import LOGGER  # pylint: disable=wrong-import-position
from tactile_cal.touchnet import LossHistory  # pylint: disable=wrong-import-position

_DPI: int = 100
# No software version or timestamp in the PNG, so reruns are byte-identical
_PNG_METADATA: Dict[str, Any] = {"Software": None}

LOSS_CURVES_FILE: str = "loss_curves"
COORDINATE_MSE_FILE: str = "coordinate_mse"
KDE_FILE: str = "mse_kde"
HISTOGRAM_FILE: str = "mse_histogram"
SIGMA_FILE: str = "mse_sigma"
TESTS_FILE: str = "significance_tests"
DEPTH_ERRORS_FILE: str = "depth_errors"
DEPTH_MAPS_FILE: str = "depth_maps"
CROSS_SECTIONS_FILE: str = "cross_sections"
VIOLINS_FILE: str = "error_violins"
SUMMARY_FILE: str = "summary.txt"


def _save_table(rows: List[Dict[str, Any]], directory: Path, name: str, written: List[Path]) -> pd.DataFrame:
    path: Path = directory / f"{name}.csv"
    table: pd.DataFrame = pd.DataFrame(rows)
    table.to_csv(path, index=False)
    written.append(path)
    return table


def _save_figure(figure: Figure, directory: Path, name: str, written: List[Path]) -> None:
    path: Path = directory / f"{name}.png"
    figure.tight_layout()
    figure.savefig(path, dpi=_DPI, metadata=_PNG_METADATA)
    plt.close(figure)
    written.append(path)


def _label(fraction_p: float, seed: int) -> str:
    return f"P={fraction_p * 100:g}% seed={seed}"


def write_loss_curves(histories: Mapping[str, LossHistory], directory: Union[str, Path]) -> List[Path]:
    root: Path = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    rows: List[Dict[str, Any]] = []
    for label, history in histories.items():
        for epoch, (train_mse, val_mse) in enumerate(zip(history.train_mse, history.val_mse)):
            rows.append({"run": label, "epoch": epoch, "split": "train", "mse": train_mse})
            rows.append({"run": label, "epoch": epoch, "split": "validation", "mse": val_mse})
    _save_table(rows, root, LOSS_CURVES_FILE, written)

    figure, axis = plt.subplots(figsize=(7, 4.5))
    for label, history in histories.items():
        line = axis.plot(history.train_mse, label=f"{label} train")[0]
        axis.plot(history.val_mse, linestyle="--", color=line.get_color(), label=f"{label} validation")
    axis.set_xlabel("epoch")
    axis.set_ylabel("MSE")
    axis.set_yscale("log")
    axis.legend(fontsize="small")
    _save_figure(figure, root, LOSS_CURVES_FILE, written)
    return written


def write_ablation_report(report: AblationReport, directory: Union[str, Path]) -> List[Path]:
    root: Path = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    written: List[Path] = write_loss_curves({_label(run.fraction_p, run.seed): run.history for run in report.runs}, root)

    coordinate_rows: List[Dict[str, Any]] = []
    kde_rows: List[Dict[str, Any]] = []
    histogram_rows: List[Dict[str, Any]] = []
    sigma_rows: List[Dict[str, Any]] = []
    for run in report.runs:
        distribution = run.distribution
        for plan_index, (x_mm, y_mm), mse in zip(distribution.plan_indices, distribution.coordinates_mm, distribution.values):
            coordinate_rows.append({"fraction": run.fraction_p, "seed": run.seed, "plan_index": plan_index, "x_mm": x_mm, "y_mm": y_mm, "mse": mse})
        for value, density in zip(distribution.support, distribution.density):
            kde_rows.append({"fraction": run.fraction_p, "seed": run.seed, "mse": value, "density": density})
        edges, counts = histogram(distribution.values)
        for left, count in zip(edges[:-1], counts):
            histogram_rows.append({"fraction": run.fraction_p, "seed": run.seed, "bin_start": left, "count": count})
        sigma_rows.append({"fraction": run.fraction_p, "seed": run.seed, "epochs": run.epochs, "mean": distribution.mean, "sigma": distribution.std})
    _save_table(coordinate_rows, root, COORDINATE_MSE_FILE, written)
    _save_table(kde_rows, root, KDE_FILE, written)
    _save_table(histogram_rows, root, HISTOGRAM_FILE, written)
    _save_table(sigma_rows, root, SIGMA_FILE, written)

    test_rows: List[Dict[str, Any]] = []
    for comparison in report.comparisons:
        for test_name, result in (("welch_t", comparison.welch), ("mann_whitney_u", comparison.mann_whitney)):
            test_rows.append(
                {
                    "fraction": comparison.fraction_p,
                    "reference": report.reference_fraction,
                    "seed": comparison.seed,
                    "test": test_name,
                    "statistic": result.statistic,
                    "p_value": result.p_value,
                    "threshold": report.threshold,
                    "significant": result.significant,
                }
            )
    _save_table(test_rows, root, TESTS_FILE, written)

    # Per-coordinate MSE maps, one panel per run
    figure, axes = plt.subplots(1, len(report.runs), figsize=(3.2 * len(report.runs), 3.6), squeeze=False)
    high: float = max(float(np.max(run.distribution.values)) for run in report.runs)
    for axis, run in zip(axes[0], report.runs):
        coordinates = run.distribution.coordinates_mm
        scatter = axis.scatter(coordinates[:, 0], coordinates[:, 1], c=run.distribution.values, vmin=0.0, vmax=high, cmap="viridis", s=12)
        axis.set_title(_label(run.fraction_p, run.seed), fontsize="small")
        axis.set_aspect("equal")
        axis.invert_yaxis()
    figure.colorbar(scatter, ax=axes[0].tolist(), shrink=0.8, label="MSE")
    figure.savefig(root / f"{COORDINATE_MSE_FILE}.png", dpi=_DPI, metadata=_PNG_METADATA)
    plt.close(figure)
    written.append(root / f"{COORDINATE_MSE_FILE}.png")

    figure, axis = plt.subplots(figsize=(7, 4.5))
    for run in report.runs:
        line = axis.plot(run.distribution.support, run.distribution.density, label=_label(run.fraction_p, run.seed))[0]
        axis.axvline(run.distribution.mean, linestyle="--", color=line.get_color())
    axis.set_xlabel("per-coordinate MSE")
    axis.set_ylabel("density")
    axis.legend(fontsize="small")
    _save_figure(figure, root, KDE_FILE, written)

    sigma: Dict[float, float] = report.sigma_by_fraction()
    fractions: List[float] = sorted(sigma)
    figure, axis = plt.subplots(figsize=(6, 4))
    axis.plot([fraction * 100 for fraction in fractions], [sigma[fraction] for fraction in fractions], marker="o")
    axis.set_xscale("log")
    axis.set_xlabel("training coordinates (%)")
    axis.set_ylabel("sigma of per-coordinate MSE")
    _save_figure(figure, root, SIGMA_FILE, written)

    written.append(write_summary(ablation_summary(report), root / SUMMARY_FILE))
    LOGGER.info("Wrote %d ablation artifacts to %s", len(written), root)
    return written


def ablation_summary(report: AblationReport) -> List[str]:
    lines: List[str] = [f"Ablation against P={report.reference_fraction * 100:g}%, significance threshold {report.threshold:g}", ""]
    for run in report.runs:
        lines.append(
            f"{_label(run.fraction_p, run.seed)}: {len(run.split.train_indices)} training coordinates, {run.epochs} epochs, "
            f"final validation MSE {run.history.val_mse[-1]:.6g}, per-coordinate MSE mean {run.distribution.mean:.6g} sigma {run.distribution.std:.6g}"
        )
    lines.append("")
    for comparison in report.comparisons:
        lines.append(
            f"{_label(comparison.fraction_p, comparison.seed)} vs reference: "
            f"Welch t={comparison.welch.statistic:.4f} p={comparison.welch.p_value:.3g} {'significant' if comparison.welch.significant else 'not significant'}; "
            f"Mann-Whitney U={comparison.mann_whitney.statistic:.1f} p={comparison.mann_whitney.p_value:.3g} "
            f"{'significant' if comparison.mann_whitney.significant else 'not significant'}"
        )
    return lines


def write_object_report(evaluations: Sequence[ObjectEvaluation], directory: Union[str, Path]) -> List[Path]:
    root: Path = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    if not evaluations:
        return written

    error_rows: List[Dict[str, Any]] = []
    section_rows: List[Dict[str, Any]] = []
    for evaluation in evaluations:
        report = evaluation.report
        error_rows.append(
            {
                "object": evaluation.object_name,
                "overall_um": report.overall_um,
                "type1_um": report.type1_um,
                "type2_um": report.type2_um,
                "type1_pixels": report.type1_count,
                "type2_pixels": report.type2_count,
                "shift_x_px": evaluation.shift_px[0],
                "shift_y_px": evaluation.shift_px[1],
                "fitted": evaluation.fitted_value,
            }
        )
        for source, depth_map in (("ground_truth", evaluation.ground_truth), ("predicted", evaluation.predicted)):
            positions, values = cross_section(depth_map)
            for position, value in zip(positions, values):
                section_rows.append({"object": evaluation.object_name, "source": source, "x_mm": position, "depth_mm": value})
    _save_table(error_rows, root, DEPTH_ERRORS_FILE, written)
    _save_table(section_rows, root, CROSS_SECTIONS_FILE, written)

    figure, axes = plt.subplots(len(evaluations), 3, figsize=(9, 3.2 * len(evaluations)), squeeze=False)
    for row_axes, evaluation in zip(axes, evaluations):
        high: float = max(float(np.max(evaluation.ground_truth.values)), float(np.max(evaluation.predicted.values)))
        row_axes[0].imshow(evaluation.image.pixels)
        row_axes[0].set_title(f"{evaluation.object_name}: image", fontsize="small")
        row_axes[1].imshow(evaluation.ground_truth.values, vmin=0.0, vmax=high, cmap="viridis")
        row_axes[1].set_title("ground truth (mm)", fontsize="small")
        shown = row_axes[2].imshow(evaluation.predicted.values, vmin=0.0, vmax=high, cmap="viridis")
        row_axes[2].set_title("reconstructed (mm)", fontsize="small")
        figure.colorbar(shown, ax=row_axes[2], shrink=0.8)
        for axis in row_axes:
            axis.set_axis_off()
    _save_figure(figure, root, DEPTH_MAPS_FILE, written)

    figure, axes = plt.subplots(len(evaluations), 1, figsize=(6, 2.8 * len(evaluations)), squeeze=False)
    for axis, evaluation in zip(axes[:, 0], evaluations):
        for source, depth_map in (("ground truth", evaluation.ground_truth), ("reconstructed", evaluation.predicted)):
            positions, values = cross_section(depth_map)
            axis.plot(positions, values, label=source)
        axis.set_title(evaluation.object_name, fontsize="small")
        axis.set_xlabel("x (mm)")
        axis.set_ylabel("depth (mm)")
        axis.legend(fontsize="small")
    _save_figure(figure, root, CROSS_SECTIONS_FILE, written)

    figure, axis = plt.subplots(figsize=(1.5 + 2.2 * len(evaluations), 4))
    populations: List[np.ndarray] = []
    labels: List[str] = []
    for evaluation in evaluations:
        for name, population in (("type 1", evaluation.report.type1_display()), ("type 2", evaluation.report.type2_display())):
            if population.size:
                populations.append(population)
                labels.append(f"{evaluation.object_name}\n{name}")
    if populations:
        axis.violinplot(populations, showmeans=True)
        axis.set_xticks(range(1, len(labels) + 1))
        axis.set_xticklabels(labels, fontsize="small")
    axis.set_ylabel("absolute depth error (um)")
    _save_figure(figure, root, VIOLINS_FILE, written)

    summary: List[str] = [
        f"{row['object']}: overall {row['overall_um']:.3f} um, type 1 {row['type1_um']:.3f} um, type 2 {row['type2_um']:.3f} um, "
        f"shift ({row['shift_x_px']}, {row['shift_y_px']}) px, fitted {row['fitted']:.6g}"
        for row in error_rows
    ]
    written.append(write_summary(summary, root / SUMMARY_FILE))
    LOGGER.info("Wrote %d object evaluation artifacts to %s", len(written), root)
    return written


def write_summary(lines: Sequence[str], path: Union[str, Path]) -> Path:
    result: Path = Path(path)
    result.parent.mkdir(parents=True, exist_ok=True)
    result.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    return result

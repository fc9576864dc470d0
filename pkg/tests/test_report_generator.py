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
from typing import List

import numpy as np
import pandas as pd
import pytest
from PIL import Image

from tactile_cal import evaluation
from tactile_cal.ablation import AblationComparison, AblationReport, AblationRun
from tactile_cal.depth_gt import DepthMap
from tactile_cal.evaluation import MseDistribution, ObjectEvaluation, error_report, kernel_density
from tactile_cal.probe_plan import PlanSplit
from tactile_cal.report_generator import (
    ablation_summary,
    write_ablation_report,
    write_loss_curves,
    write_object_report,
    write_summary,
)
from tactile_cal.sensor_sim import TactileImage
from tactile_cal.touchnet import LossHistory


def _distribution(values: List[float]) -> MseDistribution:
    array = np.array(values)
    support, density = kernel_density(array)
    coordinates = np.array([[float(index), 2.0 * index] for index in range(len(values))])
    return MseDistribution(tuple(range(len(values))), coordinates, array, support, density, float(np.mean(array)), float(np.std(array)))


def _run(fraction_p: float, values: List[float]) -> AblationRun:
    split = PlanSplit(train_indices=(10, 11), val_indices=(0, 1, 2), fraction_p=fraction_p, seed=0)
    return AblationRun(fraction_p, 0, 60, split, LossHistory((0.5, 0.25), (0.6, 0.3)), _distribution(values))


@pytest.fixture(name="report")
def report_fixture() -> AblationReport:
    reference = _run(0.8, [0.010, 0.012, 0.011])
    other = _run(0.05, [0.030, 0.020, 0.045])
    comparison = AblationComparison(0.05, 0, evaluation.TestResult(-3.2, 0.03, False), evaluation.TestResult(0.0, 0.1, False))
    return AblationReport(0.8, 0.002, (reference, other), (comparison,))


@pytest.fixture(name="object_evaluation")
def object_evaluation_fixture() -> ObjectEvaluation:
    truth = np.zeros((12, 10))
    truth[4:8, 3:7] = 0.5
    predicted = truth + np.random.default_rng(0).normal(scale=0.01, size=truth.shape)
    image = TactileImage(np.full((12, 10, 3), 128, dtype=np.uint8))
    report = error_report(DepthMap(predicted, 0.25), DepthMap(truth, 0.25))
    return ObjectEvaluation("pill", image, DepthMap(predicted, 0.25), DepthMap(truth, 0.25), (1, -2), 1.1, report)


class TestReportGenerator:
    def test_loss_curves(self, tmp_path: Path) -> None:
        written = write_loss_curves({"run": LossHistory((1.0, 0.5, 0.25), (1.5, 0.75, 0.5))}, tmp_path)
        table = pd.read_csv(tmp_path / "loss_curves.csv")
        assert len(table) == 6
        assert list(table.columns) == ["run", "epoch", "split", "mse"]
        assert table[table["split"] == "validation"]["mse"].tolist() == [1.5, 0.75, 0.5]
        assert {path.name for path in written} == {"loss_curves.csv", "loss_curves.png"}

    def test_ablation_artifacts(self, tmp_path: Path, report: AblationReport) -> None:
        written = write_ablation_report(report, tmp_path / "report")
        names = {path.name for path in written}
        for stem in ("loss_curves", "coordinate_mse", "mse_kde", "mse_sigma"):
            assert f"{stem}.csv" in names and f"{stem}.png" in names
        assert {"mse_histogram.csv", "significance_tests.csv", "summary.txt"} <= names
        for path in written:
            assert path.exists()
            if path.suffix == ".png":
                with Image.open(path) as image:
                    assert image.format == "PNG"

    def test_ablation_tables(self, tmp_path: Path, report: AblationReport) -> None:
        write_ablation_report(report, tmp_path)
        coordinates = pd.read_csv(tmp_path / "coordinate_mse.csv")
        assert len(coordinates) == 6
        assert coordinates[coordinates["fraction"] == 0.05]["mse"].tolist() == [0.030, 0.020, 0.045]
        tests = pd.read_csv(tmp_path / "significance_tests.csv")
        assert tests["test"].tolist() == ["welch_t", "mann_whitney_u"]
        assert tests["threshold"].tolist() == [0.002, 0.002]
        assert not tests["significant"].any()
        sigma = pd.read_csv(tmp_path / "mse_sigma.csv")
        assert sigma["sigma"].tolist() == pytest.approx([run.distribution.std for run in report.runs])
        histogram = pd.read_csv(tmp_path / "mse_histogram.csv")
        assert histogram.groupby("fraction")["count"].sum().tolist() == [3, 3]

    def test_rerun_writes_identical_tables(self, tmp_path: Path, report: AblationReport) -> None:
        write_ablation_report(report, tmp_path / "first")
        write_ablation_report(report, tmp_path / "second")
        for name in ("coordinate_mse.csv", "mse_kde.csv", "significance_tests.csv", "summary.txt"):
            assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()

    def test_ablation_summary(self, report: AblationReport) -> None:
        lines = ablation_summary(report)
        assert lines[0] == "Ablation against P=80%, significance threshold 0.002"
        assert lines[2].startswith("P=80% seed=0: 2 training coordinates, 60 epochs")
        assert lines[-1].startswith("P=5% seed=0 vs reference: Welch t=-3.2000 p=0.03 not significant")

    def test_object_report(self, tmp_path: Path, object_evaluation: ObjectEvaluation) -> None:
        written = write_object_report([object_evaluation, object_evaluation._replace(object_name="pawn")], tmp_path)
        names = {path.name for path in written}
        assert {"depth_errors.csv", "cross_sections.csv", "depth_maps.png", "cross_sections.png", "error_violins.png", "summary.txt"} == names
        errors = pd.read_csv(tmp_path / "depth_errors.csv")
        assert errors["object"].tolist() == ["pill", "pawn"]
        assert errors["overall_um"].iloc[0] == pytest.approx(object_evaluation.report.overall_um)
        assert errors["shift_y_px"].tolist() == [-2, -2]
        sections = pd.read_csv(tmp_path / "cross_sections.csv")
        assert len(sections) == 2 * 2 * 10
        summary = (tmp_path / "summary.txt").read_text(encoding="utf-8").splitlines()
        assert summary[0].startswith("pill: overall ")
        assert summary[0].endswith("shift (1, -2) px, fitted 1.1")

    def test_no_evaluations(self, tmp_path: Path) -> None:
        assert not write_object_report([], tmp_path / "empty")

    def test_summary(self, tmp_path: Path) -> None:
        path = write_summary(["a", "b"], tmp_path / "nested" / "summary.txt")
        assert path.read_text(encoding="utf-8") == "a\nb\n"

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

from typing import Dict, List, NamedTuple, Sequence, Tuple

from rp2.rp2_error import RP2ValueError

from tactile_cal.calibration_error import TrainingError
from tactile_cal.configuration import COMPARISON_COUNT, MAX_TRAINING_FRACTION, SIGNIFICANCE_ALPHA
from tactile_cal.dataset import Dataset
from tactile_cal.evaluation import MseDistribution, TestResult, bonferroni_threshold, mann_whitney_u, per_coordinate_mse, welch_t_test
from tactile_cal.logger import LOGGER
from tactile_cal.probe_plan import PlanSplit, split_plan
from tactile_cal.touchnet import LossHistory, TouchNet, TouchNetConfig, TrainConfig, derive_seed, epochs_for_fraction, new_model, train


class AblationRun(NamedTuple):
    fraction_p: float
    seed: int
    epochs: int
    split: PlanSplit
    history: LossHistory
    distribution: MseDistribution


class AblationComparison(NamedTuple):
    fraction_p: float
    seed: int
    welch: TestResult
    mann_whitney: TestResult


class AblationReport(NamedTuple):
    reference_fraction: float
    threshold: float
    runs: Tuple[AblationRun, ...]
    comparisons: Tuple[AblationComparison, ...]

    def run_for(self, fraction_p: float, seed: int) -> AblationRun:
        for run in self.runs:
            if run.fraction_p == fraction_p and run.seed == seed:
                return run
        raise RP2ValueError(f"No ablation run for P={fraction_p}, seed={seed}")

    # Standard deviation of the per-coordinate MSE for each P, averaged over seeds
    def sigma_by_fraction(self) -> Dict[float, float]:
        grouped: Dict[float, List[float]] = {}
        for run in self.runs:
            grouped.setdefault(run.fraction_p, []).append(run.distribution.std)
        return {fraction: sum(values) / len(values) for fraction, values in grouped.items()}


def _check_fractions(fractions: Sequence[float], reference_fraction: float) -> None:
    if not fractions:
        raise RP2ValueError("The list of training fractions is empty")
    for fraction in fractions:
        if not 0 < fraction <= MAX_TRAINING_FRACTION:
            raise RP2ValueError(f"Training fractions must be in (0, {MAX_TRAINING_FRACTION}]: {fraction}")
    if len(set(fractions)) != len(fractions):
        raise RP2ValueError(f"Duplicate training fractions: {list(fractions)}")
    if reference_fraction not in fractions:
        raise RP2ValueError(f"The reference fraction {reference_fraction} must be part of the ablation: {list(fractions)}")


def run_ablation(
    dataset: Dataset,
    fractions: Sequence[float],
    seeds: Sequence[int],
    train_config: TrainConfig,
    model_config: TouchNetConfig = TouchNetConfig(),
    holdout_seed: int = 0,
    fov_filter: bool = True,
    reference_fraction: float = MAX_TRAINING_FRACTION,
    alpha: float = SIGNIFICANCE_ALPHA,
    comparison_count: int = COMPARISON_COUNT,
    show_progress: bool = False,
) -> AblationReport:
    _check_fractions(fractions, reference_fraction)
    if not seeds:
        raise RP2ValueError("At least one seed is needed")
    threshold: float = bonferroni_threshold(alpha, comparison_count)

    runs: List[AblationRun] = []
    for seed in seeds:
        for fraction_index, fraction_p in enumerate(fractions):
            split: PlanSplit = split_plan(dataset.plan, fraction_p, seed, holdout_seed)
            # train_config.epochs is the epoch count at the reference fraction
            epochs: int = epochs_for_fraction(fraction_p, train_config.epochs, reference_fraction)
            model: TouchNet = new_model(model_config, derive_seed(seed, fraction_index))
            LOGGER.info("Ablation: P=%g seed=%d, %d training coordinates, %d epochs", fraction_p, seed, len(split.train_indices), epochs)
            try:
                model, history = train(model, dataset, split, train_config._replace(epochs=epochs, seed=seed), fraction_p, show_progress)
            except TrainingError as exc:
                if exc.fraction_p is not None:
                    raise
                raise TrainingError(str(exc), exc.epoch, fraction_p) from exc
            distribution: MseDistribution = per_coordinate_mse(model, dataset, split.val_indices, fov_filter)
            runs.append(AblationRun(fraction_p, seed, epochs, split, history, distribution))

    comparisons: List[AblationComparison] = []
    for run in runs:
        if run.fraction_p == reference_fraction:
            continue
        reference: AblationRun = next(candidate for candidate in runs if candidate.fraction_p == reference_fraction and candidate.seed == run.seed)
        welch: TestResult = welch_t_test(run.distribution.values, reference.distribution.values, threshold)
        mann_whitney: TestResult = mann_whitney_u(run.distribution.values, reference.distribution.values, threshold)
        LOGGER.info(
            "P=%g vs P=%g (seed %d): t=%.4f p=%.3g%s, U=%.1f p=%.3g%s",
            run.fraction_p,
            reference_fraction,
            run.seed,
            welch.statistic,
            welch.p_value,
            " (significant)" if welch.significant else "",
            mann_whitney.statistic,
            mann_whitney.p_value,
            " (significant)" if mann_whitney.significant else "",
        )
        comparisons.append(AblationComparison(run.fraction_p, run.seed, welch, mann_whitney))
    return AblationReport(reference_fraction, threshold, tuple(runs), tuple(comparisons))

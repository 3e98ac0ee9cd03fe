# Copyright 2024 linear-fgw developers
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

import logging
import warnings
from collections import Counter
from dataclasses import asdict, dataclass
from itertools import product
from typing import Mapping

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from sklearn.model_selection import StratifiedKFold

from linear_fgw.errors import UsageError
from linear_fgw.services.kernel_ml import DistanceSource, gram_from_distances
from linear_fgw.services.svm import svm_classify
from linear_fgw.services.worker_pool import WorkerPool, pool_map

logger = logging.getLogger("kernel_ml")


class ParamGrid(BaseModel):
    model_config = ConfigDict(frozen=True)

    C: list[float] = Field(min_length=1)
    gamma: list[float] = Field(min_length=1)
    alpha: list[float] = Field(min_length=1)
    wl_depth: list[int] = Field(min_length=1)


@dataclass(frozen=True)
class GridCell:
    C: float
    gamma: float
    alpha: float
    wl_depth: int


@dataclass(frozen=True)
class CrossValidationReport:
    mean_accuracy: float
    std_accuracy: float
    # mean outer-fold accuracy of every repeat
    repeat_accuracies: tuple[float, ...]
    fold_accuracies: tuple[tuple[float, ...], ...]
    # cell chosen by the inner selection for every outer fold, repeat-major
    selected: tuple[GridCell, ...]

    def top_configs(self, n: int = 3) -> list[tuple[GridCell, int]]:
        return Counter(self.selected).most_common(n)

    def as_dict(self) -> dict:
        return {
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "repeat_accuracies": list(self.repeat_accuracies),
            "fold_accuracies": [list(folds) for folds in self.fold_accuracies],
            "selected": [asdict(cell) for cell in self.selected],
            "top_configs": [{"cell": asdict(cell), "count": count} for cell, count in self.top_configs()],
        }


def _stratified_splits(labels: np.ndarray, n_splits: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    with warnings.catch_warnings():
        # classes smaller than n_splits simply skip some test folds
        warnings.simplefilter("ignore", UserWarning)
        splitter = StratifiedKFold(n_splits=n_splits, shuffle=True, random_state=seed)
        return list(splitter.split(np.zeros(labels.shape[0]), labels))


def _accuracy(kernel: np.ndarray, labels: np.ndarray, train: np.ndarray, test: np.ndarray, C: float) -> float:
    predictions = svm_classify(
        np.ascontiguousarray(kernel[np.ix_(train, train)]),
        labels[train],
        np.ascontiguousarray(kernel[np.ix_(test, train)]),
        C,
    )
    return float(np.mean(predictions == labels[test]))


def _inner_score(
    kernel: np.ndarray, labels: np.ndarray, train: np.ndarray, C: float, inner_folds: int, seed: int
) -> float:
    """Mean validation accuracy on stratified splits of `train`; training accuracy when it cannot be split."""
    train_labels = labels[train]
    _, counts = np.unique(train_labels, return_counts=True)
    if counts.shape[0] == 1 or counts.min() < 2:
        return _accuracy(kernel, labels, train, train, C)
    splits = _stratified_splits(train_labels, min(inner_folds, int(counts.min())), seed)
    return float(np.mean([_accuracy(kernel, labels, train[fit], train[val], C) for fit, val in splits]))


def cross_validate(
    distances: Mapping[tuple[float, int], np.ndarray],
    labels: np.ndarray,
    grid: ParamGrid,
    folds: int = 10,
    repeats: int = 10,
    inner_folds: int = 3,
    seed: int = 0,
    source: DistanceSource = "linearFGW",
    pool: WorkerPool | None = None,
) -> CrossValidationReport:
    """
    Nested cross-validation of the kernel SVM. `distances` maps every (alpha, wl_depth) of the grid to an N x N
    distance matrix. For every outer training set, (C, gamma, alpha, wl_depth) is selected by inner stratified
    cross-validation on that training set only, then scored on the held-out fold. Grid cells are evaluated in
    parallel; ties go to the first cell in grid order.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    classes, counts = np.unique(labels, return_counts=True)
    if not 2 <= folds <= n:
        raise UsageError(f"Cannot split {n} graphs into {folds} folds")
    if classes.shape[0] > 1 and counts.min() < 2:
        raise UsageError("Every class needs at least two graphs so that it appears in every training fold")
    missing = [key for key in product(grid.alpha, grid.wl_depth) if key not in distances]
    if missing:
        raise UsageError(f"No distance matrix for (alpha, wl_depth) in {missing}")

    cells = [
        GridCell(C=C, gamma=gamma, alpha=alpha, wl_depth=wl_depth)
        for alpha, wl_depth, C, gamma in product(grid.alpha, grid.wl_depth, grid.C, grid.gamma)
    ]
    kernels = {
        (alpha, wl_depth, gamma): gram_from_distances(distances[alpha, wl_depth], gamma, source).values
        for alpha, wl_depth, gamma in product(grid.alpha, grid.wl_depth, grid.gamma)
    }

    def kernel_of(cell: GridCell) -> np.ndarray:
        return kernels[cell.alpha, cell.wl_depth, cell.gamma]

    fold_accuracies: list[tuple[float, ...]] = []
    selected: list[GridCell] = []
    for repeat in range(repeats):
        accuracies = []
        for fold, (train, test) in enumerate(_stratified_splits(labels, folds, seed + repeat)):
            inner_seed = seed + 1000 * (repeat + 1) + fold
            scores = pool_map(
                pool, lambda cell: _inner_score(kernel_of(cell), labels, train, cell.C, inner_folds, inner_seed), cells
            )
            best = cells[int(np.argmax(scores))]
            selected.append(best)
            accuracies.append(_accuracy(kernel_of(best), labels, train, test, best.C))
        fold_accuracies.append(tuple(accuracies))
        logger.info("Cross-validation repeat %s/%s: accuracy %.4f", repeat + 1, repeats, np.mean(accuracies))

    repeat_accuracies = np.array([np.mean(accuracies) for accuracies in fold_accuracies])
    return CrossValidationReport(
        mean_accuracy=float(repeat_accuracies.mean()),
        std_accuracy=float(repeat_accuracies.std()),
        repeat_accuracies=tuple(float(a) for a in repeat_accuracies),
        fold_accuracies=tuple(fold_accuracies),
        selected=tuple(selected),
    )

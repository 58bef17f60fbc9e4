"""
Screening
=========
Labeled-data helpers for picking features that satisfy class-specific
independence.  Both searches keep the features that separate the classes and
then run the α = 1 (n′ = 0) kernel test on rows of one class:

  • pairs    (X₁, X₂)       CI test, usable for CI mixture proportion estimation
  • triplets (X₁, X₂ | X_S) MCI test, usable for MCI mixture proportion estimation

Combinations the test does not reject are reported as independent.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from mixprop.config import CI_TEST_SIGMA, KernelConfig
from mixprop.kerneltest_known import run_test_known
from mixprop.mixture import FeatureRoles, TwoSampleData

logger = logging.getLogger(__name__)

PAIR_KEYS = ("feature_a", "feature_b")
TRIPLET_KEYS = ("feature_1", "feature_2", "feature_s")


@dataclass
class ScreeningResult:
    candidates: list[str]
    table: pd.DataFrame
    keys: tuple[str, ...]

    @property
    def independent(self) -> list[tuple[str, ...]]:
        kept = self.table[~self.table["reject"]]
        return list(zip(*(kept[k] for k in self.keys)))


def standardized_mean_difference(rows: np.ndarray, labels: np.ndarray, scale_class: int = 1) -> np.ndarray:
    """|E[X|y=+1] − E[X|y=−1]| / sd(X|y=scale_class), per column; 0 where the sd vanishes."""
    if scale_class not in (-1, 1):
        raise ValueError("scale_class must be ±1")
    pos, neg = rows[labels == 1], rows[labels == -1]
    sd = np.sqrt(rows[labels == scale_class].var(axis=0, ddof=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        smd = np.abs(pos.mean(axis=0) - neg.mean(axis=0)) / sd
    return np.nan_to_num(smd, nan=0.0, posinf=0.0)


def _labeled_block(
    rows: np.ndarray,
    labels: np.ndarray,
    feature_names: Sequence[str],
    target_class: int,
    threshold: float,
    scale_class: int,
    standardize: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """Rows of ``target_class`` (optionally standardised) and the SMD-passing column indices."""
    if target_class not in (-1, 1):
        raise ValueError("target_class must be ±1")
    if len(feature_names) != rows.shape[1]:
        raise ValueError(f"{len(feature_names)} feature names for {rows.shape[1]} columns")
    if np.sum(labels == 1) < 2 or np.sum(labels == -1) < 2:
        raise ValueError("each class needs at least two rows")

    smd = standardized_mean_difference(rows, labels, scale_class)
    keep = np.flatnonzero(smd > threshold)
    logger.info("%d of %d features pass |SMD| > %.2f", keep.size, rows.shape[1], threshold)

    block = rows[labels == target_class]
    if standardize:
        sd = block.std(axis=0)
        block = (block - block.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    return block, keep


def _table(records: list[dict], keys: tuple[str, ...]) -> pd.DataFrame:
    table = pd.DataFrame(records, columns=[*keys, "statistic", "p_value", "reject"])
    table["reject"] = table["reject"].astype(bool)
    return table


def screen_pairs(
    rows: np.ndarray,
    labels: np.ndarray,
    feature_names: Sequence[str],
    target_class: int = 1,
    threshold: float = 0.5,
    level: float = 0.05,
    bandwidth: float = CI_TEST_SIGMA,
    standardize: bool = True,
    scale_class: int = 1,
) -> ScreeningResult:
    rows, labels = np.asarray(rows, dtype=float), np.asarray(labels)
    block, keep = _labeled_block(rows, labels, feature_names, target_class, threshold, scale_class, standardize)
    kernel = KernelConfig(sigma1=bandwidth, sigma2=bandwidth)

    records = []
    for j, k in itertools.combinations(keep, 2):
        data = TwoSampleData(block[:, [j, k]], np.empty((0, 2)), (feature_names[j], feature_names[k]))
        report = run_test_known(data, FeatureRoles((0,), (1,)), 1.0, "ci", level, kernel)
        records.append({"feature_a": feature_names[j], "feature_b": feature_names[k],
                        "statistic": report.statistic, "p_value": report.p_value, "reject": report.reject})
    return ScreeningResult([feature_names[j] for j in keep], _table(records, PAIR_KEYS), PAIR_KEYS)


def screen_triplets(
    rows: np.ndarray,
    labels: np.ndarray,
    feature_names: Sequence[str],
    target_class: int = -1,
    threshold: float = 1.0,
    level: float = 0.05,
    kernel: KernelConfig | None = None,
    standardize: bool = True,
    scale_class: int = 1,
) -> ScreeningResult:
    """Test X₁ ⫫ X₂ | X_S within one class.

    X₁, X₂ range over the SMD candidates; X_S over every other single feature.
    """
    rows, labels = np.asarray(rows, dtype=float), np.asarray(labels)
    block, keep = _labeled_block(rows, labels, feature_names, target_class, threshold, scale_class, standardize)
    kernel = kernel or KernelConfig.mci_screening()
    roles = FeatureRoles((0,), (1,), (2,))

    records = []
    for j, k in itertools.combinations(keep, 2):
        for s in range(rows.shape[1]):
            if s in (j, k):
                continue
            names = (feature_names[j], feature_names[k], feature_names[s])
            data = TwoSampleData(block[:, [j, k, s]], np.empty((0, 3)), names)
            report = run_test_known(data, roles, 1.0, "mci", level, kernel)
            records.append({"feature_1": names[0], "feature_2": names[1], "feature_s": names[2],
                            "statistic": report.statistic, "p_value": report.p_value, "reject": report.reject})
    table = _table(records, TRIPLET_KEYS)
    logger.info("%d triplets tested, %d not rejected", len(table), int((~table["reject"]).sum()))
    return ScreeningResult([feature_names[j] for j in keep], table, TRIPLET_KEYS)

"""Friedman omnibus test and Nemenyi post-hoc p-values over best scores.

Rank 1 is the best (highest) score in a row; ties share average ranks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.integrate import quad
from scipy.stats import chi2, norm, rankdata

from evaluation import StatsError

logger = logging.getLogger(__name__)

INTEGRATION_LIMIT = 8.0


@dataclass(frozen=True)
class ScoreMatrix:
    """N rows (seeds) by k columns (algorithms)."""

    scores: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=float)
        if scores.ndim != 2:
            raise StatsError("score matrix must be two-dimensional")
        n, k = scores.shape
        if n < 2 or k < 2:
            raise StatsError(f"need at least 2 rows and 2 columns, got {n}x{k}")
        if len(self.labels) != k:
            raise StatsError("one label per column is required")
        if not np.all(np.isfinite(scores)):
            raise StatsError("score matrix contains non-finite entries")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    @property
    def k(self) -> int:
        return self.scores.shape[1]

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> ScoreMatrix:
        return cls(frame.to_numpy(dtype=float), tuple(str(c) for c in frame.columns))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.scores, columns=list(self.labels))


@dataclass(frozen=True)
class FriedmanResult:
    labels: tuple[str, ...]
    average_ranks: np.ndarray
    statistic: float
    p_value: float


@dataclass(frozen=True)
class NemenyiResult:
    labels: tuple[str, ...]
    p_values: np.ndarray

    def significant_pairs(self, alpha: float) -> list[tuple[str, str, float]]:
        pairs = []
        for i in range(len(self.labels)):
            for j in range(i + 1, len(self.labels)):
                if self.p_values[i, j] < alpha:
                    pairs.append((self.labels[i], self.labels[j], float(self.p_values[i, j])))
        return pairs


def row_ranks(m: ScoreMatrix) -> np.ndarray:
    return np.apply_along_axis(lambda row: rankdata(-row, method="average"), 1, m.scores)


def friedman(m: ScoreMatrix) -> FriedmanResult:
    ranks = row_ranks(m)
    n, k = m.n, m.k
    rank_sums = ranks.sum(axis=0)
    statistic = 12.0 / (n * k * (k + 1)) * float(np.sum(rank_sums**2)) - 3.0 * n * (k + 1)
    statistic = max(0.0, statistic)
    p_value = float(chi2.sf(statistic, k - 1))
    logger.debug("friedman: chi2=%.4f p=%.4g over %dx%d", statistic, p_value, n, k)
    return FriedmanResult(m.labels, rank_sums / n, statistic, p_value)


def studentized_range_sf(q: float, k: int) -> float:
    """Upper tail of the studentized range of k standard normals (infinite df)."""
    if q <= 0:
        return 1.0

    def integrand(z: float) -> float:
        return norm.pdf(z) * (norm.cdf(z) - norm.cdf(z - q)) ** (k - 1)

    area, _ = quad(integrand, -INTEGRATION_LIMIT, INTEGRATION_LIMIT, limit=200)
    return float(min(1.0, max(0.0, 1.0 - k * area)))


def nemenyi(m: ScoreMatrix) -> NemenyiResult:
    avg = row_ranks(m).mean(axis=0)
    k = m.k
    scale = math.sqrt(k * (k + 1) / (6.0 * m.n))
    p = np.ones((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            z = abs(avg[i] - avg[j]) / scale
            p[i, j] = p[j, i] = studentized_range_sf(z * math.sqrt(2.0), k)
    return NemenyiResult(m.labels, p)


def format_p(p: float) -> str:
    if p < 5e-4:
        return "0.000"
    return f"{p:.3f}"


def load_scores(path: str | Path) -> ScoreMatrix:
    """Read a score CSV: one row per seed, one column per algorithm.

    A leading ``seed`` column, when present, is used as the index.
    """
    frame = pd.read_csv(path)
    if "seed" in frame.columns:
        frame = frame.set_index("seed")
    return ScoreMatrix.from_frame(frame)


def friedman_frame(result: FriedmanResult) -> pd.DataFrame:
    frame = pd.DataFrame({"algo": list(result.labels), "average_rank": result.average_ranks})
    frame["statistic"] = result.statistic
    frame["p_value"] = result.p_value
    return frame


def nemenyi_frame(result: NemenyiResult) -> pd.DataFrame:
    return pd.DataFrame(result.p_values, index=list(result.labels), columns=list(result.labels))


def render_text(frame: pd.DataFrame, p_columns: Sequence[str] = (), index: bool = False) -> str:
    """Aligned text with p-values printed to three decimals."""
    formatters = {c: format_p for c in p_columns}
    return frame.to_string(index=index, formatters=formatters, float_format=lambda x: f"{x:.3f}")


def write_table(frame: pd.DataFrame, csv_path: Path, text: str | None = None, index: bool = False) -> None:
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(csv_path, index=index)
    if text is not None:
        csv_path.with_suffix(".txt").write_text(text + "\n", encoding="utf-8")

"""
Evaluation metrics
Pointwise and relative errors, pattern correlation, burn-in averaged
summaries and the metrics CSV / summary line formats
"""
import csv
import io
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from src.core.errors import GridError, ParameterError, ZeroDenominatorError
from src.core.grid import Field2D, Grid2D, require_same_grid

logger = logging.getLogger(__name__)

METRICS_HEADER = ["t", "err_l1", "err_l2", "pcorr"]
PathLike = Union[str, Path]


@dataclass
class MetricSeries:
    """Per-cycle metrics aligned with the assimilation times"""

    times: List[float] = field(default_factory=list)
    err_l1: List[float] = field(default_factory=list)
    err_l2: List[float] = field(default_factory=list)
    pcorr: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.times)

    def append(self, t: float, err_l1: float, err_l2: float, pcorr: float):
        if self.times and t <= self.times[-1]:
            raise ParameterError(f"metric times must increase, got {t!r} after {self.times[-1]!r}")
        self.times.append(float(t))
        self.err_l1.append(float(err_l1))
        self.err_l2.append(float(err_l2))
        self.pcorr.append(float(pcorr))


@dataclass(frozen=True)
class SummaryMetrics:
    """Means over the cycles q0..L_obs (1-based, inclusive)"""

    e_l1: float
    e_l2: float
    Pc: float
    q0: int


def pointwise_error(u: Field2D, truth: Field2D) -> Field2D:
    difference = u - truth
    return Field2D(u.grid, np.abs(difference.values))


def relative_errors(u: Field2D, truth: Field2D) -> Tuple[float, float]:
    """
    Relative l1 and l2 errors against the truth

    Returns:
        (err_l1, err_l2)

    Raises:
        ZeroDenominatorError: truth is identically zero
    """
    require_same_grid(u, truth)
    n = truth.grid.size
    diff = u.values - truth.values
    l1_den = np.sum(np.abs(truth.values)) / n
    l2_den = np.sqrt(np.sum(truth.values * truth.values) / n)
    if l1_den == 0 or l2_den == 0:
        raise ZeroDenominatorError("relative errors are undefined against an identically zero truth")
    err_l1 = (np.sum(np.abs(diff)) / n) / l1_den
    err_l2 = np.sqrt(np.sum(diff * diff) / n) / l2_den
    return float(err_l1), float(err_l2)


def pattern_correlation(u: Field2D, truth: Field2D) -> float:
    """Spatial Pearson correlation; nan when either field is spatially constant"""
    require_same_grid(u, truth)
    a = u.values - np.mean(u.values)
    b = truth.values - np.mean(truth.values)
    var_a = np.sum(a * a)
    var_b = np.sum(b * b)
    if var_a == 0 or var_b == 0:
        logger.warning("pattern correlation undefined: %s field has no spatial variance",
                       "posterior" if var_a == 0 else "truth")
        return float("nan")
    return float(np.sum(a * b) / np.sqrt(var_a * var_b))


def burn_in_start(L_obs: int) -> int:
    """q0 = ceil(L_obs / 2), at least 1"""
    return max(1, math.ceil(L_obs / 2))


def summarize(series: MetricSeries) -> SummaryMetrics:
    """Average each metric over the cycles q0..L_obs; undefined Pcorr values are skipped"""
    L = len(series)
    if L == 0:
        raise ParameterError("cannot summarize an empty metric series")
    q0 = burn_in_start(L)
    window = slice(q0 - 1, L)
    e_l1 = float(np.mean(series.err_l1[window]))
    e_l2 = float(np.mean(series.err_l2[window]))
    pcorr = np.asarray(series.pcorr[window])
    defined = pcorr[~np.isnan(pcorr)]
    if defined.size < pcorr.size:
        logger.warning("%d undefined pattern correlations excluded from the summary",
                       pcorr.size - defined.size)
    Pc = float(np.mean(defined)) if defined.size else float("nan")
    return SummaryMetrics(e_l1, e_l2, Pc, q0)


def restrict_to_coarse(fine: Field2D, coarse_grid: Grid2D, factor: int) -> Field2D:
    """Every factor-th point of a field on coarse_grid.refine(factor)"""
    if coarse_grid.refine(factor) != fine.grid:
        raise GridError(f"field grid is not the {factor}x refinement of the target grid")
    return Field2D(coarse_grid, fine.values[::factor, ::factor])


# Formats

def format_metric_series(series: MetricSeries) -> str:
    """CSV text with repr floats, undefined Pcorr as nan"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for row in zip(series.times, series.err_l1, series.err_l2, series.pcorr):
        writer.writerow([repr(v) for v in row])
    return buffer.getvalue()


def write_metric_series(series: MetricSeries, path: PathLike):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(format_metric_series(series))


def read_metric_series(path: PathLike) -> MetricSeries:
    series = MetricSeries()
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != METRICS_HEADER:
            raise ParameterError(f"{path}: expected header {','.join(METRICS_HEADER)}, got {header}")
        for row in reader:
            if row:
                series.append(*(float(v) for v in row))
    return series


def format_summary(summary: SummaryMetrics) -> str:
    return f"e_l1={summary.e_l1!r}, e_l2={summary.e_l2!r}, Pc={summary.Pc!r}"


_SUMMARY_PATTERN = re.compile(r"e_l1=(\S+), e_l2=(\S+), Pc=(\S+)")


def parse_summary(text: str, q0: int = 0) -> SummaryMetrics:
    match = _SUMMARY_PATTERN.search(text)
    if match is None:
        raise ParameterError(f"not a summary line: {text.strip()!r}")
    e_l1, e_l2, Pc = (float(v) for v in match.groups())
    return SummaryMetrics(e_l1, e_l2, Pc, q0)

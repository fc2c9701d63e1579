"""Calibration metrics: binned ECE, reliability bins, and coverage errors.

Binned ECE partitions samples into M equal-width score bins on [0, 1]
(half-open, last bin closed) and averages |mean score - positive fraction|
weighted by bin occupancy.

Coverage error compares, at each target level m/M, the empirical frequency
with which prediction sets contain the true class against the level itself.
The default ("absolute") form is the mean absolute deviation over the M
levels; the "signed-literal" form is the plain sum of signed deviations with
no normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conformal import CalibrationModel, curve_value
from .errors import ValidationError
from .grids import LabelGrid, ScoreGrid, require_same_shape

CE_MODES = ("absolute", "signed-literal")


def _check_flat_pair(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.size != labels.size:
        raise ValidationError(
            f"scores ({scores.size}) and labels ({labels.size}) differ in length")
    if scores.size == 0:
        raise ValidationError("need at least one sample")
    return scores, labels


def _bin_index(scores: np.ndarray, m_bins: int) -> np.ndarray:
    # score 1.0 belongs to the last (closed) bin
    return np.minimum((scores * m_bins).astype(np.int64), m_bins - 1)


@dataclass(frozen=True)
class ReliabilityBins:
    m_bins: int
    bin_confidence: np.ndarray  # mean score per bin (0 for empty bins)
    bin_accuracy: np.ndarray    # positive fraction per bin (0 for empty bins)
    bin_count: np.ndarray

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.m_bins + 1)

    def ece(self) -> float:
        total = int(self.bin_count.sum())
        dev = np.abs(self.bin_confidence - self.bin_accuracy)
        return float((self.bin_count * dev).sum() / total)


def reliability_bins(scores, labels, m_bins: int) -> ReliabilityBins:
    """Partition samples into M equal-width score bins, recording per-bin
    mean score, positive fraction, and occupancy."""
    if m_bins < 1:
        raise ValidationError("m_bins must be >= 1")
    scores, labels = _check_flat_pair(scores, labels)
    idx = _bin_index(scores, m_bins)
    count = np.bincount(idx, minlength=m_bins).astype(np.int64)
    conf_sum = np.bincount(idx, weights=scores, minlength=m_bins)
    acc_sum = np.bincount(idx, weights=(labels == 1).astype(np.float64), minlength=m_bins)
    nonzero = np.maximum(count, 1)
    return ReliabilityBins(
        m_bins=m_bins,
        bin_confidence=conf_sum / nonzero,
        bin_accuracy=acc_sum / nonzero,
        bin_count=count,
    )


def binned_ece(scores, labels, m_bins: int) -> float:
    """(1/N) sum_m |B_m| * |conf(B_m) - acc(B_m)|; empty bins contribute 0."""
    return reliability_bins(scores, labels, m_bins).ece()


# ---------------------------------------------------------------------------
# Coverage
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoverageCurve:
    """Empirical coverage at the target levels m/M, m = 1..M."""

    levels: np.ndarray
    empirical: np.ndarray

    def __post_init__(self):
        if self.levels.shape != self.empirical.shape:
            raise ValidationError("levels/empirical length mismatch")


def coverage_levels(m_bins: int) -> np.ndarray:
    if m_bins < 1:
        raise ValidationError("m_bins must be >= 1")
    return np.arange(1, m_bins + 1, dtype=np.float64) / m_bins


def coverage_grid(model: CalibrationModel, test_scores: ScoreGrid,
                  test_labels: LabelGrid, m_bins: int) -> np.ndarray:
    """Per-pixel empirical coverage at each level, shape (M, H, W).

    A test sample is covered at level q when the nonconformity score of its
    true class is at most the threshold curve_value(q) of the pixel's curve.
    """
    require_same_shape(test_scores, test_labels)
    h, w = model.image_shape
    if test_scores.shape[1:] != (h, w):
        raise ValidationError(
            f"test grids {test_scores.shape[1:]} do not match model image {(h, w)}")
    levels = coverage_levels(m_bins)
    thresholds = model.threshold_grid(levels)
    f = test_scores.data.astype(np.float64)
    s_true = np.where(test_labels.data == 1, 1.0 - f, f)
    out = np.empty((m_bins, h, w), dtype=np.float64)
    for i in range(m_bins):
        out[i] = (s_true <= thresholds[i]).mean(axis=0)
    return out


def coverage_curve(model: CalibrationModel, test_scores: ScoreGrid,
                   test_labels: LabelGrid, pixel: tuple[int, int],
                   m_bins: int) -> CoverageCurve:
    """Coverage curve of a single pixel coordinate."""
    row, col = pixel
    h, w = model.image_shape
    if not (0 <= row < h and 0 <= col < w):
        raise ValidationError(f"pixel {pixel} outside image {(h, w)}")
    require_same_shape(test_scores, test_labels)
    levels = coverage_levels(m_bins)
    curve = model.curve_at(row, col)
    f = test_scores.data[:, row, col].astype(np.float64)
    y = test_labels.data[:, row, col]
    s_true = np.where(y == 1, 1.0 - f, f)
    empirical = np.array([(s_true <= curve_value(curve, float(q))).mean()
                          for q in levels])
    return CoverageCurve(levels=levels, empirical=empirical)


def coverage_error(curve: CoverageCurve, mode: str = "absolute") -> float:
    """Deviation between empirical coverage and the target levels."""
    return _ce_reduce(curve.empirical, curve.levels, mode)


def _ce_reduce(empirical: np.ndarray, levels: np.ndarray, mode: str):
    dev = empirical - levels.reshape((-1,) + (1,) * (empirical.ndim - 1))
    if mode == "absolute":
        return np.abs(dev).mean(axis=0)
    if mode == "signed-literal":
        return dev.sum(axis=0)
    raise ValidationError(f"ce mode must be one of {CE_MODES}, got {mode!r}")


@dataclass(frozen=True)
class CeGridResult:
    grid: np.ndarray  # (H, W) coverage error per pixel
    mean: float
    q05: float
    q95: float


def ce_grid(model: CalibrationModel, test_scores: ScoreGrid, test_labels: LabelGrid,
            m_bins: int, mode: str = "absolute") -> CeGridResult:
    """Per-pixel coverage error plus the mean and [0.05, 0.95] pixel quantiles."""
    cov = coverage_grid(model, test_scores, test_labels, m_bins)
    grid = _ce_reduce(cov, coverage_levels(m_bins), mode)
    return CeGridResult(
        grid=grid,
        mean=float(grid.mean()),
        q05=float(np.quantile(grid, 0.05)),
        q95=float(np.quantile(grid, 0.95)),
    )


# ---------------------------------------------------------------------------
# Report export
# ---------------------------------------------------------------------------

def write_reliability_csv(bins: ReliabilityBins, path) -> None:
    edges = bins.edges
    with open(path, "w") as fh:
        fh.write("bin,left,right,confidence,accuracy,count\n")
        for m in range(bins.m_bins):
            fh.write(f"{m},{edges[m]:.6g},{edges[m + 1]:.6g},"
                     f"{bins.bin_confidence[m]:.10g},{bins.bin_accuracy[m]:.10g},"
                     f"{int(bins.bin_count[m])}\n")


def write_coverage_csv(levels: np.ndarray, empirical: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        fh.write("level,coverage\n")
        for q, cov in zip(levels, empirical):
            fh.write(f"{q:.10g},{cov:.10g}\n")

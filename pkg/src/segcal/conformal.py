"""Split-conformal machinery for binary pixel classifiers.

A classifier emits a foreground probability f in [0, 1]; the score of the
background class is 1 - f. The nonconformity of a labeled sample is one minus
the score assigned to the true class. Calibration collects nonconformity
scores, and thresholds are read off their empirical quantile function: for a
miscoverage rate ``alpha`` and ``n`` calibration scores, the threshold is the
k-th smallest score with k = ceil((n + 1) * (1 - alpha)), or 1.0 when k > n
(the largest possible score, producing the full prediction set).

Calibrators differ only in how scores are pooled across pixel coordinates:
per pixel, over the whole image, or over clusters of pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .grids import LabelGrid, ScoreGrid, require_same_shape

# Guard for ceil() on float quantile levels: keeps exact-integer products such
# as 10 * 0.9 from rounding up to the next index. Safe because meaningful
# levels are far coarser than 1e-9.
_CEIL_EPS = 1e-9

STRATEGIES = ("pixelwise", "imagewise", "clustered")


def nonconformity_score(foreground_score, label):
    """Score of the true class, flipped: 1 - f for label 1, f for label 0.

    Accepts scalars or same-shape arrays.
    """
    f = np.asarray(foreground_score, dtype=np.float64)
    y = np.asarray(label)
    if np.any((f < 0) | (f > 1)):
        raise ValidationError("foreground score out of [0, 1]")
    if np.any((y != 0) & (y != 1)):
        raise ValidationError("label not in {0, 1}")
    s = np.where(y == 1, 1.0 - f, f)
    return float(s) if s.ndim == 0 else s


def nonconformity_grid(scores: ScoreGrid, labels: LabelGrid) -> np.ndarray:
    """Per-pixel nonconformity scores for a full stack, shape (N, H, W)."""
    require_same_shape(scores, labels)
    f = scores.data.astype(np.float64)
    return np.where(labels.data == 1, 1.0 - f, f)


def quantile_index(n: int, level: float) -> int:
    """Rank k = ceil((n + 1) * level) clipped below at 1; k > n means "cap"."""
    return max(1, math.ceil((n + 1) * level - _CEIL_EPS))


@dataclass(frozen=True)
class NonconformityCurve:
    """Empirical quantile function of a set of nonconformity scores."""

    sorted_scores: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        arr = np.asarray(self.sorted_scores, dtype=np.float64)
        object.__setattr__(self, "sorted_scores", arr)
        if self.check:
            if arr.ndim != 1 or arr.size < 1:
                raise ValidationError("curve needs at least one score")
            if np.any((arr < 0) | (arr > 1)):
                raise ValidationError("nonconformity scores must lie in [0, 1]")
            if np.any(np.diff(arr) < 0):
                raise ValidationError("scores must be sorted ascending")

    @classmethod
    def from_scores(cls, scores) -> "NonconformityCurve":
        return cls(np.sort(np.asarray(scores, dtype=np.float64)))

    @property
    def count(self) -> int:
        return int(self.sorted_scores.size)


def conformal_quantile(curve: NonconformityCurve, alpha: float) -> float:
    """Threshold at miscoverage ``alpha``: the ceil((n+1)(1-alpha))/n quantile.

    Returns 1.0 when the rank exceeds n, which yields the full prediction set.
    """
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    return curve_value(curve, 1.0 - alpha)


def curve_value(curve: NonconformityCurve, qhat: float) -> float:
    """Evaluate the quantile function at a level in [0, 1].

    qhat = 0 returns the smallest score; qhat = 1 returns the 1.0 cap.
    """
    if not 0.0 <= qhat <= 1.0:
        raise ValidationError(f"quantile level must be in [0, 1], got {qhat}")
    k = quantile_index(curve.count, qhat)
    if k > curve.count:
        return 1.0
    return float(curve.sorted_scores[k - 1])


@dataclass(frozen=True)
class PredictionSet:
    contains_background: bool
    contains_foreground: bool

    def contains(self, label: int) -> bool:
        return self.contains_foreground if label == 1 else self.contains_background


def prediction_set(foreground_score: float, threshold: float) -> PredictionSet:
    """Classes whose nonconformity score is at most ``threshold``."""
    f = float(foreground_score)
    if not 0.0 <= f <= 1.0:
        raise ValidationError(f"foreground score out of [0, 1]: {f}")
    return PredictionSet(
        contains_background=f <= threshold,          # s(x, 0) = f
        contains_foreground=(1.0 - f) <= threshold,  # s(x, 1) = 1 - f
    )


# ---------------------------------------------------------------------------
# Cluster maps and calibration models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClusterMap:
    """Assignment of every pixel coordinate to a cluster id in [0, n_clusters)."""

    assignment: np.ndarray
    n_clusters: int

    def __post_init__(self):
        arr = np.asarray(self.assignment)
        if arr.ndim != 2:
            raise ValidationError(f"assignment must be 2-D, got shape {arr.shape}")
        if self.n_clusters < 1:
            raise ValidationError("n_clusters must be >= 1")
        present = np.unique(arr)
        if present[0] < 0 or present[-1] >= self.n_clusters:
            raise ValidationError("cluster id out of range")
        if present.size != self.n_clusters:
            missing = sorted(set(range(self.n_clusters)) - set(int(i) for i in present))
            raise ValidationError(f"empty cluster ids {missing}")
        object.__setattr__(self, "assignment", np.ascontiguousarray(arr, dtype=np.int64))

    @property
    def shape(self) -> tuple[int, int]:
        return self.assignment.shape

    @classmethod
    def from_assignment(cls, assignment: np.ndarray) -> "ClusterMap":
        """Compact arbitrary non-negative ids to 0..K-1, dropping unused ids."""
        assignment = np.asarray(assignment)
        ids, compact = np.unique(assignment, return_inverse=True)
        return cls(compact.reshape(assignment.shape), n_clusters=int(ids.size))


@dataclass(frozen=True)
class CalibrationModel:
    """Lookup from pixel coordinate to the nonconformity curve calibrating it.

    Curves are stored concatenated (each slice sorted ascending) with an
    offsets index, which keeps ragged per-cluster curves in two flat arrays
    and round-trips losslessly through the model artifact files.
    """

    strategy: str
    curve_data: np.ndarray     # concatenated sorted scores, float32
    curve_offsets: np.ndarray  # int64, len n_curves + 1
    assignment: np.ndarray     # (H, W) curve index per pixel

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"strategy must be one of {STRATEGIES}")
        if self.curve_offsets.ndim != 1 or self.curve_offsets.size < 2:
            raise ValidationError("need at least one curve")
        if self.assignment.ndim != 2:
            raise ValidationError("assignment must be 2-D")
        n_curves = self.curve_offsets.size - 1
        if self.assignment.min() < 0 or self.assignment.max() >= n_curves:
            raise ValidationError("assignment references a missing curve")

    @property
    def n_curves(self) -> int:
        return int(self.curve_offsets.size - 1)

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.assignment.shape

    def curve(self, index: int) -> NonconformityCurve:
        lo, hi = self.curve_offsets[index], self.curve_offsets[index + 1]
        return NonconformityCurve(
            self.curve_data[lo:hi].astype(np.float64), check=False)

    def curve_at(self, row: int, col: int) -> NonconformityCurve:
        return self.curve(int(self.assignment[row, col]))

    def threshold_grid(self, levels) -> np.ndarray:
        """Thresholds curve_value(level) per pixel, shape (len(levels), H, W)."""
        levels = np.asarray(levels, dtype=np.float64)
        h, w = self.assignment.shape
        per_curve = np.empty((levels.size, self.n_curves), dtype=np.float64)
        counts = np.diff(self.curve_offsets)
        if np.all(counts == counts[0]):
            # uniform curve length: one gather per level over a 2-D view
            n = int(counts[0])
            table = self.curve_data.reshape(self.n_curves, n).astype(np.float64)
            for i, level in enumerate(levels):
                k = quantile_index(n, float(level))
                per_curve[i] = 1.0 if k > n else table[:, k - 1]
        else:
            for c in range(self.n_curves):
                curve = self.curve(c)
                for i, level in enumerate(levels):
                    per_curve[i, c] = curve_value(curve, float(level))
        flat = self.assignment.reshape(-1)
        return per_curve[:, flat].reshape(levels.size, h, w)


def _pack_curves(strategy: str, curves: list[np.ndarray], assignment: np.ndarray) -> CalibrationModel:
    offsets = np.zeros(len(curves) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([c.size for c in curves])
    data = np.concatenate(curves).astype(np.float32) if curves else np.empty(0, np.float32)
    return CalibrationModel(
        strategy=strategy,
        curve_data=data,
        curve_offsets=offsets,
        assignment=np.ascontiguousarray(assignment, dtype=np.int64),
    )


def calibrate_pixelwise(scores: ScoreGrid, labels: LabelGrid) -> CalibrationModel:
    """One curve per pixel coordinate from that pixel's N scores."""
    s = nonconformity_grid(scores, labels)
    n, h, w = s.shape
    cube = np.sort(s, axis=0)                      # (N, H, W) ascending per pixel
    data = cube.transpose(1, 2, 0).reshape(-1)     # curve-major concatenation
    offsets = np.arange(h * w + 1, dtype=np.int64) * n
    assignment = np.arange(h * w, dtype=np.int64).reshape(h, w)
    return CalibrationModel("pixelwise", data.astype(np.float32), offsets, assignment)


def calibrate_imagewise(scores: ScoreGrid, labels: LabelGrid) -> CalibrationModel:
    """A single curve pooling all N * H * W scores."""
    s = nonconformity_grid(scores, labels)
    _, h, w = s.shape
    pooled = np.sort(s.reshape(-1))
    assignment = np.zeros((h, w), dtype=np.int64)
    return _pack_curves("imagewise", [pooled], assignment)


def calibrate_clustered(scores: ScoreGrid, labels: LabelGrid,
                        clusters: ClusterMap) -> CalibrationModel:
    """One curve per cluster, pooling the scores of all member pixels."""
    s = nonconformity_grid(scores, labels)
    _, h, w = s.shape
    if clusters.shape != (h, w):
        raise ValidationError(
            f"cluster map shape {clusters.shape} != image shape {(h, w)}")
    flat_assign = clusters.assignment.reshape(-1)
    flat_scores = s.reshape(s.shape[0], -1)
    curves = []
    for c in range(clusters.n_clusters):
        members = np.flatnonzero(flat_assign == c)
        curves.append(np.sort(flat_scores[:, members].reshape(-1)))
    return _pack_curves("clustered", curves, clusters.assignment)

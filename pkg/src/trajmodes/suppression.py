"""Greedy suppression of near-duplicate prediction modes.

Works like non-maximum suppression over detections: repeatedly take the
highest-probability unprocessed mode, gather the unprocessed modes
coincident with it, replace the bunch by a single mode and give it the
bunch's total probability.  Removing duplicates lifts precision-recall
style metrics because a hit buried under a near-copy of a higher-ranked
hit would otherwise count as a false positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .metrics import DEGENERATE_STEP, MetricConfig, DEFAULT_METRIC_CONFIG, hit_window
from .types import CHECKPOINT_INDEX, HORIZONS, ModePrediction, PredictionSet, Trajectory

MERGE_STRATEGIES = ("keep_max", "average_equal", "average_weighted")


@dataclass(frozen=True)
class FinalPointCriterion:
    """Modes coincide when their final points are within ``radius`` meters."""

    radius: float = 2.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")


@dataclass(frozen=True)
class CheckpointWindowCriterion:
    """Modes coincide when, at each of 3, 5 and 8 s, the lower-probability
    trajectory lies within ``gamma`` times the hit-window half-widths
    oriented along the higher-probability trajectory (AND over horizons)."""

    gamma: float = 1.0
    metric_config: MetricConfig = DEFAULT_METRIC_CONFIG

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")


Criterion = Union[FinalPointCriterion, CheckpointWindowCriterion]


def make_criterion(
    name: str, radius: float = 2.0, gamma: float = 1.0,
    metric_config: MetricConfig = DEFAULT_METRIC_CONFIG,
) -> Criterion:
    if name == "final":
        return FinalPointCriterion(radius=radius)
    if name == "checkpoints":
        return CheckpointWindowCriterion(gamma=gamma, metric_config=metric_config)
    raise ValueError(f"unknown criterion {name!r} (expected 'final' or 'checkpoints')")


def _direction_at(traj: Trajectory, index: int) -> float:
    # Last >= 1 cm step ending at or before the checkpoint; a fully
    # degenerate trajectory falls back to the +x axis.
    pts = traj.points
    for k in range(max(index, 1), 0, -1):
        dx = pts[k, 0] - pts[k - 1, 0]
        dy = pts[k, 1] - pts[k - 1, 1]
        if math.hypot(dx, dy) >= DEGENERATE_STEP:
            return math.atan2(dy, dx)
    return 0.0


def trajectories_coincident(
    anchor: Trajectory, other: Trajectory, criterion: Criterion, v0: float
) -> bool:
    """Directed coincidence test with windows anchored on ``anchor``."""
    if isinstance(criterion, FinalPointCriterion):
        dx = anchor.points[-1, 0] - other.points[-1, 0]
        dy = anchor.points[-1, 1] - other.points[-1, 1]
        return math.hypot(dx, dy) <= criterion.radius
    for horizon in HORIZONS:
        index = CHECKPOINT_INDEX[horizon]
        theta = _direction_at(anchor, index)
        c, s = math.cos(theta), math.sin(theta)
        px = float(other.points[index, 0]) - float(anchor.points[index, 0])
        py = float(other.points[index, 1]) - float(anchor.points[index, 1])
        lon = c * px + s * py
        lat = c * py - s * px
        lat_half, lon_half = hit_window(horizon, v0, criterion.metric_config)
        if abs(lon) > criterion.gamma * lon_half or abs(lat) > criterion.gamma * lat_half:
            return False
    return True


def coincident(
    mode_i: ModePrediction,
    mode_j: ModePrediction,
    criterion: Criterion,
    v0: float = 0.0,
    index_i: int = 0,
    index_j: int = 1,
) -> bool:
    """Symmetric coincidence relation between two modes.

    For the checkpoint criterion the windows follow the higher-probability
    mode (ties broken toward the lower original index), which keeps the
    relation well-defined regardless of argument order.
    """
    if (mode_i.prob, -index_i) >= (mode_j.prob, -index_j):
        anchor, other = mode_i, mode_j
    else:
        anchor, other = mode_j, mode_i
    return trajectories_coincident(anchor.mean, other.mean, criterion, v0)


def coincidence_matrix(
    pred: PredictionSet, criterion: Criterion, v0: float = 0.0
) -> np.ndarray:
    """Boolean coincidence relation over the set's modes (reflexive, symmetric)."""
    n = len(pred.modes)
    out = np.eye(n, dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            hit = coincident(pred.modes[i], pred.modes[j], criterion, v0, i, j)
            out[i, j] = out[j, i] = hit
    return out


def greedy_groups(
    probs: Sequence[float], coincident_fn: Callable[[int, int], bool]
) -> list[tuple[int, list[int]]]:
    """Greedy bunching: (anchor index, bunch member indices) in processing
    order.  Bunches contain only modes directly coincident with their
    anchor; no transitive chaining."""
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))
    processed = [False] * len(probs)
    groups = []
    for anchor in order:
        if processed[anchor]:
            continue
        bunch = [anchor]
        processed[anchor] = True
        for j in order:
            if not processed[j] and coincident_fn(anchor, j):
                bunch.append(j)
                processed[j] = True
        groups.append((anchor, bunch))
    return groups


def _merge_trajectories(
    trajs: Sequence[Trajectory], probs: Sequence[float], anchor_pos: int, strategy: str
) -> Trajectory:
    if strategy == "keep_max":
        return trajs[anchor_pos]
    stacked = np.stack([t.points for t in trajs])
    if strategy == "average_equal":
        return Trajectory(stacked.mean(axis=0))
    if strategy == "average_weighted":
        w = np.asarray(probs, dtype=np.float64)
        return Trajectory(np.tensordot(w, stacked, axes=1) / w.sum())
    raise ValueError(f"unknown merge strategy {strategy!r}")


def greedy_suppress(
    pred: PredictionSet,
    criterion: Criterion,
    strategy: str = "keep_max",
    v0: float = 0.0,
) -> PredictionSet:
    """Suppress or merge coincident modes, aggregating their probabilities.

    The output has between 1 and 6 modes in processing order (descending
    anchor probability) and conserves the total probability exactly up to
    rounding.  Under ``keep_max`` the surviving trajectories are pairwise
    non-coincident.
    """
    if strategy not in MERGE_STRATEGIES:
        raise ValueError(f"unknown merge strategy {strategy!r}")
    modes = pred.modes
    probs = [m.prob for m in modes]

    def coincident_fn(i: int, j: int) -> bool:
        return coincident(modes[i], modes[j], criterion, v0, i, j)

    merged = []
    for anchor, bunch in greedy_groups(probs, coincident_fn):
        bunch_trajs = [modes[i].mean for i in bunch]
        bunch_probs = [modes[i].prob for i in bunch]
        traj = _merge_trajectories(bunch_trajs, bunch_probs, bunch.index(anchor), strategy)
        merged.append(
            ModePrediction(
                mean=traj, cov_params=modes[anchor].cov_params, prob=sum(bunch_probs)
            )
        )
    return PredictionSet(scene_id=pred.scene_id, agent_id=pred.agent_id, modes=tuple(merged))


class ModeSuppressor(BaseEstimator, TransformerMixin):
    """Transformer applying greedy mode suppression per agent.

    ``transform`` takes an iterable of ``(PredictionSet, v0)`` pairs (the
    initial speed scales the checkpoint windows) and returns the processed
    sets in order.
    """

    def __init__(self, criterion="checkpoints", radius=2.0, gamma=1.0, strategy="keep_max"):
        self.criterion = criterion
        self.radius = radius
        self.gamma = gamma
        self.strategy = strategy

    def fit(self, X=None, y=None):
        return self

    def _criterion(self) -> Criterion:
        return make_criterion(self.criterion, radius=self.radius, gamma=self.gamma)

    def transform(self, X: Iterable[tuple[PredictionSet, float]]) -> list[PredictionSet]:
        crit = self._criterion()
        return [greedy_suppress(pred, crit, self.strategy, v0) for pred, v0 in X]

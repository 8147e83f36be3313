"""Displacement metrics plus the hit-window, bucketed, PR-AUC style mAP.

A prediction hits when its checkpoint position falls inside a rectangular
tolerance box centered on the ground truth and aligned with the motion
direction there; the longitudinal half-width is twice the lateral one, the
size grows linearly with the horizon and shrinks for slow agents.  mAP
pools probability-sorted modes per direction bucket, allows one true
positive per agent and integrates the precision-recall points stepwise.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .types import (
    AgentType,
    CHECKPOINT_INDEX,
    HORIZONS,
    PredictionSet,
    Scene,
    Trajectory,
)

#: Displacement below which a ground-truth step has no usable direction.
DEGENERATE_STEP = 0.01

#: Total displacement below which an agent counts as stationary, meters.
STATIONARY_DISPLACEMENT = 2.0

_STRAIGHT_DEG = 30.0
_UTURN_DEG = 150.0
_STRAIGHT_LATERAL = 2.0


class DirectionBucket(enum.Enum):
    STATIONARY = "stationary"
    STRAIGHT = "straight"
    STRAIGHT_LEFT = "straight_left"
    STRAIGHT_RIGHT = "straight_right"
    LEFT = "left"
    RIGHT = "right"
    U_TURN_LEFT = "u_turn_left"
    U_TURN_RIGHT = "u_turn_right"


@dataclass(frozen=True)
class MetricConfig:
    """Window constants and sweep policy; defaults follow the public
    challenge convention (lateral half-width 0.4 t - 0.2, speed scaling
    0.5 -> 1.0 over 1.4..11 m/s)."""

    lateral_slope: float = 0.4
    lateral_intercept: float = -0.2
    velocity_low: float = 1.4
    velocity_high: float = 11.0
    low_speed_scale: float = 0.5
    #: how extra hits of an already-matched agent are counted: "fp" | "ignore"
    duplicate_hits: str = "fp"

    def __post_init__(self):
        if self.duplicate_hits not in ("fp", "ignore"):
            raise ValueError(f"duplicate_hits must be 'fp' or 'ignore', got {self.duplicate_hits!r}")


DEFAULT_METRIC_CONFIG = MetricConfig()


def hit_window(
    t: float, v0: float, config: MetricConfig = DEFAULT_METRIC_CONFIG
) -> tuple[float, float]:
    """(lateral_half, longitudinal_half) of the tolerance box at horizon t."""
    u = (v0 - config.velocity_low) / (config.velocity_high - config.velocity_low)
    scale = config.low_speed_scale + (1.0 - config.low_speed_scale) * min(1.0, max(0.0, u))
    lateral = scale * (config.lateral_slope * t + config.lateral_intercept)
    return lateral, 2.0 * lateral


def _wrap_angle(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def checkpoint_direction(gt: Trajectory, index: int, heading0: float) -> float:
    """Ground-truth motion direction at a checkpoint: the direction of the
    step ending there, falling back to heading0 when nearly stationary."""
    pts = gt.points
    j = max(index, 1)
    dx = pts[j, 0] - pts[j - 1, 0]
    dy = pts[j, 1] - pts[j - 1, 1]
    if math.hypot(dx, dy) < DEGENERATE_STEP:
        return heading0
    return math.atan2(dy, dx)


def is_hit(
    mode: Trajectory,
    gt: Trajectory,
    v0: float,
    horizon: float,
    heading0: float = 0.0,
    config: MetricConfig = DEFAULT_METRIC_CONFIG,
) -> bool:
    """True iff the mode's checkpoint position lies inside the gt-aligned box."""
    index = CHECKPOINT_INDEX[horizon]
    theta = checkpoint_direction(gt, index, heading0)
    c, s = math.cos(theta), math.sin(theta)
    px = float(mode.points[index, 0]) - float(gt.points[index, 0])
    py = float(mode.points[index, 1]) - float(gt.points[index, 1])
    lon = c * px + s * py
    lat = c * py - s * px
    lat_half, lon_half = hit_window(horizon, v0, config)
    return abs(lon) <= lon_half and abs(lat) <= lat_half


def min_ade(pred: PredictionSet, gt: Trajectory, horizon: float) -> float:
    """Minimum over modes of the mean displacement up to the checkpoint."""
    index = CHECKPOINT_INDEX[horizon]
    gt_pts = gt.points[: index + 1]
    best = math.inf
    for m in pred.modes:
        d = m.mean.points[: index + 1] - gt_pts
        best = min(best, float(np.mean(np.hypot(d[:, 0], d[:, 1]))))
    return best


def min_fde(pred: PredictionSet, gt: Trajectory, horizon: float) -> float:
    """Minimum over modes of the displacement at the checkpoint itself."""
    index = CHECKPOINT_INDEX[horizon]
    best = math.inf
    for m in pred.modes:
        dx = m.mean.points[index, 0] - gt.points[index, 0]
        dy = m.mean.points[index, 1] - gt.points[index, 1]
        best = min(best, math.hypot(dx, dy))
    return best


def bucket_of(gt: Trajectory, heading0: float) -> DirectionBucket:
    """Direction bucket of a ground-truth trajectory.

    Stationary below 2 m of total displacement; otherwise bucketed by the
    final heading change (straight within 30 degrees, u-turn beyond 150),
    with straight sub-split left/right when the lateral offset in the
    initial-heading frame exceeds 2 m.
    """
    pts = gt.points
    dx = float(pts[-1, 0] - pts[0, 0])
    dy = float(pts[-1, 1] - pts[0, 1])
    if math.hypot(dx, dy) < STATIONARY_DISPLACEMENT:
        return DirectionBucket.STATIONARY
    final_heading = heading0
    for k in range(len(pts) - 1, 0, -1):
        sx = pts[k, 0] - pts[k - 1, 0]
        sy = pts[k, 1] - pts[k - 1, 1]
        if math.hypot(sx, sy) >= DEGENERATE_STEP:
            final_heading = math.atan2(sy, sx)
            break
    dh = _wrap_angle(final_heading - heading0)
    abs_dh = abs(dh)
    if abs_dh < math.radians(_STRAIGHT_DEG):
        c, s = math.cos(heading0), math.sin(heading0)
        lateral = c * dy - s * dx
        if lateral > _STRAIGHT_LATERAL:
            return DirectionBucket.STRAIGHT_LEFT
        if lateral < -_STRAIGHT_LATERAL:
            return DirectionBucket.STRAIGHT_RIGHT
        return DirectionBucket.STRAIGHT
    if abs_dh <= math.radians(_UTURN_DEG):
        return DirectionBucket.LEFT if dh > 0 else DirectionBucket.RIGHT
    return DirectionBucket.U_TURN_LEFT if dh > 0 else DirectionBucket.U_TURN_RIGHT


@dataclass(frozen=True)
class CellMetrics:
    min_ade: float
    min_fde: float
    miss_rate: float
    map: float


@dataclass(frozen=True)
class MetricReport:
    """Metrics per agent type and horizon plus their grand averages."""

    cells: dict
    counts: dict
    averages: CellMetrics

    def to_flat_dict(self) -> dict:
        out = {}
        for agent_type in AgentType:
            for horizon in HORIZONS:
                cell = self.cells.get((agent_type, horizon))
                for name in ("min_ade", "min_fde", "miss_rate", "map"):
                    key = f"{agent_type.value}/{horizon:g}s/{name}"
                    out[key] = None if cell is None else getattr(cell, name)
        for name in ("min_ade", "min_fde", "miss_rate", "map"):
            out[f"mean/{name}"] = getattr(self.averages, name)
        for agent_type in AgentType:
            out[f"count/{agent_type.value}"] = self.counts.get(agent_type, 0)
        return out

    def format_table(self) -> str:
        header = f"{'type':<11}{'horizon':>8}{'minADE':>10}{'minFDE':>10}{'missRate':>10}{'mAP':>10}"
        lines = [header, "-" * len(header)]

        def fmt(value):
            return "  n/a" if value is None else f"{value:.4f}"

        for agent_type in AgentType:
            for horizon in HORIZONS:
                cell = self.cells.get((agent_type, horizon))
                row = [None] * 4 if cell is None else [cell.min_ade, cell.min_fde, cell.miss_rate, cell.map]
                lines.append(
                    f"{agent_type.value:<11}{horizon:>7g}s"
                    + "".join(f"{fmt(v):>10}" for v in row)
                )
        lines.append("-" * len(header))
        avg = self.averages
        lines.append(
            f"{'mean':<11}{'':>8}"
            + "".join(f"{fmt(v):>10}" for v in (avg.min_ade, avg.min_fde, avg.miss_rate, avg.map))
        )
        return "\n".join(lines)


def _require_agent(pred: PredictionSet, scene: Scene):
    agent = scene.agent(pred.agent_id)
    if pred.agent_id not in scene.ground_truth:
        raise ValueError(f"prediction references agent {pred.agent_id!r} without ground truth")
    return agent, scene.ground_truth[pred.agent_id]


def _bucket_average_precision(entries: list, n_agents: int, duplicate_hits: str) -> float:
    """AP of one bucket: entries are (prob, agent_key, mode_idx, hit), one
    true positive allowed per agent, recall denominator = agent count."""
    entries = sorted(entries, key=lambda e: (-e[0], e[1], e[2]))
    matched = set()
    k = 0
    tp = 0
    ap = 0.0
    prev_recall = 0.0
    for prob, agent_key, mode_idx, hit in entries:
        if hit and agent_key in matched and duplicate_hits == "ignore":
            continue
        k += 1
        if hit and agent_key not in matched:
            matched.add(agent_key)
            tp += 1
            recall = tp / n_agents
            ap += (recall - prev_recall) * (tp / k)
            prev_recall = recall
    return ap


def map_score(
    dataset: Iterable[tuple[PredictionSet, Scene]],
    config: MetricConfig = DEFAULT_METRIC_CONFIG,
) -> MetricReport:
    """Full metric report over (prediction, scene) pairs.

    mAP is computed per type, horizon and direction bucket and averaged
    over the non-empty buckets; minADE / minFDE / miss rate are averaged
    over the agents of each type.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("empty dataset")

    rows = []
    for pred, scene in dataset:
        agent, gt = _require_agent(pred, scene)
        rows.append(
            {
                "pred": pred,
                "agent": agent,
                "gt": gt,
                "key": (scene.scene_id, agent.id),
                "bucket": bucket_of(gt, agent.heading0),
            }
        )

    cells = {}
    counts = {}
    for agent_type in AgentType:
        type_rows = [r for r in rows if r["agent"].type == agent_type]
        counts[agent_type] = len(type_rows)
        if not type_rows:
            continue
        for horizon in HORIZONS:
            buckets: dict[DirectionBucket, dict] = {}
            ade_sum = fde_sum = 0.0
            missed = 0
            for r in type_rows:
                hits = [
                    is_hit(m.mean, r["gt"], r["agent"].v0, horizon, r["agent"].heading0, config)
                    for m in r["pred"].modes
                ]
                ade_sum += min_ade(r["pred"], r["gt"], horizon)
                fde_sum += min_fde(r["pred"], r["gt"], horizon)
                if not any(hits):
                    missed += 1
                slot = buckets.setdefault(r["bucket"], {"agents": 0, "entries": []})
                slot["agents"] += 1
                for idx, m in enumerate(r["pred"].modes):
                    slot["entries"].append((m.prob, r["key"], idx, hits[idx]))
            ap_sum = 0.0
            n_buckets = 0
            for bucket in DirectionBucket:
                slot = buckets.get(bucket)
                if slot is None or slot["agents"] == 0:
                    continue
                ap_sum += _bucket_average_precision(
                    slot["entries"], slot["agents"], config.duplicate_hits
                )
                n_buckets += 1
            n = len(type_rows)
            cells[(agent_type, horizon)] = CellMetrics(
                min_ade=ade_sum / n,
                min_fde=fde_sum / n,
                miss_rate=missed / n,
                map=ap_sum / n_buckets,
            )

    averages = _average_cells(cells)
    return MetricReport(cells=cells, counts=counts, averages=averages)


def _average_cells(cells: dict) -> CellMetrics:
    sums = {"min_ade": 0.0, "min_fde": 0.0, "miss_rate": 0.0, "map": 0.0}
    n = 0
    for agent_type in AgentType:
        for horizon in HORIZONS:
            cell = cells.get((agent_type, horizon))
            if cell is None:
                continue
            n += 1
            for name in sums:
                sums[name] += getattr(cell, name)
    if n == 0:
        raise ValueError("no populated metric cells")
    return CellMetrics(**{name: value / n for name, value in sums.items()})


def miss_rate(
    dataset: Iterable[tuple[PredictionSet, Scene]],
    horizon: float,
    config: MetricConfig = DEFAULT_METRIC_CONFIG,
) -> float:
    """Fraction of agents for which no mode hits at the horizon."""
    dataset = list(dataset)
    if not dataset:
        raise ValueError("empty dataset")
    missed = 0
    for pred, scene in dataset:
        agent, gt = _require_agent(pred, scene)
        if not any(
            is_hit(m.mean, gt, agent.v0, horizon, agent.heading0, config) for m in pred.modes
        ):
            missed += 1
    return missed / len(dataset)

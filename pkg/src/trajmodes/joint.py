"""Factorized to joint conversion for an interacting pair of agents.

The 36 product combinations of two six-mode predictions are treated as
composite futures: combinations whose trajectories collide are dropped,
near-duplicate composites are greedily merged, and the six most probable
survivors are kept with renormalized shared probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import suppression
from .suppression import Criterion, greedy_groups, trajectories_coincident
from .types import (
    JointMode,
    JointPredictionSet,
    N_MODES,
    PredictionSet,
    Scene,
    Trajectory,
)


@dataclass(frozen=True)
class ComboMode:
    """One product combination: mode ``idx_a`` of agent A with mode
    ``idx_b`` of agent B, probability p_a * p_b."""

    idx_a: int
    idx_b: int
    traj_a: Trajectory
    traj_b: Trajectory
    prob: float


@dataclass(frozen=True)
class CollisionCriterion:
    """Two trajectories collide when at any timestep the distance between
    them is below the sum of the collision-disc radii plus ``margin``."""

    margin: float = 0.0

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError(f"margin must be >= 0, got {self.margin}")


def product_combos(set_a: PredictionSet, set_b: PredictionSet) -> list[ComboMode]:
    """All mode combinations with independent (outer-product) probabilities."""
    combos = []
    for i, ma in enumerate(set_a.modes):
        for j, mb in enumerate(set_b.modes):
            combos.append(
                ComboMode(
                    idx_a=i, idx_b=j, traj_a=ma.mean, traj_b=mb.mean, prob=ma.prob * mb.prob
                )
            )
    return combos


def collides(
    traj_a: Trajectory,
    traj_b: Trajectory,
    radii: tuple[float, float],
    criterion: CollisionCriterion = CollisionCriterion(),
) -> bool:
    """Same-timestep disc overlap test over the 16 steps, no interpolation."""
    threshold = radii[0] + radii[1] + criterion.margin
    d = traj_a.points - traj_b.points
    dist = np.hypot(d[:, 0], d[:, 1])
    return bool(np.any(dist < threshold))


def _composite_coincident(
    anchor: ComboMode, other: ComboMode, criterion: Criterion, v0_a: float, v0_b: float
) -> bool:
    # A composite pair coincides only when both sub-trajectories coincide,
    # each tested in the anchor combo's frame for its agent.
    return trajectories_coincident(
        anchor.traj_a, other.traj_a, criterion, v0_a
    ) and trajectories_coincident(anchor.traj_b, other.traj_b, criterion, v0_b)


def suppress_combos(
    combos: list[ComboMode],
    criterion: Criterion,
    strategy: str = "keep_max",
    v0_a: float = 0.0,
    v0_b: float = 0.0,
) -> list[ComboMode]:
    """Greedy suppression over composite trajectories; probability mass of
    each bunch is aggregated onto its merged combo."""
    if strategy not in suppression.MERGE_STRATEGIES:
        raise ValueError(f"unknown merge strategy {strategy!r}")
    probs = [c.prob for c in combos]

    def coincident_fn(i: int, j: int) -> bool:
        return _composite_coincident(combos[i], combos[j], criterion, v0_a, v0_b)

    merged = []
    for anchor, bunch in greedy_groups(probs, coincident_fn):
        total = sum(combos[i].prob for i in bunch)
        if strategy == "keep_max" or len(bunch) == 1:
            base = combos[anchor]
            merged.append(
                ComboMode(base.idx_a, base.idx_b, base.traj_a, base.traj_b, total)
            )
            continue
        stack_a = np.stack([combos[i].traj_a.points for i in bunch])
        stack_b = np.stack([combos[i].traj_b.points for i in bunch])
        if strategy == "average_equal":
            traj_a = Trajectory(stack_a.mean(axis=0))
            traj_b = Trajectory(stack_b.mean(axis=0))
        else:
            w = np.array([combos[i].prob for i in bunch])
            traj_a = Trajectory(np.tensordot(w, stack_a, axes=1) / w.sum())
            traj_b = Trajectory(np.tensordot(w, stack_b, axes=1) / w.sum())
        merged.append(
            ComboMode(combos[anchor].idx_a, combos[anchor].idx_b, traj_a, traj_b, total)
        )
    return merged


def joint_predict(
    set_a: PredictionSet,
    set_b: PredictionSet,
    *,
    radius_a: float,
    radius_b: float,
    v0_a: float = 0.0,
    v0_b: float = 0.0,
    collision: Optional[CollisionCriterion] = CollisionCriterion(),
    criterion: Optional[Criterion] = None,
    strategy: str = "keep_max",
    top_k: int = N_MODES,
    scene_id: Optional[str] = None,
) -> JointPredictionSet:
    """Convert two factorized predictions into one joint prediction.

    Pass ``collision=None`` to skip collision filtering and
    ``criterion=None`` to skip composite suppression, in which case the
    result is exactly the renormalized top-k of the outer product.  When
    every combination collides, the single most probable one is kept with
    probability 1 and the record is flagged degenerate.
    """
    combos = product_combos(set_a, set_b)
    degenerate = False
    if collision is not None:
        survivors = [
            c for c in combos if not collides(c.traj_a, c.traj_b, (radius_a, radius_b), collision)
        ]
        if not survivors:
            best = min(combos, key=lambda c: (-c.prob, c.idx_a, c.idx_b))
            return JointPredictionSet(
                scene_id=scene_id or set_a.scene_id,
                pair=(set_a.agent_id, set_b.agent_id),
                modes=(JointMode(best.traj_a, best.traj_b, 1.0),),
                degenerate=True,
            )
        combos = survivors
    if criterion is not None:
        combos = suppress_combos(combos, criterion, strategy, v0_a, v0_b)
    kept = sorted(combos, key=lambda c: (-c.prob, c.idx_a, c.idx_b))[:top_k]
    total = sum(c.prob for c in kept)
    if total <= 0.0:
        # all surviving mass is zero; fall back to uniform over the kept set
        modes = tuple(JointMode(c.traj_a, c.traj_b, 1.0 / len(kept)) for c in kept)
    else:
        modes = tuple(JointMode(c.traj_a, c.traj_b, c.prob / total) for c in kept)
    return JointPredictionSet(
        scene_id=scene_id or set_a.scene_id,
        pair=(set_a.agent_id, set_b.agent_id),
        modes=modes,
        degenerate=degenerate,
    )


def joint_predict_for_scene(
    scene: Scene,
    pred_a: PredictionSet,
    pred_b: PredictionSet,
    **kwargs,
) -> JointPredictionSet:
    """joint_predict with radii and initial speeds taken from the scene."""
    agent_a = scene.agent(pred_a.agent_id)
    agent_b = scene.agent(pred_b.agent_id)
    return joint_predict(
        pred_a,
        pred_b,
        radius_a=agent_a.radius,
        radius_b=agent_b.radius,
        v0_a=agent_a.v0,
        v0_b=agent_b.v0,
        scene_id=scene.scene_id,
        **kwargs,
    )


class PairJointConverter(BaseEstimator, TransformerMixin):
    """Transformer turning factorized pair predictions into joint ones.

    ``transform`` takes an iterable of ``(scene, pred_a, pred_b)`` triples,
    where the predictions belong to the scene's interacting pair.
    """

    def __init__(
        self,
        margin=0.0,
        collision_filter=True,
        suppress=True,
        criterion="checkpoints",
        radius=2.0,
        gamma=1.0,
        strategy="keep_max",
        top_k=N_MODES,
    ):
        self.margin = margin
        self.collision_filter = collision_filter
        self.suppress = suppress
        self.criterion = criterion
        self.radius = radius
        self.gamma = gamma
        self.strategy = strategy
        self.top_k = top_k

    def fit(self, X=None, y=None):
        return self

    def transform(
        self, X: Iterable[tuple[Scene, PredictionSet, PredictionSet]]
    ) -> list[JointPredictionSet]:
        collision = CollisionCriterion(margin=self.margin) if self.collision_filter else None
        criterion = (
            suppression.make_criterion(self.criterion, radius=self.radius, gamma=self.gamma)
            if self.suppress
            else None
        )
        return [
            joint_predict_for_scene(
                scene,
                pred_a,
                pred_b,
                collision=collision,
                criterion=criterion,
                strategy=self.strategy,
                top_k=self.top_k,
            )
            for scene, pred_a, pred_b in X
        ]

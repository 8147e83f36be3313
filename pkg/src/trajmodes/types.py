"""Domain types for scenes, trajectories and multimodal predictions.

All types are immutable after construction and validate their invariants in
the constructor, so downstream code never re-checks shapes or probability
normalization.  Trajectories are 16 points at 2 Hz (8 s of future), history
is 10 points at 10 Hz (1 s of past).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import _validation

T_STEPS = 16
HISTORY_STEPS = 10
N_MODES = 6
STEP_SECONDS = 0.5

#: Checkpoint horizons in seconds and the 0-based trajectory index of each;
#: t_k = 0.5 * (k + 1), so 3 s -> 5, 5 s -> 9, 8 s -> 15.
HORIZONS = (3.0, 5.0, 8.0)
CHECKPOINT_INDEX = {3.0: 5, 5.0: 9, 8.0: 15}


def timestamp_of(step: int) -> float:
    """Seconds into the future of trajectory index ``step``."""
    return STEP_SECONDS * (step + 1)


class AgentType(enum.Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    CYCLIST = "cyclist"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


#: Default collision-disc radius per agent type, meters.
DEFAULT_RADIUS = {
    AgentType.VEHICLE: 2.0,
    AgentType.PEDESTRIAN: 0.4,
    AgentType.CYCLIST: 0.8,
}


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A 16-step future trajectory at 2 Hz, global-frame meters."""

    points: np.ndarray  # (16, 2)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"trajectory points must be (N, 2), got {pts.shape}")
        if pts.shape[0] != T_STEPS:
            raise ValueError(f"trajectory length {pts.shape[0]} != {T_STEPS}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("trajectory contains non-finite coordinates")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __eq__(self, other) -> bool:
        return isinstance(other, Trajectory) and np.array_equal(self.points, other.points)

    def __len__(self) -> int:
        return T_STEPS

    def point(self, step: int) -> np.ndarray:
        return self.points[step]


@dataclass(frozen=True, eq=False)
class AgentState:
    """Pose, speed and 1 s of history for one agent at prediction time."""

    id: str
    type: AgentType
    position0: tuple[float, float]
    heading0: float
    v0: float
    radius: float
    history: np.ndarray  # (10, 2), oldest first, 10 Hz
    interesting: bool = False

    def __post_init__(self):
        if not self.id:
            raise ValueError("agent id must be non-empty")
        if not isinstance(self.type, AgentType):
            raise ValueError(f"type must be an AgentType, got {self.type!r}")
        x0 = _validation.check_finite_scalar(self.position0[0], "x0")
        y0 = _validation.check_finite_scalar(self.position0[1], "y0")
        object.__setattr__(self, "position0", (x0, y0))
        object.__setattr__(
            self, "heading0", _validation.check_finite_scalar(self.heading0, "heading0")
        )
        object.__setattr__(self, "v0", _validation.check_non_negative(self.v0, "v0"))
        object.__setattr__(self, "radius", _validation.check_positive(self.radius, "radius"))
        hist = np.asarray(self.history, dtype=np.float64)
        if hist.shape != (HISTORY_STEPS, 2):
            raise ValueError(f"history has shape {hist.shape}, expected ({HISTORY_STEPS}, 2)")
        if not np.all(np.isfinite(hist)):
            raise ValueError("history contains non-finite coordinates")
        hist = hist.copy()
        hist.flags.writeable = False
        object.__setattr__(self, "history", hist)


@dataclass(frozen=True, eq=False)
class ModePrediction:
    """One mixture component: mean trajectory, optional per-step inverse
    covariance parameters (a, b, c) and a mode probability."""

    mean: Trajectory
    cov_params: Optional[np.ndarray]  # (16, 3) or None
    prob: float

    def __post_init__(self):
        if not isinstance(self.mean, Trajectory):
            raise ValueError("mean must be a Trajectory")
        if self.cov_params is not None:
            cov = _validation.as_float_array(self.cov_params, "cov_params", (T_STEPS, 3))
            object.__setattr__(self, "cov_params", cov)
        object.__setattr__(self, "prob", _validation.check_probability(self.prob, "prob"))


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """Up to six modes for one agent; probabilities normalized to 1.

    A raw model prediction always carries exactly six modes; greedy
    suppression may reduce that to as few as one, and the reduced set is
    still a valid PredictionSet.
    """

    scene_id: str
    agent_id: str
    modes: tuple[ModePrediction, ...]

    def __post_init__(self):
        if not self.agent_id:
            raise ValueError("agent_id must be non-empty")
        modes = tuple(self.modes)
        if not 1 <= len(modes) <= N_MODES:
            raise ValueError(f"modes count {len(modes)} not in 1..{N_MODES}")
        for m in modes:
            if not isinstance(m, ModePrediction):
                raise ValueError("modes must contain ModePrediction instances")
        _validation.check_unit_sum([m.prob for m in modes], "mode probabilities")
        object.__setattr__(self, "modes", modes)

    @property
    def probs(self) -> np.ndarray:
        return np.array([m.prob for m in self.modes])


@dataclass(frozen=True, eq=False)
class Scene:
    """One prediction scene: agents, their ground-truth futures and an
    optional explicitly interacting pair."""

    scene_id: str
    agents: tuple[AgentState, ...]
    ground_truth: Mapping[str, Trajectory]
    interacting_pair: Optional[tuple[str, str]] = None

    def __post_init__(self):
        if not self.scene_id:
            raise ValueError("scene_id must be non-empty")
        agents = tuple(self.agents)
        ids = [a.id for a in agents]
        if len(set(ids)) != len(ids):
            raise ValueError("agent ids must be unique within a scene")
        gt = dict(self.ground_truth)
        unknown = set(gt) - set(ids)
        if unknown:
            raise ValueError(f"ground_truth keys not among agent ids: {sorted(unknown)}")
        for key, traj in gt.items():
            if not isinstance(traj, Trajectory):
                raise ValueError(f"ground_truth[{key!r}] must be a Trajectory")
        if self.interacting_pair is not None:
            a, b = self.interacting_pair
            if a == b:
                raise ValueError("interacting_pair ids must be distinct")
            if a not in ids or b not in ids:
                raise ValueError("interacting_pair ids must name agents in the scene")
            object.__setattr__(self, "interacting_pair", (a, b))
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "ground_truth", gt)

    def agent(self, agent_id: str) -> AgentState:
        for a in self.agents:
            if a.id == agent_id:
                return a
        raise KeyError(agent_id)


@dataclass(frozen=True, eq=False)
class JointMode:
    """One composite future for a pair of agents with a shared probability."""

    traj_a: Trajectory
    traj_b: Trajectory
    prob: float

    def __post_init__(self):
        if not isinstance(self.traj_a, Trajectory) or not isinstance(self.traj_b, Trajectory):
            raise ValueError("traj_a and traj_b must be Trajectory instances")
        object.__setattr__(self, "prob", _validation.check_probability(self.prob, "prob"))


@dataclass(frozen=True, eq=False)
class JointPredictionSet:
    """At most six composite modes for an interacting pair.

    ``degenerate`` marks the fallback record emitted when every trajectory
    combination collided and a single combination was kept by force.
    """

    scene_id: str
    pair: tuple[str, str]
    modes: tuple[JointMode, ...]
    degenerate: bool = False

    def __post_init__(self):
        a, b = self.pair
        if not a or not b or a == b:
            raise ValueError("pair must be two distinct non-empty agent ids")
        object.__setattr__(self, "pair", (str(a), str(b)))
        modes = tuple(self.modes)
        if not 1 <= len(modes) <= N_MODES:
            raise ValueError(f"joint modes count {len(modes)} not in 1..{N_MODES}")
        for m in modes:
            if not isinstance(m, JointMode):
                raise ValueError("modes must contain JointMode instances")
        _validation.check_unit_sum([m.prob for m in modes], "joint mode probabilities")
        object.__setattr__(self, "modes", modes)

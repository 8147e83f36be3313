"""Per-mode trajectory densities and the mixture negative log-likelihood.

Each mode is a product over the 16 timesteps of an exponential-power
density in the step displacement X:

    p(X) = exp(-(X' L X)^(r/2) / 2) / Z(r, L)

where L is an inverse covariance matrix and r is the displacement power
(r = 2 is Gaussian, the working default is 1.5).  The normalizer is

    Z = 2 pi * (2^(2/r) / r) * Gamma(2/r) * det(L)^(-1/2)

so densities stay comparable when L varies, which matters as soon as the
covariance is predicted per mode and per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import gammaln

from . import _validation
from .types import AgentType, ModePrediction, PredictionSet, T_STEPS, Trajectory, timestamp_of

DEFAULT_R = 1.5

#: Minimum realized standard deviation for scheduled covariances, meters.
DEFAULT_MIN_STD = 0.03


@dataclass(frozen=True)
class InverseCovariance:
    """Inverse covariance parametrized by (a, b, c):

        L = e^c * [[e^a cosh b, sinh b], [sinh b, e^-a cosh b]]

    Always symmetric positive-definite with det(L) = e^(2c) exactly, since
    cosh^2 - sinh^2 = 1.  Any SPD 2x2 matrix is reachable, so the map is a
    bijection onto SPD matrices.
    """

    a: float
    b: float
    c: float

    def __post_init__(self):
        for name in ("a", "b", "c"):
            object.__setattr__(
                self, name, _validation.check_finite_scalar(getattr(self, name), name)
            )

    @property
    def matrix(self) -> np.ndarray:
        ec = math.exp(self.c)
        ch = math.cosh(self.b)
        sh = math.sinh(self.b)
        return np.array(
            [
                [ec * math.exp(self.a) * ch, ec * sh],
                [ec * sh, ec * math.exp(-self.a) * ch],
            ]
        )

    @property
    def log_det(self) -> float:
        return 2.0 * self.c

    @classmethod
    def from_matrix(cls, m: np.ndarray, atol: float = 1e-9) -> "InverseCovariance":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (2, 2):
            raise ValueError(f"matrix must be 2x2, got {m.shape}")
        if abs(m[0, 1] - m[1, 0]) > atol * max(1.0, abs(m[0, 1])):
            raise ValueError("matrix must be symmetric")
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if m[0, 0] <= 0.0 or det <= 0.0:
            raise ValueError("matrix must be positive-definite")
        c = 0.5 * math.log(det)
        a = 0.5 * math.log(m[0, 0] / m[1, 1])
        b = math.asinh(m[0, 1] / math.exp(c))
        return cls(a=a, b=b, c=c)


def inv_cov_matrix(a: float, b: float, c: float) -> np.ndarray:
    """Realize the (a, b, c) parametrization as a 2x2 SPD matrix."""
    return InverseCovariance(a, b, c).matrix


def _log_norm_const(r: float) -> float:
    # log of 2 pi * 2^(2/r) * Gamma(2/r) / r, the det-independent part of Z
    return math.log(2.0 * math.pi) + (2.0 / r) * math.log(2.0) - math.log(r) + float(gammaln(2.0 / r))


def log_normalizer(r: float, lam: InverseCovariance | np.ndarray) -> float:
    """log Z such that exp(-(X' L X)^(r/2)/2) / Z integrates to 1 over R^2."""
    r = _validation.check_displacement_power(r)
    if isinstance(lam, InverseCovariance):
        log_det = lam.log_det
    else:
        m = np.asarray(lam, dtype=np.float64)
        log_det = math.log(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
    return _log_norm_const(r) - 0.5 * log_det


def mode_log_density(
    point: Sequence[float],
    mean: Sequence[float],
    lam: InverseCovariance | np.ndarray,
    r: float,
) -> float:
    """Log density of one timestep's displacement under one mode."""
    x = float(point[0]) - float(mean[0])
    y = float(point[1]) - float(mean[1])
    m = lam.matrix if isinstance(lam, InverseCovariance) else np.asarray(lam, dtype=np.float64)
    q = m[0, 0] * x * x + 2.0 * m[0, 1] * x * y + m[1, 1] * y * y
    q = max(q, 0.0)  # SPD guarantees q >= 0; guard fp cancellation at x ~ 0
    return -0.5 * q ** (r / 2.0) - log_normalizer(r, lam)


def hit_window_velocity_scale(v0: float) -> float:
    """Velocity factor shared with the hit-window rules: 0.5 at rest,
    growing linearly to 1.0 over v0 in [1.4, 11] m/s."""
    t = (v0 - 1.4) / 9.6
    return 0.5 + 0.5 * min(1.0, max(0.0, t))


@dataclass(frozen=True)
class CovarianceSchedule:
    """Fixed covariance schedule used when the model does not predict one.

    The perpendicular standard deviation at time t is

        sigma[type] * velocity_gain(v0) * (slope_a + slope_b * t)

    and the deviation along the ground-truth motion direction is
    ``anisotropy_ratio`` times larger, mirroring the 2:1 longitudinal
    tolerance of the hit windows.  Realized deviations are floored at
    ``min_std``.
    """

    sigma: Mapping[AgentType, float] = field(
        default_factory=lambda: {
            AgentType.VEHICLE: 1.0,
            AgentType.PEDESTRIAN: 0.5,
            AgentType.CYCLIST: 0.7,
        }
    )
    slope_a: float = 1.0
    slope_b: float = 0.25
    anisotropy_ratio: float = 2.0
    use_velocity_gain: bool = True
    min_std: float = DEFAULT_MIN_STD

    def __post_init__(self):
        sigma = dict(self.sigma)
        for t in AgentType:
            if t not in sigma:
                raise ValueError(f"sigma missing agent type {t.value}")
            _validation.check_positive(sigma[t], f"sigma[{t.value}]")
        object.__setattr__(self, "sigma", sigma)
        if self.anisotropy_ratio < 1.0:
            raise ValueError(f"anisotropy_ratio must be >= 1, got {self.anisotropy_ratio}")
        _validation.check_positive(self.min_std, "min_std")

    def with_sigma(self, agent_type: AgentType, value: float) -> "CovarianceSchedule":
        sigma = dict(self.sigma)
        sigma[agent_type] = value
        return CovarianceSchedule(
            sigma=sigma,
            slope_a=self.slope_a,
            slope_b=self.slope_b,
            anisotropy_ratio=self.anisotropy_ratio,
            use_velocity_gain=self.use_velocity_gain,
            min_std=self.min_std,
        )


def scheduled_inv_cov(
    schedule: CovarianceSchedule,
    agent_type: AgentType,
    t: float,
    v0: float,
    gt_direction: float,
) -> InverseCovariance:
    """Inverse covariance at time t, oriented along the ground-truth motion."""
    gain = hit_window_velocity_scale(v0) if schedule.use_velocity_gain else 1.0
    std_perp = schedule.sigma[agent_type] * gain * (schedule.slope_a + schedule.slope_b * t)
    std_along = schedule.anisotropy_ratio * std_perp
    std_perp = max(std_perp, schedule.min_std)
    std_along = max(std_along, schedule.min_std)
    if std_perp <= 0.0 or std_along <= 0.0:
        raise ValueError(f"schedule produced non-positive std at t={t}")
    ca, sa = math.cos(gt_direction), math.sin(gt_direction)
    along = np.array([ca, sa])
    perp = np.array([-sa, ca])
    lam = np.outer(along, along) / std_along**2 + np.outer(perp, perp) / std_perp**2
    return InverseCovariance.from_matrix(lam)


def gt_step_directions(gt: Trajectory, heading0: float = 0.0) -> np.ndarray:
    """Motion direction at each trajectory step.

    Step k uses the displacement of the step ending at k (the first step
    reuses step 1's displacement); steps shorter than 1 cm fall back to the
    previous valid direction and ultimately to ``heading0``.
    """
    pts = gt.points
    dirs = np.empty(T_STEPS)
    last = heading0
    raw = np.empty(T_STEPS)
    valid = np.empty(T_STEPS, dtype=bool)
    for k in range(T_STEPS):
        j = max(k, 1)
        dx = pts[j, 0] - pts[j - 1, 0]
        dy = pts[j, 1] - pts[j - 1, 1]
        valid[k] = math.hypot(dx, dy) >= 0.01
        raw[k] = math.atan2(dy, dx) if valid[k] else 0.0
    for k in range(T_STEPS):
        if valid[k]:
            last = raw[k]
        dirs[k] = last
    return dirs


def _mode_inv_covs(
    mode: ModePrediction,
    gt: Trajectory,
    schedule: Optional[CovarianceSchedule],
    agent_type: Optional[AgentType],
    v0: Optional[float],
    heading0: float,
) -> list[InverseCovariance]:
    if mode.cov_params is not None:
        return [InverseCovariance(a, b, c) for a, b, c in mode.cov_params]
    if schedule is None:
        raise ValueError("no covariance source: mode has no cov_params and no schedule given")
    if agent_type is None or v0 is None:
        raise ValueError("scheduled covariance needs agent_type and v0")
    dirs = gt_step_directions(gt, heading0)
    return [
        scheduled_inv_cov(schedule, agent_type, timestamp_of(k), v0, dirs[k])
        for k in range(T_STEPS)
    ]


def trajectory_log_likelihood(
    mode: ModePrediction,
    gt: Trajectory,
    r: float = DEFAULT_R,
    *,
    schedule: Optional[CovarianceSchedule] = None,
    agent_type: Optional[AgentType] = None,
    v0: Optional[float] = None,
    heading0: float = 0.0,
) -> float:
    """Sum over the 16 timesteps of the per-step mode log density.

    The covariance comes from ``mode.cov_params`` when present, otherwise
    from the schedule (which needs the agent type and initial speed).
    """
    lams = _mode_inv_covs(mode, gt, schedule, agent_type, v0, heading0)
    return sum(
        mode_log_density(gt.points[k], mode.mean.points[k], lams[k], r) for k in range(T_STEPS)
    )


def _log_sum_exp_sorted(terms: np.ndarray) -> float:
    # Summing in descending order makes the reduction independent of the
    # caller's mode ordering, so permuting modes changes nothing, not even
    # the last bit.
    terms = np.sort(terms)[::-1]
    hi = terms[0]
    if not np.isfinite(hi):
        return float(hi)
    return float(hi + math.log(np.sum(np.exp(terms - hi))))


def mixture_nll(
    pred: PredictionSet,
    gt: Trajectory,
    r: float = DEFAULT_R,
    *,
    schedule: Optional[CovarianceSchedule] = None,
    agent_type: Optional[AgentType] = None,
    v0: Optional[float] = None,
    heading0: float = 0.0,
) -> float:
    """Negative log of the probability-weighted mixture likelihood of ``gt``."""
    probs = pred.probs
    if np.all(probs == 0.0):
        raise ValueError("all mode probabilities are zero")
    terms = np.array(
        [
            (math.log(m.prob) if m.prob > 0.0 else -math.inf)
            + trajectory_log_likelihood(
                m, gt, r, schedule=schedule, agent_type=agent_type, v0=v0, heading0=heading0
            )
            for m in pred.modes
        ]
    )
    return -_log_sum_exp_sorted(terms)

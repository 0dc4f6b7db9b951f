"""Per-step reward: goal progress, predicted encroachment and stagnation"""
import logging
from typing import Optional, Sequence

import attr
import numpy as np

from . import StepFlag

_LOGGER = logging.getLogger(__name__)


def _negative(instance, attribute, value):
    if not value < 0:
        raise ValueError("{} must be negative, got {}".format(attribute.name, value))


def _positive(instance, attribute, value):
    if not value > 0:
        raise ValueError("{} must be positive, got {}".format(attribute.name, value))


def _non_positive(instance, attribute, value):
    if value > 0:
        raise ValueError("{} must not be positive, got {}".format(attribute.name, value))


def _horizon(instance, attribute, value):
    if value < 1:
        raise ValueError("{} must be at least 1, got {}".format(attribute.name, value))


@attr.s(frozen=True)
class RewardConfig:
    r_c = attr.ib(type=float, default=-20.0, converter=float, validator=_negative)
    r_g = attr.ib(type=float, default=10.0, converter=float, validator=_positive)
    r_cf = attr.ib(type=float, default=-0.2, converter=float, validator=_non_positive)
    alpha = attr.ib(type=float, default=1.0, converter=float, validator=_positive)
    d_cf = attr.ib(type=float, default=0.07, converter=float, validator=_positive)
    d_enc = attr.ib(type=float, default=0.5, converter=float, validator=_positive)
    k_ao = attr.ib(type=int, default=5, converter=int, validator=_horizon)
    k_so = attr.ib(type=int, default=3, converter=int, validator=_horizon)
    use_r_ao = attr.ib(type=bool, default=True)
    use_r_so = attr.ib(type=bool, default=True)
    use_r_cf = attr.ib(type=bool, default=True)


@attr.s(frozen=True, eq=False)
class PredictedObstacle:
    """Obstacle footprint over the prediction horizon, one row per future step."""

    positions = attr.ib(type=np.ndarray, converter=lambda v: np.atleast_2d(np.asarray(v, dtype=np.float64)))
    radius = attr.ib(type=float, converter=float, default=0.0)

    @classmethod
    def static(cls, position, radius: float, horizon: int) -> "PredictedObstacle":
        return cls(np.repeat(np.asarray(position, dtype=np.float64)[None, :], horizon, axis=0), radius)


@attr.s(frozen=True, eq=False)
class Transition:
    flag = attr.ib(type=StepFlag, converter=StepFlag)
    d_prev = attr.ib(type=float, converter=float)
    d_now = attr.ib(type=float, converter=float)
    usv_prediction = attr.ib(type=np.ndarray, factory=lambda: np.zeros((0, 2)))
    ao_predictions = attr.ib(type=Sequence[PredictedObstacle], factory=tuple, converter=tuple)
    so_predictions = attr.ib(type=Sequence[PredictedObstacle], factory=tuple, converter=tuple)


@attr.s(frozen=True)
class RewardBreakdown:
    total = attr.ib(type=float)
    r_pot = attr.ib(type=float, default=0.0)
    r_ao = attr.ib(type=float, default=0.0)
    r_so = attr.ib(type=float, default=0.0)
    r_cf = attr.ib(type=float, default=0.0)
    terminal = attr.ib(type=Optional[float], default=None)

    def to_dict(self):
        return attr.asdict(self)


def potential_reward(d_prev: float, d_now: float, alpha: float) -> float:
    return alpha * (d_prev - d_now)


def encroachment_penalty(
    usv_pred,
    obstacles: Sequence[PredictedObstacle],
    d_enc: float,
    r_c: float,
    horizon: int,
) -> float:
    if horizon < 1:
        raise ValueError("Prediction horizon must be at least 1, got {}".format(horizon))
    usv_pred = np.atleast_2d(np.asarray(usv_pred, dtype=np.float64))
    steps = min(horizon, len(usv_pred))

    first = None
    for obstacle in obstacles:
        count = min(steps, len(obstacle.positions))
        if count == 0:
            continue
        separation = (
            np.linalg.norm(usv_pred[:count] - obstacle.positions[:count], axis=1)
            - obstacle.radius
        )
        hits = np.flatnonzero(separation < d_enc)
        if hits.size:
            k = int(hits[0]) + 1
            first = k if first is None else min(first, k)
    if first is None:
        return 0.0
    # the earliest encroachment is the most negative candidate
    return r_c / 2.0 ** (first + 2)


def stagnation_penalty(d_prev: float, d_now: float, d_cf: float, r_cf: float) -> float:
    return r_cf if (d_prev - d_now) < d_cf else 0.0


def total_reward(transition: Transition, cfg: RewardConfig) -> RewardBreakdown:
    if transition.flag is StepFlag.COLLISION:
        return RewardBreakdown(total=cfg.r_c, terminal=cfg.r_c)
    if transition.flag is StepFlag.GOAL:
        return RewardBreakdown(total=cfg.r_g, terminal=cfg.r_g)

    r_pot = potential_reward(transition.d_prev, transition.d_now, cfg.alpha)
    r_ao = r_so = r_cf = 0.0
    if cfg.use_r_ao:
        r_ao = encroachment_penalty(
            transition.usv_prediction, transition.ao_predictions, cfg.d_enc, cfg.r_c, cfg.k_ao
        )
    if cfg.use_r_so:
        r_so = encroachment_penalty(
            transition.usv_prediction, transition.so_predictions, cfg.d_enc, cfg.r_c, cfg.k_so
        )
    if cfg.use_r_cf:
        r_cf = stagnation_penalty(transition.d_prev, transition.d_now, cfg.d_cf, cfg.r_cf)
    return RewardBreakdown(
        total=r_pot + r_ao + r_so + r_cf, r_pot=r_pot, r_ao=r_ao, r_so=r_so, r_cf=r_cf
    )

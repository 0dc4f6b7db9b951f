"""Episode loop tying world simulation, sensing and reward together"""
import logging
import math
from typing import List, Optional

import attr
import numpy as np

from . import ACTION_LIMIT, ObstacleLayer, StepFlag
from .reward import PredictedObstacle, RewardBreakdown, RewardConfig, Transition, total_reward
from .world import (
    EpisodeConfig,
    Observation,
    WorldState,
    generate_episode,
    renew_reached_goals,
    retarget_dynamic_obstacles,
    sense,
)
from . import world as world_module

_LOGGER = logging.getLogger(__name__)

SEED_SPACE = 2**31 - 1


@attr.s(frozen=True, eq=False)
class StepResult:
    observation = attr.ib(type=Observation)
    reward = attr.ib(type=RewardBreakdown)
    flag = attr.ib(type=StepFlag)
    world = attr.ib(type=WorldState)
    action = attr.ib(type=np.ndarray)

    @property
    def done(self) -> bool:
        return self.flag.terminal


def build_transition(
    previous: WorldState, current: WorldState, flag: StepFlag, reward_cfg: RewardConfig
) -> Transition:
    """Predict vessel and nearby obstacle motion for the encroachment terms."""
    cfg = current.config
    horizon = max(reward_cfg.k_ao, reward_cfg.k_so)
    offsets = np.arange(1, horizon + 1)[:, None] * cfg.dt
    usv_prediction = current.usv.position + offsets * current.usv.ego_velocity

    ao_predictions: List[PredictedObstacle] = []
    so_predictions: List[PredictedObstacle] = []
    position = current.usv.position
    for o in current.obstacles:
        if o.layer is ObstacleLayer.SUBMERGED_STATIC:
            if o.surface_distance(position) <= cfg.sensor_range:
                so_predictions.append(PredictedObstacle.static(o.position, o.radius, horizon))
        elif math.hypot(*(o.position - position)) <= cfg.sensor_range:
            ao_predictions.append(PredictedObstacle(o.position + offsets * o.velocity, o.radius))

    return Transition(
        flag=flag,
        d_prev=previous.goal_distance,
        d_now=current.goal_distance,
        usv_prediction=usv_prediction,
        ao_predictions=ao_predictions,
        so_predictions=so_predictions,
    )


class NavigationEnv:
    """Single navigation task with automatic episode seeding.

    Each reset draws a fresh episode seed from the environment seed unless one
    is given explicitly.
    """

    def __init__(
        self,
        config: EpisodeConfig,
        reward_config: Optional[RewardConfig] = None,
        seed: int = 0,
    ) -> None:
        self.config = config
        self.reward_config = reward_config or RewardConfig()
        self._seeds = np.random.default_rng(seed)
        self._rng: Optional[np.random.Generator] = None
        self.world: Optional[WorldState] = None
        self.episode_seed: Optional[int] = None
        self.episode_return = 0.0
        self.path_length = 0.0

    def reset(self, seed: Optional[int] = None) -> Observation:
        if seed is None:
            seed = int(self._seeds.integers(SEED_SPACE))
        self.episode_seed = seed
        self.world = generate_episode(self.config, seed)
        self._rng = np.random.default_rng([seed, 1])
        self.episode_return = 0.0
        self.path_length = 0.0
        return sense(self.world)

    def step(self, action) -> StepResult:
        if self.world is None:
            raise RuntimeError("Environment must be reset before stepping")
        previous = self.world
        current, flag = world_module.step(previous, action)
        reward = total_reward(
            build_transition(previous, current, flag, self.reward_config),
            self.reward_config,
        )
        self.episode_return += reward.total
        self.path_length += float(np.linalg.norm(current.usv.position - previous.usv.position))

        current = retarget_dynamic_obstacles(current, self._rng)
        current = renew_reached_goals(current, self._rng)
        self.world = current
        if flag.terminal:
            _LOGGER.debug(
                "Episode %s finished with %s after %d steps, return %.3f",
                self.episode_seed,
                flag.value,
                current.t,
                self.episode_return,
            )
        return StepResult(
            observation=sense(current),
            reward=reward,
            flag=flag,
            world=current,
            action=np.clip(np.asarray(action, dtype=np.float64), -ACTION_LIMIT, ACTION_LIMIT),
        )

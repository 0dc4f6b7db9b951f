"""Tests for the episode loop."""
import numpy as np
import pytest

from marine.flow import ObstacleLayer, StepFlag
from marine.flow.env import NavigationEnv, build_transition
from marine.flow.flowfield import FlowField
from marine.flow.reward import RewardConfig
from marine.flow.world import EpisodeConfig, Obstacle, UsvState, WorldState, step


def test_step_before_reset():
    env = NavigationEnv(EpisodeConfig())
    with pytest.raises(RuntimeError):
        env.step((0.0, 0.0))


def test_reset_with_seed():
    env = NavigationEnv(EpisodeConfig())
    first = env.reset(seed=11)
    second = env.reset(seed=11)
    assert env.episode_seed == 11
    assert np.all(first.ego == second.ego)
    assert np.all(first.cf == second.cf)


def test_reset_draws_seeds():
    seeds_a, seeds_b = [], []
    for seeds, env in ((seeds_a, NavigationEnv(EpisodeConfig(), seed=4)), (seeds_b, NavigationEnv(EpisodeConfig(), seed=4))):
        for _ in range(3):
            env.reset()
            seeds.append(env.episode_seed)
    assert seeds_a == seeds_b
    assert len(set(seeds_a)) == 3


def test_rollout_reproducible():
    actions = np.random.default_rng(0).uniform(-0.1, 0.1, (100, 2))

    def run():
        env = NavigationEnv(EpisodeConfig(), seed=0)
        env.reset(seed=5)
        rewards = []
        for action in actions:
            result = env.step(action)
            rewards.append(result.reward.total)
            if result.done:
                break
        return rewards, env.world.usv.position.tobytes()

    assert run() == run()


def test_episode_accounting():
    env = NavigationEnv(EpisodeConfig(ao_count=0, so_count=0), seed=1)
    env.reset(seed=2)
    total = 0.0
    for _ in range(10):
        result = env.step((0.1, 0.0))
        total += result.reward.total
    assert env.episode_return == pytest.approx(total)
    assert env.path_length > 0.0
    assert env.world.t == 10


def test_action_clipped_in_result():
    env = NavigationEnv(EpisodeConfig())
    env.reset(seed=0)
    result = env.step((0.5, -0.5))
    assert np.all(result.action == (0.1, -0.1))


def test_terminal_reward():
    env = NavigationEnv(EpisodeConfig(max_steps=2, ao_count=0, so_count=0))
    env.reset(seed=0)
    env.step((0.0, 0.0))
    result = env.step((0.0, 0.0))
    assert result.done
    assert result.flag is StepFlag.TIMEOUT


def test_transition_predictions():
    cfg = EpisodeConfig()
    field = FlowField()
    usv = UsvState((0.0, 0.0), 1.0, 0.0, (1.0, 0.0))
    obstacles = [
        Obstacle(0, ObstacleLayer.ABOVE_WATER_DYNAMIC, (2.0, 0.0), 0.3, velocity=(0.0, 1.0), goal=(2.0, 9.0)),
        Obstacle(1, ObstacleLayer.ABOVE_WATER_STATIC, (9.0, 0.0), 0.3),
        Obstacle(2, ObstacleLayer.SUBMERGED_STATIC, (0.0, 5.5), 1.0),
        Obstacle(3, ObstacleLayer.SUBMERGED_STATIC, (0.0, -9.0), 1.0),
    ]
    world = WorldState(cfg, field, usv, obstacles, (0.0, 0.0), (15.0, 0.0))
    current, flag = step(world, (0.0, 0.0))
    transition = build_transition(world, current, flag, RewardConfig())
    assert transition.usv_prediction.shape == (5, 2)
    assert transition.usv_prediction[0] == pytest.approx(current.usv.position + (0.25, 0.0))
    assert len(transition.ao_predictions) == 1
    assert len(transition.so_predictions) == 1
    boat = transition.ao_predictions[0]
    assert boat.positions[-1] - boat.positions[0] == pytest.approx(4 * 0.25 * current.obstacles[0].velocity)
    assert transition.d_prev == pytest.approx(15.0)
    assert transition.d_now == pytest.approx(14.75)

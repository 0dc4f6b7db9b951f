"""Tests for episode generation, kinematics and sensing."""
import itertools
import math

import numpy as np
import pytest

from marine.flow import GenerationFailed, ObstacleLayer, StepFlag
from marine.flow.flowfield import FlowField, flow_velocity
from marine.flow.utils import to_global
from marine.flow.world import (
    MIN_BEAM_RANGE,
    EpisodeConfig,
    Obstacle,
    UsvState,
    WorldState,
    beam_angles,
    collision,
    generate_episode,
    renew_reached_goals,
    retarget_dynamic_obstacles,
    sense,
    step,
)


def make_world(obstacles=(), field=None, speed=0.0, heading=0.0, position=(0.0, 0.0), goal=(15.0, 0.0), **cfg):
    config = EpisodeConfig(**cfg)
    field = field or FlowField()
    usv = UsvState(position, speed, heading, flow_velocity(field, position))
    return WorldState(config, field, usv, obstacles, position, goal)


def test_empty_episode():
    world = generate_episode(EpisodeConfig(ao_count=0, so_count=0), 3)
    assert world.obstacles == ()
    assert np.hypot(*(world.goal - world.start)) >= 12.0


def test_deterministic():
    cfg = EpisodeConfig()
    first, second = generate_episode(cfg, 17), generate_episode(cfg, 17)
    assert first.to_scene() == second.to_scene()
    assert first.field == second.field


@pytest.mark.parametrize("seed", range(5))
def test_dense_separation(seed):
    cfg = EpisodeConfig(ao_count=25, so_count=10, so_radius_range=(0.2, 0.3))
    world = generate_episode(cfg, seed)
    xmin, ymin, xmax, ymax = cfg.bounds
    assert len(world.obstacles) == 35
    assert len(world.layer(ObstacleLayer.SUBMERGED_STATIC)) == 10
    assert len(world.layer(ObstacleLayer.ABOVE_WATER_STATIC)) == cfg.ao_static_count
    points = [o.position for o in world.obstacles]
    for a, b in itertools.combinations(points, 2):
        assert np.hypot(*(a - b)) >= 5.0
    for p in points + [world.start, world.goal]:
        assert xmin <= p[0] <= xmax and ymin <= p[1] <= ymax
    for o in world.obstacles:
        assert np.hypot(*(o.position - world.start)) >= 5.0
        if o.layer is ObstacleLayer.SUBMERGED_STATIC:
            assert 0.2 <= o.radius <= 0.3


def test_over_constrained():
    cfg = EpisodeConfig(arena_size=10.0, ao_count=30, so_count=0, placement_attempts=50, min_start_goal=5.0)
    with pytest.raises(GenerationFailed):
        generate_episode(cfg, 0)


def test_static_obstacle_cannot_move():
    with pytest.raises(ValueError):
        Obstacle(0, ObstacleLayer.SUBMERGED_STATIC, (0, 0), 1.0, velocity=(1, 0))


def test_step_straight():
    world, flag = step(make_world(speed=1.0), (0.0, 0.0))
    assert world.usv.position == pytest.approx((0.25, 0.0))
    assert flag is StepFlag.NONE
    assert world.t == 1


def test_step_drift():
    field = FlowField(uniform_velocity=(1.0, 0.0))
    world, _ = step(make_world(field=field), (0.0, 0.0))
    assert world.usv.position == pytest.approx((0.25, 0.0))


def test_action_clamped():
    world, _ = step(make_world(speed=1.0), (0.2, -0.5))
    assert world.usv.steer_speed == pytest.approx(1.1)
    assert world.usv.steer_heading == pytest.approx(-0.1)


@pytest.mark.parametrize("speed, dv, expected", [(0.0, -0.1, 0.0), (2.0, 0.1, 2.0)])
def test_speed_limits(speed, dv, expected):
    world, _ = step(make_world(speed=speed), (dv, 0.0))
    assert world.usv.steer_speed == expected


def test_heading_wraps():
    world, _ = step(make_world(heading=math.pi - 0.05), (0.0, 0.1))
    assert -math.pi < world.usv.steer_heading <= math.pi
    assert world.usv.steer_heading == pytest.approx(-math.pi + 0.05)


def test_ego_velocity_consistent():
    world = generate_episode(EpisodeConfig(), 2)
    rng = np.random.default_rng(0)
    for _ in range(20):
        world, _ = step(world, rng.uniform(-0.1, 0.1, 2))
        expected = flow_velocity(world.field, world.usv.position) + world.usv.steer_vector
        assert world.usv.ego_velocity == pytest.approx(expected)


def test_collision_flag():
    rock = Obstacle(0, ObstacleLayer.SUBMERGED_STATIC, (0.5, 0.0), 0.2)
    world, flag = step(make_world([rock], speed=1.0), (0.0, 0.0))
    assert flag is StepFlag.COLLISION


def test_goal_flag():
    world, flag = step(make_world(speed=1.0, goal=(0.6, 0.0)), (0.0, 0.0))
    assert flag is StepFlag.GOAL


def test_collision_beats_goal():
    rock = Obstacle(0, ObstacleLayer.ABOVE_WATER_STATIC, (0.6, 0.0), 0.3)
    _, flag = step(make_world([rock], speed=1.0, goal=(0.5, 0.0)), (0.0, 0.0))
    assert flag is StepFlag.COLLISION


def test_timeout_flag():
    world = make_world(max_steps=3)
    flags = []
    for _ in range(3):
        world, flag = step(world, (0.0, 0.0))
        flags.append(flag)
    assert flags == [StepFlag.NONE, StepFlag.NONE, StepFlag.TIMEOUT]


def test_collision_matches_brute_force():
    rng = np.random.default_rng(9)
    cfg = EpisodeConfig(ao_count=10, so_count=5)
    for seed in range(5):
        world = generate_episode(cfg, seed)
        for _ in range(80):
            world, flag = step(world, rng.uniform(-0.1, 0.1, 2))
            nearest = min(
                np.hypot(*(world.usv.position - o.position)) - o.radius for o in world.obstacles
            )
            assert (flag is StepFlag.COLLISION) == (nearest < cfg.hull_radius)
            assert collision(world) == (nearest < cfg.hull_radius)
            if flag.terminal:
                break


def test_episode_determinism():
    cfg = EpisodeConfig()
    actions = np.random.default_rng(1).uniform(-0.1, 0.1, (60, 2))

    def run():
        world = generate_episode(cfg, 21)
        rng = np.random.default_rng([21, 1])
        positions = []
        for action in actions:
            world, flag = step(world, action)
            world = retarget_dynamic_obstacles(world, rng)
            positions.append(world.usv.position.tobytes())
            positions.extend(o.position.tobytes() for o in world.obstacles)
        return positions

    assert run() == run()


def test_dynamic_speed_cap():
    cfg = EpisodeConfig(ao_count=20, so_count=0, ao_static_fraction=0.0)
    world = generate_episode(cfg, 4)
    rng = np.random.default_rng(0)
    for _ in range(100):
        world, _ = step(world, (0.0, 0.0))
        world = renew_reached_goals(retarget_dynamic_obstacles(world, rng), rng)
        for o in world.layer(ObstacleLayer.ABOVE_WATER_DYNAMIC):
            assert np.hypot(*o.velocity) <= 2.0 + 1e-9


def test_static_obstacles_stay():
    world = generate_episode(EpisodeConfig(), 6)
    before = {o.id: o.position.copy() for o in world.obstacles if not o.layer.dynamic}
    for _ in range(10):
        world, _ = step(world, (0.0, 0.0))
    for o in world.obstacles:
        if not o.layer.dynamic:
            assert np.all(o.position == before[o.id])


def test_no_obstacles_sensed():
    obs = sense(make_world())
    assert obs.so.shape == (11,)
    assert np.all(obs.so == 5.0)
    assert not obs.ao_mask.any()
    assert np.all(obs.ao == 0.0)
    assert obs.cf.shape == (8, 8, 2)


def test_beam_dead_ahead():
    rock = Obstacle(0, ObstacleLayer.SUBMERGED_STATIC, (3.0, 0.0), 1.0)
    obs = sense(make_world([rock]))
    assert obs.so[5] == pytest.approx(2.0)


def test_beam_inside_obstacle():
    rock = Obstacle(0, ObstacleLayer.SUBMERGED_STATIC, (0.2, 0.0), 1.0)
    obs = sense(make_world([rock]))
    assert np.all(obs.so == MIN_BEAM_RANGE)


def test_beams_ignore_above_water():
    buoy = Obstacle(0, ObstacleLayer.ABOVE_WATER_STATIC, (3.0, 0.0), 1.0)
    obs = sense(make_world([buoy]))
    assert np.all(obs.so == 5.0)
    assert obs.ao_mask[0]


def test_beam_monotone():
    previous = 0.0
    for distance in np.linspace(1.5, 7.0, 12):
        rock = Obstacle(0, ObstacleLayer.SUBMERGED_STATIC, (distance, 0.0), 1.0)
        reading = sense(make_world([rock])).so[5]
        assert reading >= previous
        previous = reading


def test_beam_layout():
    angles = beam_angles(EpisodeConfig())
    assert angles[0] == pytest.approx(-math.pi / 3)
    assert angles[-1] == pytest.approx(math.pi / 3)
    assert angles[5] == pytest.approx(0.0, abs=1e-12)


def test_ao_prediction():
    boat = Obstacle(0, ObstacleLayer.ABOVE_WATER_DYNAMIC, (2.0, 0.0), 0.3, velocity=(1.0, 0.0), goal=(10.0, 0.0))
    obs = sense(make_world([boat]))
    assert obs.ao_mask[0] and obs.ao_count == 1
    assert obs.ao[0, :4] == pytest.approx((2.0, 0.0, 1.0, 0.0))
    predicted = obs.ao[0, 4:].reshape(5, 2)
    assert predicted == pytest.approx([(2.25, 0), (2.5, 0), (2.75, 0), (3.0, 0), (3.25, 0)])


def test_ao_frame_consistency():
    rng = np.random.default_rng(2)
    world = generate_episode(EpisodeConfig(ao_count=25, so_count=0, min_separation=1.0), 8)
    for _ in range(30):
        world, _ = step(world, rng.uniform(-0.1, 0.1, 2))
        obs = sense(world)
        truth = sorted(
            (np.hypot(*(o.position - world.usv.position)), o.id, o)
            for o in world.layer(ObstacleLayer.ABOVE_WATER_STATIC, ObstacleLayer.ABOVE_WATER_DYNAMIC)
            if np.hypot(*(o.position - world.usv.position)) <= 5.0
        )
        assert obs.ao_count == min(len(truth), 30)
        for slot, (_, _, o) in enumerate(truth[:30]):
            recovered = world.usv.position + to_global(obs.ao[slot, :2], world.usv.steer_heading)
            assert np.max(np.abs(recovered - o.position)) < 1e-9


def test_ao_capacity_nearest_first():
    boats = [
        Obstacle(i, ObstacleLayer.ABOVE_WATER_STATIC, (0.5 + 0.1 * i, 0.0), 0.05)
        for i in range(6)
    ]
    obs = sense(make_world(boats, ao_capacity=4))
    assert obs.ao_mask.all()
    assert obs.ao[:, 0] == pytest.approx([0.5, 0.6, 0.7, 0.8])


def test_retarget_zero_probability():
    world = generate_episode(EpisodeConfig(), 5)
    after = retarget_dynamic_obstacles(world, np.random.default_rng(0), probability=0.0)
    for before, now in zip(world.obstacles, after.obstacles):
        if before.layer.dynamic:
            assert np.all(before.goal == now.goal)


def test_retarget_always():
    cfg = EpisodeConfig()
    world = generate_episode(cfg, 5)
    after = retarget_dynamic_obstacles(world, np.random.default_rng(0), probability=1.0)
    xmin, ymin, xmax, ymax = cfg.bounds
    for before, now in zip(world.obstacles, after.obstacles):
        if before.layer.dynamic:
            assert not np.all(before.goal == now.goal)
            assert xmin <= now.goal[0] <= xmax and ymin <= now.goal[1] <= ymax


def test_retarget_deterministic():
    world = generate_episode(EpisodeConfig(), 5)
    first = retarget_dynamic_obstacles(world, np.random.default_rng(3), probability=0.5)
    second = retarget_dynamic_obstacles(world, np.random.default_rng(3), probability=0.5)
    assert [o.to_dict() for o in first.obstacles] == [o.to_dict() for o in second.obstacles]


def test_renew_reached_goal():
    boat = Obstacle(0, ObstacleLayer.ABOVE_WATER_DYNAMIC, (2.0, 0.0), 0.3, goal=(2.1, 0.0))
    world = make_world([boat])
    renewed = renew_reached_goals(world, np.random.default_rng(0))
    assert not np.all(renewed.obstacles[0].goal == boat.goal)


def test_usv_may_leave_arena():
    world = make_world(speed=2.0, position=(19.9, 0.0), goal=(-19.0, 0.0))
    for _ in range(4):
        world, flag = step(world, (0.0, 0.0))
        assert flag is StepFlag.NONE
    assert world.usv.position[0] > 20.0

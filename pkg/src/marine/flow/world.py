"""Episode generation, vessel kinematics, obstacle motion and sensing"""
import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import attr
import numpy as np

from . import (
    ACTION_LIMIT,
    CONTROL_DT,
    GenerationFailed,
    ObstacleLayer,
    StepFlag,
)
from .flowfield import FlowField, flow_velocity, generate_flow_field, sample_flow_grid
from .orca import OrcaAgent, step_agents
from .utils import clamp, to_local, wrap_angle

_LOGGER = logging.getLogger(__name__)

MIN_BEAM_RANGE = 1e-3


def _vector(value) -> np.ndarray:
    return np.array(value, dtype=np.float64).reshape(2)


def _pair(value) -> Tuple[float, float]:
    low, high = value
    return (float(low), float(high))


def _positive(instance, attribute, value):
    if not value > 0:
        raise ValueError("{} must be positive, got {}".format(attribute.name, value))


def _non_negative(instance, attribute, value):
    if value < 0:
        raise ValueError("{} must not be negative, got {}".format(attribute.name, value))


def _ordered(instance, attribute, value):
    if value[0] > value[1]:
        raise ValueError("{} must be (low, high), got {}".format(attribute.name, value))


def _probability(instance, attribute, value):
    if not 0.0 <= value <= 1.0:
        raise ValueError("{} must lie in [0, 1], got {}".format(attribute.name, value))


@attr.s(frozen=True)
class EpisodeConfig:
    arena_size = attr.ib(type=float, default=40.0, converter=float, validator=_positive)
    ao_count = attr.ib(type=int, default=10, converter=int, validator=_non_negative)
    so_count = attr.ib(type=int, default=5, converter=int, validator=_non_negative)
    ao_static_fraction = attr.ib(
        type=float, default=0.2, converter=float, validator=_probability
    )
    ao_radius = attr.ib(type=float, default=0.3, converter=float, validator=_positive)
    ao_max_speed = attr.ib(type=float, default=2.0, converter=float, validator=_positive)
    so_radius_range = attr.ib(
        type=Tuple[float, float], default=(1.0, 1.5), converter=_pair, validator=_ordered
    )
    uniform_speed = attr.ib(type=float, default=1.0, converter=float, validator=_non_negative)
    attack_angle_range = attr.ib(
        type=Tuple[float, float],
        default=(0.0, math.pi / 4),
        converter=_pair,
        validator=_ordered,
    )
    vortex_count = attr.ib(type=int, default=4, converter=int, validator=_non_negative)
    source_sink_count = attr.ib(type=int, default=4, converter=int, validator=_non_negative)
    strength_range = attr.ib(
        type=Tuple[float, float],
        default=(5 * math.pi, 10 * math.pi),
        converter=_pair,
        validator=_ordered,
    )
    core_radius = attr.ib(type=float, default=0.25, converter=float, validator=_positive)
    singularity_keepout = attr.ib(
        type=float, default=3.0, converter=float, validator=_non_negative
    )
    min_start_goal = attr.ib(type=float, default=12.0, converter=float, validator=_positive)
    min_separation = attr.ib(type=float, default=5.0, converter=float, validator=_positive)
    max_steps = attr.ib(type=int, default=440, converter=int, validator=_positive)
    dt = attr.ib(type=float, default=CONTROL_DT, converter=float, validator=_positive)
    goal_radius = attr.ib(type=float, default=0.6, converter=float, validator=_positive)
    hull_radius = attr.ib(type=float, default=0.25, converter=float, validator=_positive)
    v_max = attr.ib(type=float, default=2.0, converter=float, validator=_positive)
    beam_count = attr.ib(type=int, default=11, converter=int, validator=_positive)
    sensor_fov = attr.ib(
        type=float, default=2 * math.pi / 3, converter=float, validator=_positive
    )
    sensor_range = attr.ib(type=float, default=5.0, converter=float, validator=_positive)
    ao_capacity = attr.ib(type=int, default=30, converter=int, validator=_positive)
    prediction_horizon = attr.ib(type=int, default=5, converter=int, validator=_positive)
    flow_grid_size = attr.ib(type=int, default=8, converter=int, validator=_positive)
    flow_grid_extent = attr.ib(type=float, default=5.0, converter=float, validator=_positive)
    retarget_probability = attr.ib(
        type=float, default=0.005, converter=float, validator=_probability
    )
    obstacle_goal_tolerance = attr.ib(
        type=float, default=0.5, converter=float, validator=_positive
    )
    orca_neighbor_dist = attr.ib(
        type=float, default=10.0, converter=float, validator=_positive
    )
    orca_time_horizon = attr.ib(
        type=float, default=2.0, converter=float, validator=_positive
    )
    obstacles_see_static = attr.ib(type=bool, default=True)
    placement_attempts = attr.ib(type=int, default=1000, converter=int, validator=_positive)
    seed = attr.ib(type=Optional[int], default=None)

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        half = 0.5 * self.arena_size
        return (-half, -half, half, half)

    @property
    def ao_static_count(self) -> int:
        return int(round(self.ao_count * self.ao_static_fraction))

    @property
    def ao_feature_width(self) -> int:
        return 4 + 2 * self.prediction_horizon


@attr.s(frozen=True, eq=False)
class UsvState:
    position = attr.ib(type=np.ndarray, converter=_vector)
    steer_speed = attr.ib(type=float, converter=float)
    steer_heading = attr.ib(type=float, converter=float)
    ego_velocity = attr.ib(type=np.ndarray, converter=_vector)

    @property
    def steer_vector(self) -> np.ndarray:
        return self.steer_speed * np.array(
            [math.cos(self.steer_heading), math.sin(self.steer_heading)]
        )


@attr.s(frozen=True, eq=False)
class Obstacle:
    id = attr.ib(type=int)
    layer = attr.ib(type=ObstacleLayer, converter=ObstacleLayer)
    position = attr.ib(type=np.ndarray, converter=_vector)
    radius = attr.ib(type=float, converter=float, validator=_positive)
    velocity = attr.ib(type=np.ndarray, converter=_vector, default=(0.0, 0.0))
    goal = attr.ib(type=Optional[np.ndarray], default=None)

    @velocity.validator
    def _static_velocity(self, attribute, value):
        if not self.layer.dynamic and np.any(value != 0.0):
            raise ValueError("Static obstacle {} must not move".format(self.id))

    def surface_distance(self, point) -> float:
        offset = _vector(point) - self.position
        return math.hypot(offset[0], offset[1]) - self.radius

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "layer": self.layer.value,
            "x": float(self.position[0]),
            "y": float(self.position[1]),
            "vx": float(self.velocity[0]),
            "vy": float(self.velocity[1]),
            "radius": self.radius,
            "goal": None if self.goal is None else [float(v) for v in self.goal],
        }


@attr.s(frozen=True, eq=False)
class Observation:
    ego = attr.ib(type=np.ndarray)
    goal = attr.ib(type=np.ndarray)
    steer_speed = attr.ib(type=float)
    steer_heading = attr.ib(type=float)
    so = attr.ib(type=np.ndarray)
    ao = attr.ib(type=np.ndarray)
    ao_mask = attr.ib(type=np.ndarray)
    cf = attr.ib(type=np.ndarray)

    @property
    def position(self) -> np.ndarray:
        return self.ego[:2]

    @property
    def velocity(self) -> np.ndarray:
        return self.ego[2:]

    @property
    def ao_count(self) -> int:
        return int(self.ao_mask.sum())


@attr.s(frozen=True, eq=False)
class WorldState:
    config = attr.ib(type=EpisodeConfig)
    field = attr.ib(type=FlowField)
    usv = attr.ib(type=UsvState)
    obstacles = attr.ib(type=Tuple[Obstacle, ...], converter=tuple)
    start = attr.ib(type=np.ndarray, converter=_vector)
    goal = attr.ib(type=np.ndarray, converter=_vector)
    t = attr.ib(type=int, default=0)

    @property
    def goal_distance(self) -> float:
        offset = self.goal - self.usv.position
        return math.hypot(offset[0], offset[1])

    def layer(self, *layers: ObstacleLayer) -> List[Obstacle]:
        return [o for o in self.obstacles if o.layer in layers]

    def to_scene(self) -> Dict[str, Any]:
        return {
            "arena": list(self.config.bounds),
            "start": [float(v) for v in self.start],
            "goal": [float(v) for v in self.goal],
            "flow": self.field.to_dict(),
            "obstacles": [o.to_dict() for o in self.obstacles],
        }


def _sample_point(rng: np.random.Generator, bounds) -> np.ndarray:
    xmin, ymin, xmax, ymax = bounds
    return np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])


def _far_from(point: np.ndarray, others: Sequence[np.ndarray], distance: float) -> bool:
    return all(math.hypot(*(point - other)) >= distance for other in others)


def generate_episode(cfg: EpisodeConfig, rng_seed: Optional[int] = None) -> WorldState:
    seed = cfg.seed if rng_seed is None else rng_seed
    rng = np.random.default_rng(seed)
    bounds = cfg.bounds

    start = _sample_point(rng, bounds)
    for _ in range(cfg.placement_attempts):
        goal = _sample_point(rng, bounds)
        if math.hypot(*(goal - start)) >= cfg.min_start_goal:
            break
    else:
        raise GenerationFailed("goal", cfg.placement_attempts)

    layers = (
        [ObstacleLayer.SUBMERGED_STATIC] * cfg.so_count
        + [ObstacleLayer.ABOVE_WATER_STATIC] * cfg.ao_static_count
        + [ObstacleLayer.ABOVE_WATER_DYNAMIC] * (cfg.ao_count - cfg.ao_static_count)
    )
    placed: List[np.ndarray] = []
    obstacles = []
    for index, layer in enumerate(layers):
        for _ in range(cfg.placement_attempts):
            position = _sample_point(rng, bounds)
            if _far_from(position, [start, goal] + placed, cfg.min_separation):
                break
        else:
            raise GenerationFailed("{} obstacle {}".format(layer.value, index), cfg.placement_attempts)
        placed.append(position)
        if layer is ObstacleLayer.SUBMERGED_STATIC:
            radius = rng.uniform(*cfg.so_radius_range)
            obstacles.append(Obstacle(index, layer, position, radius))
        elif layer is ObstacleLayer.ABOVE_WATER_STATIC:
            obstacles.append(Obstacle(index, layer, position, cfg.ao_radius))
        else:
            obstacles.append(
                Obstacle(
                    index,
                    layer,
                    position,
                    cfg.ao_radius,
                    goal=_sample_point(rng, bounds),
                )
            )

    field = generate_flow_field(
        rng,
        bounds,
        cfg.uniform_speed,
        cfg.attack_angle_range,
        cfg.vortex_count,
        cfg.source_sink_count,
        cfg.strength_range,
        keepout=[start, goal],
        keepout_distance=cfg.singularity_keepout,
        core_radius=cfg.core_radius,
        attempts=cfg.placement_attempts,
    )

    heading = math.atan2(goal[1] - start[1], goal[0] - start[0])
    usv = UsvState(start, 0.0, heading, flow_velocity(field, start))
    _LOGGER.debug(
        "Generated episode seed=%s with %d obstacles, start-goal %.2f m",
        seed,
        len(obstacles),
        math.hypot(*(goal - start)),
    )
    return WorldState(cfg, field, usv, obstacles, start, goal)


def _preferred_velocity(obstacle: Obstacle, max_speed: float, dt: float) -> np.ndarray:
    offset = obstacle.goal - obstacle.position
    distance = math.hypot(offset[0], offset[1])
    if distance == 0.0:
        return np.zeros(2)
    # slow down on the last step so the goal is not overshot
    speed = min(max_speed, distance / dt)
    return offset / distance * speed


def _advance_obstacles(world: WorldState) -> Tuple[Obstacle, ...]:
    cfg = world.config
    movers = [o for o in world.obstacles if o.layer.dynamic]
    if not movers:
        return world.obstacles

    agents = []
    for o in movers:
        agents.append(
            OrcaAgent(
                position=o.position,
                velocity=o.velocity,
                preferred_velocity=_preferred_velocity(o, cfg.ao_max_speed, cfg.dt),
                radius=o.radius,
                max_speed=cfg.ao_max_speed,
                time_horizon=cfg.orca_time_horizon,
                neighbor_dist=cfg.orca_neighbor_dist,
            )
        )
    if cfg.obstacles_see_static:
        agents.extend(
            OrcaAgent.obstacle(o.position, o.radius)
            for o in world.layer(ObstacleLayer.ABOVE_WATER_STATIC)
        )

    stepped = iter(step_agents(agents, cfg.dt)[: len(movers)])
    advanced = []
    for o in world.obstacles:
        if o.layer.dynamic:
            agent = next(stepped)
            advanced.append(attr.evolve(o, position=agent.position, velocity=agent.velocity))
        else:
            advanced.append(o)
    return tuple(advanced)


def collision(world: WorldState) -> bool:
    hull = world.config.hull_radius
    return any(o.surface_distance(world.usv.position) < hull for o in world.obstacles)


def step(world: WorldState, action) -> Tuple[WorldState, StepFlag]:
    cfg = world.config
    dv = clamp(float(action[0]), -ACTION_LIMIT, ACTION_LIMIT)
    dtheta = clamp(float(action[1]), -ACTION_LIMIT, ACTION_LIMIT)

    speed = clamp(world.usv.steer_speed + dv, 0.0, cfg.v_max)
    heading = wrap_angle(world.usv.steer_heading + dtheta)
    steer = speed * np.array([math.cos(heading), math.sin(heading)])

    position = world.usv.position + (flow_velocity(world.field, world.usv.position) + steer) * cfg.dt
    usv = UsvState(position, speed, heading, flow_velocity(world.field, position) + steer)

    stepped = attr.evolve(
        world, usv=usv, obstacles=_advance_obstacles(world), t=world.t + 1
    )

    # collision takes precedence over reaching the goal in the same step
    if collision(stepped):
        flag = StepFlag.COLLISION
    elif stepped.goal_distance <= cfg.goal_radius:
        flag = StepFlag.GOAL
    elif stepped.t >= cfg.max_steps:
        flag = StepFlag.TIMEOUT
    else:
        flag = StepFlag.NONE
    return stepped, flag


def retarget_dynamic_obstacles(
    world: WorldState, rng: np.random.Generator, probability: Optional[float] = None
) -> WorldState:
    p = world.config.retarget_probability if probability is None else probability
    obstacles = []
    for o in world.obstacles:
        if not o.layer.dynamic:
            obstacles.append(o)
            continue
        # one draw per obstacle keeps the random stream aligned across runs
        if rng.random() < p:
            o = attr.evolve(o, goal=_sample_point(rng, world.config.bounds))
        obstacles.append(o)
    return attr.evolve(world, obstacles=obstacles)


def renew_reached_goals(world: WorldState, rng: np.random.Generator) -> WorldState:
    """Dynamic obstacles that arrived at their goal are sent to a fresh one."""
    tolerance = world.config.obstacle_goal_tolerance
    obstacles = []
    for o in world.obstacles:
        if o.layer.dynamic and math.hypot(*(o.goal - o.position)) <= tolerance:
            o = attr.evolve(o, goal=_sample_point(rng, world.config.bounds))
        obstacles.append(o)
    return attr.evolve(world, obstacles=obstacles)


def beam_angles(cfg: EpisodeConfig) -> np.ndarray:
    """Beam directions relative to the vessel heading."""
    if cfg.beam_count == 1:
        return np.zeros(1)
    return np.linspace(-0.5 * cfg.sensor_fov, 0.5 * cfg.sensor_fov, cfg.beam_count)


def ray_cast(origin, angle: float, obstacles: Sequence[Obstacle], max_range: float) -> float:
    direction = np.array([math.cos(angle), math.sin(angle)])
    best = max_range
    for o in obstacles:
        offset = o.position - origin
        dist_sq = float(offset @ offset)
        if dist_sq <= o.radius * o.radius:
            return MIN_BEAM_RANGE
        projection = float(offset @ direction)
        discriminant = projection * projection - (dist_sq - o.radius * o.radius)
        if discriminant < 0.0:
            continue
        t = projection - math.sqrt(discriminant)
        if 0.0 < t < best:
            best = t
    return max(best, MIN_BEAM_RANGE)


def sense(world: WorldState) -> Observation:
    cfg = world.config
    usv = world.usv
    heading = usv.steer_heading

    submerged = world.layer(ObstacleLayer.SUBMERGED_STATIC)
    so = np.array(
        [
            ray_cast(usv.position, heading + angle, submerged, cfg.sensor_range)
            for angle in beam_angles(cfg)
        ]
    )

    above = world.layer(ObstacleLayer.ABOVE_WATER_STATIC, ObstacleLayer.ABOVE_WATER_DYNAMIC)
    in_range = []
    for o in above:
        distance = math.hypot(*(o.position - usv.position))
        if distance <= cfg.sensor_range:
            in_range.append((distance, o.id, o))
    in_range.sort(key=lambda item: (item[0], item[1]))

    ao = np.zeros((cfg.ao_capacity, cfg.ao_feature_width))
    mask = np.zeros(cfg.ao_capacity, dtype=bool)
    steps = np.arange(1, cfg.prediction_horizon + 1)[:, None] * cfg.dt
    for slot, (_, _, o) in enumerate(in_range[: cfg.ao_capacity]):
        local_position = to_local(o.position - usv.position, heading)
        local_velocity = to_local(o.velocity, heading)
        predicted = local_position + steps * local_velocity
        ao[slot] = np.concatenate([local_position, local_velocity, predicted.reshape(-1)])
        mask[slot] = True

    cf = sample_flow_grid(
        world.field, usv.position, heading, cfg.flow_grid_size, cfg.flow_grid_extent
    )
    return Observation(
        ego=np.concatenate([usv.position, usv.ego_velocity]),
        goal=world.goal.copy(),
        steer_speed=usv.steer_speed,
        steer_heading=heading,
        so=so,
        ao=ao,
        ao_mask=mask,
        cf=cf,
    )

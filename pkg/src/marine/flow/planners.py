"""Classical baselines: artificial potential field and ORCA steering"""
import logging
import math
from typing import List, Optional, Tuple

import attr
import numpy as np

from . import ACTION_LIMIT
from .orca import OrcaAgent, orca_halfplanes, orca_new_velocity
from .utils import clamp, normalized, to_global, to_local, wrap_angle
from .world import Observation

_LOGGER = logging.getLogger(__name__)


def _positive(instance, attribute, value):
    if not value > 0:
        raise ValueError("{} must be positive, got {}".format(attribute.name, value))


def _non_negative(instance, attribute, value):
    if value < 0:
        raise ValueError("{} must not be negative, got {}".format(attribute.name, value))


def _bounded(value: float) -> float:
    return clamp(value, -ACTION_LIMIT, ACTION_LIMIT)


def steer_toward(obs: Observation, speed: float, heading_error: float, speed_gain: float, heading_gain: float) -> np.ndarray:
    """Proportional speed and heading correction saturated at the action bounds."""
    return np.array(
        [
            _bounded(speed_gain * (speed - obs.steer_speed)),
            _bounded(heading_gain * heading_error),
        ]
    )


@attr.s(frozen=True)
class ApfConfig:
    attractive_gain = attr.ib(type=float, default=2.0, converter=float, validator=_positive)
    repulsive_gain = attr.ib(type=float, default=2.0, converter=float, validator=_non_negative)
    influence_radius = attr.ib(type=float, default=3.0, converter=float, validator=_positive)
    speed_cap = attr.ib(type=float, default=2.0, converter=float, validator=_positive)
    obstacle_radius = attr.ib(type=float, default=0.3, converter=float, validator=_non_negative)
    hull_radius = attr.ib(type=float, default=0.25, converter=float, validator=_non_negative)
    min_clearance = attr.ib(type=float, default=0.05, converter=float, validator=_positive)
    sensor_range = attr.ib(type=float, default=5.0, converter=float, validator=_positive)
    sensor_fov = attr.ib(type=float, default=2 * math.pi / 3, converter=float, validator=_positive)
    speed_gain = attr.ib(type=float, default=1.0, converter=float, validator=_positive)
    heading_gain = attr.ib(type=float, default=1.0, converter=float, validator=_positive)


def _sensed_points(obs: Observation, cfg: ApfConfig) -> List[Tuple[np.ndarray, float]]:
    """Local-frame obstacle points paired with their clearance to the hull."""
    points = []
    for slot in np.flatnonzero(obs.ao_mask):
        point = obs.ao[slot, :2]
        clearance = math.hypot(point[0], point[1]) - cfg.obstacle_radius - cfg.hull_radius
        points.append((point, clearance))
    count = len(obs.so)
    angles = (
        np.zeros(1)
        if count == 1
        else np.linspace(-0.5 * cfg.sensor_fov, 0.5 * cfg.sensor_fov, count)
    )
    for distance, angle in zip(obs.so, angles):
        if distance < cfg.sensor_range:
            point = distance * np.array([math.cos(angle), math.sin(angle)])
            points.append((point, distance - cfg.hull_radius))
    return points


def apf_force(obs: Observation, goal=None, cfg: Optional[ApfConfig] = None) -> np.ndarray:
    """Net potential-field force in the vessel frame."""
    cfg = cfg or ApfConfig()
    goal = obs.goal if goal is None else np.asarray(goal, dtype=np.float64)
    force = cfg.attractive_gain * normalized(to_local(goal - obs.position, obs.steer_heading))
    for point, clearance in _sensed_points(obs, cfg):
        rho = max(clearance, cfg.min_clearance)
        if rho >= cfg.influence_radius:
            continue
        magnitude = cfg.repulsive_gain * (1.0 / rho - 1.0 / cfg.influence_radius) / (rho * rho)
        force = force - magnitude * normalized(point)
    return force


def apf_action(obs: Observation, goal=None, cfg: Optional[ApfConfig] = None) -> np.ndarray:
    cfg = cfg or ApfConfig()
    force = apf_force(obs, goal, cfg)
    magnitude = math.hypot(force[0], force[1])
    heading_error = math.atan2(force[1], force[0]) if magnitude > 0.0 else 0.0
    return steer_toward(
        obs, min(magnitude, cfg.speed_cap), heading_error, cfg.speed_gain, cfg.heading_gain
    )


@attr.s(frozen=True)
class OrcaPlannerConfig:
    cruise_speed = attr.ib(type=float, default=2.0, converter=float, validator=_positive)
    hull_radius = attr.ib(type=float, default=0.25, converter=float, validator=_positive)
    obstacle_radius = attr.ib(type=float, default=0.3, converter=float, validator=_positive)
    neighbor_max_speed = attr.ib(type=float, default=2.0, converter=float, validator=_positive)
    time_horizon = attr.ib(type=float, default=2.0, converter=float, validator=_positive)
    neighbor_dist = attr.ib(type=float, default=10.0, converter=float, validator=_positive)
    dt = attr.ib(type=float, default=0.25, converter=float, validator=_positive)
    speed_gain = attr.ib(type=float, default=1.0, converter=float, validator=_positive)
    heading_gain = attr.ib(type=float, default=1.0, converter=float, validator=_positive)


def orca_planner_velocity(
    obs: Observation, goal=None, cfg: Optional[OrcaPlannerConfig] = None
) -> np.ndarray:
    """Collision-free velocity in the global frame for the vessel."""
    cfg = cfg or OrcaPlannerConfig()
    goal = obs.goal if goal is None else np.asarray(goal, dtype=np.float64)
    heading = obs.steer_heading
    steer = obs.steer_speed * np.array([math.cos(heading), math.sin(heading)])
    agent = OrcaAgent(
        position=obs.position,
        velocity=steer,
        preferred_velocity=cfg.cruise_speed * normalized(goal - obs.position),
        radius=cfg.hull_radius,
        max_speed=cfg.cruise_speed,
        time_horizon=cfg.time_horizon,
        neighbor_dist=cfg.neighbor_dist,
    )
    neighbors = []
    for slot in np.flatnonzero(obs.ao_mask):
        velocity = to_global(obs.ao[slot, 2:4], heading)
        neighbors.append(
            OrcaAgent(
                position=obs.position + to_global(obs.ao[slot, :2], heading),
                velocity=velocity,
                preferred_velocity=velocity,
                radius=cfg.obstacle_radius,
                max_speed=cfg.neighbor_max_speed,
            )
        )
    return orca_new_velocity(agent, orca_halfplanes(agent, neighbors, cfg.dt))


def orca_planner_action(
    obs: Observation, goal=None, cfg: Optional[OrcaPlannerConfig] = None
) -> np.ndarray:
    cfg = cfg or OrcaPlannerConfig()
    velocity = orca_planner_velocity(obs, goal, cfg)
    speed = math.hypot(velocity[0], velocity[1])
    heading_error = (
        wrap_angle(math.atan2(velocity[1], velocity[0]) - obs.steer_heading)
        if speed > 1e-9
        else 0.0
    )
    return steer_toward(obs, speed, heading_error, cfg.speed_gain, cfg.heading_gain)


def random_action(rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-ACTION_LIMIT, ACTION_LIMIT, size=2)

"""Optimal reciprocal collision avoidance"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import attr
import numpy as np

_LOGGER = logging.getLogger(__name__)

RVO_EPSILON = 1e-5
_CONTACT_SWEEPS = 8


def _vector(value) -> np.ndarray:
    return np.array(value, dtype=np.float64).reshape(2)


def _det(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _abs_sq(a: np.ndarray) -> float:
    return float(a[0] * a[0] + a[1] * a[1])


def _positive(instance, attribute, value):
    if not value > 0:
        raise ValueError("{} must be positive, got {}".format(attribute.name, value))


def _max_speed(instance, attribute, value):
    if value < 0 or (value == 0 and not instance.static):
        raise ValueError("max_speed must be positive, got {}".format(value))


@attr.s(frozen=True, eq=False)
class HalfPlane:
    """Velocities v with det(direction, point - v) <= 0 (left of the line) are allowed."""

    point = attr.ib(type=np.ndarray, converter=_vector)
    direction = attr.ib(type=np.ndarray, converter=_vector)

    def violation(self, velocity) -> float:
        return _det(self.direction, self.point - _vector(velocity))

    def contains(self, velocity, tolerance: float = 0.0) -> bool:
        return self.violation(velocity) <= tolerance


@attr.s(frozen=True, eq=False)
class OrcaAgent:
    position = attr.ib(type=np.ndarray, converter=_vector)
    velocity = attr.ib(type=np.ndarray, converter=_vector)
    preferred_velocity = attr.ib(type=np.ndarray, converter=_vector)
    radius = attr.ib(type=float, converter=float, validator=_positive)
    max_speed = attr.ib(type=float, converter=float, validator=_max_speed)
    time_horizon = attr.ib(type=float, converter=float, default=2.0, validator=_positive)
    neighbor_dist = attr.ib(
        type=float, converter=float, default=10.0, validator=_positive
    )
    # static agents never move; their peers take full responsibility
    static = attr.ib(type=bool, default=False)

    @staticmethod
    def obstacle(position, radius: float) -> "OrcaAgent":
        return OrcaAgent(
            position=position,
            velocity=(0.0, 0.0),
            preferred_velocity=(0.0, 0.0),
            radius=radius,
            max_speed=0.0,
            static=True,
        )


def orca_halfplanes(
    agent: OrcaAgent, neighbors: Sequence[OrcaAgent], dt: float
) -> List[HalfPlane]:
    if not dt > 0:
        raise ValueError("dt must be positive, got {}".format(dt))

    inv_horizon = 1.0 / agent.time_horizon
    planes = []
    for other in neighbors:
        if other is agent:
            continue
        relative_position = other.position - agent.position
        relative_velocity = agent.velocity - other.velocity
        dist_sq = _abs_sq(relative_position)
        combined_radius = agent.radius + other.radius
        combined_radius_sq = combined_radius * combined_radius

        dist = math.sqrt(dist_sq)
        other_speed = 0.0 if other.static else other.max_speed
        reach = combined_radius + (agent.max_speed + other_speed) * agent.time_horizon
        if dist > agent.neighbor_dist or dist > reach:
            continue

        if dist_sq > combined_radius_sq:
            # No collision.
            w = relative_velocity - inv_horizon * relative_position
            w_length_sq = _abs_sq(w)
            dot_product = float(np.dot(w, relative_position))

            if dot_product < 0.0 and dot_product * dot_product > combined_radius_sq * w_length_sq:
                # Project on cut-off circle.
                w_length = math.sqrt(w_length_sq)
                unit_w = w / w_length
                direction = np.array([unit_w[1], -unit_w[0]])
                u = (combined_radius * inv_horizon - w_length) * unit_w
            else:
                # Project on legs.
                leg = math.sqrt(dist_sq - combined_radius_sq)
                if _det(relative_position, w) > 0.0:
                    direction = (
                        np.array(
                            [
                                relative_position[0] * leg - relative_position[1] * combined_radius,
                                relative_position[0] * combined_radius + relative_position[1] * leg,
                            ]
                        )
                        / dist_sq
                    )
                else:
                    direction = (
                        -np.array(
                            [
                                relative_position[0] * leg + relative_position[1] * combined_radius,
                                -relative_position[0] * combined_radius + relative_position[1] * leg,
                            ]
                        )
                        / dist_sq
                    )
                u = float(np.dot(relative_velocity, direction)) * direction - relative_velocity
        else:
            # Collision. Project on cut-off circle of time step.
            inv_dt = 1.0 / dt
            w = relative_velocity - inv_dt * relative_position
            w_length = math.sqrt(_abs_sq(w))
            if w_length == 0.0:
                # coincident and co-moving; push apart along an arbitrary fixed axis
                unit_w = np.array([1.0, 0.0])
            else:
                unit_w = w / w_length
            direction = np.array([unit_w[1], -unit_w[0]])
            u = (combined_radius * inv_dt - w_length) * unit_w

        share = 1.0 if other.static else 0.5
        planes.append(HalfPlane(agent.velocity + share * u, direction))
    return planes


def _linear_program1(
    lines: Sequence[HalfPlane],
    line_no: int,
    radius: float,
    opt_velocity: np.ndarray,
    direction_opt: bool,
) -> Optional[np.ndarray]:
    line = lines[line_no]
    dot_product = float(np.dot(line.point, line.direction))
    discriminant = dot_product * dot_product + radius * radius - _abs_sq(line.point)

    if discriminant < 0.0:
        # Max speed circle fully invalidates line line_no.
        return None

    sqrt_discriminant = math.sqrt(discriminant)
    t_left = -dot_product - sqrt_discriminant
    t_right = -dot_product + sqrt_discriminant

    for i in range(line_no):
        denominator = _det(line.direction, lines[i].direction)
        numerator = _det(lines[i].direction, line.point - lines[i].point)

        if abs(denominator) <= RVO_EPSILON:
            # Lines line_no and i are (almost) parallel.
            if numerator < 0.0:
                return None
            continue

        t = numerator / denominator
        if denominator >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)

        if t_left > t_right:
            return None

    if direction_opt:
        if float(np.dot(opt_velocity, line.direction)) > 0.0:
            return line.point + t_right * line.direction
        return line.point + t_left * line.direction

    t = float(np.dot(line.direction, opt_velocity - line.point))
    if t < t_left:
        return line.point + t_left * line.direction
    if t > t_right:
        return line.point + t_right * line.direction
    return line.point + t * line.direction


def _linear_program2(
    lines: Sequence[HalfPlane],
    radius: float,
    opt_velocity: np.ndarray,
    direction_opt: bool,
) -> Tuple[int, np.ndarray]:
    """Returns the index of the failing line (len(lines) on success) and the result."""
    if direction_opt:
        # opt_velocity is a unit vector in this case
        result = opt_velocity * radius
    elif _abs_sq(opt_velocity) > radius * radius:
        result = opt_velocity / math.sqrt(_abs_sq(opt_velocity)) * radius
    else:
        result = opt_velocity.copy()

    for i, line in enumerate(lines):
        if _det(line.direction, line.point - result) > 0.0:
            # Result does not satisfy constraint i. Compute new optimal result.
            candidate = _linear_program1(lines, i, radius, opt_velocity, direction_opt)
            if candidate is None:
                return i, result
            result = candidate
    return len(lines), result


def _linear_program3(
    lines: Sequence[HalfPlane], begin_line: int, radius: float, result: np.ndarray
) -> np.ndarray:
    """Minimize the maximum violation once the 2D program is infeasible."""
    distance = 0.0
    for i in range(begin_line, len(lines)):
        if _det(lines[i].direction, lines[i].point - result) <= distance:
            continue
        projected = []
        for j in range(i):
            determinant = _det(lines[i].direction, lines[j].direction)
            if abs(determinant) <= RVO_EPSILON:
                if float(np.dot(lines[i].direction, lines[j].direction)) > 0.0:
                    # same direction
                    continue
                point = 0.5 * (lines[i].point + lines[j].point)
            else:
                point = lines[i].point + (
                    _det(lines[j].direction, lines[i].point - lines[j].point) / determinant
                ) * lines[i].direction
            direction = lines[j].direction - lines[i].direction
            direction = direction / math.sqrt(_abs_sq(direction))
            projected.append(HalfPlane(point, direction))

        previous = result
        opt = np.array([-lines[i].direction[1], lines[i].direction[0]])
        failed, result = _linear_program2(projected, radius, opt, True)
        if failed < len(projected):
            # floating point error only; keep the previous result
            result = previous
        distance = _det(lines[i].direction, lines[i].point - result)
    return result


def orca_new_velocity(agent: OrcaAgent, constraints: Sequence[HalfPlane]) -> np.ndarray:
    failed, result = _linear_program2(
        constraints, agent.max_speed, agent.preferred_velocity, False
    )
    if failed < len(constraints):
        _LOGGER.debug("ORCA infeasible at constraint %d, using fallback", failed)
        result = _linear_program3(constraints, failed, agent.max_speed, result)
    return result


def time_to_contact(
    relative_position: np.ndarray, relative_velocity: np.ndarray, combined_radius: float
) -> float:
    """First time |p + v t| reaches combined_radius, math.inf if the pair never closes."""
    closing = float(np.dot(relative_position, relative_velocity))
    if closing >= 0.0:
        return math.inf
    gap = _abs_sq(relative_position) - combined_radius * combined_radius
    if gap <= 0.0:
        return 0.0
    speed_sq = _abs_sq(relative_velocity)
    discriminant = closing * closing - speed_sq * gap
    if discriminant <= 0.0:
        return math.inf
    return (-closing - math.sqrt(discriminant)) / speed_sq


def _limit_to_contact(
    agents: Sequence[OrcaAgent], velocities: List[np.ndarray], dt: float
) -> List[np.ndarray]:
    """Shorten velocities so no pair closes below its radius sum within dt.

    A pair that would touch during the step has both velocities scaled to stop
    at contact. After _CONTACT_SWEEPS passes offending pairs are halted.
    """
    count = len(agents)
    sweep = 0
    while True:
        changed = False
        for i in range(count):
            for j in range(i + 1, count):
                contact = time_to_contact(
                    agents[j].position - agents[i].position,
                    velocities[j] - velocities[i],
                    agents[i].radius + agents[j].radius,
                )
                if contact >= dt:
                    continue
                factor = contact / dt if sweep < _CONTACT_SWEEPS else 0.0
                velocities[i] = velocities[i] * factor
                velocities[j] = velocities[j] * factor
                changed = True
        if not changed:
            return velocities
        _LOGGER.debug("Contact guard sweep %d shortened agent velocities", sweep)
        sweep += 1


def step_agents(agents: Sequence[OrcaAgent], dt: float) -> List[OrcaAgent]:
    """Advance every non-static agent one synchronous ORCA step."""
    velocities = []
    for agent in agents:
        if agent.static:
            velocities.append(agent.velocity)
            continue
        planes = orca_halfplanes(agent, agents, dt)
        velocities.append(orca_new_velocity(agent, planes))
    velocities = _limit_to_contact(agents, velocities, dt)
    return [
        attr.evolve(agent, position=agent.position + velocity * dt, velocity=velocity)
        for agent, velocity in zip(agents, velocities)
    ]

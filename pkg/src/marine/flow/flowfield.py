"""Potential-flow current model"""
import logging
import math
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import attr
import numpy as np

from . import TWO_PI, GenerationFailed, SingularityKind
from .utils import to_global, to_local

_LOGGER = logging.getLogger(__name__)

DEFAULT_CORE_RADIUS = 0.25


def _as_point(value) -> Tuple[float, float]:
    x, y = value
    return (float(x), float(y))


def _positive(instance, attribute, value):
    if not value > 0:
        raise ValueError("{} must be positive, got {}".format(attribute.name, value))


def _spin(instance, attribute, value):
    if value not in (1, -1):
        raise ValueError("spin must be +1 or -1, got {}".format(value))


@attr.s(frozen=True)
class Singularity:
    kind = attr.ib(type=SingularityKind, converter=SingularityKind)
    position = attr.ib(type=Tuple[float, float], converter=_as_point)
    strength = attr.ib(type=float, converter=float, validator=_positive)
    # +1 counter-clockwise, -1 clockwise; only meaningful for vortices
    spin = attr.ib(type=int, default=1, converter=int, validator=_spin)

    def inside(self, bounds: Tuple[float, float, float, float]) -> bool:
        xmin, ymin, xmax, ymax = bounds
        x, y = self.position
        return xmin <= x <= xmax and ymin <= y <= ymax

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "x": self.position[0],
            "y": self.position[1],
            "strength": self.strength,
            "spin": self.spin,
        }

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "Singularity":
        return Singularity(
            kind=data["kind"],
            position=(data["x"], data["y"]),
            strength=data["strength"],
            spin=data.get("spin", 1),
        )


@attr.s(frozen=True)
class FlowField:
    uniform_velocity = attr.ib(
        type=Tuple[float, float], converter=_as_point, default=(0.0, 0.0)
    )
    singularities = attr.ib(type=Tuple[Singularity, ...], converter=tuple, default=())
    core_radius = attr.ib(
        type=float, converter=float, default=DEFAULT_CORE_RADIUS, validator=_positive
    )

    @staticmethod
    def uniform(
        speed: float,
        angle: float,
        singularities: Iterable[Singularity] = (),
        core_radius: float = DEFAULT_CORE_RADIUS,
    ) -> "FlowField":
        return FlowField(
            uniform_velocity=(speed * math.cos(angle), speed * math.sin(angle)),
            singularities=tuple(singularities),
            core_radius=core_radius,
        )

    @property
    def uniform_speed(self) -> float:
        return math.hypot(*self.uniform_velocity)

    @property
    def attack_angle(self) -> float:
        return math.atan2(self.uniform_velocity[1], self.uniform_velocity[0])

    def speed_bound(self) -> float:
        """Upper bound on |flow_velocity| anywhere in the plane."""
        return self.uniform_speed + sum(
            s.strength / (TWO_PI * self.core_radius) for s in self.singularities
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "uniform_speed": self.uniform_speed,
            "attack_angle": self.attack_angle,
            "singularities": [s.to_dict() for s in self.singularities],
            "core_radius": self.core_radius,
        }

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "FlowField":
        return FlowField.uniform(
            data.get("uniform_speed", 1.0),
            data.get("attack_angle", 0.0),
            [Singularity.from_dict(item) for item in data.get("singularities", [])],
            data.get("core_radius", DEFAULT_CORE_RADIUS),
        )


def singularity_velocity(
    s: Singularity, p, core_radius: float = DEFAULT_CORE_RADIUS
) -> np.ndarray:
    """Velocity induced by one singularity at points p of shape (..., 2)."""
    offset = np.asarray(p, dtype=np.float64) - np.asarray(s.position)
    distance = np.hypot(offset[..., 0], offset[..., 1])
    # distance below the core radius is clamped, the direction stays exact
    magnitude = s.strength / (TWO_PI * np.maximum(distance, core_radius))
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(distance > 0.0, magnitude / distance, 0.0)

    if s.kind is SingularityKind.SOURCE:
        direction = offset
    elif s.kind is SingularityKind.SINK:
        direction = -offset
    else:
        direction = s.spin * np.stack([-offset[..., 1], offset[..., 0]], axis=-1)
    return direction * scale[..., None]


def flow_velocity(f: FlowField, p) -> np.ndarray:
    points = np.asarray(p, dtype=np.float64)
    velocity = np.broadcast_to(np.asarray(f.uniform_velocity), points.shape).copy()
    for s in f.singularities:
        velocity += singularity_velocity(s, points, f.core_radius)
    return velocity


def grid_offsets(grid_size: int, extent: float) -> np.ndarray:
    """Cell-center offsets of a grid_size lattice spanning extent, centered on 0."""
    cell = extent / grid_size
    return -0.5 * extent + (np.arange(grid_size) + 0.5) * cell


def grid_points(position, heading: float, grid_size: int, extent: float) -> np.ndarray:
    """Global sample points, rows along local y and columns along local x."""
    offsets = grid_offsets(grid_size, extent)
    xs, ys = np.meshgrid(offsets, offsets)
    local = np.stack([xs, ys], axis=-1)
    return np.asarray(position, dtype=np.float64) + to_global(local, heading)


def sample_flow_grid(
    f: FlowField, position, heading: float, grid_size: int = 8, extent: float = 5.0
) -> np.ndarray:
    """Local-frame flow vectors on a heading-aligned grid around the vessel."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2, got {}".format(grid_size))
    if not extent > 0:
        raise ValueError("extent must be positive, got {}".format(extent))
    points = grid_points(position, heading, grid_size, extent)
    return to_local(flow_velocity(f, points), heading)


def generate_flow_field(
    rng: np.random.Generator,
    bounds: Tuple[float, float, float, float],
    uniform_speed: float,
    attack_angle_range: Tuple[float, float],
    vortex_count: int,
    source_sink_count: int,
    strength_range: Tuple[float, float],
    keepout: Sequence[Sequence[float]] = (),
    keepout_distance: float = 3.0,
    core_radius: float = DEFAULT_CORE_RADIUS,
    attempts: int = 1000,
) -> FlowField:
    """Draw a random field: uniform current plus vortices and sources/sinks."""

    xmin, ymin, xmax, ymax = bounds
    kinds: List[SingularityKind] = [SingularityKind.VORTEX] * vortex_count
    for _ in range(source_sink_count):
        kinds.append(
            SingularityKind.SOURCE if rng.random() < 0.5 else SingularityKind.SINK
        )

    singularities = []
    for kind in kinds:
        for _ in range(attempts):
            position = (rng.uniform(xmin, xmax), rng.uniform(ymin, ymax))
            if all(
                math.hypot(position[0] - k[0], position[1] - k[1]) >= keepout_distance
                for k in keepout
            ):
                break
        else:
            raise GenerationFailed("{} singularity".format(kind.value), attempts)
        strength = rng.uniform(*strength_range)
        spin = 1 if rng.random() < 0.5 else -1
        singularities.append(Singularity(kind, position, strength, spin))

    angle = rng.uniform(*attack_angle_range)
    field = FlowField.uniform(uniform_speed, angle, singularities, core_radius)
    _LOGGER.debug(
        "Generated field with %d singularities, attack angle %.3f",
        len(singularities),
        angle,
    )
    return field

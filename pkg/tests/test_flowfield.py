"""Tests for the potential-flow current model."""
import math

import numpy as np
import pytest

from marine.flow import GenerationFailed, SingularityKind
from marine.flow.flowfield import (
    FlowField,
    Singularity,
    flow_velocity,
    generate_flow_field,
    sample_flow_grid,
    singularity_velocity,
)

TEST_VELOCITIES = [
    (Singularity("source", (0, 0), 2 * math.pi), (1.0, 0.0), (1.0, 0.0)),
    (Singularity("vortex", (0, 0), 2 * math.pi), (2.0, 0.0), (0.0, 0.5)),
    (Singularity("sink", (0, 0), 5 * math.pi), (0.0, 0.5), (0.0, -5.0)),
    (Singularity("vortex", (0, 0), 2 * math.pi, spin=-1), (2.0, 0.0), (0.0, -0.5)),
]


@pytest.mark.parametrize("singularity, point, expected", TEST_VELOCITIES)
def test_singularity_velocity(singularity, point, expected):
    assert singularity_velocity(singularity, point) == pytest.approx(expected, abs=1e-12)


def test_singularity_core_clamp():
    s = Singularity(SingularityKind.SOURCE, (0, 0), 2 * math.pi)
    assert np.all(singularity_velocity(s, (0.0, 0.0)) == 0.0)
    inner = singularity_velocity(s, (0.1, 0.0), core_radius=0.25)
    assert inner == pytest.approx((4.0, 0.0))


@pytest.mark.parametrize("strength", [0.0, -1.0])
def test_singularity_strength_positive(strength):
    with pytest.raises(ValueError):
        Singularity("source", (0, 0), strength)


def test_uniform_only():
    field = FlowField(uniform_velocity=(1.0, 0.0))
    points = np.random.default_rng(0).uniform(-20, 20, (50, 2))
    assert np.all(flow_velocity(field, points) == np.array([1.0, 0.0]))


def test_source_reduces_to_singularity():
    field = FlowField(singularities=[Singularity("source", (0, 0), 2 * math.pi)])
    assert flow_velocity(field, (1.0, 0.0)) == pytest.approx((1.0, 0.0))


def test_opposite_vortices_cancel():
    field = FlowField(
        uniform_velocity=(0.3, -0.2),
        singularities=[
            Singularity("vortex", (1, 2), 7.0, spin=1),
            Singularity("vortex", (1, 2), 7.0, spin=-1),
        ],
    )
    assert flow_velocity(field, (4.0, -3.0)) == pytest.approx((0.3, -0.2), abs=1e-15)


def test_superposition():
    rng = np.random.default_rng(3)
    first = [Singularity("vortex", (2, 1), 20.0), Singularity("sink", (-3, 4), 18.0)]
    second = [Singularity("source", (5, -5), 25.0, spin=-1)]
    points = rng.uniform(-20, 20, (10_000, 2))
    uniform = (1.0, 0.5)

    combined = flow_velocity(FlowField(uniform, first + second), points)
    separate = (
        flow_velocity(FlowField(uniform, first), points)
        + flow_velocity(FlowField((0.0, 0.0), second), points)
    )
    assert np.max(np.abs(combined - separate)) < 1e-12


def _circle(center, radius, samples=2048):
    angles = np.linspace(0.0, 2 * math.pi, samples, endpoint=False)
    unit = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    return np.asarray(center) + radius * unit, unit, 2 * math.pi * radius / samples


def test_circulation_and_flux():
    rng = np.random.default_rng(11)
    for _ in range(50):
        strength = rng.uniform(5 * math.pi, 10 * math.pi)
        radius = rng.uniform(1.0, 5.0)
        center = rng.uniform(-10, 10, 2)
        points, normal, ds = _circle(center, radius)
        tangent = np.stack([-normal[:, 1], normal[:, 0]], axis=-1)

        vortex = FlowField(singularities=[Singularity("vortex", center, strength)])
        circulation = np.sum(np.sum(flow_velocity(vortex, points) * tangent, axis=-1)) * ds
        assert circulation == pytest.approx(strength, rel=5e-3)

        source = FlowField(singularities=[Singularity("source", center, strength)])
        flux = np.sum(np.sum(flow_velocity(source, points) * normal, axis=-1)) * ds
        assert flux == pytest.approx(strength, rel=5e-3)

        sink = FlowField(singularities=[Singularity("sink", center, strength)])
        flux = np.sum(np.sum(flow_velocity(sink, points) * normal, axis=-1)) * ds
        assert flux == pytest.approx(-strength, rel=5e-3)


def test_speed_bound():
    rng = np.random.default_rng(5)
    field = generate_flow_field(rng, (-20, -20, 20, 20), 1.0, (0, math.pi / 4), 4, 4, (5 * math.pi, 10 * math.pi))
    points = rng.uniform(-25, 25, (5000, 2))
    speeds = np.linalg.norm(flow_velocity(field, points), axis=-1)
    assert np.all(speeds <= field.speed_bound() + 1e-9)
    assert np.all(np.isfinite(speeds))


@pytest.mark.parametrize("heading, expected", [(0.0, (1.0, 0.0)), (math.pi / 2, (0.0, -1.0))])
def test_sample_uniform_grid(heading, expected):
    grid = sample_flow_grid(FlowField(uniform_velocity=(1.0, 0.0)), (3.0, -2.0), heading)
    assert grid.shape == (8, 8, 2)
    assert np.allclose(grid, expected, atol=1e-12)


@pytest.mark.parametrize("heading", [0.0, 0.7, -2.5])
def test_sample_vortex_antisymmetric(heading):
    field = FlowField(singularities=[Singularity("vortex", (1.0, 1.0), 20.0)])
    grid = sample_flow_grid(field, (1.0, 1.0), heading)
    assert np.allclose(grid, -grid[::-1, ::-1], atol=1e-12)


@pytest.mark.parametrize("grid_size, extent", [(1, 5.0), (8, 0.0)])
def test_sample_invalid(grid_size, extent):
    with pytest.raises(ValueError):
        sample_flow_grid(FlowField(), (0, 0), 0.0, grid_size, extent)


def test_generate_respects_bounds_and_keepout():
    bounds = (-20, -20, 20, 20)
    keepout = [(0.0, 0.0), (10.0, 0.0)]
    field = generate_flow_field(
        np.random.default_rng(8), bounds, 1.0, (0, math.pi / 4), 4, 4,
        (5 * math.pi, 10 * math.pi), keepout=keepout, keepout_distance=3.0,
    )
    assert len(field.singularities) == 8
    assert field.uniform_speed == pytest.approx(1.0)
    assert 0.0 <= field.attack_angle <= math.pi / 4
    for s in field.singularities:
        assert s.inside(bounds)
        assert 5 * math.pi <= s.strength <= 10 * math.pi
        for k in keepout:
            assert math.hypot(s.position[0] - k[0], s.position[1] - k[1]) >= 3.0


def test_generate_deterministic():
    args = ((-20, -20, 20, 20), 1.0, (0, math.pi / 4), 4, 4, (5 * math.pi, 10 * math.pi))
    first = generate_flow_field(np.random.default_rng(42), *args)
    second = generate_flow_field(np.random.default_rng(42), *args)
    assert first == second


def test_generate_over_constrained():
    with pytest.raises(GenerationFailed):
        generate_flow_field(
            np.random.default_rng(0), (-1, -1, 1, 1), 1.0, (0, 0), 1, 0, (1, 2),
            keepout=[(0, 0)], keepout_distance=10.0, attempts=20,
        )


def test_field_dict_round_trip():
    field = generate_flow_field(np.random.default_rng(1), (-20, -20, 20, 20), 1.0, (0, 0.5), 2, 2, (16, 30))
    restored = FlowField.from_dict(field.to_dict())
    points = np.random.default_rng(2).uniform(-20, 20, (100, 2))
    assert np.allclose(flow_velocity(restored, points), flow_velocity(field, points), atol=1e-12)

from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import expm

from apps.lab.errors import BlowUp, DomainViolation, InvalidParameter, LeftDomain, MaxStepsExceeded
from apps.lab.integrate import (
    SectionDirection,
    SectionSpec,
    Trajectory,
    TrajectoryStatus,
    adjoint_flow,
    crossings_of,
    integrate,
    section_crossings,
    trajectory_to_csv,
    variational_flow,
)
from apps.lab.model import Box, custom_field, goodwin, linear_cyclic
from packages.shared_schemas import IntegratorConfig

X0 = np.array([1.0, 0.5, -0.5])


@pytest.fixture
def linear():
    return linear_cyclic(3, 1.0, -1.0)


@pytest.fixture
def oscillator():
    return custom_field(["x2", "-x1"])


def test_linear_flow_matches_matrix_exponential(linear):
    trajectory = integrate(linear, X0, 0.0, 1.0)
    assert trajectory.status == TrajectoryStatus.COMPLETED
    assert trajectory.accepted_steps > 0
    assert_allclose(trajectory.end_state, expm(linear.jacobian(X0)) @ X0, atol=1e-9)
    assert_allclose(trajectory.state_at(0.5), expm(0.5 * linear.jacobian(X0)) @ X0, atol=1e-8)


def test_backward_integration_returns_to_start(linear):
    x1 = expm(linear.jacobian(X0)) @ X0
    trajectory = integrate(linear, x1, 1.0, 0.0)
    assert trajectory.direction == -1
    assert np.all(np.diff(trajectory.times) > 0)
    assert trajectory.end_time == pytest.approx(0.0)
    assert_allclose(trajectory.end_state, X0, atol=1e-9)
    assert_allclose(trajectory.start_state, x1)


def test_variational_flow_of_linear_field(linear):
    matrix = linear.jacobian(X0)
    assert_allclose(variational_flow(linear, X0, 0.0, 2.0), expm(2.0 * matrix), atol=1e-9)
    assert_allclose(variational_flow(linear, X0, 0.0, 0.0), np.eye(3))


def test_variational_flow_matches_finite_differences():
    field = goodwin(12.0, 0.5)
    x0 = np.array([0.3, 0.6, 1.5])
    flow = variational_flow(field, x0, 0.0, 3.0)
    h = 1e-4
    for j in range(3):
        step = np.zeros(3)
        step[j] = h
        forward = integrate(field, x0 + step, 0.0, 3.0).end_state
        backward = integrate(field, x0 - step, 0.0, 3.0).end_state
        assert_allclose(flow[:, j], (forward - backward) / (2 * h), atol=1e-5)


def test_adjoint_methods_agree():
    field = goodwin(12.0, 0.5)
    base = integrate(field, np.array([0.3, 0.6, 1.5]), 0.0, 2.0)
    transpose = adjoint_flow(field, base, 2.0, 0.5)
    direct = adjoint_flow(field, base, 2.0, 0.5, method="direct")
    assert_allclose(direct, transpose, atol=1e-6)
    with pytest.raises(InvalidParameter):
        adjoint_flow(field, base, 0.5, 2.0)
    with pytest.raises(InvalidParameter):
        adjoint_flow(field, base, 5.0, 0.0)


def test_blow_up_is_raised_or_recorded():
    field = custom_field(["x1^2"])
    with pytest.raises(BlowUp) as excinfo:
        integrate(field, [1.0], 0.0, 2.0)
    assert excinfo.value.trajectory is not None

    partial = integrate(field, [1.0], 0.0, 2.0, raise_on_failure=False)
    assert partial.status == TrajectoryStatus.BLOW_UP
    assert not partial.ok
    assert partial.end_time < 1.0


def test_leaving_the_domain_keeps_the_valid_prefix():
    field = custom_field(["-1"], domain=Box.positive_orthant(1))
    with pytest.raises(LeftDomain):
        integrate(field, [0.5], 0.0, 2.0)
    partial = integrate(field, [0.5], 0.0, 2.0, raise_on_failure=False)
    assert partial.status == TrajectoryStatus.LEFT_DOMAIN
    assert np.all(partial.states[:, 0] > 0.0)
    assert partial.end_time <= 0.5


def test_step_budget_and_initial_state_checks():
    with pytest.raises(MaxStepsExceeded):
        integrate(goodwin(12.0, 0.5), [0.3, 0.6, 1.5], 0.0, 100.0, IntegratorConfig(max_steps=5))
    with pytest.raises(DomainViolation):
        integrate(goodwin(), [-0.1, 1.0, 1.0], 0.0, 1.0)


def test_stop_hook_ends_integration_early(linear):
    trajectory = integrate(linear, X0, 0.0, 10.0, stop_when=lambda t, x: t > 1.0)
    assert trajectory.status == TrajectoryStatus.STOPPED
    assert trajectory.ok
    assert 1.0 < trajectory.end_time < 10.0


def test_crossings_by_direction(oscillator):
    trajectory = integrate(oscillator, [1.0, 0.0], 0.0, 10.0)
    up = crossings_of(trajectory, SectionSpec((0.0, 1.0)))
    assert [t for t, _ in up] == pytest.approx([math.pi, 3 * math.pi], abs=1e-8)
    down = crossings_of(trajectory, SectionSpec((0.0, 1.0), direction=SectionDirection.DECREASING))
    assert [t for t, _ in down] == pytest.approx([2 * math.pi], abs=1e-8)
    assert_allclose(down[0][1], [1.0, 0.0], atol=1e-8)
    both = section_crossings(oscillator, [1.0, 0.0], (0.0, 10.0), SectionSpec((0.0, 1.0), direction=SectionDirection.BOTH))
    assert len(both) == 3


def test_section_requires_nonzero_normal():
    with pytest.raises(InvalidParameter):
        SectionSpec((0.0, 0.0))


def test_trajectory_from_samples_interpolates_linearly():
    trajectory = Trajectory.from_samples([0.0, 1.0, 2.0], [[0.0], [1.0], [4.0]])
    assert_allclose(trajectory.sample([0.5, 1.5]), [[0.5], [2.5]])
    with pytest.raises(InvalidParameter):
        Trajectory.from_samples([0.0, 0.0], [[0.0], [1.0]])


def test_trajectory_csv_layout(tmp_path, linear):
    trajectory = integrate(linear, X0, 0.0, 1.0)
    path = trajectory_to_csv(trajectory, tmp_path / "run.csv")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "t,x1,x2,x3"
    assert len(lines) == len(trajectory.times) + 1

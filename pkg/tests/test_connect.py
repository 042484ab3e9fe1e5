from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import expm

from apps.lab.connect import (
    ConnectingOrbit,
    InvariantSide,
    adjoint_solution,
    bump_perturbation,
    bump_value,
    constant_shift,
    dichotomy_frames,
    dichotomy_projections,
    dichotomy_roughness_probe,
    functional_transversality_integral,
    green_function_solve,
    hyperbolic_shift_search,
    index_witness,
    local_invariant_basis,
    perturb_to_hyperbolic,
    shoot_connection,
    transversality_test,
)
from apps.lab.connect.dichotomy import DichotomyFrames, projections_at
from apps.lab.critical import classify_equilibrium
from apps.lab.errors import DimensionMismatch, GridMismatch, InvalidParameter, NoDichotomy, NotHyperbolic, WindowTooShort
from apps.lab.integrate import Trajectory, integrate
from apps.lab.model import add_fields, bidirectional_synthetic, check_class, linear_cyclic

SADDLE_PAIR = np.diag([2.0, 0.5])


def _frames(u: np.ndarray, s: np.ndarray) -> DichotomyFrames:
    p_minus, p_plus, oblique = projections_at(u, s)
    return DichotomyFrames(
        tau=1.0,
        n_trunc=1,
        u_frame=u,
        s_frame=s,
        p_minus=p_minus,
        p_plus=p_plus,
        oblique=oblique,
        orthonormality_residual=0.0,
    )


def test_bump_profile():
    r = 0.4
    assert bump_value(0.0, r)[0] == 1.0
    assert bump_value(0.5 * r, r) == (1.0, 0.0)
    assert bump_value(r, r) == (0.0, 0.0)
    assert bump_value(2.0 * r, r)[0] == 0.0
    value, slope = bump_value(0.75 * r, r)
    assert value == pytest.approx(0.5, abs=1e-12)
    assert slope < 0.0


def test_bump_field_derivative_matches_finite_differences():
    bump = bump_perturbation(3, 2, [0.1, -0.2], 0.5, coupled=True)
    x = np.array([0.3, 0.5, 0.2])
    assert np.count_nonzero(bump.rhs(x)) == 1
    h = 1e-6
    expected = np.column_stack([(bump.rhs(x + h * e) - bump.rhs(x - h * e)) / (2 * h) for e in np.eye(3)])
    assert_allclose(bump.jacobian(x), expected, atol=1e-6)
    assert np.count_nonzero(bump.jacobian(x)[0]) == 0


def test_uncoupled_bump_keeps_the_class():
    field = linear_cyclic(3, 1.0, -1.0)
    bump = bump_perturbation(3, 1, [0.5], 0.3, coupled=False)
    assert check_class(add_fields(field, bump, 0.1)).in_lminus


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n": 3, "j": 1, "center": [0.0, 0.0], "r": 0.0},
        {"n": 3, "j": 4, "center": [0.0, 0.0], "r": 1.0},
        {"n": 3, "j": 1, "center": [0.0], "r": 1.0, "coupled": True},
    ],
)
def test_bump_argument_checks(kwargs):
    with pytest.raises(InvalidParameter):
        bump_perturbation(**kwargs)


def test_green_function_gives_the_bounded_solution():
    operators = [SADDLE_PAIR] * 100
    dichotomy = dichotomy_projections(operators)
    assert dichotomy.unstable_dim == 1
    assert_allclose(dichotomy.projections[50], np.diag([0.0, 1.0]), atol=1e-12)

    solution = green_function_solve(operators, dichotomy.projections, np.ones((100, 2)))
    assert solution.residual < 1e-12
    assert_allclose(solution.y[50], [-1.0, 2.0], atol=1e-12)


def test_green_function_rejects_bad_inputs():
    operators = [SADDLE_PAIR] * 4
    projections = dichotomy_projections(operators).projections
    with pytest.raises(DimensionMismatch):
        green_function_solve(operators, projections[:-1], np.ones((4, 2)))
    with pytest.raises(NoDichotomy):
        green_function_solve(operators, [np.diag([0.5, 0.0])] * 5, np.ones((4, 2)))
    with pytest.raises(NoDichotomy):
        dichotomy_projections([np.diag([1.0, 0.5])] * 4)


def test_projection_deviation_is_linear_in_the_perturbation():
    rotation = np.array([[np.cos(0.3), -np.sin(0.3)], [np.sin(0.3), np.cos(0.3)]])
    operators = [rotation @ SADDLE_PAIR @ rotation.T] * 20
    report = dichotomy_roughness_probe(operators, [0.0, 1e-6, 1e-5, 1e-4], seed=3)
    assert report.entries[0].deviation == 0.0
    assert not any(e.collapsed for e in report.entries)
    assert report.slope == pytest.approx(1.0, abs=0.15)


def test_transverse_and_degenerate_coordinate_frames():
    eye = np.eye(3)
    transverse = transversality_test(_frames(eye[:, :2], eye[:, 1:]), i_minus=2, i_plus=1)
    assert transverse.transverse
    assert transverse.span_defect == 0
    assert transverse.bounded_adjoint_dim == 0
    assert transverse.min_principal_angle == pytest.approx(np.pi / 2)
    assert transverse.fredholm_index == 1
    assert transverse.criteria_agree and transverse.confident

    degenerate = transversality_test(_frames(eye[:, :1], eye[:, :2]), i_minus=1, i_plus=1)
    assert not degenerate.transverse
    assert degenerate.span_defect == 1
    assert degenerate.bounded_adjoint_dim == 1
    assert degenerate.fredholm_index == 0
    assert degenerate.criteria_agree

    with pytest.raises(DimensionMismatch):
        transversality_test(_frames(eye[:, :1], eye[:, :2]), i_minus=2, i_plus=1)


def test_index_witness():
    assert index_witness(2, 1, 3) == 1
    assert index_witness(1, 1, 3) is None
    assert index_witness(4, 2, 5) == 2
    assert index_witness(2, 0, 4) == 1


def test_shift_moves_linear_spectrum_exactly():
    field = linear_cyclic(3, 1.0, -1.0)
    assert perturb_to_hyperbolic(field, np.zeros(3), 0.0) is field
    shifted = perturb_to_hyperbolic(field, np.zeros(3), 0.1)
    base = np.sort(np.linalg.eigvals(field.jacobian(np.zeros(3))).real)
    moved = np.sort(np.linalg.eigvals(shifted.jacobian(np.zeros(3))).real)
    assert_allclose(moved - base, 0.1, atol=1e-12)
    with pytest.raises(DimensionMismatch):
        perturb_to_hyperbolic(field, np.zeros(2), 0.1)


def test_shift_search_splits_a_center_pair():
    field = linear_cyclic(3, 2.0, -1.0)
    equilibrium = classify_equilibrium(field, np.zeros(3))
    assert not equilibrium.hyperbolic
    plus, minus = hyperbolic_shift_search(field, equilibrium, alpha=1e-3)
    assert (plus.alpha, minus.alpha) == (1e-3, -1e-3)
    assert plus.hyperbolic and minus.hyperbolic
    assert plus.morse_index == 2
    assert minus.morse_index == 0
    assert plus.distance > 0.0


def test_constant_shift_keeps_the_jacobian():
    field = linear_cyclic(3, 1.0, -1.0)
    shifted = constant_shift(field, [1.0, 0.0, -1.0])
    x = np.array([0.2, -0.4, 0.7])
    assert_allclose(shifted.rhs(x) - field.rhs(x), [1.0, 0.0, -1.0])
    assert_allclose(shifted.jacobian(x), field.jacobian(x))
    with pytest.raises(DimensionMismatch):
        constant_shift(field, [1.0])


def test_adjoint_solution_of_a_linear_field():
    field = linear_cyclic(3, 1.0, -1.0)
    trajectory = integrate(field, [1.0, 0.5, -0.5], 0.0, 2.0)
    times = np.linspace(0.0, 2.0, 11)
    xi0 = np.array([0.3, -1.0, 0.4])
    psi = adjoint_solution(field, trajectory, times, xi0)
    matrix = field.jacobian(np.zeros(3))
    assert_allclose(psi[-1], expm(-2.0 * matrix.T) @ xi0, rtol=1e-7, atol=1e-9)
    with pytest.raises(GridMismatch):
        adjoint_solution(field, trajectory, [0.0, 1.0, 1.0], xi0)


def test_functional_integral_on_a_constant_curve():
    field = linear_cyclic(3, 1.0, -1.0)
    times = np.linspace(0.0, 2.0, 21)
    curve = Trajectory.from_samples(times, np.tile([1.0, 0.0, 0.0], (len(times), 1)))
    column = field.rhs(np.array([1.0, 0.0, 0.0]))
    phi = np.tile(column, (len(times), 1))
    assert functional_transversality_integral(field, curve, phi, times, field) == pytest.approx(4.0)

    with pytest.raises(GridMismatch):
        functional_transversality_integral(field, curve, phi[:-1], times, field)
    with pytest.raises(GridMismatch):
        functional_transversality_integral(field, curve, phi, times + 1.0, field)


def test_local_invariant_bases():
    field = bidirectional_synthetic(3)
    assert local_invariant_basis(field, np.zeros(3), InvariantSide.UNSTABLE).shape == (3, 2)
    assert local_invariant_basis(field, np.zeros(3), InvariantSide.STABLE).shape == (3, 1)
    with pytest.raises(NotHyperbolic):
        local_invariant_basis(linear_cyclic(3, 2.0, -1.0), np.zeros(3), InvariantSide.STABLE)



def test_dichotomy_frames_along_a_resting_orbit_follow_the_invariant_subspaces():
    field = linear_cyclic(3, 1.0, -0.2)
    e = classify_equilibrium(field, np.zeros(3))
    assert e.hyperbolic and e.morse_index == 2
    times = np.linspace(-3.0, 3.0, 61)
    orbit = ConnectingOrbit(Trajectory.from_samples(times, np.zeros((61, 3))), e, e, 2, 2, None, None, (0.0, 0.0))

    frames = dichotomy_frames(field, orbit, tau=0.5)
    assert frames.n_trunc == 6
    assert frames.u_frame.shape == (3, 2)
    assert frames.s_frame.shape == (3, 1)
    assert frames.oblique
    assert frames.orthonormality_residual < 1e-10

    unstable = local_invariant_basis(field, e, InvariantSide.UNSTABLE)
    stable = local_invariant_basis(field, e, InvariantSide.STABLE)
    assert np.linalg.norm(unstable - frames.u_frame @ (frames.u_frame.T @ unstable)) < 1e-8
    assert np.linalg.norm(stable - frames.s_frame @ (frames.s_frame.T @ stable)) < 1e-8
    assert_allclose(frames.p_minus @ frames.u_frame, frames.u_frame, atol=1e-10)
    assert_allclose(frames.p_minus @ frames.s_frame, 0.0, atol=1e-10)

    with pytest.raises(WindowTooShort):
        dichotomy_frames(field, orbit, tau=0.5, n_trunc=10)

@pytest.mark.slow
def test_shooting_finds_a_connection_from_the_origin():
    field = bidirectional_synthetic(3)
    source = classify_equilibrium(field, np.zeros(3))
    target = classify_equilibrium(field, np.ones(3))
    orbits = shoot_connection(field, source, target, directions=16, horizon=200.0)
    assert orbits
    orbit = orbits[0]
    assert (orbit.i_minus, orbit.i_plus) == (2, 0)
    assert orbit.convergence_errors[1] <= 1e-6
    assert not orbit.homoindexed

from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from apps.lab.critical import (
    classify_equilibrium,
    classify_monodromy,
    classify_periodic_orbit,
    deduplicate,
    find_equilibria,
    find_periodic_orbit,
    newton_refine,
    planar_projection_injectivity,
    start_grid,
)
from apps.lab.errors import InvalidParameter, NewtonDiverged, NoReturn, TooFewSamples
from apps.lab.integrate import Trajectory
from apps.lab.model import Box, bidirectional_synthetic, custom_field, goodwin, goodwin_equilibrium, linear_cyclic

GOODWIN_SEED = np.array([0.3, 0.6, 1.5])


def _closed_curve(m: int = 1024) -> Trajectory:
    t = 2 * math.pi * np.arange(m) / m
    return Trajectory.from_samples(t, np.column_stack([np.cos(t), np.sin(2 * t), np.sin(t)]))


@pytest.fixture(scope="module")
def goodwin_cycle():
    return find_periodic_orbit(goodwin(12.0, 0.5), GOODWIN_SEED, transient=100.0)


@pytest.mark.parametrize("c,expected", [(1.0, 0), (3.0, 2)])
def test_morse_index_of_linear_cyclic_origin(c, expected):
    equilibrium = classify_equilibrium(linear_cyclic(3, c, -1.0), np.zeros(3))
    assert equilibrium.morse_index == expected
    assert equilibrium.morse_index_exp == expected
    assert equilibrium.hyperbolic
    assert equilibrium.residual == 0.0


def test_start_grid_and_deduplicate():
    grid = start_grid(Box.cube(2, 0.0, 1.0), 2)
    assert_allclose(grid, [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]])
    unique = deduplicate([np.zeros(2), np.array([1e-9, 0.0]), np.ones(2)])
    assert len(unique) == 2


def test_newton_refine_failures():
    with pytest.raises(NewtonDiverged):
        newton_refine(custom_field(["x1^2 + 1"]), np.array([0.5]))
    with pytest.raises(NewtonDiverged):
        newton_refine(goodwin(), np.array([-1.0, 1.0, 1.0]))


def test_goodwin_has_a_single_stable_equilibrium():
    equilibria = find_equilibria(goodwin(2.0, 1.0), Box.cube(3, 0.05, 5.0), grid_per_axis=3)
    assert len(equilibria) == 1
    assert_allclose(equilibria[0].x, goodwin_equilibrium(2.0, 1.0), atol=1e-9)
    assert equilibria[0].morse_index == 0


def test_bidirectional_synthetic_equilibria_and_indices():
    field = bidirectional_synthetic(3)
    equilibria = find_equilibria(field, Box.cube(3, -1.5, 1.5), grid_per_axis=5)

    def index_at(point):
        matches = [e for e in equilibria if np.linalg.norm(e.x - point) < 1e-8]
        assert matches, f"no equilibrium found near {point}"
        return matches[0].morse_index

    saddle = math.sqrt(0.5) * np.array([1.0, 0.0, -1.0])
    assert index_at(np.zeros(3)) == 2
    assert index_at(np.ones(3)) == 0
    assert index_at(-np.ones(3)) == 0
    assert index_at(saddle) == 1
    assert index_at(-saddle) == 1


def test_monodromy_classification_flags_inconsistency():
    _, report = classify_monodromy(np.diag([1.0, 0.5, 0.2]))
    assert report.trivial_multiplier_present
    assert report.hyperbolic
    assert report.findings == []

    _, neutral = classify_monodromy(np.diag([1.0, -1.0, 0.2]))
    assert neutral.simple
    assert not neutral.unique_unit_modulus
    assert not neutral.hyperbolic
    assert neutral.findings == ["CONSISTENCY_VIOLATION: simple but not hyperbolic"]

    _, missing = classify_monodromy(np.diag([0.9, 0.5, 0.2]))
    assert not missing.trivial_multiplier_present
    assert missing.findings[0].startswith("TRIVIAL_MULTIPLIER_MISSING")


def test_goodwin_periodic_orbit(goodwin_cycle):
    assert goodwin_cycle.period > 0
    assert goodwin_cycle.trivial_multiplier_error <= 1e-4
    assert goodwin_cycle.unique_unit_modulus
    assert goodwin_cycle.hyperbolic
    assert goodwin_cycle.morse_index == 0
    assert goodwin_cycle.samples.states.shape == (1024, 3)


def test_reclassified_orbit_agrees(goodwin_cycle):
    updated, report = classify_periodic_orbit(goodwin(12.0, 0.5), goodwin_cycle)
    assert report.findings == []
    assert report.trivial_eigvec_angle is not None and report.trivial_eigvec_angle < 1e-3
    assert_allclose(np.sort(np.abs(updated.multipliers)), np.sort(np.abs(goodwin_cycle.multipliers)), atol=1e-6)


def test_goodwin_orbit_projections_are_injective(goodwin_cycle):
    for s in (1, 2, 3):
        report = planar_projection_injectivity(goodwin_cycle, s)
        assert report.injective
        assert report.samples == 1024


def test_stable_goodwin_has_no_periodic_orbit():
    with pytest.raises(NoReturn):
        find_periodic_orbit(goodwin(2.0, 1.0), np.array([1.0, 1.0, 1.0]))


def test_injectivity_detects_a_self_crossing():
    curve = _closed_curve()
    crossing = planar_projection_injectivity(curve, 1)
    assert not crossing.injective
    assert crossing.witness_pair == (256, 768)
    assert planar_projection_injectivity(curve, 3).injective


def test_injectivity_argument_checks():
    with pytest.raises(TooFewSamples):
        planar_projection_injectivity(_closed_curve(100), 1)
    with pytest.raises(InvalidParameter):
        planar_projection_injectivity(_closed_curve(), 4)

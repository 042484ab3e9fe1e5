from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from apps.lab.connect import bump_perturbation
from apps.lab.critical import find_periodic_orbit
from apps.lab.limitset import UNSTABLE_CONE, LimitThresholds, classify_limit_set, robustness_probe, stable_ratio
from apps.lab.model import SampleSpec, bidirectional_synthetic, goodwin, goodwin_equilibrium, linear_cyclic
from packages.shared_schemas import AnalysisSettings, IntegratorConfig, LimitDirection, LimitSetKind


def test_thresholds_follow_analysis_settings():
    settings = AnalysisSettings(eq_radius=1e-4, rec_tol=1e-6, visit_radius=0.05)
    thresholds = LimitThresholds.from_settings(settings)
    assert thresholds.eq_radius == 1e-4
    assert thresholds.rec_tol == 1e-6
    assert thresholds.visit_radius == 0.05
    assert thresholds.newton == settings.newton


def test_linear_decay_has_an_equilibrium_omega_limit():
    report = classify_limit_set(linear_cyclic(3, 1.0, -1.0), [1.0, 0.5, -0.5], horizon=200.0)
    assert report.kind == LimitSetKind.EQUILIBRIUM
    assert report.direction == LimitDirection.OMEGA
    assert_allclose(report.equilibrium, [0.0, 0.0, 0.0], atol=1e-9)
    assert report.evidence.status == "completed"


def test_stable_goodwin_converges_to_its_equilibrium():
    report = classify_limit_set(goodwin(2.0, 1.0), [0.2, 2.0, 0.5], horizon=200.0)
    assert report.kind == LimitSetKind.EQUILIBRIUM
    assert_allclose(report.equilibrium, goodwin_equilibrium(2.0, 1.0), atol=1e-8)


def test_bidirectional_synthetic_settles():
    report = classify_limit_set(bidirectional_synthetic(3), [0.3, 0.2, 0.1], horizon=200.0)
    assert report.kind == LimitSetKind.EQUILIBRIUM


def test_alpha_limit_of_an_unstable_linear_field():
    report = classify_limit_set(linear_cyclic(3, 1.0, 2.0), [1.0, 0.5, -0.5], horizon=200.0, direction=LimitDirection.ALPHA)
    assert report.direction == LimitDirection.ALPHA
    assert report.kind == LimitSetKind.EQUILIBRIUM
    assert_allclose(report.equilibrium, [0.0, 0.0, 0.0], atol=1e-9)


def test_backward_blow_up_is_undetermined():
    report = classify_limit_set(linear_cyclic(3, 1.0, -1.0), [1.0, 0.5, -0.5], horizon=200.0, direction="Alpha")
    assert report.kind == LimitSetKind.UNDETERMINED
    assert report.evidence.status == "blow_up"
    assert report.evidence.horizon_used < 200.0


@pytest.mark.slow
def test_oscillatory_goodwin_has_a_periodic_omega_limit():
    field = goodwin(12.0, 0.5)
    seed = np.array([0.3, 0.6, 1.5])
    report = classify_limit_set(field, seed, horizon=1000.0)
    assert report.kind == LimitSetKind.PERIODIC_ORBIT
    assert report.evidence.recurrence_gap <= 1e-5
    orbit = find_periodic_orbit(field, seed)
    assert report.period == pytest.approx(orbit.period, rel=1e-3)


def test_robustness_keeps_the_classification_for_an_in_class_bump():
    bump = bump_perturbation(3, 1, [0.7], 0.2, coupled=False)
    report = robustness_probe(
        goodwin(2.0, 1.0),
        bump,
        [1e-3, 0.0, 1e-4],
        (1.0, 1.0, 1.0),
        horizon=200.0,
        class_spec=SampleSpec(count=50),
    )
    assert [e.epsilon for e in report.entries] == [0.0, 1e-4, 1e-3]
    assert {e.label for e in report.entries} == {"Equilibrium"}
    assert report.transitions == []
    assert report.threshold is None
    assert report.pb_consistent


def test_robustness_records_leaving_the_class():
    bump = bump_perturbation(3, 1, [1.5, 1.5], 2.0, coupled=True)
    report = robustness_probe(goodwin(2.0, 1.0), bump, [0.0, 1e-3], (1.0, 1.0, 1.0), horizon=200.0)
    assert report.entries[1].left_class
    assert report.entries[1].class_failures > 0
    assert report.entries[1].label == "LeftClass"
    assert report.threshold == 1e-3
    assert report.transitions[0].kind_from == "Equilibrium"
    assert report.transitions[0].kind_to == "LeftClass"
    assert report.pb_consistent


def _goodwin_focus_directions():
    field = goodwin(12.0, 0.5)
    e = goodwin_equilibrium(12.0, 0.5)
    values, vectors = np.linalg.eig(field.jacobian(e))
    unstable = vectors[:, int(np.argmax(values.real))].real
    stable = vectors[:, int(np.argmin(values.real))].real
    return field, e, unstable / np.linalg.norm(unstable), stable / np.linalg.norm(stable)


def test_stable_ratio_separates_the_invariant_subspaces():
    field, e, unstable, stable = _goodwin_focus_directions()
    assert stable_ratio(field, e, e + 1e-3 * unstable) < 1e-8
    along_stable = stable_ratio(field, e, e + 1e-3 * stable)
    assert along_stable is None or along_stable > 1e3
    assert stable_ratio(linear_cyclic(3, 1.0, -1.0), np.zeros(3), np.ones(3)) is None


def test_alpha_limit_inside_the_goodwin_cycle_is_the_unstable_focus():
    field, e, unstable, _ = _goodwin_focus_directions()
    report = classify_limit_set(
        field, e + 1e-3 * unstable, horizon=200.0, known_equilibria=[e], direction=LimitDirection.ALPHA
    )
    assert report.kind == LimitSetKind.EQUILIBRIUM
    assert report.direction == LimitDirection.ALPHA
    assert_allclose(report.equilibrium, e)
    assert report.evidence.status == "stopped"
    assert report.evidence.stable_ratio <= UNSTABLE_CONE
    assert report.evidence.final_distance <= LimitThresholds().visit_radius


def test_alpha_approach_finds_the_focus_without_known_equilibria():
    field, e, unstable, _ = _goodwin_focus_directions()
    report = classify_limit_set(field, e + 1e-3 * unstable, horizon=200.0, direction=LimitDirection.ALPHA)
    assert report.kind == LimitSetKind.EQUILIBRIUM
    assert_allclose(report.equilibrium, e, atol=1e-9)


@pytest.mark.parametrize(
    "field, x0",
    [(goodwin(2.0, 1.0), [0.2, 2.0, 0.5]), (bidirectional_synthetic(3), [0.3, 0.2, 0.1])],
)
def test_classification_survives_halved_tolerances(field, x0):
    base = classify_limit_set(field, x0, horizon=200.0)
    tight = classify_limit_set(field, x0, horizon=200.0, config=IntegratorConfig().tightened(0.5))
    assert tight.kind == base.kind == LimitSetKind.EQUILIBRIUM
    assert_allclose(tight.equilibrium, base.equilibrium, atol=1e-8)


@pytest.mark.slow
def test_periodic_classification_survives_halved_tolerances():
    field = goodwin(12.0, 0.5)
    base = classify_limit_set(field, [0.3, 0.6, 1.5], horizon=1000.0)
    tight = classify_limit_set(field, [0.3, 0.6, 1.5], horizon=1000.0, config=IntegratorConfig().tightened(0.5))
    assert base.kind == tight.kind == LimitSetKind.PERIODIC_ORBIT
    assert tight.period == pytest.approx(base.period, rel=1e-6)


@pytest.mark.slow
def test_oscillatory_goodwin_keeps_its_cycle_under_small_bumps():
    bump = bump_perturbation(3, 1, [0.7], 0.2, coupled=False)
    report = robustness_probe(
        goodwin(12.0, 0.5),
        bump,
        [1e-4, 1e-3, 1e-2],
        (0.3, 0.6, 1.5),
        horizon=1000.0,
        class_spec=SampleSpec(count=50),
    )
    assert [e.label for e in report.entries] == ["PeriodicOrbit"] * 3
    assert report.transitions == []
    assert report.threshold is None
    assert report.pb_consistent

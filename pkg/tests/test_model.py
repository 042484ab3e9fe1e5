from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from apps.lab.errors import ConfigError, DimensionMismatch, DomainViolation, InvalidParameter
from apps.lab.model import (
    Box,
    FeedbackSignature,
    JacobianMode,
    MatrixBranch,
    SampleSpec,
    add_fields,
    bidirectional_synthetic,
    check_class,
    check_dissipative,
    check_mminus,
    conjugate_field,
    custom_field,
    goodwin,
    goodwin_equilibrium,
    goodwin_equilibrium_x3,
    goodwin_loop_gain,
    linear_cyclic,
    load_model,
    metric_d,
    normalizing_signs,
    random_mminus_matrix,
    repressilator,
)
from packages.shared_schemas import ModelSpec


def test_box_is_open_and_encodes_infinity_as_null():
    box = Box.positive_orthant(2)
    assert box.contains(np.array([0.5, 1.0]))
    assert not box.contains(np.array([0.0, 1.0]))
    assert not box.is_bounded
    assert box.to_dict() == {"lower": [0.0, 0.0], "upper": [None, None]}

    inner = box.intersect(Box.cube(2, -1.0, 1.0))
    assert inner.lower == (0.0, 0.0)
    assert inner.upper == (1.0, 1.0)
    assert Box.cube(2, 1.0, 1.0).is_empty


def test_signature_requires_negative_feedback():
    with pytest.raises(InvalidParameter):
        FeedbackSignature(3, (1, 1, 1))
    with pytest.raises(InvalidParameter):
        FeedbackSignature(2, (1, -1))
    with pytest.raises(DimensionMismatch):
        FeedbackSignature(3, (1, -1))
    assert FeedbackSignature.normalized(4).delta == (1, 1, 1, -1)


def test_normalizing_signs_conjugates_to_standard_pattern():
    delta = (1, -1, 1)
    sigma = normalizing_signs(delta)
    assert_array_equal(sigma, [1, 1, -1])
    conjugated = [delta[i] * sigma[i] * sigma[(i + 1) % 3] for i in range(3)]
    assert conjugated == [1, 1, -1]


def test_check_mminus_accepts_linear_cyclic_matrix():
    field = linear_cyclic(3, 1.0, -1.0)
    result = check_mminus(field.jacobian(np.zeros(3)))
    assert result.ok
    assert result.branch == MatrixBranch.SUBDIAGONAL_STRICT


def test_check_mminus_rejection_reasons():
    off_pattern = np.diag([-1.0, -1.0, -1.0, -1.0])
    off_pattern[1, 0] = off_pattern[2, 1] = off_pattern[3, 2] = 1.0
    off_pattern[0, 3] = -1.0
    off_pattern[0, 2] = 0.5
    result = check_mminus(off_pattern)
    assert not result.ok
    assert result.reason == "off-pattern entry (1,3)"
    assert not result.pattern_ok

    opposite = np.array([[0.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    assert check_mminus(opposite).reason == "b1c1 < 0"

    assert check_mminus(np.diag([1.0, 2.0, 3.0])).reason == "∏b+∏c = 0"

    mixed = np.zeros((3, 3))
    mixed[1, 0], mixed[2, 1], mixed[0, 2] = 1.0, -1.0, 1.0
    assert check_mminus(mixed).reason == "no strict sign branch"


def test_random_mminus_matrices_are_in_class():
    rng = np.random.default_rng(3)
    for _ in range(20):
        assert check_mminus(random_mminus_matrix(4, rng)).ok


@pytest.mark.parametrize("scale", [1e-3, 0.5, 7.0, 1e3])
def test_check_mminus_is_invariant_under_positive_scaling(scale):
    rng = np.random.default_rng(11)
    opposite = np.array([[0.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    mixed = np.zeros((3, 3))
    mixed[1, 0], mixed[2, 1], mixed[0, 2] = 1.0, -1.0, 1.0
    matrices = [random_mminus_matrix(5, rng) for _ in range(10)] + [opposite, mixed, np.diag([1.0, 2.0, 3.0])]
    for matrix in matrices:
        base = check_mminus(matrix)
        scaled = check_mminus(scale * matrix)
        assert (scaled.ok, scaled.reason, scaled.branch) == (base.ok, base.reason, base.branch)


def test_check_class_on_zoo_models():
    report = check_class(linear_cyclic(3, 1.0, -1.0), SampleSpec(count=50, seed=1))
    assert report.in_lminus
    assert report.in_c1bf
    assert report.in_mminus_samples == 1.0
    assert report.branch_counts == {"subdiagonal_strict": 50}

    assert check_class(goodwin(12.0, 0.5), SampleSpec(count=100)).in_lminus
    assert check_class(repressilator(), SampleSpec(count=50)).in_lminus
    assert check_class(bidirectional_synthetic(3), SampleSpec(count=100)).in_lminus


def test_check_class_reports_off_pattern_dependence():
    field = custom_field(["-x1 + x3 - x4", "x1 - x2", "x2 - x3", "x3 - x4"], domain=Box.whole_space(4))
    report = check_class(field, SampleSpec(box=Box.cube(4, -1.0, 1.0), count=20))
    assert not report.in_c1bf
    assert not report.in_lminus
    assert report.failures[0].reason == "off-pattern entry (1,3)"


def test_check_class_counts_points_outside_domain():
    report = check_class(goodwin(), SampleSpec(box=Box.cube(3, -1.0, 1.0), count=200, seed=2))
    assert report.skipped > 0
    assert report.samples + report.skipped == 200
    assert report.in_lminus


def test_conjugated_field_stays_in_class():
    base = linear_cyclic(3, 1.0, -1.0)
    sigma = [1, -1, 1]
    conj = conjugate_field(base, sigma)
    assert conj.signature.delta == (-1, -1, -1)
    y = np.array([0.3, -0.2, 0.7])
    assert_allclose(conj.evaluate(y), np.array(sigma) * base.evaluate(np.array(sigma) * y))
    assert check_class(conj, SampleSpec(count=30)).in_lminus


def test_dissipativity_of_linear_cyclic():
    stable = check_dissipative(linear_cyclic(3, 1.0, -1.0), radius=2.0, samples=200)
    assert stable.witness_violations == 0
    assert stable.evaluated == 200
    assert stable.margin > 0

    growing = check_dissipative(linear_cyclic(3, 1.0, 1.0), radius=2.0, samples=200)
    assert growing.witness_violations > 0


def test_dissipativity_skips_points_outside_domain():
    record = check_dissipative(goodwin(), radius=1.0, samples=100)
    assert record.skipped_outside > 0
    assert record.evaluated + record.skipped_outside == 100


def test_evaluate_rejects_bad_states():
    field = goodwin()
    with pytest.raises(DomainViolation):
        field.evaluate(np.array([-1.0, 1.0, 1.0]))
    with pytest.raises(DimensionMismatch):
        field.evaluate(np.array([1.0, 1.0]))


def test_central_difference_matches_analytic_jacobian():
    field = goodwin(12.0, 0.5)
    x = np.array([0.4, 0.9, 1.3])
    numeric = field.with_jacobian_mode(JacobianMode.CENTRAL_DIFFERENCE)
    assert_allclose(numeric.jacobian(x), field.jacobian(x), atol=1e-6)


def test_goodwin_equilibrium_and_loop_gain():
    x_star = goodwin_equilibrium_x3(2.0, 1.0)
    assert x_star == pytest.approx(0.6823278, abs=1e-6)
    assert x_star * (1.0 + x_star**2) == pytest.approx(1.0, abs=1e-12)
    field = goodwin(2.0, 1.0)
    assert_allclose(field.evaluate(np.array([x_star, x_star, x_star])), 0.0, atol=1e-12)

    point = goodwin_equilibrium(12.0, 0.5)
    x3 = goodwin_equilibrium_x3(12.0, 0.5)
    assert_allclose(point, [0.25 * x3, 0.5 * x3, x3])
    assert_allclose(goodwin(12.0, 0.5).evaluate(point), 0.0, atol=1e-12)

    assert goodwin_loop_gain(2.0, 1.0) < 8.0
    assert goodwin_loop_gain(12.0, 0.5) > 8.0


def test_bidirectional_synthetic_equilibria():
    field = bidirectional_synthetic(3)
    assert_allclose(field.evaluate(np.ones(3)), 0.0, atol=1e-14)
    eigenvalues = np.sort(np.linalg.eigvals(field.jacobian(np.zeros(3))).real)
    assert_allclose(eigenvalues, [-2.0, 0.5, 1.0], atol=1e-12)


def test_metric_vanishes_on_identical_fields():
    base = linear_cyclic(3, 1.0, -1.0)
    assert metric_d(base, base, k_max=3, count=16) == 0.0

    shifted = add_fields(base, linear_cyclic(3, 1.0, 1.0), 1e-3)
    distance = metric_d(base, shifted, k_max=3, count=16)
    assert 0.0 < distance < 1e-2


def test_load_model_from_specs():
    field = load_model(ModelSpec(name="goodwin", params={"p": 12.0, "b": 0.5}))
    assert field.params == {"p": 12.0, "b": 0.5}

    custom = load_model(ModelSpec(custom=["hill(x3, 2) - x1", "x1 - x2", "x2 - x3"], domain={"preset": "positive_orthant"}))
    assert custom.jacobian_mode == JacobianMode.ANALYTIC
    x = np.array([0.5, 0.5, 0.5])
    assert_allclose(custom.jacobian(x), goodwin(2.0, 1.0).jacobian(x), atol=1e-12)
    assert math.isfinite(custom.sample_box.upper[0])


@pytest.mark.parametrize(
    "spec",
    [
        ModelSpec(name="no_such_model"),
        ModelSpec(name="goodwin", params={"p": 0.5}),
        ModelSpec(name="goodwin", params={"q": 1.0}),
        ModelSpec(custom=["x1 + y", "x2", "x3"]),
        ModelSpec(custom=["-x1", "-x2", "-x3"], delta=[1, 1, 1]),
    ],
)
def test_load_model_translates_failures_to_config_errors(spec):
    with pytest.raises(ConfigError):
        load_model(spec)


def test_sample_spec_validation():
    with pytest.raises(InvalidParameter):
        SampleSpec(count=0)

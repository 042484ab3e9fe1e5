from __future__ import annotations

import itertools

import numpy as np
import pytest
from scipy.linalg import expm

from apps.lab.errors import ConfigError, InvalidConeIndex
from apps.lab.lyapunov import (
    DEFAULT_CONVENTION,
    ConeSide,
    CountedSign,
    EdgePairing,
    NConvention,
    in_cone,
    max_cone_index,
    n_bounds,
    n_profile,
    n_tilde,
    n_value,
)
from apps.lab.model import FeedbackSignature, random_mminus_matrix

SIG3 = FeedbackSignature.normalized(3)


def _enumerate_bounds(x, delta, forward=True, negative=True):
    n = len(x)
    free = [i for i in range(n) if x[i] == 0]
    counts = []
    for choice in itertools.product((-1.0, 1.0), repeat=len(free)):
        y = list(np.sign(x))
        for i, s in zip(free, choice):
            y[i] = s
        total = 0
        for i in range(n):
            other = y[(i + 1) % n] if forward else y[i - 1]
            p = delta[i] * y[i] * other
            total += int(p < 0) if negative else int(p > 0)
        counts.append(total)
    return min(counts), max(counts)


def test_convention_names_and_aliases():
    assert DEFAULT_CONVENTION.name == "edge_forward_negative"
    verbatim = NConvention.from_name("paper_verbatim")
    assert verbatim.pairing == EdgePairing.EDGE_BACKWARD
    assert verbatim.counted_sign == CountedSign.POSITIVE
    assert verbatim.name == "edge_backward_positive"
    with pytest.raises(ConfigError):
        NConvention.from_name("edge_sideways_negative")


def test_n_value_on_sign_vectors():
    assert n_value([1.0, 1.0, 1.0], SIG3).value == 1
    assert n_value([1.0, -1.0, 1.0], SIG3).value == 3
    assert n_value([1.0, 1.0, 1.0], SIG3, NConvention.from_name("edge_forward_positive")).value == 2

    partial = n_value([1.0, 0.0, 1.0], SIG3)
    assert not partial.defined
    assert not n_value([1.0, 1e-12, 1.0], SIG3, zero_tol=1e-9).defined


@pytest.mark.parametrize("name", ["edge_forward_negative", "edge_forward_positive", "edge_backward_negative", "edge_backward_positive"])
def test_parity_on_the_regular_set(name):
    convention = NConvention.from_name(name)
    rng = np.random.default_rng(0)
    for n in (3, 4, 5, 6):
        signature = FeedbackSignature.normalized(n)
        for _ in range(50):
            value = n_value(rng.standard_normal(n), signature, convention).value
            assert value % 2 == convention.expected_parity(n)


def test_n_bounds_with_a_zero_coordinate():
    bounds = n_bounds([1.0, 0.0, 1.0], SIG3)
    assert (bounds.n_min, bounds.n_max) == (1, 3)
    assert not bounds.in_regular_set
    assert not bounds.zero_vector

    regular = n_bounds([2.0, -1.0, 0.5], SIG3)
    assert regular.in_regular_set
    assert regular.n_min == regular.n_max == 3

    assert n_bounds([0.0, 0.0, 0.0], SIG3).zero_vector


@pytest.mark.parametrize("forward,negative", [(True, True), (True, False), (False, True), (False, False)])
def test_n_bounds_matches_enumeration(forward, negative):
    convention = NConvention(
        EdgePairing.EDGE_FORWARD if forward else EdgePairing.EDGE_BACKWARD,
        CountedSign.NEGATIVE if negative else CountedSign.POSITIVE,
    )
    rng = np.random.default_rng(11)
    for _ in range(300):
        n = int(rng.integers(3, 8))
        x = rng.standard_normal(n)
        x[rng.choice(n, size=int(rng.integers(0, n)), replace=False)] = 0.0
        delta = [int(v) for v in rng.choice([-1, 1], size=n)]
        if np.prod(delta) != -1:
            delta[-1] = -delta[-1]
        bounds = n_bounds(x, FeedbackSignature(n, tuple(delta)), convention)
        assert (bounds.n_min, bounds.n_max) == _enumerate_bounds(x, delta, forward, negative)


def test_cone_index_range():
    assert [n_tilde(n) for n in (3, 4, 5, 6)] == [3, 3, 5, 5]
    assert [max_cone_index(n) for n in (3, 4, 5, 6)] == [2, 2, 3, 3]
    with pytest.raises(InvalidConeIndex):
        in_cone([1.0, 1.0, 1.0], 0, ConeSide.K_LOWER, SIG3)
    with pytest.raises(InvalidConeIndex):
        in_cone([1.0, 1.0, 1.0], 3, ConeSide.K_UPPER, SIG3)


def test_cone_membership():
    low = in_cone([1.0, 1.0, 1.0], 1, ConeSide.K_LOWER, SIG3)
    assert low.member and low.interior
    assert not in_cone([1.0, 1.0, 1.0], 1, ConeSide.K_UPPER, SIG3).member

    high = in_cone([1.0, -1.0, 1.0], 1, ConeSide.K_UPPER, SIG3)
    assert high.member and high.interior
    assert not in_cone([1.0, -1.0, 1.0], 1, ConeSide.K_LOWER, SIG3).member

    boundary = in_cone([1.0, 0.0, 1.0], 2, ConeSide.K_LOWER, SIG3)
    assert boundary.member and not boundary.interior

    origin = in_cone([0.0, 0.0, 0.0], 1, ConeSide.K_UPPER, SIG3)
    assert origin.member and not origin.interior


def test_n_profile_counts_increases_across_undefined_points():
    states = [[1.0, -1.0, 1.0], [1.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, -1.0, 1.0]]
    profile = n_profile(states, SIG3)
    assert profile.values == [3, 1, None, 3]
    assert profile.defined == 3
    assert profile.increases == 1
    assert profile.oddness_violations == 0
    assert not profile.nonincreasing


def test_n_drops_along_linear_mminus_flows():
    rng = np.random.default_rng(5)
    times = np.linspace(0.0, 2.0, 50)
    for _ in range(30):
        n = int(rng.integers(3, 7))
        matrix = random_mminus_matrix(n, rng)
        x0 = rng.standard_normal(n)
        profile = n_profile([expm(matrix * t) @ x0 for t in times], FeedbackSignature.normalized(n))
        assert profile.oddness_violations == 0
        assert profile.increases == 0

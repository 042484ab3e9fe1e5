from __future__ import annotations

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import block_diag, expm, subspace_angles

from apps.lab.errors import BlockSplit, GapViolation, InvalidConeIndex, InvalidParameter, SingularMatrix
from apps.lab.floquet import (
    decomposition_to_json,
    invariant_blocks,
    verify_block_nvalues,
    verify_cone_invariance,
    verify_cone_rank,
)
from apps.lab.lyapunov import ConeSide
from apps.lab.model import custom_field, linear_cyclic


def _linear_monodromy(n: int, t: float = 1.0) -> np.ndarray:
    field = linear_cyclic(n, 1.0, -1.0)
    return expm(t * field.jacobian(np.zeros(n)))


def test_linear_cyclic_blocks_have_closed_form_moduli():
    decomposition = invariant_blocks(_linear_monodromy(3))
    assert [block.dim for block in decomposition.blocks] == [2, 1]
    assert decomposition.gap_ok
    assert decomposition.blocks[0].mu == pytest.approx(np.exp(-0.5), abs=1e-10)
    assert decomposition.blocks[0].nu == pytest.approx(np.exp(-0.5), abs=1e-10)
    assert decomposition.blocks[1].mu == pytest.approx(np.exp(-2.0), abs=1e-10)

    line = np.array([[1.0], [-1.0], [1.0]]) / np.sqrt(3.0)
    assert np.max(subspace_angles(decomposition.blocks[1].basis, line)) < 1e-8


@pytest.mark.parametrize("n", [3, 4, 5])
def test_block_nvalues_follow_the_modulus_order(n):
    decomposition = invariant_blocks(_linear_monodromy(n))
    report = verify_block_nvalues(decomposition, linear_cyclic(n).signature, samples=50)
    assert report.failures == 0
    assert [b.expected for b in report.blocks] == [2 * i - 1 for i in range(1, len(decomposition.blocks) + 1)]


def test_block_bases_are_invariant():
    matrix = _linear_monodromy(4)
    for block in invariant_blocks(matrix).blocks:
        image = matrix @ block.basis
        residual = image - block.basis @ (block.basis.T @ image)
        assert np.linalg.norm(residual) < 1e-10


def test_gap_violation_carries_the_decomposition():
    matrix = np.diag([2.0, 1.0, 1.0])
    with pytest.raises(GapViolation) as excinfo:
        invariant_blocks(matrix)
    assert excinfo.value.decomposition is not None
    assert not excinfo.value.decomposition.gap_ok

    relaxed = invariant_blocks(matrix, raise_on_gap=False)
    assert relaxed.gaps == pytest.approx([0.0])


def test_block_split_and_singular_inputs():
    rotation = block_diag([[1.5]], [[0.0, -1.0], [1.0, 0.0]])
    with pytest.raises(BlockSplit):
        invariant_blocks(rotation)
    with pytest.raises(SingularMatrix):
        invariant_blocks(np.diag([1.0, 1.0, 0.0]))


def test_decomposition_json_is_serializable():
    payload = decomposition_to_json(invariant_blocks(_linear_monodromy(3)))
    text = json.dumps(payload)
    assert json.loads(text)["n_tilde"] == 3
    assert [block["dim"] for block in payload["blocks"]] == [2, 1]
    assert_allclose(np.asarray(payload["blocks"][0]["basis"]).shape, (3, 2))


def test_cone_invariance_in_both_time_directions():
    field = linear_cyclic(3, 1.0, -1.0)
    x0 = np.zeros(3)
    forward = verify_cone_invariance(field, x0, 1, 0.0, 1.0, samples=100)
    assert forward.failed == 0
    assert forward.drawn == 100
    assert forward.boundary_drawn == 25

    backward = verify_cone_invariance(field, x0, 1, 1.0, 0.0, samples=100, which=ConeSide.K_UPPER)
    assert backward.failed == 0
    assert backward.which == "K_upper"


def test_cone_invariance_argument_checks():
    field = linear_cyclic(3, 1.0, -1.0)
    with pytest.raises(InvalidParameter):
        verify_cone_invariance(field, np.zeros(3), 1, 1.0, 0.0)
    with pytest.raises(InvalidParameter):
        verify_cone_invariance(field, np.zeros(3), 1, 0.0, 1.0, which=ConeSide.K_UPPER)
    with pytest.raises(InvalidConeIndex):
        verify_cone_invariance(field, np.zeros(3), 3, 0.0, 1.0)
    with pytest.raises(InvalidParameter):
        verify_cone_invariance(custom_field(["x2", "-x1"]), np.zeros(2), 1, 0.0, 1.0)


def test_cone_rank_of_block_sums():
    field = linear_cyclic(3, 1.0, -1.0)
    decomposition = invariant_blocks(_linear_monodromy(3))
    first = verify_cone_rank(decomposition, 1, field.signature, samples=50)
    assert (first.lower_dim, first.upper_dim) == (2, 1)
    assert first.lower_failures == 0
    assert first.upper_failures == 0

    second = verify_cone_rank(decomposition, 2, field.signature, samples=50)
    assert (second.lower_dim, second.upper_dim) == (3, 0)
    assert second.lower_failures == 0

    with pytest.raises(InvalidConeIndex):
        verify_cone_rank(decomposition, 3, field.signature)

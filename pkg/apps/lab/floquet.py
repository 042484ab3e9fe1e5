"""解作用素の行列を、絶対値の帯で順序付けた不変ブロックに分解する。

各ブロックは 2 次元（n が奇数なら最後だけ 1 次元）で、ブロック i 上の
ベクトルは N = 2i−1 を持つはず。その検査と、錐の不変性・階数の検査もここに置く。
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.linalg import eigvals, schur

from apps.lab.errors import BlockSplit, DimensionMismatch, GapViolation, InvalidConeIndex, InvalidParameter, SingularMatrix
from apps.lab.integrate import variational_flow
from apps.lab.logging_utils import get_logger
from apps.lab.lyapunov import DEFAULT_CONVENTION, ConeSide, NConvention, in_cone, max_cone_index, n_bounds, n_tilde, n_value
from apps.lab.model.field import CyclicVectorField, FeedbackSignature
from packages.shared_schemas import (
    BlockCheck,
    BlockNValueReport,
    ConeInvarianceReport,
    ConeRankReport,
    IntegratorConfig,
    SumCheck,
)

logger = get_logger(__name__)

MAX_WITNESSES = 5


@dataclass
class FloquetBlock:
    basis: np.ndarray
    nu: float
    mu: float
    eigenvalues: np.ndarray
    defective: bool = False

    @property
    def dim(self) -> int:
        return int(self.basis.shape[1])


@dataclass
class FloquetDecomposition:
    n: int
    n_tilde: int
    blocks: List[FloquetBlock]
    gaps: List[float]
    gap_ok: bool
    fallback_blocks: List[int] = field(default_factory=list)

    def sum_basis(self, first: int, last: int) -> np.ndarray:
        """W_first ⊕ … ⊕ W_last の基底（1始まり、両端含む）。"""

        return np.hstack([self.blocks[k].basis for k in range(first - 1, last)])


def _group_sizes(n: int) -> List[int]:
    return [2] * (n // 2) + ([1] if n % 2 else [])


def _conjugation_closed(values: np.ndarray) -> bool:
    scale = max(1.0, float(np.max(np.abs(values)))) if values.size else 1.0
    tol = 1e-9 * scale
    for value in values:
        if abs(value.imag) <= tol:
            continue
        if not np.any(np.abs(values - np.conj(value)) <= tol):
            return False
    return True


def _band_basis(matrix: np.ndarray, low: float, high: float, size: int) -> Optional[np.ndarray]:
    def in_band(re: float, im: float) -> bool:
        modulus = abs(complex(re, im))
        return low < modulus < high

    _, q, sdim = schur(matrix, output="real", sort=in_band)
    if sdim != size:
        return None
    return q[:, :size]


def _is_defective(restricted: np.ndarray) -> bool:
    if restricted.shape[0] < 2:
        return False
    lam = eigvals(restricted)
    scale = max(1.0, float(np.max(np.abs(lam))))
    if abs(lam[0] - lam[1]) > 1e-8 * scale:
        return False
    return bool(np.linalg.norm(restricted - lam[0].real * np.eye(2)) > 1e-8 * scale)


def invariant_blocks(
    matrix: np.ndarray,
    gap_tol: float = 1e-8,
    raise_on_gap: bool = True,
) -> FloquetDecomposition:
    """絶対値の大きい順に 2,2,…,(1) の不変ブロックへ分解する。

    Args:
        matrix: 可逆な n×n 行列（解作用素）
        gap_tol: μ_1 に対する相対的なギャップ許容値
        raise_on_gap: True ならギャップ不足で GapViolation（分解結果を添付）

    Raises:
        SingularMatrix: 最小特異値が相対 1e−14 以下
        BlockSplit: 区切りが複素共役対を分断する
        GapViolation: ν_i − μ_{i+1} ≤ gap_tol·μ_1
    """

    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatch("正方行列が必要です", shape=list(matrix.shape))
    n = matrix.shape[0]
    singular_values = np.linalg.svd(matrix, compute_uv=False)
    if singular_values[-1] <= 1e-14 * singular_values[0]:
        raise SingularMatrix("行列が特異です", smin=float(singular_values[-1]), smax=float(singular_values[0]))

    spectrum = eigvals(matrix)
    order = np.argsort(-np.abs(spectrum), kind="stable")
    spectrum = spectrum[order]
    moduli = np.abs(spectrum)

    sizes = _group_sizes(n)
    bounds = np.cumsum([0] + sizes)
    cuts = [np.inf] + [0.5 * (moduli[k - 1] + moduli[k]) for k in bounds[1:-1]] + [0.0]

    blocks: List[FloquetBlock] = []
    fallback: List[int] = []
    for index, size in enumerate(sizes):
        group = spectrum[bounds[index] : bounds[index + 1]]
        if not _conjugation_closed(group):
            raise BlockSplit(
                f"ブロック {index + 1} の区切りが複素共役対を分断します",
                block=index + 1,
                eigenvalues=[[float(v.real), float(v.imag)] for v in spectrum],
            )
        basis = _band_basis(matrix, cuts[index + 1], cuts[index], size)
        if basis is None:
            _, q, _ = schur(matrix, output="real", sort=lambda re, im: abs(complex(re, im)) > cuts[index + 1])
            basis = q[:, bounds[index] : bounds[index + 1]]
            fallback.append(index + 1)
        restricted = basis.T @ matrix @ basis
        blocks.append(
            FloquetBlock(
                basis=basis,
                nu=float(np.min(np.abs(group))),
                mu=float(np.max(np.abs(group))),
                eigenvalues=group,
                defective=_is_defective(restricted),
            )
        )

    gaps = [blocks[i].nu - blocks[i + 1].mu for i in range(len(blocks) - 1)]
    gap_ok = all(gap > gap_tol * blocks[0].mu for gap in gaps)
    decomposition = FloquetDecomposition(n, n_tilde(n), blocks, gaps, gap_ok, fallback)
    logger.debug("invariant_blocks n=%d gaps=%s gap_ok=%s", n, gaps, gap_ok)
    if not gap_ok and raise_on_gap:
        raise GapViolation("ブロック間の絶対値ギャップが不足しています", decomposition=decomposition, gaps=gaps)
    return decomposition


def decomposition_to_json(decomposition: FloquetDecomposition) -> Dict[str, Any]:
    """基底は行優先のリストで書き出す。"""

    return {
        "n": decomposition.n,
        "n_tilde": decomposition.n_tilde,
        "blocks": [
            {
                "dim": block.dim,
                "basis": block.basis.tolist(),
                "nu": block.nu,
                "mu": block.mu,
                "eigenvalues": [[float(v.real), float(v.imag)] for v in block.eigenvalues],
                "defective": block.defective,
            }
            for block in decomposition.blocks
        ],
        "gaps": decomposition.gaps,
        "gap_ok": decomposition.gap_ok,
        "fallback_blocks": decomposition.fallback_blocks,
    }


def _random_in(basis: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    v = basis @ rng.standard_normal(basis.shape[1])
    return v / np.linalg.norm(v)


def verify_block_nvalues(
    decomposition: FloquetDecomposition,
    signature: FeedbackSignature,
    convention: NConvention = DEFAULT_CONVENTION,
    samples: int = 100,
    rng_seed: int = 0,
) -> BlockNValueReport:
    """W_i 上で N = 2i−1、W_i ⊕ … ⊕ W_k 上で 2i−1 ≤ N_m ≤ N_M ≤ 2k−1 を調べる。"""

    if signature.n != decomposition.n:
        raise DimensionMismatch("符号と分解の次元が一致しません", n=decomposition.n, signature=signature.n)
    rng = np.random.default_rng(rng_seed)
    count = len(decomposition.blocks)

    block_checks: List[BlockCheck] = []
    for i in range(1, count + 1):
        expected = 2 * i - 1
        passed, witnesses = 0, []
        for _ in range(samples):
            v = _random_in(decomposition.blocks[i - 1].basis, rng)
            result = n_value(v, signature, convention)
            if result.defined and result.value == expected:
                passed += 1
            elif len(witnesses) < MAX_WITNESSES:
                witnesses.append(v.tolist())
        block_checks.append(BlockCheck(block=i, expected=expected, passed=passed, failed=samples - passed, witnesses=witnesses))

    sum_checks: List[SumCheck] = []
    for i in range(1, count + 1):
        for k in range(i, count + 1):
            basis = decomposition.sum_basis(i, k)
            passed, witnesses = 0, []
            for _ in range(samples):
                v = _random_in(basis, rng)
                bounds = n_bounds(v, signature, convention)
                if bounds.n_min >= 2 * i - 1 and bounds.n_max <= 2 * k - 1:
                    passed += 1
                elif len(witnesses) < MAX_WITNESSES:
                    witnesses.append(v.tolist())
            sum_checks.append(SumCheck(first=i, last=k, passed=passed, failed=samples - passed, witnesses=witnesses))

    report = BlockNValueReport(convention=convention.name, blocks=block_checks, sums=sum_checks)
    if report.failures:
        logger.warning("Block N-values contradict the expected labels: %d failures under %s", report.failures, convention.name)
    return report


def _draw_cone_vector(
    n: int,
    h: int,
    which: ConeSide,
    signature: FeedbackSignature,
    convention: NConvention,
    rng: np.random.Generator,
    boundary: bool,
    max_attempts: int,
) -> Optional[np.ndarray]:
    for _ in range(max_attempts):
        v = rng.standard_normal(n)
        if boundary:
            v[rng.integers(n)] = 0.0
        v /= np.linalg.norm(v)
        membership = in_cone(v, h, which, signature, convention)
        if membership.member:
            return v
    return None


def verify_cone_invariance(
    field_: CyclicVectorField,
    x0: np.ndarray,
    h: int,
    s: float,
    t: float,
    samples: int = 1000,
    rng_seed: int = 0,
    which: ConeSide = ConeSide.K_LOWER,
    convention: NConvention = DEFAULT_CONVENTION,
    config: Optional[IntegratorConfig] = None,
    zero_tol: float = 0.0,
) -> ConeInvarianceReport:
    """錐の元を変分流で運び、像が錐の内部にあるかを調べる。

    K_LOWER は前向き（t > s）、K_UPPER は後ろ向き（t < s）。
    およそ4分の1は座標を1つ 0 にした境界ベクトル。
    """

    if field_.signature is None:
        raise InvalidParameter("錐の検査には符号付きの場が必要です", field=field_.name)
    which = ConeSide(which)
    if which == ConeSide.K_LOWER and not t > s:
        raise InvalidParameter("K_lower の検査には t > s が必要です", s=s, t=t)
    if which == ConeSide.K_UPPER and not t < s:
        raise InvalidParameter("K_upper の検査には t < s が必要です", s=s, t=t)
    if not 1 <= h <= max_cone_index(field_.n):
        raise InvalidConeIndex(f"h は 1..{max_cone_index(field_.n)} の範囲です", h=h, n=field_.n)

    operator = variational_flow(field_, x0, s, t, config)
    rng = np.random.default_rng(rng_seed)
    boundary_target = samples // 4
    drawn = boundary_drawn = passed = 0
    witnesses: List[List[float]] = []
    for index in range(samples):
        boundary = index < boundary_target
        v = _draw_cone_vector(field_.n, h, which, field_.signature, convention, rng, boundary, 200)
        if v is None:
            continue
        drawn += 1
        boundary_drawn += int(boundary)
        w = operator @ v
        if in_cone(w, h, which, field_.signature, convention, zero_tol).interior:
            passed += 1
        elif len(witnesses) < MAX_WITNESSES:
            witnesses.append(v.tolist())

    report = ConeInvarianceReport(
        h=h,
        which=which.value,
        drawn=drawn,
        boundary_drawn=boundary_drawn,
        passed=passed,
        failed=drawn - passed,
        witnesses=witnesses,
    )
    logger.info("cone invariance %s h=%d on %s: %d/%d interior", which.value, h, field_.name, passed, drawn)
    return report


def verify_cone_rank(
    decomposition: FloquetDecomposition,
    h: int,
    signature: FeedbackSignature,
    convention: NConvention = DEFAULT_CONVENTION,
    samples: int = 200,
    rng_seed: int = 0,
) -> ConeRankReport:
    """W_1⊕…⊕W_h が K_h に、W_{h+1}⊕… が K^h に入ることを調べる。"""

    count = len(decomposition.blocks)
    if not 1 <= h <= count:
        raise InvalidConeIndex(f"h は 1..{count} の範囲です", h=h, n=decomposition.n)
    rng = np.random.default_rng(rng_seed)

    lower_basis = decomposition.sum_basis(1, h)
    lower_failures = 0
    for _ in range(samples):
        if not in_cone(_random_in(lower_basis, rng), h, ConeSide.K_LOWER, signature, convention).member:
            lower_failures += 1

    upper_dim = 0
    upper_failures = 0
    if h < count:
        upper_basis = decomposition.sum_basis(h + 1, count)
        upper_dim = upper_basis.shape[1]
        for _ in range(samples):
            if not in_cone(_random_in(upper_basis, rng), h, ConeSide.K_UPPER, signature, convention).member:
                upper_failures += 1

    return ConeRankReport(
        h=h,
        lower_dim=int(lower_basis.shape[1]),
        lower_failures=lower_failures,
        upper_dim=int(upper_dim),
        upper_failures=upper_failures,
        samples=samples,
    )


__all__ = [
    "FloquetBlock",
    "FloquetDecomposition",
    "decomposition_to_json",
    "invariant_blocks",
    "verify_block_nvalues",
    "verify_cone_invariance",
    "verify_cone_rank",
]

"""𝓜⁻ / 𝓛⁻ / 𝓛⁻_d のサンプリング検査と、摂動の大きさを測る半ノルム。

いずれも有限個の点で調べた「証拠」であり、証明ではない。
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from apps.lab.errors import DimensionMismatch, EmptyCompactSet, InvalidParameter, LabError
from apps.lab.logging_utils import get_logger
from apps.lab.model.field import (
    Box,
    CyclicVectorField,
    FeedbackSignature,
    JacobianMode,
    MatrixBranch,
    cyclic_pattern_mask,
    normalizing_signs,
)
from packages.shared_schemas import ClassFailure, ClassReport, DissipativityRecord

logger = get_logger(__name__)

ANALYTIC_ZERO_TOL = 1e-10
DIFFERENCE_ZERO_TOL = 1e-6


@dataclass(frozen=True)
class MminusCheck:
    """check_mminus の結果。reason は不合格のときだけ入る。"""

    ok: bool
    reason: Optional[str] = None
    branch: Optional[MatrixBranch] = None
    pattern_ok: bool = True

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class SampleSpec:
    """内点のサンプリング方法。grid はセル中心、random は一様乱数。"""

    box: Optional[Box] = None
    count: int = 1000
    kind: Literal["grid", "random"] = "random"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.count <= 0:
            raise InvalidParameter("サンプル数は正である必要があります", count=self.count)
        if self.kind not in ("grid", "random"):
            raise InvalidParameter("kind は grid か random です", kind=self.kind)


def default_zero_tol(field: CyclicVectorField) -> float:
    if field.jacobian_mode == JacobianMode.ANALYTIC:
        return ANALYTIC_ZERO_TOL
    return DIFFERENCE_ZERO_TOL


def coupling_vectors(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(b, c) を返す。b_i = A[i, i+1], c_i = A[i+1, i]（添字は巡回）。"""

    n = matrix.shape[0]
    b = np.array([matrix[i, (i + 1) % n] for i in range(n)])
    c = np.array([matrix[(i + 1) % n, i] for i in range(n)])
    return b, c


def _strict_branch(values: np.ndarray) -> bool:
    return bool(np.all(values[:-1] > 0) and values[-1] < 0)


def check_mminus(
    matrix: np.ndarray,
    signature: Optional[FeedbackSignature] = None,
    zero_tol: float = ANALYTIC_ZERO_TOL,
) -> MminusCheck:
    """行列が 𝓜⁻ に入るかを判定する。

    符号が正規化されていない場合は D_σ A D_σ に共役してから調べる。
    理由の添字は1始まり。

    Args:
        matrix: n×n 行列
        signature: 辺の符号。None なら正規化済みとみなす
        zero_tol: パターン外成分と弱い不等式に使う許容値

    Returns:
        MminusCheck
    """

    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatch("正方行列が必要です", shape=list(matrix.shape))
    n = matrix.shape[0]
    if signature is not None:
        if signature.n != n:
            raise DimensionMismatch("行列と符号の次元が一致しません", n=n, signature=signature.n)
        if not signature.is_normalized:
            sigma = normalizing_signs(signature.delta).astype(float)
            matrix = sigma[:, None] * matrix * sigma[None, :]

    off_pattern = np.abs(np.where(cyclic_pattern_mask(n), 0.0, matrix))
    if np.any(off_pattern > zero_tol):
        i, j = np.unravel_index(int(np.argmax(off_pattern)), off_pattern.shape)
        return MminusCheck(False, f"off-pattern entry ({i + 1},{j + 1})", pattern_ok=False)

    b, c = coupling_vectors(matrix)
    for i in range(n):
        if b[i] * c[i] < -zero_tol:
            return MminusCheck(False, f"b{i + 1}c{i + 1} < 0")

    total = np.prod(b) + np.prod(c)
    scale = np.prod(np.abs(b)) + np.prod(np.abs(c))
    if scale == 0.0 or abs(total) <= zero_tol * scale:
        return MminusCheck(False, "∏b+∏c = 0")

    if _strict_branch(c):
        return MminusCheck(True, branch=MatrixBranch.SUBDIAGONAL_STRICT)
    if _strict_branch(b):
        return MminusCheck(True, branch=MatrixBranch.SUPERDIAGONAL_STRICT)
    return MminusCheck(False, "no strict sign branch")


def random_mminus_matrix(
    n: int,
    rng: np.random.Generator,
    low: float = 0.2,
    high: float = 2.0,
    coupled_fraction: float = 0.5,
) -> np.ndarray:
    """正規化符号の 𝓜⁻ 行列を乱数で作る（下副対角が強い符号側）。

    c_i は [low, high] の大きさで c_n だけ負。b_i は確率 coupled_fraction で
    c_i と同符号の値を持ち、それ以外は 0。対角は任意の符号。
    """

    if n < 3:
        raise InvalidParameter("n は3以上です", n=n)
    matrix = np.diag(rng.uniform(-high, high, size=n))
    signs = np.ones(n)
    signs[-1] = -1.0
    for i in range(n):
        j = (i + 1) % n
        matrix[j, i] = signs[i] * rng.uniform(low, high)
        if rng.random() < coupled_fraction:
            matrix[i, j] = signs[i] * rng.uniform(low, high)
    return matrix


def _resolve_box(field: CyclicVectorField, box: Optional[Box]) -> Box:
    box = box or field.sample_box
    if box is None:
        raise InvalidParameter("サンプリング用の箱が指定されていません", field=field.name)
    if box.n != field.n:
        raise DimensionMismatch("サンプリング箱の次元が一致しません", n=field.n, box=box.n)
    if not box.is_bounded:
        raise InvalidParameter("サンプリング箱は有界である必要があります", box=box.to_dict())
    return box


def sample_points(n: int, spec: SampleSpec, box: Box) -> np.ndarray:
    """箱の中の点を spec に従って並べる。"""

    lower = np.asarray(box.lower, dtype=float)
    upper = np.asarray(box.upper, dtype=float)
    if spec.kind == "grid":
        per_axis = max(2, int(round(spec.count ** (1.0 / n))))
        axes = [lower[k] + (np.arange(per_axis) + 0.5) * (upper[k] - lower[k]) / per_axis for k in range(n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    rng = np.random.default_rng(spec.seed)
    return rng.uniform(lower, upper, size=(spec.count, n))


def check_class(
    field: CyclicVectorField,
    spec: Optional[SampleSpec] = None,
    zero_tol: Optional[float] = None,
) -> ClassReport:
    """サンプル点すべてで check_mminus を評価し、ClassReport にまとめる。"""

    spec = spec or SampleSpec()
    box = _resolve_box(field, spec.box)
    tol = zero_tol if zero_tol is not None else default_zero_tol(field)
    points = sample_points(field.n, spec, box)

    failures: List[ClassFailure] = []
    branch_counts: Dict[str, int] = {}
    passed = 0
    pattern_failures = 0
    skipped = 0
    for x in points:
        if not field.domain.contains(x):
            skipped += 1
            continue
        try:
            matrix = field.jacobian(x)
        except LabError as exc:
            failures.append(ClassFailure(point=x.tolist(), reason=exc.code))
            continue
        result = check_mminus(matrix, field.signature, tol)
        if result.ok:
            passed += 1
            key = result.branch.value if result.branch else "none"
            branch_counts[key] = branch_counts.get(key, 0) + 1
        else:
            if not result.pattern_ok:
                pattern_failures += 1
            failures.append(ClassFailure(point=x.tolist(), reason=result.reason or "rejected"))

    evaluated = len(points) - skipped
    fraction = passed / evaluated if evaluated else 0.0
    report = ClassReport(
        samples=evaluated,
        skipped=skipped,
        in_c1bf=evaluated > 0 and pattern_failures == 0,
        in_mminus_samples=fraction,
        in_lminus=evaluated > 0 and passed == evaluated,
        branch_counts=branch_counts,
        failures=failures,
    )
    logger.info(
        "check_class %s: %d/%d samples in M-minus (%d skipped)", field.name, passed, evaluated, skipped
    )
    return report


def sphere_points(n: int, count: int, seed: int = 0) -> np.ndarray:
    """単位球面上の準一様点。Halton 列を正規分位点で写して正規化する。"""

    sampler = qmc.Halton(d=n, scramble=True, seed=seed)
    u = np.clip(sampler.random(count), 1e-12, 1 - 1e-12)
    g = ndtri(u)
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return g / norms


def check_dissipative(
    field: CyclicVectorField,
    radius: float,
    samples: int = 1000,
    seed: int = 0,
) -> DissipativityRecord:
    """|x| ∈ {R, 2R} 上で ⟨f(x),x⟩ < 0 を調べる。定義域外の点は数えて飛ばす。"""

    if radius <= 0:
        raise InvalidParameter("半径は正である必要があります", radius=radius)
    directions = sphere_points(field.n, samples, seed)
    half = samples // 2
    radii = np.where(np.arange(samples) < half, radius, 2.0 * radius)
    violations = 0
    skipped = 0
    margin = math.inf
    for u, rho in zip(directions, radii):
        x = rho * u
        if not field.domain.contains(x):
            skipped += 1
            continue
        inner = float(np.dot(field.evaluate(x), x))
        if inner >= 0.0:
            violations += 1
        margin = min(margin, -inner / rho)

    evaluated = samples - skipped
    record = DissipativityRecord(
        radius=float(radius),
        samples=samples,
        evaluated=evaluated,
        skipped_outside=skipped,
        witness_violations=violations,
        margin=margin if evaluated else None,
    )
    logger.info(
        "dissipativity %s at R=%g: %d violations over %d points (%d outside domain)",
        field.name,
        radius,
        violations,
        evaluated,
        skipped,
    )
    return record


def compact_samples(domain: Box, m: int, count: int = 512, seed: int = 0) -> np.ndarray:
    """K_m = {|x| ≤ m} ∩ {dist(x, Ωᶜ) ≥ 1/m} の準一様サンプル。"""

    if m < 1:
        raise InvalidParameter("m は1以上です", m=m)
    n = domain.n
    inset = 1.0 / m
    lower = np.maximum(np.asarray(domain.lower, dtype=float) + inset, -float(m))
    upper = np.minimum(np.asarray(domain.upper, dtype=float) - inset, float(m))
    if np.any(lower > upper):
        raise EmptyCompactSet("K_m が空です", m=m)
    sampler = qmc.Halton(d=n, scramble=True, seed=seed)
    points = qmc.scale(sampler.random(count), lower, upper) if np.all(lower < upper) else np.tile(lower, (count, 1))
    corners = np.vstack([lower, upper, 0.5 * (lower + upper)])
    points = np.vstack([points, corners])
    keep = np.linalg.norm(points, axis=1) <= m
    if not np.any(keep):
        raise EmptyCompactSet("K_m にサンプル点がありません", m=m)
    return points[keep]


def seminorm_pm(
    f: CyclicVectorField,
    g: CyclicVectorField,
    m: int,
    count: int = 512,
    seed: int = 0,
) -> float:
    """K_m 上の ‖f−g‖ + ‖Df−Dg‖ のサンプル最大値（真の sup の下界）。"""

    if f.n != g.n:
        raise DimensionMismatch("比較する場の次元が一致しません", f=f.n, g=g.n)
    points = compact_samples(f.domain, m, count, seed)
    best = 0.0
    for x in points:
        value = np.linalg.norm(f.evaluate(x) - g.evaluate(x)) + np.linalg.norm(f.jacobian(x) - g.jacobian(x), 2)
        best = max(best, float(value))
    return best


def metric_d(
    f: CyclicVectorField,
    g: CyclicVectorField,
    k_max: int = 8,
    count: int = 256,
    seed: int = 0,
) -> float:
    """切り詰めた距離 Σ_{k≤k_max} 2^{−k} p_k/(1+p_k)。空の K_k は飛ばす。"""

    total = 0.0
    for k in range(1, k_max + 1):
        try:
            p_k = seminorm_pm(f, g, k, count, seed)
        except EmptyCompactSet:
            logger.debug("K_%d is empty; skipped in metric", k)
            continue
        total += 2.0 ** (-k) * p_k / (1.0 + p_k)
    return total


__all__ = [
    "ANALYTIC_ZERO_TOL",
    "DIFFERENCE_ZERO_TOL",
    "MminusCheck",
    "SampleSpec",
    "check_class",
    "check_dissipative",
    "check_mminus",
    "compact_samples",
    "coupling_vectors",
    "default_zero_tol",
    "metric_d",
    "random_mminus_matrix",
    "sample_points",
    "seminorm_pm",
    "sphere_points",
]

"""巡回最近接構造を持つベクトル場と、その定義域・符号パターン。"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from apps.lab.errors import DimensionMismatch, DomainViolation, InvalidParameter, NonFiniteValue

ArrayFunc = Callable[[np.ndarray], np.ndarray]


class JacobianMode(str, Enum):
    ANALYTIC = "analytic"
    CENTRAL_DIFFERENCE = "central_difference"


class MatrixBranch(str, Enum):
    """𝓜⁻ の2つの強い符号条件のどちらを満たすか。"""

    SUBDIAGONAL_STRICT = "subdiagonal_strict"
    SUPERDIAGONAL_STRICT = "superdiagonal_strict"


@dataclass(frozen=True)
class Box:
    """軸平行な開いた箱。各軸の端は ±inf でもよい。"""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.lower) != len(self.upper):
            raise DimensionMismatch("lower と upper の次元が一致しません", lower=len(self.lower), upper=len(self.upper))

    @classmethod
    def whole_space(cls, n: int) -> "Box":
        return cls(tuple([-math.inf] * n), tuple([math.inf] * n))

    @classmethod
    def positive_orthant(cls, n: int) -> "Box":
        return cls(tuple([0.0] * n), tuple([math.inf] * n))

    @classmethod
    def cube(cls, n: int, low: float, high: float) -> "Box":
        return cls(tuple([float(low)] * n), tuple([float(high)] * n))

    @property
    def n(self) -> int:
        return len(self.lower)

    @property
    def is_empty(self) -> bool:
        return any(lo >= hi for lo, hi in zip(self.lower, self.upper))

    @property
    def is_bounded(self) -> bool:
        return all(math.isfinite(v) for v in self.lower + self.upper)

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x > np.asarray(self.lower)) and np.all(x < np.asarray(self.upper)))

    def distance_to_complement(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        gaps = np.concatenate([x - np.asarray(self.lower), np.asarray(self.upper) - x])
        return float(np.min(gaps))

    def intersect(self, other: "Box") -> "Box":
        lower = tuple(max(a, b) for a, b in zip(self.lower, other.lower))
        upper = tuple(min(a, b) for a, b in zip(self.upper, other.upper))
        return Box(lower, upper)

    def flipped(self, sigma: Sequence[int]) -> "Box":
        """座標変換 y = σ⊙x による像。"""

        lower, upper = [], []
        for lo, hi, s in zip(self.lower, self.upper, sigma):
            if s > 0:
                lower.append(lo)
                upper.append(hi)
            else:
                lower.append(-hi)
                upper.append(-lo)
        return Box(tuple(lower), tuple(upper))

    def to_dict(self) -> Dict[str, Any]:
        def _encode(values: Tuple[float, ...]) -> list:
            return [v if math.isfinite(v) else None for v in values]

        return {"lower": _encode(self.lower), "upper": _encode(self.upper)}


@dataclass(frozen=True)
class FeedbackSignature:
    """辺の符号 δ。辺 (i, i+1) が δ_i を、辺 (n, 1) が δ_n を持つ。"""

    n: int
    delta: Tuple[int, ...]
    branch: Optional[MatrixBranch] = None

    def __post_init__(self) -> None:
        if self.n < 3:
            raise InvalidParameter("巡回フィードバックは n ≥ 3 が必要です", n=self.n)
        if len(self.delta) != self.n:
            raise DimensionMismatch("delta の長さが n と一致しません", n=self.n, delta=list(self.delta))
        if any(d not in (-1, 1) for d in self.delta):
            raise InvalidParameter("delta の成分は ±1 のみです", delta=list(self.delta))
        if int(np.prod(self.delta)) != -1:
            raise InvalidParameter("負のフィードバックには Δ = ∏δ_i = −1 が必要です", delta=list(self.delta))

    @classmethod
    def normalized(cls, n: int, branch: Optional[MatrixBranch] = None) -> "FeedbackSignature":
        return cls(n, tuple([1] * (n - 1) + [-1]), branch)

    @property
    def is_normalized(self) -> bool:
        return self.delta == tuple([1] * (self.n - 1) + [-1])

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "delta": list(self.delta), "branch": self.branch.value if self.branch else None}


def normalizing_signs(delta: Sequence[int]) -> np.ndarray:
    """y = σ⊙x で符号を (+1,…,+1,−1) に揃える σ を返す。

    Args:
        delta: 辺の符号（積が −1 であること）

    Returns:
        σ ∈ {±1}ⁿ（σ_1 = +1）
    """

    delta = [int(d) for d in delta]
    if int(np.prod(delta)) != -1:
        raise InvalidParameter("Δ ≠ −1 の符号は正規化できません", delta=delta)
    sigma = np.ones(len(delta), dtype=int)
    for i in range(len(delta) - 1):
        sigma[i + 1] = delta[i] * sigma[i]
    return sigma


def cyclic_pattern_mask(n: int) -> np.ndarray:
    """対角・上下副対角・両隅が True の行列。"""

    mask = np.eye(n, dtype=bool)
    for i in range(n):
        mask[i, (i + 1) % n] = True
        mask[(i + 1) % n, i] = True
    return mask


@dataclass(frozen=True)
class CyclicVectorField:
    """ẋ = f(x)。成分 i は (x_{i−1}, x_i, x_{i+1}) だけを読む想定。

    rhs/jac は状態ベクトル全体を受け取るベクトル化された関数として持つ。
    構築後は不変で、スレッド間で共有してよい。
    """

    name: str
    n: int
    rhs: ArrayFunc
    domain: Box
    signature: Optional[FeedbackSignature] = None
    jac: Optional[ArrayFunc] = None
    jacobian_mode: JacobianMode = JacobianMode.ANALYTIC
    fd_step: float = 1e-6
    sample_box: Optional[Box] = None
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.domain.n != self.n:
            raise DimensionMismatch("定義域の次元が n と一致しません", n=self.n, domain=self.domain.n)
        if self.signature is not None and self.signature.n != self.n:
            raise DimensionMismatch("符号の次元が n と一致しません", n=self.n, signature=self.signature.n)
        if self.fd_step <= 0:
            raise InvalidParameter("差分刻みは正である必要があります", fd_step=self.fd_step)
        if self.jac is None and self.jacobian_mode == JacobianMode.ANALYTIC:
            object.__setattr__(self, "jacobian_mode", JacobianMode.CENTRAL_DIFFERENCE)

    def _as_state(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DimensionMismatch("状態ベクトルの長さが n と一致しません", n=self.n, shape=list(x.shape))
        if not self.domain.contains(x):
            raise DomainViolation("状態が定義域の外にあります", x=x.tolist(), field=self.name)
        return x

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """f(x) を返す。"""

        x = self._as_state(x)
        value = np.asarray(self.rhs(x), dtype=float)
        if not np.all(np.isfinite(value)):
            raise NonFiniteValue("f(x) に NaN/inf が含まれます", x=x.tolist(), field=self.name)
        return value

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """Df(x) を返す。差分モードでは座標ごとの対称差分を使う。"""

        x = self._as_state(x)
        if self.jacobian_mode == JacobianMode.ANALYTIC and self.jac is not None:
            matrix = np.array(self.jac(x), dtype=float)
        else:
            matrix = self._central_difference(x)
        if not np.all(np.isfinite(matrix)):
            raise NonFiniteValue("Df(x) に NaN/inf が含まれます", x=x.tolist(), field=self.name)
        return matrix

    def raw_jacobian(self, x: np.ndarray) -> np.ndarray:
        """定義域の検査をしない Df(x)。積分器の試行段で使う。"""

        x = np.asarray(x, dtype=float)
        if self.jacobian_mode == JacobianMode.ANALYTIC and self.jac is not None:
            return np.asarray(self.jac(x), dtype=float)
        return self._central_difference(x)

    def _central_difference(self, x: np.ndarray) -> np.ndarray:
        matrix = np.empty((self.n, self.n))
        room = self.domain.distance_to_complement(x)
        for j in range(self.n):
            h = self.fd_step * max(1.0, abs(x[j]))
            if 0.0 < room <= h:
                h = 0.5 * room
            forward = x.copy()
            backward = x.copy()
            forward[j] += h
            backward[j] -= h
            matrix[:, j] = (np.asarray(self.rhs(forward)) - np.asarray(self.rhs(backward))) / (2.0 * h)
        return matrix

    def with_jacobian_mode(self, mode: JacobianMode, fd_step: Optional[float] = None) -> "CyclicVectorField":
        return replace(self, jacobian_mode=mode, fd_step=fd_step if fd_step is not None else self.fd_step)

    def describe(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "n": self.n,
            "params": self.params,
            "domain": self.domain.to_dict(),
            "signature": self.signature.to_dict() if self.signature else None,
            "jacobian_mode": self.jacobian_mode.value,
        }


def add_fields(
    base: CyclicVectorField,
    increment: CyclicVectorField,
    scale: float = 1.0,
    name: Optional[str] = None,
) -> CyclicVectorField:
    """f + scale·g を作る。定義域と符号は base を引き継ぐ。"""

    if increment.n != base.n:
        raise DimensionMismatch("足し合わせる場の次元が一致しません", base=base.n, increment=increment.n)
    scale = float(scale)

    def rhs(x: np.ndarray) -> np.ndarray:
        return np.asarray(base.rhs(x)) + scale * np.asarray(increment.rhs(x))

    jac: Optional[ArrayFunc] = None
    mode = JacobianMode.CENTRAL_DIFFERENCE
    if base.jac is not None and increment.jac is not None:

        def jac(x: np.ndarray) -> np.ndarray:
            return np.asarray(base.jac(x)) + scale * np.asarray(increment.jac(x))

        mode = base.jacobian_mode

    return CyclicVectorField(
        name=name or f"{base.name}+{scale:g}*{increment.name}",
        n=base.n,
        rhs=rhs,
        domain=base.domain,
        signature=base.signature,
        jac=jac,
        jacobian_mode=mode,
        fd_step=base.fd_step,
        sample_box=base.sample_box,
        params={"base": base.describe(), "increment": increment.describe(), "scale": scale},
    )


def conjugate_field(field_: CyclicVectorField, sigma: Sequence[int]) -> CyclicVectorField:
    """g(y) = σ⊙f(σ⊙y)。ヤコビアンは D_σ Df(σ⊙y) D_σ になる。"""

    sigma_arr = np.asarray(sigma, dtype=float)
    if sigma_arr.shape != (field_.n,) or not np.all(np.abs(sigma_arr) == 1.0):
        raise InvalidParameter("σ は長さ n の ±1 ベクトルです", sigma=list(sigma))

    def rhs(y: np.ndarray) -> np.ndarray:
        return sigma_arr * np.asarray(field_.rhs(sigma_arr * y))

    jac: Optional[ArrayFunc] = None
    if field_.jac is not None:

        def jac(y: np.ndarray) -> np.ndarray:
            return sigma_arr[:, None] * np.asarray(field_.jac(sigma_arr * y)) * sigma_arr[None, :]

    signature = None
    if field_.signature is not None:
        s = [int(v) for v in sigma_arr]
        n = field_.n
        delta = tuple(field_.signature.delta[i] * s[i] * s[(i + 1) % n] for i in range(n))
        signature = FeedbackSignature(n, delta, field_.signature.branch)

    return CyclicVectorField(
        name=f"{field_.name}[conjugated]",
        n=field_.n,
        rhs=rhs,
        domain=field_.domain.flipped(sigma_arr),
        signature=signature,
        jac=jac,
        jacobian_mode=field_.jacobian_mode,
        fd_step=field_.fd_step,
        sample_box=field_.sample_box.flipped(sigma_arr) if field_.sample_box else None,
        params={"base": field_.describe(), "sigma": [int(v) for v in sigma_arr]},
    )


__all__ = [
    "Box",
    "CyclicVectorField",
    "FeedbackSignature",
    "JacobianMode",
    "MatrixBranch",
    "add_fields",
    "conjugate_field",
    "cyclic_pattern_mask",
    "normalizing_signs",
]

"""整数値リアプノフ関数 N と、その近傍での最小・最大値、入れ子の錐。

N(x) は δ で重み付けした隣接積の符号を数える。どの辺に δ_i を載せるか、
どちらの符号を数えるかは NConvention で切り替える。
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterable, Optional, Sequence

import numpy as np

from apps.lab.errors import ConfigError, InvalidConeIndex
from apps.lab.logging_utils import get_logger
from apps.lab.model.field import FeedbackSignature
from packages.shared_schemas import CONVENTION_ALIASES, NProfile

logger = get_logger(__name__)


class EdgePairing(str, Enum):
    EDGE_FORWARD = "edge_forward"
    EDGE_BACKWARD = "edge_backward"


class CountedSign(str, Enum):
    NEGATIVE = "negative"
    POSITIVE = "positive"


class ConeSide(str, Enum):
    K_LOWER = "K_lower"
    K_UPPER = "K_upper"


@dataclass(frozen=True)
class NConvention:
    pairing: EdgePairing = EdgePairing.EDGE_FORWARD
    counted_sign: CountedSign = CountedSign.NEGATIVE

    @classmethod
    def from_name(cls, name: str) -> "NConvention":
        """設定キー n_convention の値から規約を作る。別名も受け付ける。"""

        try:
            canonical = CONVENTION_ALIASES[name]
        except KeyError as exc:
            raise ConfigError(f"未知の n_convention です: {name}", known=sorted(CONVENTION_ALIASES)) from exc
        pairing, sign = canonical.rsplit("_", 1)
        return cls(EdgePairing(pairing), CountedSign(sign))

    @property
    def name(self) -> str:
        return f"{self.pairing.value}_{self.counted_sign.value}"

    def expected_parity(self, n: int) -> int:
        """定義域上で N が取る値の偶奇。負の数え方なら奇数。"""

        if self.counted_sign == CountedSign.NEGATIVE:
            return 1
        return (n - 1) % 2

    def to_dict(self) -> Dict[str, str]:
        return {"pairing": self.pairing.value, "counted_sign": self.counted_sign.value, "name": self.name}


DEFAULT_CONVENTION = NConvention()


@dataclass(frozen=True)
class NValue:
    value: int
    defined: bool
    convention: str


@dataclass(frozen=True)
class NBounds:
    n_min: int
    n_max: int
    in_regular_set: bool
    zero_vector: bool
    convention: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_min": self.n_min,
            "n_max": self.n_max,
            "in_regular_set": self.in_regular_set,
            "zero_vector": self.zero_vector,
            "convention": self.convention,
        }


@dataclass(frozen=True)
class ConeMembership:
    member: bool
    interior: bool


def _edge_products(x: np.ndarray, delta: np.ndarray, convention: NConvention) -> np.ndarray:
    # 最後の軸が座標。先頭の軸はまとめて評価するための束
    shift = -1 if convention.pairing == EdgePairing.EDGE_FORWARD else 1
    return delta * x * np.roll(x, shift, axis=-1)


def _count(products: np.ndarray, convention: NConvention) -> np.ndarray:
    if convention.counted_sign == CountedSign.NEGATIVE:
        return np.sum(products < 0, axis=-1)
    return np.sum(products > 0, axis=-1)


def n_value(
    x: Sequence[float],
    signature: FeedbackSignature,
    convention: NConvention = DEFAULT_CONVENTION,
    zero_tol: float = 0.0,
) -> NValue:
    """N(x)。いずれかの座標が 0（|x_i| ≤ zero_tol）なら defined = False。"""

    x = np.asarray(x, dtype=float)
    x = np.where(np.abs(x) <= zero_tol, 0.0, x)
    delta = np.asarray(signature.delta, dtype=float)
    value = int(_count(_edge_products(x, delta, convention), convention))
    return NValue(value=value, defined=bool(np.all(x != 0.0)), convention=convention.name)


def n_bounds(
    x: Sequence[float],
    signature: FeedbackSignature,
    convention: NConvention = DEFAULT_CONVENTION,
    zero_tol: float = 0.0,
) -> NBounds:
    """N_m(x), N_M(x) を零座標の符号割り当てを全列挙して求める。"""

    x = np.asarray(x, dtype=float)
    signs = np.sign(np.where(np.abs(x) <= zero_tol, 0.0, x))
    zeros = np.flatnonzero(signs == 0)
    delta = np.asarray(signature.delta, dtype=float)

    if zeros.size == 0:
        value = int(_count(_edge_products(signs, delta, convention), convention))
        return NBounds(value, value, True, False, convention.name)

    assignments = np.array(list(itertools.product((-1.0, 1.0), repeat=zeros.size)))
    candidates = np.tile(signs, (assignments.shape[0], 1))
    candidates[:, zeros] = assignments
    values = _count(_edge_products(candidates, delta, convention), convention)
    n_min, n_max = int(values.min()), int(values.max())
    return NBounds(n_min, n_max, n_min == n_max, zeros.size == x.size, convention.name)


def n_tilde(n: int) -> int:
    return n if n % 2 == 1 else n - 1


def max_cone_index(n: int) -> int:
    return (n_tilde(n) + 1) // 2


def in_cone(
    x: Sequence[float],
    h: int,
    which: ConeSide,
    signature: FeedbackSignature,
    convention: NConvention = DEFAULT_CONVENTION,
    zero_tol: float = 0.0,
) -> ConeMembership:
    """K_h（K_LOWER）または K^h（K_UPPER）への所属と内部判定。"""

    x = np.asarray(x, dtype=float)
    if not 1 <= h <= max_cone_index(x.size):
        raise InvalidConeIndex(f"h は 1..{max_cone_index(x.size)} の範囲です", h=h, n=x.size)
    bounds = n_bounds(x, signature, convention, zero_tol)
    if bounds.zero_vector:
        return ConeMembership(member=True, interior=False)
    level = 2 * h - 1
    if ConeSide(which) == ConeSide.K_LOWER:
        member = bounds.n_max <= level
    else:
        member = bounds.n_min > level
    return ConeMembership(member=member, interior=member and bounds.in_regular_set)


def n_profile(
    states: Iterable[Sequence[float]],
    signature: FeedbackSignature,
    convention: NConvention = DEFAULT_CONVENTION,
    zero_tol: float = 0.0,
) -> NProfile:
    """経路に沿った N の列と、偶奇の破れ・増加の回数。"""

    values: list[Optional[int]] = []
    oddness = 0
    increases = 0
    previous: Optional[int] = None
    parity = convention.expected_parity(signature.n)
    for state in states:
        result = n_value(state, signature, convention, zero_tol)
        if not result.defined:
            values.append(None)
            continue
        values.append(result.value)
        if result.value % 2 != parity:
            oddness += 1
        if previous is not None and result.value > previous:
            increases += 1
        previous = result.value

    profile = NProfile(
        convention=convention.name,
        values=values,
        defined=sum(v is not None for v in values),
        oddness_violations=oddness,
        increases=increases,
    )
    if oddness or increases:
        logger.warning(
            "N profile under %s: %d parity violations, %d increases", convention.name, oddness, increases
        )
    return profile


def difference_profile(
    traj_a: Any,
    traj_b: Any,
    times: Sequence[float],
    signature: FeedbackSignature,
    convention: NConvention = DEFAULT_CONVENTION,
    zero_tol: float = 0.0,
) -> NProfile:
    """同じ時刻列で標本化した2解の差に沿った N の列。

    traj_a, traj_b は ``sample(times)`` を持つ軌道（integrate.Trajectory）。
    """

    diff = np.asarray(traj_a.sample(times)) - np.asarray(traj_b.sample(times))
    return n_profile(diff, signature, convention, zero_tol)


__all__ = [
    "ConeMembership",
    "ConeSide",
    "CountedSign",
    "DEFAULT_CONVENTION",
    "EdgePairing",
    "NBounds",
    "NConvention",
    "NValue",
    "difference_profile",
    "in_cone",
    "max_cone_index",
    "n_bounds",
    "n_profile",
    "n_tilde",
    "n_value",
]

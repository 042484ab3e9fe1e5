"""解析対象の具体的なモデル群。

いずれも巡回最近接構造を持ち、解析ヤコビアン付きで構築する。
"""

from __future__ import annotations

from typing import Any, Callable, Dict

import numpy as np
from scipy.optimize import brentq

from apps.lab.errors import InvalidParameter
from apps.lab.model.field import Box, CyclicVectorField, FeedbackSignature, MatrixBranch


def _require(condition: bool, detail: str, **context: Any) -> None:
    if not condition:
        raise InvalidParameter(detail, **context)


def linear_cyclic(n: int = 3, c: float = 1.0, a: float = -1.0) -> CyclicVectorField:
    """ẋ = Ax。A は対角 a、下副対角 c、右上隅 −c。"""

    _require(n >= 3, "n は3以上です", n=n)
    _require(c > 0, "c は正である必要があります", c=c)
    matrix = a * np.eye(n)
    for i in range(n - 1):
        matrix[i + 1, i] = c
    matrix[0, n - 1] = -c
    matrix.setflags(write=False)

    return CyclicVectorField(
        name="linear_cyclic",
        n=n,
        rhs=lambda x: matrix @ x,
        jac=lambda x: matrix.copy(),
        domain=Box.whole_space(n),
        signature=FeedbackSignature.normalized(n, MatrixBranch.SUBDIAGONAL_STRICT),
        sample_box=Box.cube(n, -2.0, 2.0),
        params={"n": n, "c": float(c), "a": float(a)},
    )


def goodwin(p: float = 2.0, b: float = 1.0) -> CyclicVectorField:
    """3段の Goodwin 振動子。開いた正象限上で定義する。"""

    _require(p >= 1, "Hill 係数 p は1以上です", p=p)
    _require(b > 0, "分解率 b は正である必要があります", b=b)

    def rhs(x: np.ndarray) -> np.ndarray:
        return np.array(
            [
                1.0 / (1.0 + x[2] ** p) - b * x[0],
                x[0] - b * x[1],
                x[1] - b * x[2],
            ]
        )

    def jac(x: np.ndarray) -> np.ndarray:
        hill_slope = -p * x[2] ** (p - 1.0) / (1.0 + x[2] ** p) ** 2
        return np.array(
            [
                [-b, 0.0, hill_slope],
                [1.0, -b, 0.0],
                [0.0, 1.0, -b],
            ]
        )

    return CyclicVectorField(
        name="goodwin",
        n=3,
        rhs=rhs,
        jac=jac,
        domain=Box.positive_orthant(3),
        signature=FeedbackSignature.normalized(3, MatrixBranch.SUBDIAGONAL_STRICT),
        sample_box=Box.cube(3, 0.05, 5.0),
        params={"p": float(p), "b": float(b)},
    )


def goodwin_equilibrium_x3(p: float, b: float) -> float:
    """b³x(1+x^p) = 1 の正の根。平衡点の第3成分 x₃ にあたる。"""

    _require(b > 0 and p >= 1, "p ≥ 1, b > 0 が必要です", p=p, b=b)
    upper = 1.0 / b**3
    return float(brentq(lambda x: b**3 * x * (1.0 + x**p) - 1.0, 0.0, upper, xtol=1e-15, rtol=1e-14))


def goodwin_equilibrium(p: float, b: float) -> np.ndarray:
    """Goodwin 振動子の唯一の平衡点 (b²x, bx, x)。x は goodwin_equilibrium_x3。"""

    x = goodwin_equilibrium_x3(p, b)
    return np.array([b**2 * x, b * x, x])


def goodwin_loop_gain(p: float, b: float) -> float:
    """平衡点でのループゲイン g/b³ = p(1 − b³x*)。8 を超えると不安定。"""

    x_star = goodwin_equilibrium_x3(p, b)
    return p * (1.0 - b**3 * x_star)


def repressilator(alpha: float = 216.0, beta: float = 5.0, p: float = 2.0, leak: float = 0.0) -> CyclicVectorField:
    """mRNA/タンパク質の3遺伝子抑制ループ。変数順は (m1, p1, m2, p2, m3, p3)。"""

    _require(alpha > 0, "alpha は正である必要があります", alpha=alpha)
    _require(beta > 0, "beta は正である必要があります", beta=beta)
    _require(p >= 1, "Hill 係数 p は1以上です", p=p)
    _require(leak >= 0, "leak は非負です", leak=leak)

    def rhs(x: np.ndarray) -> np.ndarray:
        out = np.empty(6)
        for g in range(3):
            m, prot = 2 * g, 2 * g + 1
            repressor = x[(m - 1) % 6]
            out[m] = -x[m] + alpha / (1.0 + repressor**p) + leak
            out[prot] = -beta * (x[prot] - x[m])
        return out

    def jac(x: np.ndarray) -> np.ndarray:
        matrix = np.zeros((6, 6))
        for g in range(3):
            m, prot = 2 * g, 2 * g + 1
            r = (m - 1) % 6
            matrix[m, m] = -1.0
            matrix[m, r] = -alpha * p * x[r] ** (p - 1.0) / (1.0 + x[r] ** p) ** 2
            matrix[prot, prot] = -beta
            matrix[prot, m] = beta
        return matrix

    return CyclicVectorField(
        name="repressilator",
        n=6,
        rhs=rhs,
        jac=jac,
        domain=Box.positive_orthant(6),
        signature=FeedbackSignature(6, (1, -1, 1, -1, 1, -1), MatrixBranch.SUBDIAGONAL_STRICT),
        sample_box=Box.cube(6, 0.05, 100.0),
        params={"alpha": float(alpha), "beta": float(beta), "p": float(p), "leak": float(leak)},
    )


def bidirectional_synthetic(
    n: int = 3,
    forward: float = 1.0,
    backward: float = 1.0,
    wrap: float = 0.25,
    gain: float = 1.0,
    saturation: float = 1.0,
) -> CyclicVectorField:
    """両方向結合の巡回場 f(x) = Kx + gain·x − saturation·x³。

    K は下副対角 forward、上副対角 backward、両隅 −wrap を持ち、
    対角は各行の非対角和を打ち消す。したがって K(1,…,1) = 0。
    """

    _require(n >= 3, "n は3以上です", n=n)
    _require(forward * backward >= 0, "b1c1 < 0", forward=forward, backward=backward)
    _require(forward > 0 and backward > 0, "forward と backward は正である必要があります", forward=forward, backward=backward)
    _require(wrap > 0, "wrap は正である必要があります", wrap=wrap)
    _require(saturation > 0, "saturation は正である必要があります", saturation=saturation)

    coupling = np.zeros((n, n))
    for i in range(n - 1):
        coupling[i + 1, i] = forward
        coupling[i, i + 1] = backward
    coupling[n - 1, 0] = -wrap
    coupling[0, n - 1] = -wrap
    coupling -= np.diag(coupling.sum(axis=1))
    coupling.setflags(write=False)

    def rhs(x: np.ndarray) -> np.ndarray:
        return coupling @ x + gain * x - saturation * x**3

    def jac(x: np.ndarray) -> np.ndarray:
        return coupling + np.diag(gain - 3.0 * saturation * x**2)

    return CyclicVectorField(
        name="bidirectional_synthetic",
        n=n,
        rhs=rhs,
        jac=jac,
        domain=Box.whole_space(n),
        signature=FeedbackSignature.normalized(n, MatrixBranch.SUBDIAGONAL_STRICT),
        sample_box=Box.cube(n, -3.0, 3.0),
        params={
            "n": n,
            "forward": float(forward),
            "backward": float(backward),
            "wrap": float(wrap),
            "gain": float(gain),
            "saturation": float(saturation),
        },
    )


ZOO: Dict[str, Callable[..., CyclicVectorField]] = {
    "linear_cyclic": linear_cyclic,
    "goodwin": goodwin,
    "repressilator": repressilator,
    "bidirectional_synthetic": bidirectional_synthetic,
}


def build_zoo_model(name: str, params: Dict[str, Any]) -> CyclicVectorField:
    """名前とパラメータから zoo モデルを作る。"""

    try:
        factory = ZOO[name]
    except KeyError as exc:
        raise InvalidParameter(f"未知のモデル名です: {name}", known=sorted(ZOO)) from exc
    try:
        return factory(**params)
    except TypeError as exc:
        raise InvalidParameter(f"{name} のパラメータが不正です: {exc}", params=params) from exc


__all__ = [
    "ZOO",
    "bidirectional_synthetic",
    "build_zoo_model",
    "goodwin",
    "goodwin_equilibrium",
    "goodwin_equilibrium_x3",
    "goodwin_loop_gain",
    "linear_cyclic",
    "repressilator",
]

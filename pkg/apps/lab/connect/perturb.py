"""構成的な摂動：局所バンプ、随伴解との積分、平衡点を双曲にするずらし。"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import solve

from apps.lab.critical import Equilibrium, classify_equilibrium
from apps.lab.errors import DimensionMismatch, GridMismatch, InvalidParameter
from apps.lab.integrate import Trajectory, variational_flow
from apps.lab.logging_utils import get_logger
from apps.lab.model.classes import metric_d
from apps.lab.model.field import Box, CyclicVectorField
from packages.shared_schemas import IntegratorConfig, PerturbationResult

logger = get_logger(__name__)


def _xi(y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """ξ(y) = e^{−1/y}（y > 0）、それ以外 0。導関数も返す。"""

    y = np.asarray(y, dtype=float)
    positive = y > 0.0
    safe = np.where(positive, y, 1.0)
    value = np.where(positive, np.exp(-1.0 / safe), 0.0)
    slope = np.where(positive, np.exp(-1.0 / safe - 2.0 * np.log(safe)), 0.0)
    return value, slope


def bump_value(d: float, r: float) -> Tuple[float, float]:
    """ψ(d) = ξ(r−d)/(ξ(r−d)+ξ(d−r/2)) と dψ/dd。"""

    a, da = _xi(r - d)
    b, db = _xi(d - 0.5 * r)
    total = a + b
    value = float(a / total)
    # d/dd: a' = −ξ'(r−d), b' = ξ'(d−r/2)
    slope = float((-da * b - a * db) / total**2)
    return value, slope


def bump_perturbation(
    n: int,
    j: int,
    center: Sequence[float],
    r: float,
    coupled: bool = True,
) -> CyclicVectorField:
    """成分 j（1始まり）だけが非零の C^∞ バンプ場 g。

    d = |x_j − a_j|² + |x_{j+1} − a_{j+1}|²（coupled=False なら第1項だけ）として
    g_j = ψ(d)。d ≤ r/2 で 1、d ≥ r で 0。

    Raises:
        InvalidParameter: r ≤ 0 または j が範囲外
    """

    if r <= 0:
        raise InvalidParameter("r は正である必要があります", r=r)
    if not 1 <= j <= n:
        raise InvalidParameter(f"j は 1..{n} の範囲です", j=j)
    center_arr = np.asarray(center, dtype=float)
    if center_arr.ndim != 1 or not (2 if coupled else 1) <= center_arr.size <= 2:
        raise InvalidParameter("center は (a_j, a_{j+1}) です", center=list(center))
    row = j - 1
    cols = [row, j % n] if coupled else [row]
    anchor = center_arr[: len(cols)]

    def distance(x: np.ndarray) -> float:
        return float(np.sum((x[cols] - anchor) ** 2))

    def rhs(x: np.ndarray) -> np.ndarray:
        out = np.zeros(n)
        out[row] = bump_value(distance(np.asarray(x, dtype=float)), r)[0]
        return out

    def jac(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        matrix = np.zeros((n, n))
        slope = bump_value(distance(x), r)[1]
        for col, a in zip(cols, anchor):
            matrix[row, col] = slope * 2.0 * (x[col] - a)
        return matrix

    return CyclicVectorField(
        name=f"bump_j{j}",
        n=n,
        rhs=rhs,
        jac=jac,
        domain=Box.whole_space(n),
        params={"j": j, "center": anchor.tolist(), "r": float(r), "coupled": coupled},
    )


def adjoint_solution(
    field_: CyclicVectorField,
    trajectory: Trajectory,
    times: Sequence[float],
    xi0: Sequence[float],
    config: Optional[IntegratorConfig] = None,
) -> np.ndarray:
    """ψ' = −Df(c(t))ᵀψ の解を times 上で返す。ψ(times[0]) = ξ₀。

    隣り合う時刻の間の基本解行列 T で ψ_{k+1} = T^{−T} ψ_k と進める。
    """

    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise GridMismatch("times は狭義単調増加である必要があります")
    psi = np.empty((len(times), field_.n))
    psi[0] = np.asarray(xi0, dtype=float)
    for k in range(len(times) - 1):
        step = variational_flow(field_, trajectory.state_at(times[k]), times[k], times[k + 1], config)
        psi[k + 1] = solve(step.T, psi[k])
    return psi


def functional_transversality_integral(
    field_: CyclicVectorField,
    trajectory: Trajectory,
    phi: np.ndarray,
    times: Sequence[float],
    h: CyclicVectorField,
) -> float:
    """∫⟨φ(σ), h(c(σ))⟩dσ を times 上の複合 Simpson 則で求める。

    Raises:
        GridMismatch: φ の形が (len(times), n) でない、または times が窓をはみ出す
    """

    times = np.asarray(times, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (len(times), field_.n) or h.n != field_.n:
        raise GridMismatch("φ の標本格子が軌道と一致しません", phi=list(phi.shape), times=len(times), n=field_.n)
    slack = 1e-9 * max(1.0, float(np.max(np.abs(times))))
    if times[0] < trajectory.times[0] - slack or times[-1] > trajectory.times[-1] + slack:
        raise GridMismatch("times が軌道の窓をはみ出しています")
    states = trajectory.sample(times)
    integrand = np.einsum("ij,ij->i", phi, np.array([h.rhs(x) for x in states]))
    return float(simpson(integrand, x=times))


def perturb_to_hyperbolic(field_: CyclicVectorField, e: Sequence[float], alpha: float) -> CyclicVectorField:
    """f(x) + α(x − e)。e での固有値は線形場なら正確に α だけずれる。"""

    point = np.asarray(e, dtype=float)
    if point.shape != (field_.n,):
        raise DimensionMismatch("e の長さが n と一致しません", n=field_.n)
    alpha = float(alpha)
    if alpha == 0.0:
        return field_
    base_jac = field_.jac

    def rhs(x: np.ndarray) -> np.ndarray:
        return np.asarray(field_.rhs(x)) + alpha * (np.asarray(x) - point)

    def jac(x: np.ndarray) -> np.ndarray:
        return np.asarray(base_jac(x)) + alpha * np.eye(field_.n)

    return CyclicVectorField(
        name=f"{field_.name}+{alpha:g}(x-e)",
        n=field_.n,
        rhs=rhs,
        jac=jac if base_jac is not None else None,
        domain=field_.domain,
        signature=field_.signature,
        jacobian_mode=field_.jacobian_mode,
        fd_step=field_.fd_step,
        sample_box=field_.sample_box,
        params={"base": field_.describe(), "alpha": alpha, "e": point.tolist()},
    )


def constant_shift(field_: CyclicVectorField, lam: Sequence[float]) -> CyclicVectorField:
    """f(x) + λ。ヤコビアンは変わらない。"""

    shift = np.asarray(lam, dtype=float)
    if shift.shape != (field_.n,):
        raise DimensionMismatch("λ の長さが n と一致しません", n=field_.n)

    def rhs(x: np.ndarray) -> np.ndarray:
        return np.asarray(field_.rhs(x)) + shift

    return CyclicVectorField(
        name=f"{field_.name}+lambda",
        n=field_.n,
        rhs=rhs,
        jac=field_.jac,
        domain=field_.domain,
        signature=field_.signature,
        jacobian_mode=field_.jacobian_mode,
        fd_step=field_.fd_step,
        sample_box=field_.sample_box,
        params={"base": field_.describe(), "lambda": shift.tolist()},
    )


def hyperbolic_shift_search(
    field_: CyclicVectorField,
    e: Equilibrium,
    alpha: float = 1e-3,
    tol_spectrum: float = 1e-8,
    with_distance: bool = True,
) -> List[PerturbationResult]:
    """α と −α の両方で f + α(x−e) を作り、e での双曲性を調べる。"""

    results: List[PerturbationResult] = []
    for signed in (alpha, -alpha):
        shifted = perturb_to_hyperbolic(field_, e.x, signed)
        classified = classify_equilibrium(shifted, e.x, tol_spectrum)
        distance = metric_d(field_, shifted) if with_distance else 0.0
        results.append(
            PerturbationResult(
                alpha=signed,
                hyperbolic=classified.hyperbolic,
                morse_index=classified.morse_index,
                eigenvalues=[(float(v.real), float(v.imag)) for v in classified.eigenvalues],
                distance=distance,
            )
        )
    logger.info(
        "hyperbolic_shift_search at %s: hyperbolic for %s",
        e.x.tolist(),
        [r.alpha for r in results if r.hyperbolic],
    )
    return results


__all__ = [
    "adjoint_solution",
    "bump_perturbation",
    "bump_value",
    "constant_shift",
    "functional_transversality_integral",
    "hyperbolic_shift_search",
    "perturb_to_hyperbolic",
]

"""連結軌道に沿った離散指数二分性のフレームと射影、Green 関数による有界解。

窓 [−Nτ, Nτ] を刻み τ の作用素列 T_k = S((k+1)τ, kτ) に分け、
不安定フレームは −Nτ から前向きに、安定フレームは +Nτ から後ろ向きに
（T_k の逆で）運び、毎ステップ薄い QR で正規直交に戻す。
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import qr, schur, solve

from apps.lab.connect.orbits import ConnectingOrbit, InvariantSide, local_invariant_basis
from apps.lab.critical import Equilibrium
from apps.lab.errors import DimensionMismatch, FrameCollapse, InvalidParameter, LabError, NoDichotomy, WindowTooShort
from apps.lab.integrate import Trajectory, variational_flow
from apps.lab.logging_utils import get_logger
from apps.lab.model.field import CyclicVectorField
from apps.lab.workers import parallel_map
from packages.shared_schemas import IntegratorConfig, ProjectionDeviation, RoughnessReport

logger = get_logger(__name__)

COLLAPSE_TOL = 1e-12
ORTHONORMALITY_TOL = 1e-10
CONDITION_LIMIT = 1e12


@dataclass
class DichotomyFrames:
    tau: float
    n_trunc: int
    u_frame: np.ndarray
    s_frame: np.ndarray
    p_minus: np.ndarray
    p_plus: np.ndarray
    oblique: bool
    orthonormality_residual: float

    @property
    def n(self) -> int:
        return int(self.u_frame.shape[0])


@dataclass
class OperatorDichotomy:
    """作用素列の各時刻での安定射影 P(k)（k = 0..L）。"""

    projections: List[np.ndarray]
    unstable_dim: int


@dataclass
class GreenSolution:
    y: np.ndarray
    residual: float


def default_tau(field_: CyclicVectorField, trajectory: Trajectory, samples: int = 200) -> float:
    """‖S((k+1)τ, kτ)‖ とその逆が 1e2 を超えない刻み。"""

    times = np.linspace(trajectory.times[0], trajectory.times[-1], samples)
    bound = max(float(np.linalg.norm(field_.raw_jacobian(x), 2)) for x in trajectory.sample(times))
    if bound <= 0.0:
        return 1.0
    return min(1.0, math.log(100.0) / bound)


def step_operators(
    field_: CyclicVectorField,
    trajectory: Trajectory,
    tau: float,
    n_trunc: int,
    config: Optional[IntegratorConfig] = None,
    workers: int = 1,
) -> List[np.ndarray]:
    """T_k = S((k+1)τ, kτ)（k = −N..N−1）を並べたリスト。"""

    if tau <= 0 or n_trunc < 1:
        raise InvalidParameter("τ と N_trunc は正である必要があります", tau=tau, n_trunc=n_trunc)
    reach = n_trunc * tau
    slack = 1e-9 * max(1.0, reach)
    if trajectory.times[0] > -reach + slack or trajectory.times[-1] < reach - slack:
        raise WindowTooShort(
            "軌道の窓が [−Nτ, Nτ] を覆っていません",
            window=[float(trajectory.times[0]), float(trajectory.times[-1])],
            required=reach,
        )

    def operator(k: int) -> np.ndarray:
        start = k * tau
        return variational_flow(field_, trajectory.state_at(start), start, start + tau, config)

    return parallel_map(operator, list(range(-n_trunc, n_trunc)), workers)


def _orthonormalize(matrix: np.ndarray) -> np.ndarray:
    if matrix.shape[1] == 0:
        return matrix
    singular = np.linalg.svd(matrix, compute_uv=False)
    if singular[-1] <= COLLAPSE_TOL * singular[0]:
        raise FrameCollapse("フレームがランク落ちしました", smallest=float(singular[-1]), largest=float(singular[0]))
    q, r = qr(matrix, mode="economic")
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def _residual(frame: np.ndarray) -> float:
    if frame.shape[1] == 0:
        return 0.0
    return float(np.max(np.abs(frame.T @ frame - np.eye(frame.shape[1]))))


def propagate_frames(
    operators: Sequence[np.ndarray],
    u_init: np.ndarray,
    s_init: np.ndarray,
) -> Tuple[List[np.ndarray], List[np.ndarray], float]:
    """全ステップのフレーム列を返す。u は k = 0..L、s も k = 0..L の順。"""

    u_frames = [_orthonormalize(np.asarray(u_init, dtype=float))]
    for matrix in operators:
        u_frames.append(_orthonormalize(matrix @ u_frames[-1]))
    s_frames = [_orthonormalize(np.asarray(s_init, dtype=float))]
    for matrix in reversed(operators):
        s_frames.append(_orthonormalize(solve(matrix, s_frames[-1]) if s_frames[-1].shape[1] else s_frames[-1]))
    s_frames.reverse()
    residual = max(max(_residual(u) for u in u_frames), max(_residual(s) for s in s_frames))
    if residual > ORTHONORMALITY_TOL:
        logger.warning("Frame orthonormality residual %.3e exceeds %.0e", residual, ORTHONORMALITY_TOL)
    return u_frames, s_frames, residual


def projections_at(u_frame: np.ndarray, s_frame: np.ndarray) -> Tuple[np.ndarray, np.ndarray, bool]:
    """(P⁻, P⁺, oblique)。[U | S] が正則なら U 上・S に沿った斜交射影、そうでなければ直交射影。"""

    n = u_frame.shape[0]
    k, m = u_frame.shape[1], s_frame.shape[1]
    if k + m == n:
        basis = np.hstack([u_frame, s_frame])
        if np.linalg.cond(basis) < CONDITION_LIMIT:
            inverse = np.linalg.inv(basis)
            p_minus = u_frame @ inverse[:k]
            return p_minus, p_minus.copy(), True
    p_minus = u_frame @ u_frame.T
    p_plus = np.eye(n) - s_frame @ s_frame.T
    return p_minus, p_plus, False


def frames_from_operators(
    operators: Sequence[np.ndarray],
    u_init: np.ndarray,
    s_init: np.ndarray,
    tau: float = 1.0,
) -> DichotomyFrames:
    """作用素列と両端の初期フレームから、中央（ステップ 0）のフレームと射影を作る。"""

    if len(operators) % 2:
        raise InvalidParameter("作用素の個数は 2N である必要があります", count=len(operators))
    u_frames, s_frames, residual = propagate_frames(operators, u_init, s_init)
    middle = len(operators) // 2
    u0, s0 = u_frames[middle], s_frames[middle]
    p_minus, p_plus, oblique = projections_at(u0, s0)
    if not oblique:
        logger.info("Frames at step 0 are not complementary; using orthogonal projections")
    return DichotomyFrames(
        tau=tau,
        n_trunc=middle,
        u_frame=u0,
        s_frame=s0,
        p_minus=p_minus,
        p_plus=p_plus,
        oblique=oblique,
        orthonormality_residual=residual,
    )


def dichotomy_frames(
    field_: CyclicVectorField,
    orbit: ConnectingOrbit,
    tau: Optional[float] = None,
    n_trunc: Optional[int] = None,
    config: Optional[IntegratorConfig] = None,
    workers: int = 1,
) -> DichotomyFrames:
    """平衡点どうしを結ぶ連結軌道に沿って U・S フレームを作る。

    Raises:
        WindowTooShort: 窓が [−Nτ, Nτ] を覆わない
        FrameCollapse: 伝播中にランク落ちした
    """

    if not isinstance(orbit.e_plus, Equilibrium):
        raise InvalidParameter("フレームは平衡点を両端に持つ軌道だけで作れます")
    tau = tau or default_tau(field_, orbit.trajectory)
    half = orbit.half_window
    if n_trunc is None:
        n_trunc = int(math.floor(half / tau * (1.0 + 1e-12)))
    if n_trunc < 1:
        raise WindowTooShort("窓が1ステップより短いです", half_window=half, tau=tau)

    u_init = local_invariant_basis(field_, orbit.e_minus, InvariantSide.UNSTABLE)
    s_init = local_invariant_basis(field_, orbit.e_plus, InvariantSide.STABLE)
    operators = step_operators(field_, orbit.trajectory, tau, n_trunc, config, workers)
    frames = frames_from_operators(operators, u_init, s_init, tau)
    logger.info(
        "dichotomy_frames %s: tau=%.4f, N=%d, dims U=%d S=%d, oblique=%s",
        field_.name,
        tau,
        n_trunc,
        frames.u_frame.shape[1],
        frames.s_frame.shape[1],
        frames.oblique,
    )
    return frames


def _invariant_basis(matrix: np.ndarray, sort: str) -> np.ndarray:
    _, vectors, dim = schur(matrix, output="real", sort=sort)
    return vectors[:, :dim]


def dichotomy_projections(
    operators: Sequence[np.ndarray],
    unstable_dim: Optional[int] = None,
    unit_tol: float = 1e-10,
) -> OperatorDichotomy:
    """作用素列の両端のスペクトルからフレームを起こし、各時刻の安定射影を作る。

    Raises:
        NoDichotomy: 単位円上の固有値、次元の不一致、または補空間にならないフレーム
    """

    operators = [np.asarray(m, dtype=float) for m in operators]
    if not operators:
        raise NoDichotomy("作用素列が空です")
    n = operators[0].shape[0]
    for end in (operators[0], operators[-1]):
        moduli = np.abs(np.linalg.eigvals(end))
        if np.any(np.abs(moduli - 1.0) <= unit_tol):
            raise NoDichotomy("単位円上の固有値があります", moduli=sorted(moduli.tolist()))
    u_init = _invariant_basis(operators[0], "ouc")
    s_init = _invariant_basis(operators[-1], "iuc")
    if unstable_dim is not None and u_init.shape[1] != unstable_dim:
        raise NoDichotomy("不安定次元が基準と一致しません", expected=unstable_dim, found=u_init.shape[1])
    if u_init.shape[1] + s_init.shape[1] != n:
        raise NoDichotomy("両端の不安定・安定次元の和が n になりません", unstable=u_init.shape[1], stable=s_init.shape[1])

    u_frames, s_frames, _ = propagate_frames(operators, u_init, s_init)
    projections: List[np.ndarray] = []
    k = u_init.shape[1]
    for u, s in zip(u_frames, s_frames):
        basis = np.hstack([u, s])
        if np.linalg.cond(basis) >= CONDITION_LIMIT:
            raise NoDichotomy("フレームが補空間になっていません", step=len(projections))
        projections.append(s @ np.linalg.inv(basis)[k:])
    return OperatorDichotomy(projections=projections, unstable_dim=k)


def green_function_solve(
    operators: Sequence[np.ndarray],
    projections: Sequence[np.ndarray],
    rhs: np.ndarray,
    invariance_tol: float = 1e-8,
) -> GreenSolution:
    """Y(n+1) = T_n Y(n) + f(n) の有界解を切り詰めた Green 関数の和で求める。

    projections は安定射影 P(k)（k = 0..L）。和は安定成分を前向き、
    不安定成分を後ろ向きの漸化式で評価する。

    Raises:
        NoDichotomy: 射影が冪等でない、または作用素列で不変でない
    """

    operators = [np.asarray(m, dtype=float) for m in operators]
    projections = [np.asarray(p, dtype=float) for p in projections]
    rhs = np.asarray(rhs, dtype=float)
    length = len(operators)
    if length == 0:
        raise DimensionMismatch("作用素列が空です")
    n = operators[0].shape[0]
    if len(projections) != length + 1 or rhs.shape != (length, n):
        raise DimensionMismatch(
            "作用素・射影・右辺の長さが一致しません",
            operators=length,
            projections=len(projections),
            rhs=list(rhs.shape),
        )
    identity = np.eye(n)
    for k, (matrix, p_now, p_next) in enumerate(zip(operators, projections[:-1], projections[1:])):
        if np.linalg.norm(p_now @ p_now - p_now) > invariance_tol * (1.0 + np.linalg.norm(p_now)):
            raise NoDichotomy("射影が冪等ではありません", step=k)
        if np.linalg.norm(p_next @ matrix - matrix @ p_now) > invariance_tol * (1.0 + np.linalg.norm(matrix)):
            raise NoDichotomy("射影が作用素列で不変ではありません", step=k)

    stable = np.zeros((length + 1, n))
    for k in range(length):
        stable[k + 1] = operators[k] @ stable[k] + projections[k + 1] @ rhs[k]
    unstable = np.zeros((length + 1, n))
    for k in range(length - 1, -1, -1):
        unstable[k] = solve(operators[k], unstable[k + 1] - (identity - projections[k + 1]) @ rhs[k])

    y = stable + unstable
    defects = [np.linalg.norm(y[k + 1] - operators[k] @ y[k] - rhs[k]) for k in range(length)]
    return GreenSolution(y=y, residual=float(max(defects)))


def dichotomy_roughness_probe(
    operators: Sequence[np.ndarray],
    scales: Sequence[float],
    seed: int = 0,
) -> RoughnessReport:
    """各 T_n にノルム ε のランダム行列を足し、射影の最大ずれを ε ごとに測る。

    二分性が壊れた ε は collapsed として記録し、回帰から外す。
    """

    operators = [np.asarray(m, dtype=float) for m in operators]
    base = dichotomy_projections(operators)
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((len(operators),) + operators[0].shape)
    directions /= np.linalg.norm(directions, ord=2, axis=(1, 2))[:, None, None]

    entries: List[ProjectionDeviation] = []
    for epsilon in scales:
        epsilon = float(epsilon)
        if epsilon == 0.0:
            entries.append(ProjectionDeviation(epsilon=0.0, deviation=0.0))
            continue
        perturbed = [m + epsilon * d for m, d in zip(operators, directions)]
        try:
            moved = dichotomy_projections(perturbed, base.unstable_dim)
        except LabError as exc:
            logger.info("Dichotomy lost at epsilon=%g: %s", epsilon, exc.code)
            entries.append(ProjectionDeviation(epsilon=epsilon, collapsed=True, reason=exc.code))
            continue
        except np.linalg.LinAlgError:
            entries.append(ProjectionDeviation(epsilon=epsilon, collapsed=True, reason="singular_operator"))
            continue
        deviation = max(float(np.linalg.norm(a - b, 2)) for a, b in zip(moved.projections, base.projections))
        entries.append(ProjectionDeviation(epsilon=epsilon, deviation=deviation))

    usable = [e for e in entries if not e.collapsed and e.epsilon > 0 and e.deviation and e.deviation > 0]
    slope = None
    if len(usable) >= 2:
        slope = float(np.polyfit(np.log([e.epsilon for e in usable]), np.log([e.deviation for e in usable]), 1)[0])
    logger.info("dichotomy_roughness_probe: %d scales, slope=%s", len(entries), slope)
    return RoughnessReport(entries=entries, slope=slope)


def frames_to_json(frames: DichotomyFrames) -> Dict[str, Any]:
    """行優先の入れ子リストで書き出す。"""

    return {
        "tau": frames.tau,
        "n_trunc": frames.n_trunc,
        "u_frame": frames.u_frame.tolist(),
        "s_frame": frames.s_frame.tolist(),
        "p_minus": frames.p_minus.tolist(),
        "p_plus": frames.p_plus.tolist(),
        "oblique": frames.oblique,
        "orthonormality_residual": frames.orthonormality_residual,
    }


__all__ = [
    "DichotomyFrames",
    "GreenSolution",
    "OperatorDichotomy",
    "default_tau",
    "dichotomy_frames",
    "dichotomy_projections",
    "dichotomy_roughness_probe",
    "frames_from_operators",
    "frames_to_json",
    "green_function_solve",
    "projections_at",
    "propagate_frames",
    "step_operators",
]

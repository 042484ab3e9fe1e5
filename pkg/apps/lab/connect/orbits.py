"""双曲臨界要素の間の連結軌道を射撃法で求める。"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.linalg import eigvals, expm, schur
from scipy.optimize import minimize_scalar

from apps.lab.critical import Equilibrium, PeriodicOrbit
from apps.lab.errors import InvalidParameter, LabError, NotHyperbolic
from apps.lab.integrate import Trajectory, TrajectoryStatus, integrate
from apps.lab.logging_utils import get_logger
from apps.lab.lyapunov import DEFAULT_CONVENTION, NConvention, n_profile
from apps.lab.model.classes import sphere_points
from apps.lab.model.field import CyclicVectorField
from apps.lab.workers import parallel_map
from packages.shared_schemas import IntegratorConfig, NProfile

logger = get_logger(__name__)

Endpoint = Union[Equilibrium, PeriodicOrbit]

SETTLE_TIME = 10.0
PROFILE_SAMPLES = 512


class InvariantSide(str, Enum):
    UNSTABLE = "unstable"
    STABLE = "stable"


@dataclass
class ConnectingOrbit:
    """窓 [−T, T] 上の連結軌道 c(t) と、端点の指数・N(ċ) の漸近レベル。"""

    trajectory: Trajectory
    e_minus: Equilibrium
    e_plus: Endpoint
    i_minus: int
    i_plus: int
    h_minus: Optional[int]
    h_plus: Optional[int]
    convergence_errors: Tuple[float, float]
    profile: Optional[NProfile] = None

    @property
    def half_window(self) -> float:
        return 0.5 * self.trajectory.span

    @property
    def homoindexed(self) -> bool:
        return isinstance(self.e_plus, Equilibrium) and self.i_minus == self.i_plus

    def to_dict(self) -> Dict[str, Any]:
        return {
            "e_minus": self.e_minus.x.tolist(),
            "e_plus": self.e_plus.to_dict(),
            "i_minus": self.i_minus,
            "i_plus": self.i_plus,
            "h_minus": self.h_minus,
            "h_plus": self.h_plus,
            "convergence_errors": list(self.convergence_errors),
            "window": [float(self.trajectory.times[0]), float(self.trajectory.times[-1])],
        }


def local_invariant_basis(
    field_: CyclicVectorField,
    e: Union[Equilibrium, np.ndarray],
    which: InvariantSide,
    tol_spectrum: float = 1e-8,
) -> np.ndarray:
    """Df(e) の Re > 0（UNSTABLE）または Re < 0（STABLE）に対応する実不変部分空間の正規直交基底。

    並べ替えた実 Schur 分解の先頭列を使う。指数 0 の不安定側は n×0 行列になる。

    Raises:
        NotHyperbolic: 虚軸上の固有値がある
    """

    x = e.x if isinstance(e, Equilibrium) else np.asarray(e, dtype=float)
    matrix = field_.jacobian(x)
    spectrum = eigvals(matrix)
    if np.any(np.abs(spectrum.real) <= tol_spectrum):
        raise NotHyperbolic("平衡点が双曲的ではありません", x=x.tolist(), min_abs_real=float(np.min(np.abs(spectrum.real))))
    sort = "rhp" if InvariantSide(which) == InvariantSide.UNSTABLE else "lhp"
    _, vectors, dim = schur(matrix, output="real", sort=sort)
    return vectors[:, :dim]


def unit_directions(dim: int, count: int, seed: int = 0) -> np.ndarray:
    """dim 次元の単位ベクトルを count 個（1次元では ±1 の2個）。"""

    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        angles = 2.0 * np.pi * np.arange(count) / count
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return sphere_points(dim, count, seed)


def distance_to_orbit(orbit: PeriodicOrbit, x: np.ndarray) -> float:
    """周期軌道までの距離。最近標本の前後で密出力を使って詰める。"""

    samples = orbit.samples
    gaps = np.linalg.norm(samples.states - x, axis=1)
    k = int(np.argmin(gaps))
    coarse = float(gaps[k])
    if samples.dense is None:
        return coarse
    times = samples.times
    lo = float(times[k - 1]) if k > 0 else 0.0
    hi = float(times[k + 1]) if k + 1 < len(times) else orbit.period
    if hi <= lo:
        return coarse
    dense = samples.dense
    result = minimize_scalar(
        lambda t: float(np.linalg.norm(dense(t) - x)), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}
    )
    return min(coarse, float(result.fun))


def _distance_function(target: Endpoint) -> Callable[[np.ndarray], float]:
    if isinstance(target, Equilibrium):
        point = target.x
        return lambda y: float(np.linalg.norm(y - point))
    return lambda y: distance_to_orbit(target, y)


def h_levels(
    field_: CyclicVectorField,
    trajectory: Trajectory,
    convention: NConvention = DEFAULT_CONVENTION,
    samples: int = PROFILE_SAMPLES,
) -> Tuple[Optional[int], Optional[int], NProfile]:
    """窓に沿った N(ċ(t)) の列と、両端のレベル h = (N + 1)/2。

    ċ は変分方程式の解なので N は単調に下がる。増加は警告として残る。
    """

    if field_.signature is None:
        raise InvalidParameter("符号 δ の無い場では N を評価できません", field=field_.name)
    times = np.linspace(trajectory.times[0], trajectory.times[-1], samples)
    derivatives = [np.asarray(field_.rhs(x), dtype=float) for x in trajectory.sample(times)]
    profile = n_profile(derivatives, field_.signature, convention)
    defined = [v for v in profile.values if v is not None]
    if not defined:
        return None, None, profile
    return (defined[0] + 1) // 2, (defined[-1] + 1) // 2, profile


def _linear_branch(
    matrix: np.ndarray,
    frame: np.ndarray,
    origin: np.ndarray,
    offset: np.ndarray,
) -> Callable[[np.ndarray], np.ndarray]:
    """e⁻ の不安定部分空間内の線形解 e⁻ + U exp(A_u t) U^T offset（t ≤ 0）。"""

    restricted = frame.T @ matrix @ frame
    start = frame.T @ offset

    def evaluate(times: np.ndarray) -> np.ndarray:
        return np.stack([origin + frame @ (expm(restricted * t) @ start) for t in np.atleast_1d(times)], axis=1)

    return evaluate


def _stitch(
    backward: Callable[[np.ndarray], np.ndarray],
    forward: Trajectory,
    t_back: float,
    n: int,
    backward_samples: int = 200,
) -> Trajectory:
    t_front = forward.end_time
    shift = 0.5 * (t_front - t_back)
    forward_dense = forward.dense

    def dense(t: Union[float, np.ndarray]) -> np.ndarray:
        t_arr = np.asarray(t, dtype=float)
        local = np.atleast_1d(t_arr) + shift
        out = np.empty((n, local.size))
        negative = local < 0.0
        if np.any(negative):
            out[:, negative] = backward(local[negative])
        if np.any(~negative):
            out[:, ~negative] = np.asarray(forward_dense(local[~negative])).reshape(n, -1)
        return out[:, 0] if t_arr.ndim == 0 else out

    back_times = np.linspace(-t_back, 0.0, backward_samples, endpoint=False)
    back_states = backward(back_times).T if t_back > 0 else np.empty((0, n))
    if t_back <= 0:
        back_times = np.empty(0)
    times = np.concatenate([back_times, forward.times]) - shift
    states = np.concatenate([back_states, forward.states])
    return Trajectory(times, states, status=TrajectoryStatus.COMPLETED, dense=dense)


def _backward_time(
    branch: Callable[[np.ndarray], np.ndarray],
    origin: np.ndarray,
    conv_tol: float,
    horizon: float,
    step: float = 0.25,
) -> Optional[float]:
    t = 0.0
    while t < horizon:
        t += step
        if float(np.linalg.norm(branch(np.array([-t]))[:, 0] - origin)) <= conv_tol:
            return t
    return None


def shoot_connection(
    field_: CyclicVectorField,
    e_minus: Equilibrium,
    e_plus: Endpoint,
    radius: Optional[float] = None,
    directions: int = 64,
    horizon: float = 1000.0,
    conv_tol: float = 1e-6,
    tube_tol: float = 1e-4,
    config: Optional[IntegratorConfig] = None,
    convention: NConvention = DEFAULT_CONVENTION,
    seed: int = 0,
    workers: int = 1,
) -> List[ConnectingOrbit]:
    """e⁻ の不安定部分空間の方向から撃ち出し、e⁺ に収束する軌道を集める。

    外れた方向は数えるだけで例外にはしない。空リストも有効な結果。
    """

    config = config or IntegratorConfig()
    if not e_minus.hyperbolic or (isinstance(e_plus, Equilibrium) and not e_plus.hyperbolic):
        logger.warning("shoot_connection on %s: endpoint is not hyperbolic, nothing attempted", field_.name)
        return []
    if isinstance(e_plus, PeriodicOrbit) and not e_plus.hyperbolic:
        logger.warning("shoot_connection on %s: target orbit is not hyperbolic, nothing attempted", field_.name)
        return []
    frame = local_invariant_basis(field_, e_minus, InvariantSide.UNSTABLE)
    if frame.shape[1] == 0:
        logger.info("shoot_connection on %s: source has index 0, no unstable directions", field_.name)
        return []

    origin = e_minus.x
    radius = radius or 1e-4 * max(1.0, float(np.linalg.norm(origin)))
    matrix = field_.jacobian(origin)
    distance = _distance_function(e_plus)
    tolerance = conv_tol if isinstance(e_plus, Equilibrium) else tube_tol
    units = unit_directions(frame.shape[1], directions, seed)

    def shoot(u: np.ndarray) -> Optional[ConnectingOrbit]:
        offset = radius * (frame @ u)
        x0 = origin + offset
        if not field_.domain.contains(x0):
            return None
        forward = integrate(
            field_, x0, 0.0, horizon, config, stop_when=lambda t, y: distance(y) <= tolerance, raise_on_failure=False
        )
        if forward.status != TrajectoryStatus.STOPPED or forward.dense is None:
            return None
        try:
            settle = integrate(field_, forward.end_state, 0.0, SETTLE_TIME, config)
        except LabError:
            return None
        if distance(settle.end_state) > tolerance:
            return None

        branch = _linear_branch(matrix, frame, origin, offset)
        t_back = _backward_time(branch, origin, conv_tol, horizon)
        if t_back is None:
            return None
        window = _stitch(branch, forward, t_back, field_.n)
        errors = (float(np.linalg.norm(window.states[0] - origin)), distance(window.states[-1]))
        h_minus, h_plus, profile = h_levels(field_, window, convention) if field_.signature else (None, None, None)
        return ConnectingOrbit(
            trajectory=window,
            e_minus=e_minus,
            e_plus=e_plus,
            i_minus=e_minus.morse_index,
            i_plus=e_plus.morse_index,
            h_minus=h_minus,
            h_plus=h_plus,
            convergence_errors=errors,
            profile=profile,
        )

    found = [orbit for orbit in parallel_map(shoot, list(units), workers) if orbit is not None]
    logger.info(
        "shoot_connection on %s: %d of %d directions reached the target (index %d -> %d)",
        field_.name,
        len(found),
        len(units),
        e_minus.morse_index,
        e_plus.morse_index,
    )
    for orbit in found:
        if orbit.h_minus is not None and orbit.h_plus is not None and orbit.h_plus > orbit.h_minus:
            logger.warning("Connecting orbit with h_plus %d > h_minus %d", orbit.h_plus, orbit.h_minus)
    return found


__all__ = [
    "ConnectingOrbit",
    "Endpoint",
    "InvariantSide",
    "distance_to_orbit",
    "h_levels",
    "local_invariant_basis",
    "shoot_connection",
    "unit_directions",
]

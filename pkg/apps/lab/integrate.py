"""非線形流・変分流・随伴流の数値積分と、ポアンカレ断面の交差検出。

積分は Dormand–Prince 4(5)（scipy の RK45）を1ステップずつ進め、
受理されたステップごとに定義域と発散を検査する。
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import RK45, OdeSolution
from scipy.optimize import brentq

from apps.lab.errors import BlowUp, DimensionMismatch, DomainViolation, IntegrationError, InvalidParameter, LeftDomain, MaxStepsExceeded
from apps.lab.logging_utils import get_logger
from apps.lab.model.field import CyclicVectorField
from packages.shared_schemas import IntegratorConfig

logger = get_logger(__name__)

StateFunc = Callable[[float, np.ndarray], np.ndarray]
StopHook = Callable[[float, np.ndarray], bool]


class TrajectoryStatus(str, Enum):
    COMPLETED = "completed"
    BLOW_UP = "blow_up"
    LEFT_DOMAIN = "left_domain"
    MAX_STEPS = "max_steps"
    STOPPED = "stopped"


class SectionDirection(str, Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"
    BOTH = "both"


@dataclass(frozen=True)
class SectionSpec:
    """超平面 ⟨normal, x⟩ = offset と、数える交差の向き。"""

    normal: Tuple[float, ...]
    offset: float = 0.0
    direction: SectionDirection = SectionDirection.INCREASING

    def __post_init__(self) -> None:
        if not np.any(np.asarray(self.normal, dtype=float) != 0.0):
            raise InvalidParameter("断面の法線が零ベクトルです")

    def value(self, x: np.ndarray) -> float:
        return float(np.dot(self.normal, x) - self.offset)


@dataclass
class Trajectory:
    """積分結果。times は常に増加順で、後ろ向き積分は反転して格納する。"""

    times: np.ndarray
    states: np.ndarray
    accepted_steps: int = 0
    rejected_steps: int = 0
    status: TrajectoryStatus = TrajectoryStatus.COMPLETED
    direction: int = 1
    dense: Optional[Callable[[Union[float, np.ndarray]], np.ndarray]] = field(default=None, repr=False)
    message: str = ""

    @classmethod
    def from_samples(cls, times: Sequence[float], states: Sequence[Sequence[float]]) -> "Trajectory":
        """標本列から軌道を作る。補間は線形。"""

        times_arr = np.asarray(times, dtype=float)
        states_arr = np.asarray(states, dtype=float)
        if states_arr.shape[0] != times_arr.shape[0]:
            raise DimensionMismatch("times と states の長さが一致しません")
        if np.any(np.diff(times_arr) <= 0):
            raise InvalidParameter("times は狭義単調増加である必要があります")
        return cls(times_arr, states_arr)

    @property
    def n(self) -> int:
        return int(self.states.shape[1])

    @property
    def start_state(self) -> np.ndarray:
        return self.states[0] if self.direction > 0 else self.states[-1]

    @property
    def end_state(self) -> np.ndarray:
        return self.states[-1] if self.direction > 0 else self.states[0]

    @property
    def end_time(self) -> float:
        return float(self.times[-1] if self.direction > 0 else self.times[0])

    @property
    def span(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def ok(self) -> bool:
        return self.status in (TrajectoryStatus.COMPLETED, TrajectoryStatus.STOPPED)

    def state_at(self, t: float) -> np.ndarray:
        if self.dense is not None:
            return np.asarray(self.dense(float(t)), dtype=float)
        return np.array([np.interp(t, self.times, self.states[:, k]) for k in range(self.n)])

    def sample(self, times: Sequence[float]) -> np.ndarray:
        """times（任意順）での状態を (len(times), n) で返す。"""

        times_arr = np.asarray(times, dtype=float)
        if self.dense is not None:
            return np.asarray(self.dense(times_arr), dtype=float).T
        return np.stack([np.interp(times_arr, self.times, self.states[:, k]) for k in range(self.n)], axis=1)


@dataclass
class _RawRun:
    times: List[float]
    states: List[np.ndarray]
    interpolants: list
    accepted: int
    rejected: int
    status: TrajectoryStatus
    message: str


def _run(
    fun: StateFunc,
    y0: np.ndarray,
    t0: float,
    t1: float,
    config: IntegratorConfig,
    inside: Optional[Callable[[np.ndarray], bool]] = None,
    norm_slice: Optional[slice] = None,
    stop_when: Optional[StopHook] = None,
) -> _RawRun:
    times = [float(t0)]
    states = [np.array(y0, dtype=float)]
    interpolants: list = []
    if t1 == t0:
        return _RawRun(times, states, interpolants, 0, 0, TrajectoryStatus.COMPLETED, "")

    options = {"rtol": config.rel_tol, "atol": config.abs_tol}
    if config.max_step is not None:
        options["max_step"] = config.max_step
    if config.initial_step is not None:
        options["first_step"] = min(config.initial_step, abs(t1 - t0))
    solver = RK45(fun, t0, np.array(y0, dtype=float), t1, **options)
    overhead = 1 if config.initial_step is not None else 2

    status = TrajectoryStatus.COMPLETED
    message = ""
    accepted = 0
    watched = norm_slice or slice(None)
    while solver.status == "running":
        if accepted >= config.max_steps:
            status = TrajectoryStatus.MAX_STEPS
            message = f"max_steps={config.max_steps} に達しました"
            break
        solver.step()
        if solver.status == "failed":
            status = TrajectoryStatus.BLOW_UP
            message = "ステップ幅が下限を割りました"
            break
        y = solver.y
        if not np.all(np.isfinite(y)) or np.linalg.norm(y[watched]) > config.blowup_bound:
            status = TrajectoryStatus.BLOW_UP
            message = f"状態ノルムが {config.blowup_bound:g} を超えました"
            break
        if inside is not None and not inside(y[watched]):
            status = TrajectoryStatus.LEFT_DOMAIN
            message = "状態が定義域の外に出ました"
            break
        accepted += 1
        times.append(float(solver.t))
        states.append(y.copy())
        if config.dense_output:
            interpolants.append(solver.dense_output())
        if stop_when is not None and stop_when(float(solver.t), y):
            status = TrajectoryStatus.STOPPED
            break

    rejected = max(0, (solver.nfev - overhead) // 6 - accepted)
    return _RawRun(times, states, interpolants, accepted, rejected, status, message)


def _dense_from(run: _RawRun, components: slice) -> Optional[Callable[[Union[float, np.ndarray]], np.ndarray]]:
    if not run.interpolants:
        if len(run.times) == 1:
            constant = run.states[0][components]

            def frozen(t: Union[float, np.ndarray]) -> np.ndarray:
                t_arr = np.asarray(t, dtype=float)
                if t_arr.ndim == 0:
                    return constant.copy()
                return np.repeat(constant[:, None], t_arr.size, axis=1)

            return frozen
        return None
    solution = OdeSolution(run.times, run.interpolants)

    def dense(t: Union[float, np.ndarray]) -> np.ndarray:
        return solution(t)[components]

    return dense


def _trajectory_from(run: _RawRun, direction: int, components: slice) -> Trajectory:
    times = np.asarray(run.times)
    states = np.asarray(run.states)[:, components]
    if direction < 0:
        times = times[::-1].copy()
        states = states[::-1].copy()
    return Trajectory(
        times=times,
        states=states,
        accepted_steps=run.accepted,
        rejected_steps=run.rejected,
        status=run.status,
        direction=direction,
        dense=_dense_from(run, components),
        message=run.message,
    )


_FAILURES = {
    TrajectoryStatus.BLOW_UP: BlowUp,
    TrajectoryStatus.LEFT_DOMAIN: LeftDomain,
    TrajectoryStatus.MAX_STEPS: MaxStepsExceeded,
}


def _raise_for(trajectory: Trajectory) -> None:
    error_cls = _FAILURES.get(trajectory.status)
    if error_cls is not None:
        raise error_cls(
            trajectory.message or "積分に失敗しました",
            trajectory=trajectory,
            last_time=trajectory.end_time,
        )


def integrate(
    field_: CyclicVectorField,
    x0: Sequence[float],
    t0: float,
    t1: float,
    config: Optional[IntegratorConfig] = None,
    stop_when: Optional[StopHook] = None,
    raise_on_failure: bool = True,
) -> Trajectory:
    """x(t0) = x0 から t1 まで積分する。t1 < t0 なら後ろ向き。

    Args:
        field_: ベクトル場
        x0: 初期状態（定義域内）
        t0, t1: 開始・終了時刻
        config: 積分設定
        stop_when: (t, x) を受け取り True で打ち切るフック
        raise_on_failure: False なら失敗を status に残して返す

    Returns:
        Trajectory（times は増加順）

    Raises:
        DomainViolation: x0 が定義域外
        BlowUp / LeftDomain / MaxStepsExceeded: raise_on_failure のとき
    """

    config = config or IntegratorConfig()
    x0_arr = np.asarray(x0, dtype=float)
    if x0_arr.shape != (field_.n,):
        raise DimensionMismatch("初期状態の長さが n と一致しません", n=field_.n, shape=list(x0_arr.shape))
    if not field_.domain.contains(x0_arr):
        raise DomainViolation("初期状態が定義域の外にあります", x0=x0_arr.tolist())

    direction = 1 if t1 >= t0 else -1
    run = _run(
        lambda t, y: np.asarray(field_.rhs(y), dtype=float),
        x0_arr,
        t0,
        t1,
        config,
        inside=field_.domain.contains,
        stop_when=stop_when,
    )
    trajectory = _trajectory_from(run, direction, slice(None))
    logger.debug(
        "integrate %s over [%g, %g]: %d accepted, %d rejected, status=%s",
        field_.name,
        t0,
        t1,
        trajectory.accepted_steps,
        trajectory.rejected_steps,
        trajectory.status.value,
    )
    if raise_on_failure:
        _raise_for(trajectory)
    return trajectory


def variational_system(field_: CyclicVectorField) -> StateFunc:
    """[x, vec(Φ)] に対する拡大系 ẋ = f(x), Φ' = Df(x)Φ。"""

    n = field_.n

    def fun(t: float, y: np.ndarray) -> np.ndarray:
        x = y[:n]
        phi = y[n:].reshape(n, n)
        out = np.empty_like(y)
        out[:n] = field_.rhs(x)
        out[n:] = (field_.raw_jacobian(x) @ phi).ravel()
        return out

    return fun


def variational_trajectory(
    field_: CyclicVectorField,
    x0: Sequence[float],
    s: float,
    t: float,
    config: Optional[IntegratorConfig] = None,
    stop_when: Optional[StopHook] = None,
) -> Trajectory:
    """拡大系 [x, vec(Φ)] の軌道。状態の先頭 n 成分が基準解。"""

    config = config or IntegratorConfig()
    n = field_.n
    x0_arr = np.asarray(x0, dtype=float)
    if not field_.domain.contains(x0_arr):
        raise DomainViolation("初期状態が定義域の外にあります", x0=x0_arr.tolist())
    y0 = np.concatenate([x0_arr, np.eye(n).ravel()])
    run = _run(
        variational_system(field_),
        y0,
        s,
        t,
        config,
        inside=field_.domain.contains,
        norm_slice=slice(0, n),
        stop_when=stop_when,
    )
    augmented = _trajectory_from(run, 1 if t >= s else -1, slice(None))
    _raise_for(augmented)
    return augmented


def variational_flow(
    field_: CyclicVectorField,
    x0: Sequence[float],
    s: float,
    t: float,
    config: Optional[IntegratorConfig] = None,
) -> np.ndarray:
    """基本解行列 S(s,t)。x0 は時刻 s での状態で、S(s,s) = I。"""

    n = field_.n
    if s == t:
        return np.eye(n)
    augmented = variational_trajectory(field_, x0, s, t, config)
    return augmented.end_state[n:].reshape(n, n)


def adjoint_flow(
    field_: CyclicVectorField,
    base: Trajectory,
    t: float,
    s: float,
    config: Optional[IntegratorConfig] = None,
    method: Literal["transpose", "direct"] = "transpose",
) -> np.ndarray:
    """随伴作用素 S*(s,t)（s ≤ t）。s から t への前進作用素の転置に等しい。

    direct は ψ' = −Df(x(τ))ᵀψ を ψ(t) = I から s まで後ろ向きに解く。
    """

    if s > t:
        raise InvalidParameter("adjoint_flow は s ≤ t を要求します", s=s, t=t)
    lo, hi = float(base.times[0]), float(base.times[-1])
    slack = 1e-9 * max(1.0, abs(lo), abs(hi))
    if s < lo - slack or t > hi + slack:
        raise InvalidParameter("基準軌道が [s, t] を覆っていません", s=s, t=t, covered=[lo, hi])
    n = field_.n
    if s == t:
        return np.eye(n)
    if method == "transpose":
        return variational_flow(field_, base.state_at(s), s, t, config).T

    config = config or IntegratorConfig()

    def fun(tau: float, y: np.ndarray) -> np.ndarray:
        a = field_.raw_jacobian(base.state_at(tau))
        return (-a.T @ y.reshape(n, n)).ravel()

    run = _run(fun, np.eye(n).ravel(), t, s, config.model_copy(update={"blowup_bound": np.inf}))
    if run.status != TrajectoryStatus.COMPLETED:
        raise IntegrationError("随伴系の積分に失敗しました", status=run.status.value)
    return run.states[-1].reshape(n, n)


def crossings_of(
    trajectory: Trajectory,
    section: SectionSpec,
    tol: float = 1e-13,
) -> List[Tuple[float, np.ndarray]]:
    """格納済み軌道の符号変化を探し、密出力上で交差時刻を求める。

    増加向きは g_a < 0 ≤ g_b、減少向きは g_a > 0 ≥ g_b。開始点での g = 0 は数えない。
    """

    values = np.array([section.value(x) for x in trajectory.states])
    found: List[Tuple[float, np.ndarray]] = []
    want_up = section.direction in (SectionDirection.INCREASING, SectionDirection.BOTH)
    want_down = section.direction in (SectionDirection.DECREASING, SectionDirection.BOTH)
    for k in range(len(values) - 1):
        ga, gb = values[k], values[k + 1]
        up = ga < 0.0 <= gb
        down = ga > 0.0 >= gb
        if not ((up and want_up) or (down and want_down)):
            continue
        ta, tb = float(trajectory.times[k]), float(trajectory.times[k + 1])
        if gb == 0.0:
            t_cross = tb
        else:
            t_cross = float(brentq(lambda tt: section.value(trajectory.state_at(tt)), ta, tb, xtol=tol, rtol=4 * np.finfo(float).eps))
        found.append((t_cross, trajectory.state_at(t_cross)))
    return found


def section_crossings(
    field_: CyclicVectorField,
    x0: Sequence[float],
    t_span: Tuple[float, float],
    section: SectionSpec,
    config: Optional[IntegratorConfig] = None,
) -> List[Tuple[float, np.ndarray]]:
    """t_span 上で積分し、断面との交差を (時刻, 状態) の列で返す。"""

    config = config or IntegratorConfig()
    if not config.dense_output:
        raise InvalidParameter("断面交差の検出には dense_output が必要です")
    trajectory = integrate(field_, x0, t_span[0], t_span[1], config)
    return crossings_of(trajectory, section)


def trajectory_to_csv(trajectory: Trajectory, path: Union[str, Path]) -> Path:
    """t, x1..xn の列で CSV に書き出す。"""

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ",".join(["t"] + [f"x{k + 1}" for k in range(trajectory.n)])
    np.savetxt(path, np.column_stack([trajectory.times, trajectory.states]), delimiter=",", header=header, comments="")
    return path


__all__ = [
    "SectionDirection",
    "SectionSpec",
    "Trajectory",
    "TrajectoryStatus",
    "adjoint_flow",
    "crossings_of",
    "integrate",
    "section_crossings",
    "trajectory_to_csv",
    "variational_flow",
    "variational_system",
    "variational_trajectory",
]

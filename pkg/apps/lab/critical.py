"""臨界要素（平衡点と周期軌道）の探索と分類。"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import eigvals, lstsq, null_space, solve, subspace_angles
from scipy.spatial.distance import cdist

from apps.lab.errors import InvalidParameter, LabError, NewtonDiverged, NoReturn, TooFewSamples
from apps.lab.integrate import (
    SectionDirection,
    SectionSpec,
    Trajectory,
    TrajectoryStatus,
    crossings_of,
    integrate,
    variational_flow,
    variational_trajectory,
)
from apps.lab.logging_utils import get_logger
from apps.lab.model.field import Box, CyclicVectorField
from apps.lab.workers import parallel_map
from packages.shared_schemas import InjectivityReport, IntegratorConfig, NewtonSettings, OrbitConsistencyReport

logger = get_logger(__name__)

MIN_ORBIT_SAMPLES = 512


@dataclass
class Equilibrium:
    x: np.ndarray
    eigenvalues: np.ndarray
    morse_index: int
    morse_index_exp: int
    simple: bool
    hyperbolic: bool
    residual: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "equilibrium",
            "x": self.x.tolist(),
            "eigenvalues": [[float(v.real), float(v.imag)] for v in self.eigenvalues],
            "morse_index": self.morse_index,
            "morse_index_exp": self.morse_index_exp,
            "simple": self.simple,
            "hyperbolic": self.hyperbolic,
            "residual": self.residual,
        }


@dataclass
class PeriodicOrbit:
    anchor: np.ndarray
    period: float
    samples: Trajectory
    multipliers: np.ndarray
    trivial_multiplier_error: float
    simple: bool
    unique_unit_modulus: bool
    hyperbolic: bool
    morse_index: int
    monodromy: Optional[np.ndarray] = field(default=None, repr=False)
    section: Optional[SectionSpec] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "periodic_orbit",
            "anchor": self.anchor.tolist(),
            "period": self.period,
            "multipliers": [[float(v.real), float(v.imag)] for v in self.multipliers],
            "trivial_multiplier_error": self.trivial_multiplier_error,
            "simple": self.simple,
            "unique_unit_modulus": self.unique_unit_modulus,
            "hyperbolic": self.hyperbolic,
            "morse_index": self.morse_index,
        }


CriticalElement = Union[Equilibrium, PeriodicOrbit]


def newton_refine(
    field_: CyclicVectorField,
    x0: np.ndarray,
    newton: Optional[NewtonSettings] = None,
) -> np.ndarray:
    """f(x) = 0 をバックトラック付き Newton 法で解く。

    Raises:
        NewtonDiverged: max_iter 以内に ‖f‖ ≤ tol に達しない
    """

    newton = newton or NewtonSettings()
    x = np.asarray(x0, dtype=float).copy()
    if not field_.domain.contains(x):
        raise NewtonDiverged("初期点が定義域の外にあります", x0=x.tolist())
    fx = np.asarray(field_.rhs(x), dtype=float)
    residual = float(np.linalg.norm(fx))
    for _ in range(newton.max_iter):
        if residual <= newton.tol:
            return x
        jac = field_.raw_jacobian(x)
        try:
            step = solve(jac, -fx)
        except (np.linalg.LinAlgError, ValueError):
            step = lstsq(jac, -fx)[0]
        damping = 1.0
        while damping >= 1e-4:
            candidate = x + damping * step
            if field_.domain.contains(candidate):
                f_candidate = np.asarray(field_.rhs(candidate), dtype=float)
                r_candidate = float(np.linalg.norm(f_candidate))
                if np.isfinite(r_candidate) and r_candidate < (1.0 - 1e-4 * damping) * residual:
                    x, fx, residual = candidate, f_candidate, r_candidate
                    break
            damping *= 0.5
        else:
            break
    if residual <= newton.tol:
        return x
    raise NewtonDiverged("Newton 法が収束しませんでした", residual=residual, x=x.tolist())


def classify_equilibrium(field_: CyclicVectorField, x: np.ndarray, tol_spectrum: float = 1e-8) -> Equilibrium:
    """Df(x) の固有値から双曲性と Morse 指数を決める。"""

    x = np.asarray(x, dtype=float)
    residual = float(np.linalg.norm(field_.evaluate(x)))
    if residual > 1e-6:
        logger.warning("classify_equilibrium at a point with residual %.3e", residual)
    spectrum = eigvals(field_.jacobian(x))
    spectrum = spectrum[np.argsort(-spectrum.real, kind="stable")]
    morse = int(np.sum(spectrum.real > tol_spectrum))
    morse_exp = int(np.sum(np.abs(np.exp(spectrum)) > 1.0 + tol_spectrum))
    if morse != morse_exp:
        logger.warning("Morse index mismatch at %s: Re-count %d, exp-count %d", x.tolist(), morse, morse_exp)
    return Equilibrium(
        x=x,
        eigenvalues=spectrum,
        morse_index=morse,
        morse_index_exp=morse_exp,
        simple=bool(np.all(np.abs(spectrum) > tol_spectrum)),
        hyperbolic=bool(np.all(np.abs(spectrum.real) > tol_spectrum)),
        residual=residual,
    )


def start_grid(box: Box, per_axis: int) -> np.ndarray:
    lower = np.asarray(box.lower, dtype=float)
    upper = np.asarray(box.upper, dtype=float)
    axes = [lower[k] + (np.arange(per_axis) + 0.5) * (upper[k] - lower[k]) / per_axis for k in range(box.n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def deduplicate(points: List[np.ndarray], radius: float = 1e-6) -> List[np.ndarray]:
    unique: List[np.ndarray] = []
    for x in points:
        if all(np.linalg.norm(x - y) > radius * (1.0 + np.linalg.norm(x)) for y in unique):
            unique.append(x)
    return unique


def find_equilibria(
    field_: CyclicVectorField,
    box: Box,
    grid_per_axis: int = 5,
    newton: Optional[NewtonSettings] = None,
    tol_spectrum: float = 1e-8,
    dedup_radius: float = 1e-6,
    workers: int = 1,
) -> List[Equilibrium]:
    """格子点からの多点 Newton 法で平衡点を集め、重複を除いて分類する。"""

    if box.is_empty:
        return []
    if not box.is_bounded:
        box = box.intersect(Box.cube(field_.n, -10.0, 10.0))
    starts = [x for x in start_grid(box, grid_per_axis) if field_.domain.contains(x)]

    def attempt(start: np.ndarray) -> Optional[np.ndarray]:
        try:
            return newton_refine(field_, start, newton)
        except LabError:
            return None

    roots = parallel_map(attempt, starts, workers)
    converged = [r for r in roots if r is not None]
    unique = deduplicate(converged, dedup_radius)
    unique.sort(key=lambda x: tuple(np.round(x, 8)))
    logger.info(
        "find_equilibria %s: %d starts, %d dropped, %d distinct roots",
        field_.name,
        len(starts),
        len(starts) - len(converged),
        len(unique),
    )
    return [classify_equilibrium(field_, x, tol_spectrum) for x in unique]


@dataclass(frozen=True)
class ReturnData:
    time: float
    state: np.ndarray
    monodromy: np.ndarray


def first_return(
    field_: CyclicVectorField,
    x: np.ndarray,
    section: SectionSpec,
    t_max: float,
    config: Optional[IntegratorConfig] = None,
) -> ReturnData:
    """断面上の点 x から次に断面を（指定の向きで）横切るまで積分する。"""

    n = field_.n
    # 出発点は断面上にあるので、最初のステップの符号変化は数えない
    state: Dict[str, float] = {"previous": 0.0}

    def crossed(t: float, y: np.ndarray) -> bool:
        current = section.value(y[:n])
        previous = state["previous"]
        state["previous"] = current
        if section.direction == SectionDirection.INCREASING:
            return previous < 0.0 <= current
        if section.direction == SectionDirection.DECREASING:
            return previous > 0.0 >= current
        return previous * current <= 0.0 and previous != 0.0

    augmented = variational_trajectory(field_, x, 0.0, t_max, config, stop_when=crossed)
    if augmented.status != TrajectoryStatus.STOPPED or augmented.dense is None:
        raise NoReturn("断面への再帰が見つかりません", t_max=t_max)
    full_dense = augmented.dense

    def base_dense(t: Union[float, np.ndarray]) -> np.ndarray:
        return full_dense(t)[:n]

    last_step = Trajectory(augmented.times[-2:], augmented.states[-2:, :n], dense=base_dense)
    hits = crossings_of(last_step, section)
    if not hits:
        raise NoReturn("断面への再帰が見つかりません", t_max=t_max)
    t_hit = hits[-1][0]
    full = augmented.state_at(t_hit)
    return ReturnData(time=t_hit, state=full[:n], monodromy=full[n:].reshape(n, n))


def default_section(field_: CyclicVectorField, explore: Trajectory) -> SectionSpec:
    """探索軌道の時間平均を通り、法線 f(平均) の断面。"""

    mean = trapezoid(explore.states, explore.times, axis=0) / explore.span
    if not field_.domain.contains(mean):
        mean = explore.states[-1]
    normal = np.asarray(field_.rhs(mean), dtype=float)
    if np.linalg.norm(normal) <= 1e-12:
        normal = np.asarray(field_.rhs(explore.states[-1]), dtype=float)
    return SectionSpec(tuple(normal.tolist()), float(np.dot(normal, mean)), SectionDirection.INCREASING)


def classify_monodromy(
    monodromy: np.ndarray,
    flow_direction: Optional[np.ndarray] = None,
    tol: float = 1e-4,
) -> Tuple[np.ndarray, OrbitConsistencyReport]:
    """モノドロミー行列の乗数を分類する。単純なのに双曲でなければ所見を残す。"""

    monodromy = np.asarray(monodromy, dtype=float)
    values, vectors = np.linalg.eig(monodromy)
    order = np.argsort(-np.abs(values), kind="stable")
    values, vectors = values[order], vectors[:, order]

    distance_to_one = np.abs(values - 1.0)
    closest = int(np.argmin(distance_to_one))
    error = float(distance_to_one[closest])
    present = error <= tol
    simple = present and int(np.sum(distance_to_one <= tol)) == 1
    unique = int(np.sum(np.abs(np.abs(values) - 1.0) <= tol)) == 1
    hyperbolic = present and simple and unique
    morse = int(np.sum(np.abs(values) > 1.0 + tol))

    angle = None
    if flow_direction is not None and np.linalg.norm(flow_direction) > 0:
        eigvec = np.real(vectors[:, closest])[:, None]
        angle = float(subspace_angles(eigvec, np.asarray(flow_direction, dtype=float)[:, None])[0])

    findings: List[str] = []
    if not present:
        findings.append(f"TRIVIAL_MULTIPLIER_MISSING: |μ−1| = {error:.3e}")
    if simple and not hyperbolic:
        findings.append("CONSISTENCY_VIOLATION: simple but not hyperbolic")

    report = OrbitConsistencyReport(
        trivial_multiplier_present=present,
        trivial_multiplier_error=error,
        simple=simple,
        unique_unit_modulus=unique,
        hyperbolic=hyperbolic,
        morse_index=morse,
        trivial_eigvec_angle=angle,
        findings=findings,
    )
    for finding in findings:
        logger.warning("Periodic orbit finding: %s", finding)
    return values, report


def find_periodic_orbit(
    field_: CyclicVectorField,
    x0: np.ndarray,
    section: Optional[SectionSpec] = None,
    config: Optional[IntegratorConfig] = None,
    newton: Optional[NewtonSettings] = None,
    transient: float = 200.0,
    explore_window: float = 100.0,
    samples_per_period: int = 1024,
    multiplier_tol: float = 1e-4,
) -> PeriodicOrbit:
    """過渡を捨てた後、断面上の戻り写像の変位に Newton 法をかけて周期軌道を求める。

    Raises:
        NoReturn: 平衡点に落ちた、振幅が無い、または交差が2回未満
        NewtonDiverged: 戻り写像の Newton 法が収束しない
    """

    config = config or IntegratorConfig()
    newton = newton or NewtonSettings()
    start = integrate(field_, x0, 0.0, transient, config).end_state if transient > 0 else np.asarray(x0, dtype=float)
    explore = integrate(field_, start, 0.0, explore_window, config)

    speeds = np.linalg.norm([field_.rhs(x) for x in explore.states], axis=1)
    if float(np.max(speeds)) <= 1e-8:
        raise NoReturn("軌道が平衡点に収束しています", speed=float(np.max(speeds)))
    section = section or default_section(field_, explore)
    normal_norm = float(np.linalg.norm(section.normal))
    amplitude = max(abs(section.value(x)) for x in explore.states) / normal_norm
    if amplitude <= 1e-7:
        raise NoReturn("断面に対する振幅がありません", amplitude=amplitude)
    hits = crossings_of(explore, section)
    if len(hits) < 2:
        raise NoReturn("断面との交差が2回未満です", crossings=len(hits))

    spacing = float(np.max(np.diff([t for t, _ in hits])))
    t_max = max(3.0 * spacing, 1.0)
    normal = np.asarray(section.normal, dtype=float)
    basis = null_space(normal[None, :])
    p_ref = hits[0][1]
    y = np.zeros(field_.n - 1)
    tol = max(newton.tol, 100.0 * config.rel_tol * (1.0 + float(np.linalg.norm(p_ref))))

    converged: Optional[ReturnData] = None
    point = p_ref
    for iteration in range(newton.max_iter):
        point = p_ref + basis @ y
        data = first_return(field_, point, section, t_max, config)
        residual_vec = basis.T @ (data.state - p_ref) - y
        residual = float(np.linalg.norm(residual_vec))
        logger.debug("return-map Newton iter %d: residual %.3e, T=%.9f", iteration, residual, data.time)
        if residual <= tol:
            converged = data
            break
        f_ret = np.asarray(field_.rhs(data.state), dtype=float)
        projector = np.eye(field_.n) - np.outer(f_ret, normal) / float(np.dot(normal, f_ret))
        jac = basis.T @ projector @ data.monodromy @ basis - np.eye(field_.n - 1)
        try:
            y = y - solve(jac, residual_vec)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NewtonDiverged("戻り写像のヤコビアンが特異です", iteration=iteration) from exc
    if converged is None:
        raise NewtonDiverged("戻り写像の Newton 法が収束しませんでした", max_iter=newton.max_iter)

    period = converged.time
    orbit_run = integrate(field_, point, 0.0, period, config)
    times = np.linspace(0.0, period, samples_per_period, endpoint=False)
    samples = Trajectory(times, orbit_run.sample(times), dense=orbit_run.dense)
    multipliers, report = classify_monodromy(converged.monodromy, field_.rhs(point), multiplier_tol)
    orbit = PeriodicOrbit(
        anchor=point,
        period=period,
        samples=samples,
        multipliers=multipliers,
        trivial_multiplier_error=report.trivial_multiplier_error,
        simple=report.simple,
        unique_unit_modulus=report.unique_unit_modulus,
        hyperbolic=report.hyperbolic,
        morse_index=report.morse_index,
        monodromy=converged.monodromy,
        section=section,
    )
    logger.info(
        "Periodic orbit of %s: period %.6f, trivial multiplier error %.2e, hyperbolic=%s",
        field_.name,
        period,
        orbit.trivial_multiplier_error,
        orbit.hyperbolic,
    )
    return orbit


def classify_periodic_orbit(
    field_: CyclicVectorField,
    orbit: PeriodicOrbit,
    tol: float = 1e-4,
    config: Optional[IntegratorConfig] = None,
    recompute: bool = True,
) -> Tuple[PeriodicOrbit, OrbitConsistencyReport]:
    """乗数を（必要なら再計算して）分類し直し、整合性レポートを返す。"""

    monodromy = orbit.monodromy
    if recompute or monodromy is None:
        monodromy = variational_flow(field_, orbit.anchor, 0.0, orbit.period, config)
    multipliers, report = classify_monodromy(monodromy, field_.rhs(orbit.anchor), tol)
    updated = PeriodicOrbit(
        anchor=orbit.anchor,
        period=orbit.period,
        samples=orbit.samples,
        multipliers=multipliers,
        trivial_multiplier_error=report.trivial_multiplier_error,
        simple=report.simple,
        unique_unit_modulus=report.unique_unit_modulus,
        hyperbolic=report.hyperbolic,
        morse_index=report.morse_index,
        monodromy=monodromy,
        section=orbit.section,
    )
    return updated, report


def planar_projection_injectivity(
    orbit: Union[PeriodicOrbit, Trajectory],
    s: int,
    min_phase_sep: float = 0.05,
    distance_floor: float = 1e-9,
    cyclic: bool = True,
) -> InjectivityReport:
    """t ↦ (p_s(t), p_{s+1}(t)) の単射性を、位相の離れた標本対の最小距離で調べる。

    s は1始まりで、s = n のときは (p_n, p_1) を使う。連結軌道の窓のように
    閉じていない経路では cyclic=False で添字の差をそのまま使う。
    """

    samples = orbit.samples if isinstance(orbit, PeriodicOrbit) else orbit
    states = np.asarray(samples.states)
    m, n = states.shape
    if m < MIN_ORBIT_SAMPLES:
        raise TooFewSamples(f"1周期あたり {MIN_ORBIT_SAMPLES} 点以上が必要です", samples=m)
    if not 1 <= s <= n:
        raise InvalidParameter(f"s は 1..{n} の範囲です", s=s)
    projected = states[:, [s - 1, s % n]]
    distances = cdist(projected, projected)
    index = np.arange(m)
    gap = np.abs(index[:, None] - index[None, :])
    if cyclic:
        gap = np.minimum(gap, m - gap)
    mask = gap >= max(1, math.ceil(min_phase_sep * m))
    masked = np.where(mask, distances, np.inf)
    flat = int(np.argmin(masked))
    i, j = divmod(flat, m)
    min_distance = float(masked[i, j])
    extent = float(np.max(np.ptp(projected, axis=0)))
    injective = min_distance > distance_floor * (1.0 + extent)
    return InjectivityReport(
        s=s,
        min_distance=min_distance,
        witness_pair=(int(min(i, j)), int(max(i, j))),
        injective=injective,
        min_phase_sep=min_phase_sep,
        samples=m,
    )


__all__ = [
    "CriticalElement",
    "Equilibrium",
    "PeriodicOrbit",
    "ReturnData",
    "classify_equilibrium",
    "classify_monodromy",
    "classify_periodic_orbit",
    "deduplicate",
    "default_section",
    "find_equilibria",
    "find_periodic_orbit",
    "first_return",
    "newton_refine",
    "planar_projection_injectivity",
    "start_grid",
]

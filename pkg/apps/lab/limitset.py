"""ω/α 極限集合の分類と、小さな C¹ 摂動に対する分類の頑健性。

分類はカスケードで行う。平衡点 → 周期軌道 → 平衡点とその連結軌道 → 未決定。
α 極限は同じ場を後ろ向きに積分して求める（−f はクラスを保たない）。
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from apps.lab.connect.orbits import InvariantSide, local_invariant_basis
from apps.lab.critical import PeriodicOrbit, default_section, find_periodic_orbit, newton_refine
from apps.lab.errors import LabError
from apps.lab.integrate import SectionSpec, Trajectory, TrajectoryStatus, crossings_of, integrate
from apps.lab.logging_utils import get_logger
from apps.lab.model.classes import SampleSpec, check_class
from apps.lab.model.field import CyclicVectorField, add_fields
from apps.lab.workers import parallel_map
from packages.shared_schemas import (
    AnalysisSettings,
    IntegratorConfig,
    LimitDirection,
    LimitSetEvidence,
    LimitSetKind,
    LimitSetReport,
    NewtonSettings,
    RobustnessEntry,
    RobustnessReport,
    TransitionRow,
)

logger = get_logger(__name__)

TAIL_SAMPLES = 2000
# α 極限で平衡点に入ったと認める |安定成分| / |不安定成分| の上限
UNSTABLE_CONE = 0.25


@dataclass(frozen=True)
class LimitThresholds:
    """分類カスケードのしきい値。

    Attributes:
        eq_radius: 尾部全体がこの半径に収まれば平衡点
        rec_tol: 断面上の近接再帰の間隔の上限
        visit_radius: 平衡点への「訪問」とみなす距離
        tail_fraction: 判定に使う尾部の長さ（horizon に対する比）
    """

    eq_radius: float = 1e-5
    rec_tol: float = 1e-5
    visit_radius: float = 1e-2
    tail_fraction: float = 0.25
    newton: NewtonSettings = field(default_factory=NewtonSettings)

    @classmethod
    def from_settings(cls, settings: AnalysisSettings) -> "LimitThresholds":
        return cls(
            eq_radius=settings.eq_radius,
            rec_tol=settings.rec_tol,
            visit_radius=settings.visit_radius,
            newton=settings.newton,
        )


def _tail(trajectory: Trajectory, length: float) -> Tuple[np.ndarray, np.ndarray]:
    end = trajectory.end_time
    start = end - trajectory.direction * length
    times = np.linspace(min(start, end), max(start, end), TAIL_SAMPLES)
    return times, trajectory.sample(times)


def _candidate_equilibria(
    field_: CyclicVectorField,
    tail_states: np.ndarray,
    final: np.ndarray,
    known: Sequence[np.ndarray],
    newton: NewtonSettings,
) -> List[np.ndarray]:
    candidates = [np.asarray(e, dtype=float) for e in known]
    speeds = np.linalg.norm([field_.rhs(x) for x in tail_states], axis=1)
    for start in (final, tail_states[int(np.argmin(speeds))]):
        try:
            root = newton_refine(field_, start, newton)
        except LabError:
            continue
        if all(np.linalg.norm(root - e) > 1e-8 * (1.0 + np.linalg.norm(e)) for e in candidates):
            candidates.append(root)
    return candidates


def _entries(distances: np.ndarray, radius: float) -> int:
    inside = distances <= radius
    return int(inside[0]) + int(np.sum(inside[1:] & ~inside[:-1]))


def stable_ratio(field_: CyclicVectorField, e: np.ndarray, x: np.ndarray) -> Optional[float]:
    """x − e を Df(e) の不安定・安定部分空間に分け、|安定成分| / |不安定成分| を返す。

    e が双曲的でないか不安定部分空間が無ければ None。
    """

    try:
        unstable = local_invariant_basis(field_, e, InvariantSide.UNSTABLE)
        stable = local_invariant_basis(field_, e, InvariantSide.STABLE)
    except LabError:
        return None
    if unstable.shape[1] == 0:
        return None
    coeffs = np.linalg.solve(np.hstack([unstable, stable]), x - e)
    along_unstable = float(np.linalg.norm(coeffs[: unstable.shape[1]]))
    along_stable = float(np.linalg.norm(coeffs[unstable.shape[1] :]))
    if along_unstable == 0.0:
        return None if along_stable > 0.0 else 0.0
    return along_stable / along_unstable


def _alpha_approach(
    field_: CyclicVectorField,
    x0: np.ndarray,
    horizon: float,
    thresholds: LimitThresholds,
    known: Sequence[np.ndarray],
    config: IntegratorConfig,
) -> Optional[LimitSetReport]:
    """後ろ向きの解が既知の平衡点の visit_radius に入り、かつ局所不安定部分空間に沿っていれば Equilibrium。

    平衡点の近くでは強い安定方向が後ろ向きに増幅されるため、入った時点で止めて判定する。
    """

    targets = list(known)
    if not targets:
        try:
            targets = [newton_refine(field_, x0, thresholds.newton)]
        except LabError:
            return None

    def near_equilibrium(t: float, x: np.ndarray) -> bool:
        return any(np.linalg.norm(x - e) <= thresholds.visit_radius for e in targets)

    trajectory = integrate(field_, x0, 0.0, -horizon, config, stop_when=near_equilibrium, raise_on_failure=False)
    if trajectory.status != TrajectoryStatus.STOPPED:
        return None
    end = trajectory.end_state
    e = min(targets, key=lambda candidate: float(np.linalg.norm(end - candidate)))
    ratio = stable_ratio(field_, e, end)
    if ratio is None or ratio > UNSTABLE_CONE:
        logger.info("classify_limit_set %s (Alpha): entered near %s off the unstable subspace (ratio=%s)", field_.name, e.tolist(), ratio)
        return None
    logger.info("classify_limit_set %s (Alpha): equilibrium at %s via its unstable subspace", field_.name, e.tolist())
    return LimitSetReport(
        kind=LimitSetKind.EQUILIBRIUM,
        direction=LimitDirection.ALPHA,
        equilibrium=e.tolist(),
        evidence=LimitSetEvidence(
            final_distance=float(np.linalg.norm(end - e)),
            horizon_used=abs(trajectory.end_time),
            status=trajectory.status.value,
            stable_ratio=ratio,
        ),
    )


def classify_limit_set(
    field_: CyclicVectorField,
    x0: Sequence[float],
    horizon: float = 1000.0,
    thresholds: Optional[LimitThresholds] = None,
    known_equilibria: Optional[Sequence[Sequence[float]]] = None,
    direction: LimitDirection = LimitDirection.OMEGA,
    config: Optional[IntegratorConfig] = None,
) -> LimitSetReport:
    """x0 を通る解の ω（または α）極限集合を分類する。

    積分失敗（発散・定義域離脱・ステップ上限）は例外にせず、
    Undetermined と evidence.status で返す。
    """

    thresholds = thresholds or LimitThresholds()
    config = config or IntegratorConfig()
    direction = LimitDirection(direction)
    sign = 1.0 if direction == LimitDirection.OMEGA else -1.0
    known = [np.asarray(e, dtype=float) for e in (known_equilibria or [])]

    if direction == LimitDirection.ALPHA:
        approach = _alpha_approach(field_, np.asarray(x0, dtype=float), horizon, thresholds, known, config)
        if approach is not None:
            return approach

    trajectory = integrate(field_, x0, 0.0, sign * horizon, config, raise_on_failure=False)
    if not trajectory.ok:
        logger.info(
            "classify_limit_set %s (%s): integration stopped with %s", field_.name, direction.value, trajectory.status.value
        )
        return LimitSetReport(
            kind=LimitSetKind.UNDETERMINED,
            direction=direction,
            evidence=LimitSetEvidence(horizon_used=abs(trajectory.end_time), status=trajectory.status.value),
        )

    tail_times, tail_states = _tail(trajectory, thresholds.tail_fraction * horizon)
    final = tail_states[-1] if sign > 0 else tail_states[0]
    candidates = _candidate_equilibria(field_, tail_states, final, known, thresholds.newton)

    # 平衡点
    best_distance: Optional[float] = None
    for e in candidates:
        spread = float(np.max(np.linalg.norm(tail_states - e, axis=1)))
        if spread <= thresholds.eq_radius:
            report = LimitSetReport(
                kind=LimitSetKind.EQUILIBRIUM,
                direction=direction,
                equilibrium=e.tolist(),
                evidence=LimitSetEvidence(final_distance=float(np.linalg.norm(final - e)), horizon_used=horizon),
            )
            logger.info("classify_limit_set %s (%s): equilibrium at %s", field_.name, direction.value, e.tolist())
            return report
        distance = float(np.linalg.norm(final - e))
        best_distance = distance if best_distance is None else min(best_distance, distance)

    # 周期軌道
    tail_traj = Trajectory(tail_times, tail_states, dense=trajectory.dense)
    recurrence_gap: Optional[float] = None
    try:
        section = default_section(field_, tail_traj)
        hits = crossings_of(tail_traj, section)
    except LabError:
        hits = []
    if sign < 0:
        # α 極限では後ろ向きに遅い交差ほど極限集合に近い
        hits = hits[::-1]
    if len(hits) >= 3:
        points = np.array([p for _, p in hits[-6:]])
        recurrence_gap = float(np.max(np.linalg.norm(np.diff(points, axis=0), axis=1)))
        if recurrence_gap <= thresholds.rec_tol:
            orbit = _confirm_cycle(field_, hits, section, thresholds, config)
            if orbit is not None:
                logger.info(
                    "classify_limit_set %s (%s): periodic orbit with period %.6f",
                    field_.name,
                    direction.value,
                    orbit.period,
                )
                return LimitSetReport(
                    kind=LimitSetKind.PERIODIC_ORBIT,
                    direction=direction,
                    period=orbit.period,
                    anchor=orbit.anchor.tolist(),
                    evidence=LimitSetEvidence(
                        final_distance=float(np.min(np.linalg.norm(orbit.samples.states - final, axis=1))),
                        recurrence_gap=recurrence_gap,
                        horizon_used=horizon,
                    ),
                )

    # 平衡点とその連結軌道（交互の訪問によるヒューリスティック）
    visited: List[np.ndarray] = []
    entries = 0
    near_any = np.zeros(len(tail_states), dtype=bool)
    for e in candidates:
        distances = np.linalg.norm(tail_states - e, axis=1)
        count = _entries(distances, thresholds.visit_radius)
        if count:
            visited.append(e)
            entries += count
            near_any |= distances <= thresholds.visit_radius
    excursion = bool(np.any(~near_any))
    if visited and entries >= 2 and excursion:
        logger.info(
            "classify_limit_set %s (%s): %d equilibria visited %d times", field_.name, direction.value, len(visited), entries
        )
        return LimitSetReport(
            kind=LimitSetKind.EQUILIBRIA_WITH_CONNECTIONS,
            direction=direction,
            equilibria=[e.tolist() for e in visited],
            evidence=LimitSetEvidence(
                final_distance=best_distance,
                recurrence_gap=recurrence_gap,
                visited_equilibria=len(visited),
                horizon_used=horizon,
                heuristic=True,
            ),
        )

    logger.warning("classify_limit_set %s (%s): undetermined after horizon %g", field_.name, direction.value, horizon)
    return LimitSetReport(
        kind=LimitSetKind.UNDETERMINED,
        direction=direction,
        evidence=LimitSetEvidence(
            final_distance=best_distance,
            recurrence_gap=recurrence_gap,
            visited_equilibria=len(visited),
            horizon_used=horizon,
        ),
    )


def _confirm_cycle(
    field_: CyclicVectorField,
    hits: List[Tuple[float, np.ndarray]],
    section: SectionSpec,
    thresholds: LimitThresholds,
    config: IntegratorConfig,
) -> Optional[PeriodicOrbit]:
    spacing = float(np.max(np.abs(np.diff([t for t, _ in hits]))))
    try:
        orbit = find_periodic_orbit(
            field_,
            hits[-1][1],
            section=section,
            config=config,
            newton=thresholds.newton,
            transient=0.0,
            explore_window=3.0 * spacing,
        )
    except LabError as exc:
        logger.info("Cycle confirmation failed: %s", exc.code)
        return None
    gap = float(np.min(np.linalg.norm(orbit.samples.states - hits[-1][1], axis=1)))
    if gap > thresholds.visit_radius:
        logger.info("Cycle found by Newton lies %.3e away from the recurrence", gap)
        return None
    return orbit


def robustness_probe(
    field_: CyclicVectorField,
    bump: CyclicVectorField,
    epsilons: Sequence[float],
    x0: Sequence[float],
    horizon: float = 1000.0,
    thresholds: Optional[LimitThresholds] = None,
    class_spec: Optional[SampleSpec] = None,
    known_equilibria: Optional[Sequence[Sequence[float]]] = None,
    config: Optional[IntegratorConfig] = None,
    workers: int = 1,
) -> RobustnessReport:
    """f + εg の ω 極限集合を ε ごとに分類し、分類の遷移表を作る。

    クラス検査に落ちた ε は LeftClass として記録し、分類はしない。
    """

    eps_sorted = sorted(float(e) for e in epsilons)
    class_spec = class_spec or SampleSpec(count=200)

    def probe(epsilon: float) -> RobustnessEntry:
        perturbed = field_ if epsilon == 0.0 else add_fields(field_, bump, epsilon)
        if epsilon != 0.0:
            membership = check_class(perturbed, class_spec)
            if not membership.in_lminus:
                return RobustnessEntry(epsilon=epsilon, left_class=True, class_failures=len(membership.failures))
        report = classify_limit_set(perturbed, x0, horizon, thresholds, known_equilibria, config=config)
        return RobustnessEntry(epsilon=epsilon, left_class=False, report=report)

    entries = parallel_map(probe, eps_sorted, workers)

    transitions: List[TransitionRow] = []
    threshold: Optional[float] = None
    for before, after in zip(entries, entries[1:]):
        if before.label != after.label:
            transitions.append(
                TransitionRow(eps_from=before.epsilon, eps_to=after.epsilon, kind_from=before.label, kind_to=after.label)
            )
            if threshold is None:
                threshold = after.epsilon

    below = [e for e in entries if not e.left_class and (threshold is None or e.epsilon < threshold)]
    pb_consistent = all(e.report is not None and e.report.kind != LimitSetKind.UNDETERMINED for e in below)
    if not pb_consistent:
        logger.warning("robustness_probe %s: undetermined classification below the first transition", field_.name)
    logger.info(
        "robustness_probe %s: %d epsilons, %d transitions, threshold=%s",
        field_.name,
        len(entries),
        len(transitions),
        threshold,
    )
    return RobustnessReport(entries=entries, transitions=transitions, threshold=threshold, pb_consistent=pb_consistent)


__all__ = ["LimitThresholds", "classify_limit_set", "robustness_probe", "stable_ratio"]

"""臨界要素の調査（Morse–Smale 性の検査）と、各コマンドが共有する収集処理。

平衡点の多点 Newton、周期軌道の探索、格子上の初期値からの極限集合の分類、
双曲要素の全ペアに対する連結軌道の射撃と横断性判定をこの順に行う。
判定はあくまで有限の掃引に基づく「整合する」という水準の証拠である。
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from apps.lab.cli.context import RunContext
from apps.lab.connect import (
    ConnectingOrbit,
    DichotomyFrames,
    Endpoint,
    automatic_transversality_check,
    dichotomy_frames,
    distance_to_orbit,
    shoot_connection,
    transversality_test,
    unit_directions,
)
from apps.lab.critical import (
    Equilibrium,
    PeriodicOrbit,
    classify_periodic_orbit,
    find_equilibria,
    find_periodic_orbit,
    planar_projection_injectivity,
)
from apps.lab.errors import LabError
from apps.lab.limitset import classify_limit_set
from apps.lab.logging_utils import get_logger
from apps.lab.workers import parallel_map
from packages.shared_schemas import (
    AutomaticPrediction,
    CensusReport,
    ConnectionRecord,
    InjectivityReport,
    LimitDirection,
    LimitSetKind,
    LimitSetReport,
    NonwanderingSummary,
    OrbitConsistencyReport,
    TransversalityReport,
)

logger = get_logger(__name__)

RECHECK_FACTOR = 0.1


@dataclass
class CycleRecord:
    orbit: PeriodicOrbit
    consistency: OrbitConsistencyReport
    injectivity: List[InjectivityReport]

    def to_dict(self) -> dict:
        data = self.orbit.to_dict()
        data["consistency"] = self.consistency.model_dump(mode="json")
        data["injectivity"] = [r.model_dump(mode="json") for r in self.injectivity]
        return data


@dataclass
class ConnectionAnalysis:
    record: ConnectionRecord
    orbit: Optional[ConnectingOrbit] = None
    transversality: Optional[TransversalityReport] = None
    prediction: Optional[AutomaticPrediction] = None
    frames: Optional[DichotomyFrames] = None


@dataclass
class CensusRun:
    report: CensusReport
    analyses: List[ConnectionAnalysis]
    cycles: List[CycleRecord]


def gather_equilibria(ctx: RunContext) -> List[Equilibrium]:
    a = ctx.analysis
    return find_equilibria(
        ctx.vector_field,
        ctx.search_box(),
        a.grid_per_axis,
        a.newton,
        a.tol_spectrum,
        workers=ctx.workers,
    )


def _same_cycle(known: PeriodicOrbit, candidate: PeriodicOrbit, radius: float) -> bool:
    if abs(known.period - candidate.period) > 1e-3 * max(1.0, known.period):
        return False
    return distance_to_orbit(known, candidate.anchor) <= radius


def gather_cycles(ctx: RunContext, seeds: Sequence[np.ndarray]) -> List[CycleRecord]:
    """種の点ごとに周期軌道を探し、同じ軌道は1つにまとめる。見つからない種は飛ばす。"""

    a = ctx.analysis
    field_ = ctx.vector_field

    def attempt(seed: np.ndarray) -> Optional[PeriodicOrbit]:
        try:
            return find_periodic_orbit(
                field_,
                seed,
                config=ctx.integrator,
                newton=a.newton,
                transient=a.transient,
                explore_window=a.explore_window,
                samples_per_period=a.samples_per_period,
                multiplier_tol=a.multiplier_tol,
            )
        except LabError as exc:
            logger.info("No periodic orbit from seed %s: %s", np.round(seed, 6).tolist(), exc.code)
            return None

    records: List[CycleRecord] = []
    for orbit in parallel_map(attempt, list(seeds), ctx.workers):
        if orbit is None or any(_same_cycle(r.orbit, orbit, a.visit_radius) for r in records):
            continue
        orbit, consistency = classify_periodic_orbit(field_, orbit, a.multiplier_tol, ctx.integrator, recompute=False)
        injectivity: List[InjectivityReport] = []
        for s in range(1, field_.n + 1):
            try:
                injectivity.append(planar_projection_injectivity(orbit, s))
            except LabError as exc:
                logger.info("Injectivity check skipped for s=%d: %s", s, exc.code)
        records.append(CycleRecord(orbit, consistency, injectivity))
    logger.info("gather_cycles %s: %d seeds, %d distinct orbits", field_.name, len(seeds), len(records))
    return records


def classify_limits(
    ctx: RunContext,
    starts: Sequence[np.ndarray],
    equilibria: Sequence[Equilibrium],
    direction: LimitDirection = LimitDirection.OMEGA,
) -> List[LimitSetReport]:
    known = [e.x for e in equilibria]

    def classify(x0: np.ndarray) -> LimitSetReport:
        return classify_limit_set(
            ctx.vector_field,
            x0,
            ctx.analysis.horizon,
            ctx.thresholds,
            known,
            direction=direction,
            config=ctx.integrator,
        )

    return parallel_map(classify, list(starts), ctx.workers)


def references_critical_element(
    report: LimitSetReport,
    equilibria: Sequence[Equilibrium],
    cycles: Sequence[PeriodicOrbit],
    radius: float,
) -> bool:
    """極限集合が既知の臨界要素（とその連結）で説明できるか。"""

    def known_point(x: Sequence[float]) -> bool:
        point = np.asarray(x, dtype=float)
        return any(np.linalg.norm(e.x - point) <= radius for e in equilibria)

    if report.kind == LimitSetKind.EQUILIBRIUM and report.equilibrium is not None:
        return known_point(report.equilibrium)
    if report.kind == LimitSetKind.PERIODIC_ORBIT and report.anchor is not None:
        anchor = np.asarray(report.anchor, dtype=float)
        return any(distance_to_orbit(c, anchor) <= radius for c in cycles)
    if report.kind == LimitSetKind.EQUILIBRIA_WITH_CONNECTIONS:
        return bool(report.equilibria) and all(known_point(x) for x in report.equilibria)
    return False


def multiple_element_violations(limit_sets: Sequence[LimitSetReport]) -> List[str]:
    """臨界要素を2つ以上含む極限集合。Morse–Smale 系では各極限集合はちょうど1つの臨界要素から成る。"""

    violations: List[str] = []
    for index, report in enumerate(limit_sets):
        if len(report.equilibria) > 1:
            violations.append(
                f"MULTIPLE_CRITICAL_ELEMENTS in limit set {index}: {len(report.equilibria)} equilibria ({report.kind.value})"
            )
    return violations


def connection_pairs(
    equilibria: Sequence[Equilibrium],
    cycles: Sequence[PeriodicOrbit],
) -> List[Tuple[Equilibrium, Endpoint]]:
    """射撃を試みる (e⁻, γ⁺) の組。e⁻ は指数が正の双曲平衡点。"""

    sources = [e for e in equilibria if e.hyperbolic and e.morse_index > 0]
    pairs: List[Tuple[Equilibrium, Endpoint]] = []
    for source in sources:
        for target in equilibria:
            if target is source or not target.hyperbolic or target.morse_index > source.morse_index:
                continue
            pairs.append((source, target))
        for cycle in cycles:
            if cycle.hyperbolic:
                pairs.append((source, cycle))
    return pairs


def _shoot(ctx: RunContext, source: Equilibrium, target: Endpoint, tighten: float = 1.0) -> List[ConnectingOrbit]:
    a = ctx.analysis
    config = ctx.integrator if tighten == 1.0 else ctx.integrator.tightened(tighten)
    return shoot_connection(
        ctx.vector_field,
        source,
        target,
        radius=a.shoot_radius,
        directions=a.directions,
        horizon=a.shoot_horizon,
        conv_tol=a.conv_tol * tighten,
        tube_tol=a.tube_tol,
        config=config,
        convention=ctx.convention,
        seed=ctx.seed,
        workers=ctx.workers,
    )


def _frames_verdict(
    ctx: RunContext,
    orbit: ConnectingOrbit,
    prediction: Optional[AutomaticPrediction],
) -> Tuple[Optional[TransversalityReport], Optional[DichotomyFrames]]:
    a = ctx.analysis
    tau, n_trunc = a.tau, a.n_trunc
    report: Optional[TransversalityReport] = None
    frames: Optional[DichotomyFrames] = None
    for _ in range(2):
        try:
            candidate = dichotomy_frames(ctx.vector_field, orbit, tau, n_trunc, ctx.integrator, ctx.workers)
            report = transversality_test(candidate, orbit.i_minus, orbit.i_plus, a.angle_tol, a.confident_angle, prediction)
        except LabError as exc:
            logger.warning("Transversality frames failed (%s): %s", exc.code, exc.detail)
            return report, frames
        frames = candidate
        if report.transverse or prediction is None or not prediction.predicted_transverse:
            return report, frames
        # 予測と食い違うときは刻みを半分にして一度だけ再判定する
        tau = 0.5 * frames.tau
        n_trunc = 2 * frames.n_trunc
    return report, frames


def analyze_connection(
    ctx: RunContext,
    source: Equilibrium,
    target: Endpoint,
    with_frames: bool = True,
) -> ConnectionAnalysis:
    """1組の端点について射撃・自動横断性の予測・フレームによる判定をまとめる。"""

    orbits = _shoot(ctx, source, target)
    target_is_cycle = isinstance(target, PeriodicOrbit)
    homoindexed = not target_is_cycle and source.morse_index == target.morse_index
    record = ConnectionRecord(
        source=source.x.tolist(),
        target=target.to_dict(),
        target_kind="periodic_orbit" if target_is_cycle else "equilibrium",
        i_minus=source.morse_index,
        i_plus=target.morse_index,
        attempted=len(unit_directions(source.morse_index, ctx.analysis.directions, ctx.seed)),
        found=len(orbits),
        homoindexed=homoindexed,
    )
    if not orbits:
        return ConnectionAnalysis(record)

    orbit = orbits[0]
    prediction = automatic_transversality_check(orbit)
    record.prediction = prediction.label
    report: Optional[TransversalityReport] = None
    frames: Optional[DichotomyFrames] = None
    if target_is_cycle:
        record.transverse = prediction.predicted_transverse
        record.verdict_source = "automatic"
    elif with_frames:
        report, frames = _frames_verdict(ctx, orbit, prediction)
        if report is not None:
            record.transverse = report.transverse
            record.min_principal_angle = report.min_principal_angle
            record.verdict_source = "frames"

    if homoindexed:
        recheck = _shoot(ctx, source, target, tighten=RECHECK_FACTOR)
        record.notable = bool(recheck)
        logger.warning(
            "Homoindexed connection %s -> %s from %d directions (recheck %s)",
            np.round(source.x, 6).tolist(),
            np.round(target.x, 6).tolist(),
            len(orbits),
            "kept it" if recheck else "lost it",
        )
    return ConnectionAnalysis(record, orbit, report, prediction, frames)


def _hyperbolic_fraction(equilibria: Sequence[Equilibrium], cycles: Sequence[PeriodicOrbit]) -> float:
    elements = [e.hyperbolic for e in equilibria] + [c.hyperbolic for c in cycles]
    return float(np.mean(elements)) if elements else 0.0


def run_census(ctx: RunContext) -> CensusRun:
    """探索箱の掃引から CensusReport を組み立てる。"""

    a = ctx.analysis
    equilibria = gather_equilibria(ctx)
    starts = ctx.initial_conditions()
    limit_sets = classify_limits(ctx, starts, equilibria)

    seeds = list(ctx.cycle_seeds())
    seeds += [np.asarray(r.anchor, dtype=float) for r in limit_sets if r.kind == LimitSetKind.PERIODIC_ORBIT and r.anchor]
    cycle_records = gather_cycles(ctx, seeds)
    cycles = [r.orbit for r in cycle_records]

    referenced = sum(references_critical_element(r, equilibria, cycles, a.visit_radius) for r in limit_sets)
    summary = NonwanderingSummary(
        limit_sets=len(limit_sets),
        referenced=referenced,
        all_referenced=referenced == len(limit_sets),
    )

    analyses = [analyze_connection(ctx, s, t) for s, t in connection_pairs(equilibria, cycles)]

    violations: List[str] = []
    findings: List[str] = []
    for e in equilibria:
        if not e.hyperbolic:
            violations.append(f"NON_HYPERBOLIC_EQUILIBRIUM at {np.round(e.x, 8).tolist()}")
    for record in cycle_records:
        if not record.orbit.hyperbolic:
            violations.append(f"NON_HYPERBOLIC_ORBIT with period {record.orbit.period:.6f}")
        findings += record.consistency.findings
        findings += [f"PLANAR_NOT_INJECTIVE on cycle: s={r.s}" for r in record.injectivity if not r.injective]
    if not summary.all_referenced:
        violations.append(f"UNREFERENCED_LIMIT_SET: {len(limit_sets) - referenced} of {len(limit_sets)}")
    violations += multiple_element_violations(limit_sets)
    for analysis in analyses:
        record = analysis.record
        label = f"{record.i_minus}->{record.i_plus} ({record.target_kind})"
        if record.found and record.transverse is False:
            violations.append(f"NON_TRANSVERSE_CONNECTION {label}")
        if record.notable:
            violations.append(f"HOMOINDEXED_CONNECTION {label}")
        if analysis.prediction is not None:
            findings += analysis.prediction.findings

    report = CensusReport(
        equilibria=[e.to_dict() for e in equilibria],
        periodic_orbits=[r.to_dict() for r in cycle_records],
        hyperbolic_fraction=_hyperbolic_fraction(equilibria, cycles),
        connections=[x.record for x in analyses],
        limit_sets=limit_sets,
        nonwandering_summary=summary,
        morse_smale_verdict="Violations" if violations else "ConsistentWithMorseSmale",
        violations=violations,
        findings=findings,
    )
    logger.info(
        "Census %s: %d equilibria, %d cycles, %d connection pairs, verdict %s",
        ctx.vector_field.name,
        len(equilibria),
        len(cycles),
        len(analyses),
        report.morse_smale_verdict,
    )
    for violation in violations:
        logger.warning("Census violation: %s", violation)
    return CensusRun(report, analyses, cycle_records)


__all__ = [
    "CensusRun",
    "ConnectionAnalysis",
    "CycleRecord",
    "analyze_connection",
    "classify_limits",
    "connection_pairs",
    "gather_cycles",
    "gather_equilibria",
    "multiple_element_violations",
    "references_critical_element",
    "run_census",
]

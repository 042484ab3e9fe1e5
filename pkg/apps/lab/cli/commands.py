"""各サブコマンドの本体。どれも RunContext を受け取り、レポートの result 部を返す。"""

from __future__ import annotations

from typing import Any, Callable, Dict, List

import numpy as np

from apps.lab.cli.census import (
    analyze_connection,
    classify_limits,
    connection_pairs,
    gather_cycles,
    gather_equilibria,
    run_census,
)
from apps.lab.cli.context import RunContext
from apps.lab.cli.reporting import write_csv
from apps.lab.connect import bump_perturbation, frames_to_json, hyperbolic_shift_search
from apps.lab.critical import find_periodic_orbit
from apps.lab.errors import InvalidParameter
from apps.lab.floquet import (
    decomposition_to_json,
    invariant_blocks,
    verify_block_nvalues,
    verify_cone_invariance,
    verify_cone_rank,
)
from apps.lab.integrate import integrate, trajectory_to_csv, variational_flow
from apps.lab.limitset import robustness_probe
from apps.lab.logging_utils import get_logger
from apps.lab.lyapunov import ConeSide, difference_profile, max_cone_index, n_profile
from apps.lab.model import add_fields, check_class, check_dissipative, metric_d
from apps.lab.model.classes import SampleSpec
from packages.shared_schemas import LimitDirection

logger = get_logger(__name__)

CommandFunc = Callable[[RunContext], Dict[str, Any]]

PROFILE_SAMPLES = 200

# 遷移表 CSV での分類ラベルの数値コード
LABEL_CODES: Dict[str, int] = {
    "Equilibrium": 0,
    "PeriodicOrbit": 1,
    "EquilibriaWithConnections": 2,
    "Undetermined": 3,
    "LeftClass": 4,
}


def _require_signature(ctx: RunContext) -> None:
    if ctx.vector_field.signature is None:
        raise InvalidParameter("このコマンドには符号 δ を持つモデルが必要です", model=ctx.vector_field.name)


def cmd_check_class(ctx: RunContext) -> Dict[str, Any]:
    a = ctx.analysis
    report = check_class(ctx.vector_field, ctx.sample_spec(), a.zero_tol)
    if a.dissipative_radius is not None:
        record = check_dissipative(ctx.vector_field, a.dissipative_radius, a.dissipative_samples, ctx.seed)
        report = report.model_copy(update={"dissipative": record})
    return {"model": ctx.vector_field.describe(), "class": report}


def cmd_simulate(ctx: RunContext) -> Dict[str, Any]:
    field_ = ctx.vector_field
    t1 = float(ctx.option("t1", ctx.analysis.horizon))
    starts = ctx.initial_conditions()
    runs: List[Dict[str, Any]] = []
    trajectories = []
    for k, x0 in enumerate(starts):
        trajectory = integrate(field_, x0, 0.0, t1, ctx.integrator, raise_on_failure=False)
        trajectories.append(trajectory)
        path = trajectory_to_csv(trajectory, ctx.outdir / f"simulate_{k}.csv")
        entry: Dict[str, Any] = {
            "x0": x0.tolist(),
            "status": trajectory.status.value,
            "end_time": trajectory.end_time,
            "end_state": trajectory.end_state.tolist(),
            "accepted_steps": trajectory.accepted_steps,
            "rejected_steps": trajectory.rejected_steps,
            "csv": str(path),
        }
        if field_.signature is not None and trajectory.span > 0:
            times = np.linspace(trajectory.times[0], trajectory.times[-1], PROFILE_SAMPLES)
            derivatives = [field_.rhs(x) for x in trajectory.sample(times)]
            entry["n_profile_velocity"] = n_profile(derivatives, field_.signature, ctx.convention)
        runs.append(entry)

    result: Dict[str, Any] = {"t1": t1, "runs": runs}
    ok = [t for t in trajectories if t.ok and t.span > 0]
    if field_.signature is not None and len(ok) >= 2:
        span = min(ok[0].end_time, ok[1].end_time)
        times = np.linspace(0.0, span, PROFILE_SAMPLES)
        result["difference_profile"] = difference_profile(ok[0], ok[1], times, field_.signature, ctx.convention)
    return result


def cmd_limits(ctx: RunContext) -> Dict[str, Any]:
    a = ctx.analysis
    equilibria = gather_equilibria(ctx)
    starts = ctx.initial_conditions()
    result: Dict[str, Any] = {
        "initial_conditions": [x.tolist() for x in starts],
        "omega": classify_limits(ctx, starts, equilibria),
    }
    if ctx.option("alpha", False):
        result["alpha"] = classify_limits(ctx, starts, equilibria, LimitDirection.ALPHA)
    if a.bump is not None and starts:
        bump = bump_perturbation(ctx.vector_field.n, a.bump.j, a.bump.center, a.bump.r, a.bump.coupled)
        robustness = robustness_probe(
            ctx.vector_field,
            bump,
            a.epsilons,
            starts[0],
            a.horizon,
            ctx.thresholds,
            SampleSpec(box=ctx.sample_box(), count=min(a.sample_count, 200), seed=ctx.seed),
            [e.x for e in equilibria],
            ctx.integrator,
            ctx.workers,
        )
        path = write_csv(
            ctx.outdir / "limits_transitions.csv",
            ["eps_from", "eps_to", "kind_from", "kind_to"],
            [(row.eps_from, row.eps_to, LABEL_CODES[row.kind_from], LABEL_CODES[row.kind_to]) for row in robustness.transitions],
        )
        result["robustness"] = robustness
        result["transitions_csv"] = {"path": str(path), "codes": LABEL_CODES}
    return result


def cmd_equilibria(ctx: RunContext) -> Dict[str, Any]:
    equilibria = gather_equilibria(ctx)
    return {
        "search_box": ctx.search_box().to_dict(),
        "equilibria": [e.to_dict() for e in equilibria],
        "hyperbolic": sum(e.hyperbolic for e in equilibria),
    }


def cmd_cycles(ctx: RunContext) -> Dict[str, Any]:
    records = gather_cycles(ctx, ctx.cycle_seeds())
    for k, record in enumerate(records):
        trajectory_to_csv(record.orbit.samples, ctx.outdir / f"cycle_{k}.csv")
    return {"periodic_orbits": [r.to_dict() for r in records]}


def cmd_floquet(ctx: RunContext) -> Dict[str, Any]:
    """解作用素（--cycle ならモノドロミー、それ以外は x0 からの S(t, 0)）をブロックに分解する。"""

    _require_signature(ctx)
    field_ = ctx.vector_field
    a = ctx.analysis
    signature = field_.signature
    x0 = ctx.initial_conditions()[0]
    if ctx.option("cycle", False):
        orbit = find_periodic_orbit(
            field_,
            ctx.cycle_seeds()[0],
            config=ctx.integrator,
            newton=a.newton,
            transient=a.transient,
            explore_window=a.explore_window,
            samples_per_period=a.samples_per_period,
            multiplier_tol=a.multiplier_tol,
        )
        x0, t = orbit.anchor, orbit.period
        operator = orbit.monodromy if orbit.monodromy is not None else variational_flow(field_, x0, 0.0, t, ctx.integrator)
    else:
        t = float(ctx.option("t", 1.0))
        operator = variational_flow(field_, x0, 0.0, t, ctx.integrator)

    decomposition = invariant_blocks(operator, a.gap_tol)
    samples = min(a.verify_samples, 200)
    top = min(max_cone_index(field_.n), len(decomposition.blocks))
    cone_checks = []
    for h in range(1, max_cone_index(field_.n) + 1):
        for which, (s, end) in ((ConeSide.K_LOWER, (0.0, t)), (ConeSide.K_UPPER, (t, 0.0))):
            cone_checks.append(
                verify_cone_invariance(
                    field_, x0, h, s, end, samples, ctx.seed, which, ctx.convention, ctx.integrator
                )
            )
    return {
        "x0": np.asarray(x0).tolist(),
        "t": t,
        "decomposition": decomposition_to_json(decomposition),
        "block_nvalues": verify_block_nvalues(decomposition, signature, ctx.convention, samples, ctx.seed),
        "cone_rank": [verify_cone_rank(decomposition, h, signature, ctx.convention, samples, ctx.seed) for h in range(1, top + 1)],
        "cone_invariance": cone_checks,
    }


def _connection_results(ctx: RunContext, with_frames: bool) -> Dict[str, Any]:
    equilibria = gather_equilibria(ctx)
    cycles = [r.orbit for r in gather_cycles(ctx, ctx.cycle_seeds())] if ctx.analysis.cycle_seeds else []
    entries: List[Dict[str, Any]] = []
    for k, (source, target) in enumerate(connection_pairs(equilibria, cycles)):
        analysis = analyze_connection(ctx, source, target, with_frames=with_frames)
        entry: Dict[str, Any] = {"record": analysis.record}
        if analysis.orbit is not None:
            entry["orbit"] = analysis.orbit.to_dict()
            entry["csv"] = str(trajectory_to_csv(analysis.orbit.trajectory, ctx.outdir / f"connection_{k}.csv"))
            if analysis.orbit.profile is not None:
                entry["n_profile"] = analysis.orbit.profile
        if analysis.prediction is not None:
            entry["automatic_prediction"] = analysis.prediction
        if analysis.transversality is not None:
            entry["transversality"] = analysis.transversality
        if analysis.frames is not None:
            entry["frames"] = frames_to_json(analysis.frames)
        entries.append(entry)
    return {"equilibria": [e.to_dict() for e in equilibria], "connections": entries}


def cmd_connect(ctx: RunContext) -> Dict[str, Any]:
    return _connection_results(ctx, with_frames=False)


def cmd_transversality(ctx: RunContext) -> Dict[str, Any]:
    return _connection_results(ctx, with_frames=True)


def cmd_perturb(ctx: RunContext) -> Dict[str, Any]:
    """非双曲な平衡点を f + α(x−e) でずらす試みと、バンプ摂動のクラス検査・距離。"""

    a = ctx.analysis
    field_ = ctx.vector_field
    equilibria = gather_equilibria(ctx)
    shifts = [
        {"equilibrium": e.to_dict(), "results": hyperbolic_shift_search(field_, e, a.perturb_alpha, a.tol_spectrum)}
        for e in equilibria
    ]
    result: Dict[str, Any] = {"shifts": shifts}
    if a.bump is not None:
        bump = bump_perturbation(field_.n, a.bump.j, a.bump.center, a.bump.r, a.bump.coupled)
        rows = []
        for epsilon in a.epsilons:
            if epsilon == 0.0:
                continue
            perturbed = add_fields(field_, bump, epsilon)
            report = check_class(perturbed, SampleSpec(box=ctx.sample_box(), count=min(a.sample_count, 200), seed=ctx.seed))
            rows.append(
                {
                    "epsilon": epsilon,
                    "in_lminus": report.in_lminus,
                    "class_failures": len(report.failures),
                    "distance": metric_d(field_, perturbed, seed=ctx.seed),
                }
            )
        result["bump"] = {"spec": a.bump, "entries": rows}
        write_csv(
            ctx.outdir / "perturb_bump.csv",
            ["epsilon", "in_lminus", "distance"],
            [(r["epsilon"], float(r["in_lminus"]), r["distance"]) for r in rows],
        )
    return result


def cmd_census(ctx: RunContext) -> Dict[str, Any]:
    run = run_census(ctx)
    paths = [trajectory_to_csv(r.orbit.samples, ctx.outdir / f"cycle_{k}.csv") for k, r in enumerate(run.cycles)]
    return {"census": run.report, "cycle_csv": [str(p) for p in paths]}


COMMANDS: Dict[str, CommandFunc] = {
    "check-class": cmd_check_class,
    "simulate": cmd_simulate,
    "limits": cmd_limits,
    "equilibria": cmd_equilibria,
    "cycles": cmd_cycles,
    "floquet": cmd_floquet,
    "connect": cmd_connect,
    "transversality": cmd_transversality,
    "perturb": cmd_perturb,
    "census": cmd_census,
}


__all__ = ["COMMANDS", "CommandFunc"]

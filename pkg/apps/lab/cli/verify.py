"""不変量・性質の検査スイート（verify コマンド）。

閉じた形の答えや独立な総当たりと突き合わせる 11 項目からなる。
quick=True ではサンプル数と積分時間を減らす。
"""

from __future__ import annotations

import itertools
import time
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np
from scipy.linalg import expm, subspace_angles

from apps.lab.connect import (
    bump_perturbation,
    dichotomy_frames,
    dichotomy_projections,
    dichotomy_roughness_probe,
    green_function_solve,
    shoot_connection,
    transversality_test,
)
from apps.lab.connect.dichotomy import DichotomyFrames, projections_at
from apps.lab.critical import (
    classify_equilibrium,
    find_equilibria,
    find_periodic_orbit,
    planar_projection_injectivity,
)
from apps.lab.errors import LabError
from apps.lab.floquet import invariant_blocks, verify_block_nvalues, verify_cone_invariance
from apps.lab.limitset import LimitThresholds, classify_limit_set, robustness_probe
from apps.lab.logging_utils import get_logger
from apps.lab.lyapunov import DEFAULT_CONVENTION, CountedSign, EdgePairing, NConvention, max_cone_index, n_bounds, n_profile
from apps.lab.model import (
    Box,
    FeedbackSignature,
    bidirectional_synthetic,
    goodwin,
    linear_cyclic,
    random_mminus_matrix,
    repressilator,
)
from apps.lab.model.classes import SampleSpec
from packages.shared_schemas import IntegratorConfig, LimitSetKind, VerifyCheck, VerifyReport

logger = get_logger(__name__)

CheckFunc = Callable[[bool, int, NConvention], Tuple[bool, Dict[str, Any]]]

GOODWIN_OSCILLATORY = {"p": 12.0, "b": 0.5}
GOODWIN_STABLE = {"p": 2.0, "b": 1.0}
GOODWIN_SEED = (0.3, 0.6, 1.5)


def brute_force_bounds(x: Sequence[float], delta: Sequence[int], convention: NConvention) -> Tuple[int, int]:
    """零座標の符号をすべて試して辺ごとに数える、n_bounds とは別に書いた総当たり。"""

    n = len(x)
    signs = [0 if v == 0 else (1 if v > 0 else -1) for v in x]
    zeros = [i for i, s in enumerate(signs) if s == 0]
    forward = convention.pairing == EdgePairing.EDGE_FORWARD
    negative = convention.counted_sign == CountedSign.NEGATIVE
    values = []
    for assignment in itertools.product((-1, 1), repeat=len(zeros)):
        full = list(signs)
        for i, s in zip(zeros, assignment):
            full[i] = s
        count = 0
        for i in range(n):
            neighbour = full[(i + 1) % n] if forward else full[(i - 1) % n]
            product = delta[i] * full[i] * neighbour
            if (product < 0) if negative else (product > 0):
                count += 1
        values.append(count)
    return min(values), max(values)


def check_n_oddness_and_drop(quick: bool, seed: int, convention: NConvention) -> Tuple[bool, Dict[str, Any]]:
    rng = np.random.default_rng(seed)
    runs = 100 if quick else 1000
    times = np.linspace(0.0, 2.0, 50)
    oddness = increases = 0
    for _ in range(runs):
        n = int(rng.integers(3, 9))
        matrix = random_mminus_matrix(n, rng)
        x0 = rng.standard_normal(n)
        states = [expm(matrix * t) @ x0 for t in times]
        profile = n_profile(states, FeedbackSignature.normalized(n), convention)
        oddness += profile.oddness_violations
        increases += profile.increases
    return oddness == 0 and increases == 0, {"runs": runs, "oddness_violations": oddness, "increases": increases}


def check_floquet_arbiter(quick: bool, seed: int, convention: NConvention) -> Tuple[bool, Dict[str, Any]]:
    field_ = linear_cyclic(3, 1.0, -1.0)
    decomposition = invariant_blocks(expm(field_.jacobian(np.zeros(3))))
    moduli = [float(np.abs(block.eigenvalues[0])) for block in decomposition.blocks]
    expected = [np.exp(-0.5), np.exp(-2.0)]
    moduli_ok = len(moduli) == 2 and all(abs(m - e) <= 1e-8 for m, e in zip(moduli, expected))
    line = np.array([[1.0], [-1.0], [1.0]]) / np.sqrt(3.0)
    angle = float(np.max(subspace_angles(decomposition.blocks[-1].basis, line)))
    report = verify_block_nvalues(decomposition, field_.signature, convention, 20 if quick else 100, seed)
    labels_ok = report.failures == 0 and [b.expected for b in report.blocks] == [1, 3]
    passed = moduli_ok and angle <= 1e-8 and labels_ok
    return passed, {"moduli": moduli, "line_angle": angle, "block_failures": report.failures, "convention": convention.name}


def _zoo_instances(quick: bool) -> List[Tuple[str, Any]]:
    models = [
        ("linear_cyclic", linear_cyclic(3, 1.0, -1.0)),
        ("goodwin", goodwin(**GOODWIN_OSCILLATORY)),
        ("bidirectional_synthetic", bidirectional_synthetic(3)),
    ]
    if not quick:
        models.append(("repressilator", repressilator()))
    return models


def _box_center(box: Box) -> np.ndarray:
    return 0.5 * (np.asarray(box.lower) + np.asarray(box.upper))


def check_cone_invariance(quick: bool, seed: int, convention: NConvention) -> Tuple[bool, Dict[str, Any]]:
    samples = 100 if quick else 1000
    failures: Dict[str, int] = {}
    for name, field_ in _zoo_instances(quick):
        x0 = _box_center(field_.sample_box)
        failed = 0
        for h in range(1, max_cone_index(field_.n) + 1):
            report = verify_cone_invariance(field_, x0, h, 0.0, 1.0, samples, seed, convention=convention, zero_tol=1e-9)
            failed += report.failed
        failures[name] = failed
    return all(v == 0 for v in failures.values()), {"samples_per_h": samples, "failures": failures}


def check_nbounds_oracle(quick: bool, seed: int, convention: NConvention) -> Tuple[bool, Dict[str, Any]]:
    rng = np.random.default_rng(seed)
    count = 1000 if quick else 10_000
    mismatches = 0
    for _ in range(count):
        n = int(rng.integers(3, 9))
        x = rng.standard_normal(n)
        zeros = rng.choice(n, size=int(rng.integers(0, n)), replace=False)
        x[zeros] = 0.0
        delta = tuple(int(v) for v in rng.choice([-1, 1], size=n))
        if np.prod(delta) != -1:
            delta = delta[:-1] + (-delta[-1],)
        signature = FeedbackSignature(n, delta)
        bounds = n_bounds(x, signature, convention)
        if (bounds.n_min, bounds.n_max) != brute_force_bounds(x, delta, convention):
            mismatches += 1
    return mismatches == 0, {"vectors": count, "mismatches": mismatches}


def check_goodwin_cycle(quick: bool, seed: int, convention: NConvention) -> Tuple[bool, Dict[str, Any]]:
    field_ = goodwin(**GOODWIN_OSCILLATORY)
    orbit = find_periodic_orbit(field_, np.array(GOODWIN_SEED), transient=100.0 if quick else 200.0)
    margins = [planar_projection_injectivity(orbit, s).min_distance for s in range(1, 4)]
    passed = orbit.trivial_multiplier_error <= 1e-4 and orbit.unique_unit_modulus and min(margins) > 0.0
    return passed, {
        "period": orbit.period,
        "trivial_multiplier_error": orbit.trivial_multiplier_error,
        "unique_unit_modulus": orbit.unique_unit_modulus,
        "injectivity_margins": margins,
    }


def check_morse_indices(quick: bool, seed: int, convention: NConvention) -> Tuple[bool, Dict[str, Any]]:
    indices = {c: classify_equilibrium(linear_cyclic(3, c, -1.0), np.zeros(3)).morse_index for c in (1.0, 3.0)}
    return indices == {1.0: 0, 3.0: 2}, {"c=1": indices[1.0], "c=3": indices[3.0]}


def _coordinate_frames(u_cols: Sequence[int], s_cols: Sequence[int], n: int = 3) -> DichotomyFrames:
    eye = np.eye(n)
    u, s = eye[:, list(u_cols)], eye[:, list(s_cols)]
    p_minus, p_plus, oblique = projections_at(u, s)
    return DichotomyFrames(1.0, 1, u, s, p_minus, p_plus, oblique, 0.0)


def check_transversality(quick: bool, seed: int, convention: NConvention) -> Tuple[bool, Dict[str, Any]]:
    spanning = transversality_test(_coordinate_frames([0, 1], [1, 2]), 2, 1)
    degenerate = transversality_test(_coordinate_frames([0], [0, 1]), 1, 1)
    coordinate_ok = (
        spanning.span_defect == 0
        and spanning.bounded_adjoint_dim == 0
        and spanning.transverse
        and degenerate.span_defect == 1
        and degenerate.bounded_adjoint_dim == 1
        and not degenerate.transverse
    )

    field_ = bidirectional_synthetic(3)
    source = classify_equilibrium(field_, np.zeros(3))
    target = classify_equilibrium(field_, np.ones(3))
    orbits = shoot_connection(field_, source, target, directions=16 if quick else 64, convention=convention, seed=seed)
    detail: Dict[str, Any] = {"coordinate_frames": coordinate_ok, "found": len(orbits)}
    if not orbits:
        return False, detail
    frames = dichotomy_frames(field_, orbits[0])
    report = transversality_test(frames, source.morse_index, target.morse_index)
    detail.update(
        {
            "transverse": report.transverse,
            "min_principal_angle": report.min_principal_angle,
            "fredholm_index": report.fredholm_index,
        }
    )
    passed = coordinate_ok and report.transverse and report.min_principal_angle > 1e-3 and report.fredholm_index == 2
    return passed, detail


def check_green_function(quick: bool, seed: int, convention: NConvention) -> Tuple[bool, Dict[str, Any]]:
    length = 80
    operators = [np.diag([2.0, 0.5])] * length
    projections = dichotomy_projections(operators).projections
    forcing = np.tile([1.0, 0.0], (length, 1))
    solution = green_function_solve(operators, projections, forcing)
    interior = solution.y[: length // 4]
    exact_error = float(np.max(np.abs(interior - np.array([-1.0, 0.0]))))

    rng = np.random.default_rng(seed)
    random_solution = green_function_solve(operators, projections, rng.uniform(-1.0, 1.0, (length, 2)))
    passed = exact_error <= 1e-12 and solution.residual <= 1e-12 and random_solution.residual <= 1e-8
    return passed, {"exact_error": exact_error, "residual": solution.residual, "random_residual": random_solution.residual}


def check_roughness(quick: bool, seed: int, convention: NConvention) -> Tuple[bool, Dict[str, Any]]:
    base = np.array([[2.0, 0.3], [0.0, 0.5]])
    report = dichotomy_roughness_probe([base] * 40, [0.0, 1e-4, 1e-3, 1e-2], seed)
    zero_ok = report.entries[0].deviation == 0.0
    passed = zero_ok and report.slope is not None and 0.7 <= report.slope <= 1.3
    return passed, {"slope": report.slope, "deviations": [e.deviation for e in report.entries]}


def check_poincare_bendixson(quick: bool, seed: int, convention: NConvention) -> Tuple[bool, Dict[str, Any]]:
    horizon = 400.0 if quick else 1000.0
    cases = [
        ("linear_cyclic", linear_cyclic(3, 1.0, -1.0), [(1.0, 0.5, -0.5)]),
        ("goodwin_stable", goodwin(**GOODWIN_STABLE), [(1.0, 1.0, 1.0), (0.2, 2.0, 0.5)]),
        ("bidirectional_synthetic", bidirectional_synthetic(3), [(0.3, 0.2, 0.1), (-0.4, 0.1, -0.2)]),
    ]
    if not quick:
        cases.append(("goodwin_oscillatory", goodwin(**GOODWIN_OSCILLATORY), [GOODWIN_SEED]))
    kinds: Dict[str, List[str]] = {}
    for name, field_, starts in cases:
        kinds[name] = [classify_limit_set(field_, x0, horizon).kind.value for x0 in starts]
    undetermined = sum(k == LimitSetKind.UNDETERMINED.value for values in kinds.values() for k in values)

    field_ = goodwin(**GOODWIN_STABLE)
    bump = bump_perturbation(3, 1, [0.7], 0.2, coupled=False)
    probe = robustness_probe(
        field_,
        bump,
        [0.0, 1e-4, 1e-3],
        (1.0, 1.0, 1.0),
        horizon,
        LimitThresholds(),
        SampleSpec(count=50 if quick else 200, seed=seed),
    )
    labels = [e.label for e in probe.entries if not e.left_class]
    invariant = len(set(labels)) == 1 and labels[0] != LimitSetKind.UNDETERMINED.value
    return undetermined == 0 and invariant, {"kinds": kinds, "robustness_labels": [e.label for e in probe.entries]}


def check_homoindexed(quick: bool, seed: int, convention: NConvention) -> Tuple[bool, Dict[str, Any]]:
    field_ = bidirectional_synthetic(3)
    equilibria = find_equilibria(field_, Box.cube(3, -1.5, 1.5), grid_per_axis=4)
    odd = [e for e in equilibria if e.hyperbolic and e.morse_index % 2 == 1]
    hits = notable = 0
    pairs = 0
    for source, target in itertools.permutations(odd, 2):
        if source.morse_index != target.morse_index:
            continue
        pairs += 1
        found = shoot_connection(field_, source, target, directions=16 if quick else 64, convention=convention, seed=seed)
        if found:
            hits += 1
            recheck = shoot_connection(
                field_,
                source,
                target,
                directions=16 if quick else 64,
                conv_tol=1e-7,
                config=IntegratorConfig().tightened(0.1),
                convention=convention,
                seed=seed,
            )
            if recheck:
                notable += 1
                logger.warning("Homoindexed connection survived the recheck between %s and %s", source.x, target.x)
    return notable == 0, {"pairs": pairs, "hits": hits, "notable": notable}


CHECKS: List[Tuple[str, CheckFunc]] = [
    ("n_oddness_and_drop", check_n_oddness_and_drop),
    ("floquet_convention_arbiter", check_floquet_arbiter),
    ("cone_invariance", check_cone_invariance),
    ("n_bounds_oracle", check_nbounds_oracle),
    ("goodwin_periodic_orbit", check_goodwin_cycle),
    ("morse_indices", check_morse_indices),
    ("transversality", check_transversality),
    ("green_function", check_green_function),
    ("dichotomy_roughness", check_roughness),
    ("poincare_bendixson_robustness", check_poincare_bendixson),
    ("homoindexed_prediction", check_homoindexed),
]


def run_verify(
    quick: bool = False,
    seed: int = 0,
    convention: NConvention = DEFAULT_CONVENTION,
    only: Sequence[str] = (),
) -> VerifyReport:
    """検査を順に走らせる。例外はその検査の不合格として記録し、残りは続ける。"""

    checks: List[VerifyCheck] = []
    for name, func in CHECKS:
        if only and name not in only:
            continue
        started = time.perf_counter()
        try:
            passed, detail = func(quick, seed, convention)
        except LabError as exc:
            passed, detail = False, {"error": exc.to_dict()}
        seconds = time.perf_counter() - started
        checks.append(VerifyCheck(name=name, passed=bool(passed), detail=detail, seconds=seconds))
        if passed:
            logger.info("verify %s: passed in %.2fs", name, seconds)
        else:
            logger.warning("verify %s: FAILED in %.2fs (%s)", name, seconds, detail)
    return VerifyReport(quick=quick, checks=checks)


__all__ = ["CHECKS", "brute_force_bounds", "run_verify"]

"""連結軌道の横断性判定と、自動横断性（指数条件）による予測の検査。"""

from __future__ import annotations

from typing import List, Optional

import numpy as np
from scipy.linalg import null_space, subspace_angles, svdvals

from apps.lab.connect.dichotomy import DichotomyFrames
from apps.lab.connect.orbits import ConnectingOrbit
from apps.lab.critical import PeriodicOrbit, planar_projection_injectivity
from apps.lab.errors import DimensionMismatch
from apps.lab.integrate import Trajectory
from apps.lab.logging_utils import get_logger
from apps.lab.lyapunov import max_cone_index
from packages.shared_schemas import AutomaticPrediction, InjectivityReport, TransversalityReport

logger = get_logger(__name__)

INJECTIVITY_SAMPLES = 1024


def transversality_test(
    frames: DichotomyFrames,
    i_minus: int,
    i_plus: int,
    angle_tol: float = 1e-6,
    confident_angle: float = 1e-3,
    prediction: Optional[AutomaticPrediction] = None,
) -> TransversalityReport:
    """[U | S] の特異値と、補空間 U⊥・S⊥ の主角から横断性を判定する。

    span_defect と bounded_adjoint_dim は別々の SVD から数え、
    三つの判定基準が一致するかを criteria_agree に残す。

    Raises:
        DimensionMismatch: フレームの次元が指数と合わない
    """

    u, s = frames.u_frame, frames.s_frame
    n = u.shape[0]
    if s.shape[0] != n:
        raise DimensionMismatch("U と S の行数が一致しません", u=list(u.shape), s=list(s.shape))
    if u.shape[1] != i_minus or s.shape[1] != n - i_plus:
        raise DimensionMismatch(
            "フレームの次元が Morse 指数と一致しません",
            u_dim=u.shape[1],
            s_dim=s.shape[1],
            i_minus=i_minus,
            i_plus=i_plus,
        )

    singular = svdvals(np.hstack([u, s])) if u.shape[1] + s.shape[1] else np.zeros(0)
    span_defect = n - int(np.sum(singular > angle_tol))

    u_perp = null_space(u.T) if u.shape[1] else np.eye(n)
    s_perp = null_space(s.T) if s.shape[1] else np.eye(n)
    if u_perp.shape[1] == 0 or s_perp.shape[1] == 0:
        angles = np.zeros(0)
        min_angle = float(np.pi / 2)
    else:
        angles = subspace_angles(u_perp, s_perp)
        min_angle = float(np.min(angles))
    bounded_adjoint_dim = int(np.sum(angles <= angle_tol))

    transverse = span_defect == 0
    by_angle = min_angle > angle_tol
    criteria_agree = transverse == (bounded_adjoint_dim == 0) == by_angle
    if not criteria_agree:
        logger.warning(
            "Transversality criteria disagree: span_defect=%d, bounded_adjoint_dim=%d, min_angle=%.3e",
            span_defect,
            bounded_adjoint_dim,
            min_angle,
        )
    gray_zone = transverse and min_angle <= confident_angle
    report = TransversalityReport(
        n=n,
        u_dim=u.shape[1],
        s_dim=s.shape[1],
        transverse=transverse,
        span_defect=span_defect,
        min_principal_angle=min_angle,
        bounded_adjoint_dim=bounded_adjoint_dim,
        fredholm_index=i_minus - i_plus,
        singular_values=[float(v) for v in singular],
        confident=transverse and not gray_zone,
        gray_zone=gray_zone,
        criteria_agree=criteria_agree,
        automatic_prediction=prediction,
    )
    logger.info(
        "transversality_test: transverse=%s, span_defect=%d, min_angle=%.3e, index=%d",
        transverse,
        span_defect,
        min_angle,
        report.fredholm_index,
    )
    return report


def index_witness(i_minus: int, i_plus: int, n: int) -> Optional[int]:
    """i⁻ ≥ 2h ≥ i⁺ を満たす h ∈ {1, …, (ñ+1)/2} があれば最大のものを返す。"""

    for h in range(max_cone_index(n), 0, -1):
        if i_minus >= 2 * h >= i_plus:
            return h
    return None


def automatic_transversality_check(
    orbit: ConnectingOrbit,
    check_injectivity: bool = True,
) -> AutomaticPrediction:
    """指数と端点の種類から自動横断性のどの場合に当たるかを決め、付随する不等式を調べる。

    不等式や単射性の破れは findings に残し、例外にはしない。
    """

    n = orbit.trajectory.n
    i_minus, i_plus = orbit.i_minus, orbit.i_plus
    h_minus, h_plus = orbit.h_minus, orbit.h_plus
    findings: List[str] = []

    case = None
    witness = None
    if isinstance(orbit.e_plus, PeriodicOrbit):
        case = "i"
    else:
        witness = index_witness(i_minus, i_plus, n)
        if witness is not None:
            case = "ii"

    if h_minus is not None:
        if i_minus < max(2 * h_minus - 1, 1):
            findings.append(f"INDEX_BOUND: i(e-)={i_minus} < max(2h- - 1, 1) with h-={h_minus}")
    if h_plus is not None and not isinstance(orbit.e_plus, PeriodicOrbit):
        if i_plus > 2 * h_plus - 1:
            findings.append(f"INDEX_BOUND: i(e+)={i_plus} > 2h+ - 1 with h+={h_plus}")
    if h_minus is not None and h_plus is not None and h_plus > h_minus:
        findings.append(f"LEVEL_INCREASE: h+={h_plus} > h-={h_minus}")

    injectivity: List[InjectivityReport] = []
    if check_injectivity and orbit.homoindexed:
        times = np.linspace(orbit.trajectory.times[0], orbit.trajectory.times[-1], INJECTIVITY_SAMPLES)
        resampled = Trajectory(times, orbit.trajectory.sample(times))
        for s in range(1, n + 1):
            report = planar_projection_injectivity(resampled, s, cyclic=False)
            injectivity.append(report)
            if not report.injective:
                findings.append(f"PLANAR_NOT_INJECTIVE: s={s}, min distance {report.min_distance:.3e}")

    prediction = AutomaticPrediction(
        case=case,
        witness_h=witness,
        i_minus=i_minus,
        i_plus=i_plus,
        h_minus=h_minus,
        h_plus=h_plus,
        findings=findings,
        injectivity=injectivity,
    )
    for finding in findings:
        logger.warning("Automatic transversality finding: %s", finding)
    return prediction


__all__ = ["automatic_transversality_check", "index_witness", "transversality_test"]

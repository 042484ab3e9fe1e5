"""解析レポートのスキーマ定義。すべて JSON にそのまま落とせる型だけを持つ。"""

from __future__ import annotations

from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, model_validator


class Provenance(BaseModel):
    """レポートの再現に必要な情報。時刻は含めない。"""

    model_hash: str
    convention: str
    thresholds: Dict[str, Any] = Field(default_factory=dict)
    seed: int
    version: str


class ReportMetadata(BaseModel):
    """実行ごとに変わる情報（時刻・ワーカー数）。"""

    started_at: str
    finished_at: str
    workers: int = 1


class ReportEnvelope(BaseModel):
    command: str
    provenance: Provenance
    result: Dict[str, Any]
    metadata: ReportMetadata


class ErrorReport(BaseModel):
    command: str
    code: str
    detail: str
    context: Dict[str, Any] = Field(default_factory=dict)
    exit_code: int


class ClassFailure(BaseModel):
    point: List[float]
    reason: str


class DissipativityRecord(BaseModel):
    """⟨f(x),x⟩ の符号を球面 |x| ∈ {R, 2R} 上で調べた結果。"""

    radius: float
    samples: int
    evaluated: int
    skipped_outside: int
    witness_violations: int
    margin: Optional[float] = Field(None, description="min(−⟨f(x),x⟩/|x|)。評価点が無ければ None")


class ClassReport(BaseModel):
    """クラス所属のサンプリング検査結果（証明ではない）。"""

    evidence: Literal["sampled"] = "sampled"
    samples: int
    skipped: int = 0
    in_c1bf: bool
    in_mminus_samples: float
    in_lminus: bool
    branch_counts: Dict[str, int] = Field(default_factory=dict)
    dissipative: Optional[DissipativityRecord] = None
    failures: List[ClassFailure] = Field(default_factory=list)

    @model_validator(mode="after")
    def _lminus_implies_full_fraction(self) -> "ClassReport":
        if self.in_lminus and self.in_mminus_samples < 1.0:
            raise ValueError("in_lminus なのに in_mminus_samples が1未満です")
        return self


class NProfile(BaseModel):
    """経路に沿った N の列。未定義の点は None。"""

    convention: str
    values: List[Optional[int]]
    defined: int
    oddness_violations: int
    increases: int

    @property
    def nonincreasing(self) -> bool:
        return self.increases == 0


class BlockCheck(BaseModel):
    block: int
    expected: int
    passed: int
    failed: int
    witnesses: List[List[float]] = Field(default_factory=list)


class SumCheck(BaseModel):
    first: int
    last: int
    passed: int
    failed: int
    witnesses: List[List[float]] = Field(default_factory=list)


class BlockNValueReport(BaseModel):
    convention: str
    blocks: List[BlockCheck]
    sums: List[SumCheck]

    @property
    def failures(self) -> int:
        return sum(b.failed for b in self.blocks) + sum(s.failed for s in self.sums)


class ConeInvarianceReport(BaseModel):
    h: int
    which: str
    drawn: int
    boundary_drawn: int
    passed: int
    failed: int
    witnesses: List[List[float]] = Field(default_factory=list)


class ConeRankReport(BaseModel):
    h: int
    lower_dim: int
    lower_failures: int
    upper_dim: int
    upper_failures: int
    samples: int


class OrbitConsistencyReport(BaseModel):
    """周期軌道の乗数分類。simple なのに hyperbolic でなければ所見として残す。"""

    trivial_multiplier_present: bool
    trivial_multiplier_error: float
    simple: bool
    unique_unit_modulus: bool
    hyperbolic: bool
    morse_index: int
    trivial_eigvec_angle: Optional[float] = None
    findings: List[str] = Field(default_factory=list)


class InjectivityReport(BaseModel):
    s: int
    min_distance: float
    witness_pair: Optional[Tuple[int, int]] = None
    injective: bool
    min_phase_sep: float
    samples: int


class LimitSetKind(str, Enum):
    EQUILIBRIUM = "Equilibrium"
    PERIODIC_ORBIT = "PeriodicOrbit"
    EQUILIBRIA_WITH_CONNECTIONS = "EquilibriaWithConnections"
    UNDETERMINED = "Undetermined"


class LimitDirection(str, Enum):
    OMEGA = "Omega"
    ALPHA = "Alpha"


class LimitSetEvidence(BaseModel):
    final_distance: Optional[float] = None
    recurrence_gap: Optional[float] = None
    visited_equilibria: int = 0
    horizon_used: float
    status: str = "completed"
    heuristic: bool = False
    stable_ratio: Optional[float] = Field(None, description="α 極限で平衡点に入ったときの |安定成分| / |不安定成分|")


class LimitSetReport(BaseModel):
    kind: LimitSetKind
    direction: LimitDirection
    equilibrium: Optional[List[float]] = None
    equilibria: List[List[float]] = Field(default_factory=list)
    period: Optional[float] = None
    anchor: Optional[List[float]] = None
    evidence: LimitSetEvidence


class RobustnessEntry(BaseModel):
    epsilon: float
    left_class: bool
    class_failures: int = 0
    report: Optional[LimitSetReport] = None

    @property
    def label(self) -> str:
        if self.left_class:
            return "LeftClass"
        return self.report.kind.value if self.report else LimitSetKind.UNDETERMINED.value


class TransitionRow(BaseModel):
    eps_from: float
    eps_to: float
    kind_from: str
    kind_to: str


class RobustnessReport(BaseModel):
    entries: List[RobustnessEntry]
    transitions: List[TransitionRow] = Field(default_factory=list)
    threshold: Optional[float] = Field(None, description="最初に分類が変わった（または LeftClass になった）ε")
    pb_consistent: bool


class AutomaticPrediction(BaseModel):
    """自動横断性の判定。case は "i"（周期軌道端点）か "ii"（指数条件）。"""

    case: Optional[Literal["i", "ii"]] = None
    witness_h: Optional[int] = None
    i_minus: int
    i_plus: int
    h_minus: Optional[int] = None
    h_plus: Optional[int] = None
    findings: List[str] = Field(default_factory=list)
    injectivity: List[InjectivityReport] = Field(default_factory=list)

    @property
    def predicted_transverse(self) -> bool:
        return self.case is not None

    @property
    def label(self) -> str:
        if self.case is None:
            return "NotCovered"
        return f"PredictedTransverse({self.case})"


class TransversalityReport(BaseModel):
    n: int
    u_dim: int
    s_dim: int
    transverse: bool
    span_defect: int
    min_principal_angle: float
    bounded_adjoint_dim: int
    fredholm_index: int
    singular_values: List[float]
    confident: bool
    gray_zone: bool
    criteria_agree: bool
    automatic_prediction: Optional[AutomaticPrediction] = None


class ProjectionDeviation(BaseModel):
    epsilon: float
    deviation: Optional[float] = None
    collapsed: bool = False
    reason: Optional[str] = None


class RoughnessReport(BaseModel):
    entries: List[ProjectionDeviation]
    slope: Optional[float] = None


class PerturbationResult(BaseModel):
    alpha: float
    hyperbolic: bool
    morse_index: int
    eigenvalues: List[Tuple[float, float]]
    distance: float = Field(..., description="切り詰めた距離 d(f, f+α(x−e))")


class ConnectionRecord(BaseModel):
    source: List[float]
    target: Dict[str, Any]
    target_kind: Literal["equilibrium", "periodic_orbit"]
    i_minus: int
    i_plus: int
    attempted: int
    found: int
    homoindexed: bool
    transverse: Optional[bool] = None
    verdict_source: Optional[Literal["frames", "automatic"]] = None
    min_principal_angle: Optional[float] = None
    prediction: str = "NotCovered"
    notable: bool = False


class NonwanderingSummary(BaseModel):
    limit_sets: int
    referenced: int
    all_referenced: bool


class CensusReport(BaseModel):
    equilibria: List[Dict[str, Any]]
    periodic_orbits: List[Dict[str, Any]]
    hyperbolic_fraction: float
    connections: List[ConnectionRecord]
    limit_sets: List[LimitSetReport]
    nonwandering_summary: NonwanderingSummary
    morse_smale_verdict: Literal["ConsistentWithMorseSmale", "Violations"]
    violations: List[str] = Field(default_factory=list)
    findings: List[str] = Field(default_factory=list, description="定理と食い違う観測（判定には含めない）")

    @model_validator(mode="after")
    def _verdict_matches_violations(self) -> "CensusReport":
        if (self.morse_smale_verdict == "Violations") != bool(self.violations):
            raise ValueError("morse_smale_verdict と violations が食い違っています")
        return self


class VerifyCheck(BaseModel):
    name: str
    passed: bool
    detail: Dict[str, Any] = Field(default_factory=dict)
    seconds: float = 0.0


class VerifyReport(BaseModel):
    quick: bool
    checks: List[VerifyCheck]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

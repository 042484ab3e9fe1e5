"""Pydanticベースの共有スキーマ定義。"""

from .config import (
    CONVENTION_ALIASES,
    AnalysisSettings,
    BumpSpec,
    DomainSpec,
    IntegratorConfig,
    ModelSpec,
    NewtonSettings,
    RunConfig,
)
from .reports import (
    AutomaticPrediction,
    BlockCheck,
    BlockNValueReport,
    CensusReport,
    ClassFailure,
    ClassReport,
    ConeInvarianceReport,
    ConeRankReport,
    ConnectionRecord,
    DissipativityRecord,
    ErrorReport,
    InjectivityReport,
    LimitDirection,
    LimitSetEvidence,
    LimitSetKind,
    LimitSetReport,
    NonwanderingSummary,
    NProfile,
    OrbitConsistencyReport,
    PerturbationResult,
    ProjectionDeviation,
    Provenance,
    ReportEnvelope,
    ReportMetadata,
    RobustnessEntry,
    RobustnessReport,
    RoughnessReport,
    SumCheck,
    TransitionRow,
    TransversalityReport,
    VerifyCheck,
    VerifyReport,
)

__all__ = [
    "CONVENTION_ALIASES",
    "AnalysisSettings",
    "BumpSpec",
    "DomainSpec",
    "IntegratorConfig",
    "ModelSpec",
    "NewtonSettings",
    "RunConfig",
    "AutomaticPrediction",
    "BlockCheck",
    "BlockNValueReport",
    "CensusReport",
    "ClassFailure",
    "ClassReport",
    "ConeInvarianceReport",
    "ConeRankReport",
    "ConnectionRecord",
    "DissipativityRecord",
    "ErrorReport",
    "InjectivityReport",
    "LimitDirection",
    "LimitSetEvidence",
    "LimitSetKind",
    "LimitSetReport",
    "NonwanderingSummary",
    "NProfile",
    "OrbitConsistencyReport",
    "PerturbationResult",
    "ProjectionDeviation",
    "Provenance",
    "ReportEnvelope",
    "ReportMetadata",
    "RobustnessEntry",
    "RobustnessReport",
    "RoughnessReport",
    "SumCheck",
    "TransitionRow",
    "TransversalityReport",
    "VerifyCheck",
    "VerifyReport",
]

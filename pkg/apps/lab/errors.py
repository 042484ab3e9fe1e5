"""ラボ全体で使う例外階層。

低レベルの例外（numpy/scipy/pydantic）は呼び出し側で捕まえて、
ここで定義したドメイン例外に ``from exc`` で付け替える。
"""

from __future__ import annotations

from typing import Any, Dict


class LabError(Exception):
    """解析処理の失敗を表す基底例外。

    Args:
        detail: 人が読むためのメッセージ
        **context: レポートへ書き出す補足情報（JSONに落とせる値のみ）
    """

    code: str = "lab_error"

    def __init__(self, detail: str, **context: Any) -> None:
        super().__init__(detail)
        self.detail = detail
        self.context: Dict[str, Any] = context

    def to_dict(self) -> Dict[str, Any]:
        return {"code": self.code, "detail": self.detail, "context": self.context}


class DomainViolation(LabError):
    """状態が定義域 Ω の外にある。"""

    code = "domain_violation"


class NonFiniteValue(LabError):
    code = "non_finite_value"


class DimensionMismatch(LabError):
    code = "dimension_mismatch"


class InvalidParameter(LabError):
    code = "invalid_parameter"


class EmptyCompactSet(LabError):
    """コンパクト集合 K_m にサンプル点が1つも無い。"""

    code = "empty_compact_set"


class InvalidConeIndex(LabError):
    code = "invalid_cone_index"


class SingularMatrix(LabError):
    code = "singular_matrix"


class BlockSplit(LabError):
    """絶対値順の区切りが複素共役対を分断する。"""

    code = "block_split"


class GapViolation(LabError):
    """ブロック間の絶対値ギャップが許容値以下。分解結果を ``decomposition`` に保持する。"""

    code = "gap_violation"

    def __init__(self, detail: str, decomposition: Any = None, **context: Any) -> None:
        super().__init__(detail, **context)
        self.decomposition = decomposition


class IntegrationError(LabError):
    """積分が途中で止まった。ここまでの軌道を ``trajectory`` に保持する。"""

    code = "integration_error"

    def __init__(self, detail: str, trajectory: Any = None, **context: Any) -> None:
        super().__init__(detail, **context)
        self.trajectory = trajectory


class BlowUp(IntegrationError):
    code = "blow_up"


class LeftDomain(IntegrationError):
    code = "left_domain"


class MaxStepsExceeded(IntegrationError):
    code = "max_steps_exceeded"


class NoReturn(LabError):
    """ポアンカレ断面への再帰が見つからない。"""

    code = "no_return"


class NewtonDiverged(LabError):
    code = "newton_diverged"


class TooFewSamples(LabError):
    code = "too_few_samples"


class NotHyperbolic(LabError):
    code = "not_hyperbolic"


class WindowTooShort(LabError):
    code = "window_too_short"


class FrameCollapse(LabError):
    """フレーム伝播中にランク落ちした。"""

    code = "frame_collapse"


class NoDichotomy(LabError):
    code = "no_dichotomy"


class GridMismatch(LabError):
    code = "grid_mismatch"


class VerifyFailed(LabError):
    """組み込み検証のいずれかが失敗した。終了コード3に対応する。"""

    code = "verify_failed"


class ConfigError(LabError):
    """設定ファイルやCLI引数が不正。終了コード2に対応する。"""

    code = "config_error"


__all__ = [
    "LabError",
    "DomainViolation",
    "NonFiniteValue",
    "DimensionMismatch",
    "InvalidParameter",
    "EmptyCompactSet",
    "InvalidConeIndex",
    "SingularMatrix",
    "BlockSplit",
    "GapViolation",
    "IntegrationError",
    "BlowUp",
    "LeftDomain",
    "MaxStepsExceeded",
    "NoReturn",
    "NewtonDiverged",
    "TooFewSamples",
    "NotHyperbolic",
    "WindowTooShort",
    "FrameCollapse",
    "NoDichotomy",
    "GridMismatch",
    "VerifyFailed",
    "ConfigError",
]

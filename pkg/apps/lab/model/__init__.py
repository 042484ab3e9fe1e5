"""ベクトル場の表現・クラス判定・モデル群。"""

from .classes import (
    MminusCheck,
    SampleSpec,
    check_class,
    check_dissipative,
    check_mminus,
    compact_samples,
    default_zero_tol,
    metric_d,
    random_mminus_matrix,
    seminorm_pm,
)
from .expressions import custom_field, load_model
from .field import (
    Box,
    CyclicVectorField,
    FeedbackSignature,
    JacobianMode,
    MatrixBranch,
    add_fields,
    conjugate_field,
    cyclic_pattern_mask,
    normalizing_signs,
)
from .zoo import (
    ZOO,
    bidirectional_synthetic,
    build_zoo_model,
    goodwin,
    goodwin_equilibrium,
    goodwin_equilibrium_x3,
    goodwin_loop_gain,
    linear_cyclic,
    repressilator,
)

__all__ = [
    "Box",
    "CyclicVectorField",
    "FeedbackSignature",
    "JacobianMode",
    "MatrixBranch",
    "MminusCheck",
    "SampleSpec",
    "ZOO",
    "add_fields",
    "bidirectional_synthetic",
    "build_zoo_model",
    "check_class",
    "check_dissipative",
    "check_mminus",
    "compact_samples",
    "conjugate_field",
    "custom_field",
    "cyclic_pattern_mask",
    "default_zero_tol",
    "goodwin",
    "goodwin_equilibrium",
    "goodwin_equilibrium_x3",
    "goodwin_loop_gain",
    "linear_cyclic",
    "load_model",
    "metric_d",
    "normalizing_signs",
    "random_mminus_matrix",
    "repressilator",
    "seminorm_pm",
]

"""実行設定（RunConfig）のスキーマ定義。"""

from __future__ import annotations

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

CONVENTION_ALIASES: Dict[str, str] = {
    "edge_forward_negative": "edge_forward_negative",
    "edge_forward_positive": "edge_forward_positive",
    "edge_backward_negative": "edge_backward_negative",
    "edge_backward_positive": "edge_backward_positive",
    "paper_verbatim": "edge_backward_positive",
}


class DomainSpec(BaseModel):
    """軸平行な箱。``None`` は無限遠を表す。"""

    preset: Optional[Literal["whole_space", "positive_orthant"]] = None
    lower: Optional[List[Optional[float]]] = None
    upper: Optional[List[Optional[float]]] = None

    @model_validator(mode="after")
    def _check_shape(self) -> "DomainSpec":
        if self.preset is None:
            if self.lower is None or self.upper is None:
                raise ValueError("preset か lower/upper のどちらかを指定してください")
            if len(self.lower) != len(self.upper):
                raise ValueError("lower と upper の次元が一致しません")
        return self


class ModelSpec(BaseModel):
    """モデル定義。名前付きモデルか、成分ごとの式のどちらか一方。"""

    name: Optional[str] = Field(None, description="zooモデル名（linear_cyclic, goodwin, repressilator, bidirectional_synthetic）")
    params: Dict[str, Any] = Field(default_factory=dict)
    custom: Optional[List[str]] = Field(None, description="成分ごとの式。x1..xn, exp, hill(x,p) が使える")
    domain: Optional[DomainSpec] = None
    delta: Optional[List[int]] = Field(None, description="辺の符号 δ。省略時は (+1,…,+1,−1)")

    @model_validator(mode="after")
    def _exactly_one_source(self) -> "ModelSpec":
        if (self.name is None) == (self.custom is None):
            raise ValueError("model には name と custom のどちらか一方だけを指定してください")
        if self.custom is not None and len(self.custom) < 1:
            raise ValueError("custom には1つ以上の式が必要です")
        return self


class IntegratorConfig(BaseModel):
    """適応刻み Runge–Kutta 4(5) の設定。"""

    rel_tol: float = Field(1e-10, gt=0, lt=1)
    abs_tol: float = Field(1e-12, gt=0, lt=1)
    initial_step: Optional[float] = Field(None, gt=0)
    max_step: Optional[float] = Field(None, gt=0, description="None は上限なし")
    max_steps: int = Field(500_000, gt=0)
    dense_output: bool = True
    blowup_bound: float = Field(1e8, gt=0)

    def tightened(self, factor: float) -> "IntegratorConfig":
        """許容誤差を factor 倍に締めた設定を返す。"""

        return self.model_copy(update={"rel_tol": self.rel_tol * factor, "abs_tol": self.abs_tol * factor})


class NewtonSettings(BaseModel):
    tol: float = Field(1e-10, gt=0)
    max_iter: int = Field(50, gt=0)


class BumpSpec(BaseModel):
    """摂動に使うバンプ関数の指定（成分 j は1始まり）。"""

    j: int = Field(..., ge=1)
    center: List[float] = Field(..., min_length=1, max_length=2)
    r: float = Field(..., gt=0)
    coupled: bool = True


class AnalysisSettings(BaseModel):
    """各解析のしきい値とサンプリング設定。"""

    zero_tol: Optional[float] = Field(None, gt=0, description="省略時は解析ヤコビアン 1e-10, 差分 1e-6")
    sample_box: Optional[DomainSpec] = None
    sample_count: int = Field(1000, gt=0)
    dissipative_radius: Optional[float] = Field(None, gt=0)
    dissipative_samples: int = Field(1000, gt=0)
    gap_tol: float = Field(1e-8, gt=0)
    tol_spectrum: float = Field(1e-8, gt=0)
    multiplier_tol: float = Field(1e-4, gt=0)
    newton: NewtonSettings = Field(default_factory=NewtonSettings)
    search_box: Optional[DomainSpec] = None
    grid_per_axis: int = Field(5, gt=0)
    transient: float = Field(200.0, ge=0)
    explore_window: float = Field(100.0, gt=0)
    samples_per_period: int = Field(1024, ge=16)
    horizon: float = Field(1000.0, gt=0)
    eq_radius: float = Field(1e-5, gt=0)
    rec_tol: float = Field(1e-5, gt=0)
    visit_radius: float = Field(1e-2, gt=0)
    initial_conditions: List[List[float]] = Field(default_factory=list)
    cycle_seeds: List[List[float]] = Field(default_factory=list)
    census_grid: int = Field(2, gt=0)
    epsilons: List[float] = Field(default_factory=lambda: [0.0, 1e-4, 1e-3])
    bump: Optional[BumpSpec] = None
    shoot_radius: Optional[float] = Field(None, gt=0)
    directions: int = Field(64, gt=0)
    shoot_horizon: float = Field(1000.0, gt=0)
    conv_tol: float = Field(1e-6, gt=0)
    tube_tol: float = Field(1e-4, gt=0)
    tau: Optional[float] = Field(None, gt=0)
    n_trunc: Optional[int] = Field(None, gt=0)
    angle_tol: float = Field(1e-6, gt=0)
    confident_angle: float = Field(1e-3, gt=0)
    perturb_alpha: float = Field(1e-3, gt=0)
    verify_samples: int = Field(1000, gt=0)


class RunConfig(BaseModel):
    """CLI の実行設定。``schema`` キーでバージョンを固定する。"""

    model_config = ConfigDict(populate_by_name=True)

    schema_version: Literal[1] = Field(1, alias="schema")
    model: ModelSpec
    integrator: IntegratorConfig = Field(default_factory=IntegratorConfig)
    analysis: AnalysisSettings = Field(default_factory=AnalysisSettings)
    n_convention: str = "edge_forward_negative"
    rng_seed: int = 0
    workers: int = Field(1, ge=1)
    output_dir: str = "out"

    @field_validator("n_convention")
    @classmethod
    def _known_convention(cls, value: str) -> str:
        if value not in CONVENTION_ALIASES:
            raise ValueError(f"未知の n_convention です: {value}")
        return value

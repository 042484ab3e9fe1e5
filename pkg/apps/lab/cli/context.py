"""コマンド間で共有する実行コンテキスト。"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from apps.lab.critical import start_grid
from apps.lab.limitset import LimitThresholds
from apps.lab.lyapunov import NConvention
from apps.lab.model import Box, CyclicVectorField, SampleSpec, load_model
from apps.lab.model.expressions import box_from_spec, default_sample_box
from packages.shared_schemas import AnalysisSettings, IntegratorConfig, RunConfig


@dataclass
class RunContext:
    """読み込んだ設定・モデル・出力先と、コマンド固有の上書き値。"""

    config: RunConfig
    vector_field: CyclicVectorField
    convention: NConvention
    outdir: Path
    options: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_config(cls, config: RunConfig, options: Optional[Dict[str, Any]] = None) -> "RunContext":
        return cls(
            config=config,
            vector_field=load_model(config.model),
            convention=NConvention.from_name(config.n_convention),
            outdir=Path(config.output_dir),
            options=dict(options or {}),
        )

    @property
    def analysis(self) -> AnalysisSettings:
        return self.config.analysis

    @property
    def integrator(self) -> IntegratorConfig:
        return self.config.integrator

    @property
    def seed(self) -> int:
        return self.config.rng_seed

    @property
    def workers(self) -> int:
        return self.config.workers

    @property
    def thresholds(self) -> LimitThresholds:
        return LimitThresholds.from_settings(self.analysis)

    def option(self, name: str, default: Any = None) -> Any:
        value = self.options.get(name)
        return default if value is None else value

    def sample_box(self) -> Box:
        if self.analysis.sample_box is not None:
            return box_from_spec(self.analysis.sample_box, self.vector_field.n)
        return self.vector_field.sample_box or default_sample_box(self.vector_field.domain)

    def search_box(self) -> Box:
        if self.analysis.search_box is not None:
            return box_from_spec(self.analysis.search_box, self.vector_field.n)
        return self.sample_box()

    def sample_spec(self, count: Optional[int] = None) -> SampleSpec:
        return SampleSpec(box=self.sample_box(), count=count or self.analysis.sample_count, seed=self.seed)

    def initial_conditions(self) -> List[np.ndarray]:
        """--x0、設定の initial_conditions、探索箱の粗い格子の順で採る。"""

        explicit = self.option("x0")
        if explicit is not None:
            return [np.asarray(explicit, dtype=float)]
        if self.analysis.initial_conditions:
            return [np.asarray(x, dtype=float) for x in self.analysis.initial_conditions]
        grid = start_grid(self.search_box(), self.analysis.census_grid)
        return [x for x in grid if self.vector_field.domain.contains(x)]

    def cycle_seeds(self) -> List[np.ndarray]:
        if self.analysis.cycle_seeds:
            return [np.asarray(x, dtype=float) for x in self.analysis.cycle_seeds]
        return self.initial_conditions()


__all__ = ["RunContext"]

from __future__ import annotations

import pytest
from pydantic import ValidationError

from packages.shared_schemas import AnalysisSettings, BumpSpec, IntegratorConfig, ModelSpec, RunConfig


def test_schema_key_is_an_alias():
    config = RunConfig.model_validate({"schema": 1, "model": {"name": "goodwin"}})
    assert config.schema_version == 1
    assert config.model_dump(by_alias=True)["schema"] == 1
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"schema": 2, "model": {"name": "goodwin"}})


def test_defaults():
    config = RunConfig(model=ModelSpec(name="linear_cyclic"))
    assert config.n_convention == "edge_forward_negative"
    assert config.workers == 1
    assert config.integrator.rel_tol == 1e-10
    assert config.integrator.abs_tol == 1e-12
    assert config.analysis.epsilons == [0.0, 1e-4, 1e-3]
    assert config.analysis.newton.tol == 1e-10


@pytest.mark.parametrize("name", ["edge_backward_positive", "paper_verbatim"])
def test_known_convention_names(name):
    assert RunConfig(model=ModelSpec(name="goodwin"), n_convention=name).n_convention == name


@pytest.mark.parametrize(
    "data",
    [
        {"model": {"name": "goodwin"}, "n_convention": "edge_sideways"},
        {"model": {"name": "goodwin"}, "workers": 0},
        {"model": {"name": "goodwin", "custom": ["-x1"]}},
        {"model": {}},
        {"model": {"custom": []}},
    ],
)
def test_invalid_run_configs(data):
    with pytest.raises(ValidationError):
        RunConfig.model_validate(data)


def test_integrator_tightening_and_bounds():
    tight = IntegratorConfig().tightened(0.1)
    assert tight.rel_tol == pytest.approx(1e-11)
    assert tight.abs_tol == pytest.approx(1e-13)
    with pytest.raises(ValidationError):
        IntegratorConfig(rel_tol=0.0)


def test_bump_spec_validation():
    assert BumpSpec(j=1, center=[0.7], r=0.2, coupled=False).coupled is False
    with pytest.raises(ValidationError):
        BumpSpec(j=0, center=[0.7], r=0.2)
    with pytest.raises(ValidationError):
        BumpSpec(j=1, center=[0.7], r=-1.0)


def test_analysis_settings_accept_partial_updates():
    settings = AnalysisSettings.model_validate({"horizon": 200.0, "newton": {"max_iter": 10}})
    assert settings.horizon == 200.0
    assert settings.newton.max_iter == 10
    assert settings.newton.tol == 1e-10

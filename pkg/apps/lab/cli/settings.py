"""RunConfig の読み込み。優先順位は 既定値 < JSON < 環境変数 < CLI フラグ。"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from pydantic import ValidationError

from apps.lab.errors import ConfigError
from apps.lab.logging_utils import get_logger, load_environment
from packages.shared_schemas import ModelSpec, RunConfig

logger = get_logger(__name__)

ENV_OVERRIDES: Dict[str, str] = {
    "FEEDBACK_LAB_SEED": "rng_seed",
    "FEEDBACK_LAB_WORKERS": "workers",
    "FEEDBACK_LAB_CONVENTION": "n_convention",
    "FEEDBACK_LAB_OUT": "output_dir",
}

DEFAULT_MODEL = {"name": "linear_cyclic", "params": {"n": 3, "c": 1.0, "a": -1.0}}


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """JSON 設定ファイルを辞書として読む。

    Raises:
        ConfigError: ファイルが無い、JSON として壊れている、またはトップレベルがオブジェクトでない
    """

    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"設定ファイルを読めません: {path}", path=str(path)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"設定ファイルの JSON が不正です（{exc.lineno} 行 {exc.colno} 列）: {exc.msg}",
            path=str(path),
            line=exc.lineno,
            column=exc.colno,
        ) from exc
    if not isinstance(data, dict):
        raise ConfigError("設定ファイルのトップレベルはオブジェクトである必要があります", path=str(path))
    return data


def set_dotted(data: Dict[str, Any], key: str, value: Any) -> None:
    """"analysis.horizon" のような点区切りのキーに値を入れる。"""

    node = data
    parts = key.split(".")
    for part in parts[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[parts[-1]] = value


def environment_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    if environ is None:
        load_environment()
        environ = os.environ
    overrides: Dict[str, Any] = {}
    for name, key in ENV_OVERRIDES.items():
        raw = environ.get(name)
        if raw:
            overrides[key] = raw
    return overrides


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    flag_overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
    require_model: bool = True,
) -> RunConfig:
    """設定ファイル・環境変数・フラグを重ねて RunConfig を作る。

    Raises:
        ConfigError: ファイルや値が不正、または model が無い
    """

    data: Dict[str, Any] = read_config_file(path) if path else {}
    for key, value in environment_overrides(environ).items():
        set_dotted(data, key, value)
    for key, value in (flag_overrides or {}).items():
        if value is not None:
            set_dotted(data, key, value)
    if "model" not in data:
        if require_model:
            raise ConfigError("model が指定されていません。--config で設定ファイルを渡してください")
        data["model"] = dict(DEFAULT_MODEL)
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as exc:
        problems = [
            {"loc": ".".join(str(p) for p in error["loc"]), "msg": error["msg"]} for error in exc.errors(include_url=False)
        ]
        first = problems[0] if problems else {"loc": "", "msg": str(exc)}
        raise ConfigError(f"設定が不正です: {first['loc']}: {first['msg']}", errors=problems) from exc
    logger.info(
        "Loaded run config (model=%s, convention=%s, seed=%d, workers=%d)",
        describe_model(config.model),
        config.n_convention,
        config.rng_seed,
        config.workers,
    )
    return config


def describe_model(spec: ModelSpec) -> str:
    if spec.name is not None:
        return spec.name
    return f"custom[n={len(spec.custom or [])}]"


__all__ = ["ENV_OVERRIDES", "environment_overrides", "load_run_config", "read_config_file", "set_dotted"]

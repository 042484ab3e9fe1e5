"""ロガーと環境変数ファイルの共通処理。"""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

BASE_DIR = Path(__file__).resolve().parent
LOG_ENV_VAR = "FEEDBACK_LAB_LOG"
ENV_FILE_VAR = "FEEDBACK_LAB_ENV_FILE"

_env_loaded = False


def resolve_env_file() -> Optional[str]:
    """環境変数で指定されたenvファイル、もしくはデフォルトパスを返す。"""

    env_path = os.environ.get(ENV_FILE_VAR)
    if env_path:
        return str(Path(env_path).expanduser().resolve())

    default_env = BASE_DIR / ".env"
    if default_env.exists():
        return str(default_env)

    return None


def load_environment() -> Optional[str]:
    """envファイルを一度だけ読み込む。既存の環境変数は上書きしない。"""

    global _env_loaded
    env_file = resolve_env_file()
    if not _env_loaded:
        if env_file:
            load_dotenv(env_file, override=False)
        _env_loaded = True
    return env_file


def resolve_log_level() -> int:
    load_environment()
    name = os.environ.get(LOG_ENV_VAR, "INFO").upper()
    return getattr(logging, name, logging.INFO)


def get_logger(name: str) -> logging.Logger:
    """モジュール単位のロガーを返す。ハンドラは初回だけ付与する。"""

    logger = logging.getLogger(name)
    logger.setLevel(resolve_log_level())
    if not logger.handlers:
        handler = logging.StreamHandler()
        formatter = logging.Formatter("%(levelname)s %(name)s: %(message)s")
        handler.setFormatter(formatter)
        logger.addHandler(handler)
    logger.propagate = False
    return logger


__all__ = ["get_logger", "load_environment", "resolve_env_file", "resolve_log_level"]

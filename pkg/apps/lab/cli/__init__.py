"""コマンドラインインターフェース。"""

from apps.lab.cli.main import main

__all__ = ["main"]

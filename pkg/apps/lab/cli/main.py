"""``feedback-lab`` のエントリポイント。

サブコマンドごとに ``<out>/<command>.report.json`` を書く。終了コードは
0 = 成功、1 = 数値計算の失敗、2 = 設定の誤り、3 = 検証の不合格。
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from apps.lab import __version__
from apps.lab.cli.commands import COMMANDS
from apps.lab.cli.context import RunContext
from apps.lab.cli.reporting import utc_now, write_error, write_report
from apps.lab.cli.settings import load_run_config
from apps.lab.cli.verify import CHECKS, run_verify
from apps.lab.errors import ConfigError, LabError, VerifyFailed
from apps.lab.logging_utils import get_logger, load_environment
from apps.lab.lyapunov import NConvention

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_CONFIG = 2
EXIT_VERIFY = 3

COMMAND_HELP: Dict[str, str] = {
    "check-class": "ベクトル場がクラス条件（巡回構造・符号・散逸性）を満たすか調べる",
    "simulate": "軌道を積分して CSV と N プロファイルを書く",
    "limits": "ω（--alpha で α も）極限集合を分類する",
    "equilibria": "探索箱内の平衡点を求めて分類する",
    "cycles": "周期軌道を求め、乗数と射影の単射性を調べる",
    "floquet": "解作用素を不変ブロックに分解し、錐の不変性を確かめる",
    "connect": "双曲平衡点どうしの連結軌道を探す",
    "transversality": "連結軌道の横断性を二分性フレームで判定する",
    "perturb": "非双曲平衡点のずらしとバンプ摂動を試す",
    "census": "臨界要素・極限集合・連結をまとめて調べる",
}


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="RunConfig の JSON ファイル")
    common.add_argument("--out", help="出力ディレクトリ（既定: 設定の output_dir）")
    common.add_argument("--seed", type=int, help="乱数シード")
    common.add_argument("--workers", type=int, help="並列ワーカー数")
    common.add_argument("--convention", help="N の数え方（例: edge_forward_negative）")
    common.add_argument("--horizon", type=float, help="analysis.horizon の上書き")
    common.add_argument("--directions", type=int, help="analysis.directions の上書き")
    common.add_argument("--samples", type=int, help="analysis.sample_count の上書き")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="feedback-lab", description="巡回負フィードバック系の数値解析ラボ")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, text in COMMAND_HELP.items():
        sub = subparsers.add_parser(name, parents=[common], help=text, description=text)
        if name in ("simulate", "limits", "floquet"):
            sub.add_argument("--x0", nargs="+", type=float, help="初期値（成分を空白区切り）")
        if name == "simulate":
            sub.add_argument("--t1", type=float, help="積分の終端時刻（既定: analysis.horizon）")
        if name == "limits":
            sub.add_argument("--alpha", action="store_true", help="α 極限集合も分類する")
        if name == "floquet":
            sub.add_argument("--t", type=float, help="S(t, 0) の t（既定: 1）")
            sub.add_argument("--cycle", action="store_true", help="周期軌道のモノドロミーを使う")

    verify = subparsers.add_parser("verify", parents=[common], help="組み込みの検証を走らせる")
    verify.add_argument("--quick", action="store_true", help="標本数を減らした短い版")
    verify.add_argument("--only", nargs="+", choices=[name for name, _ in CHECKS], help="指定した検査だけ走らせる")
    return parser


def flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """None でないフラグを点区切りのキーに写す。"""

    return {
        "output_dir": args.out,
        "rng_seed": args.seed,
        "workers": args.workers,
        "n_convention": args.convention,
        "analysis.horizon": args.horizon,
        "analysis.directions": args.directions,
        "analysis.sample_count": args.samples,
    }


def command_options(args: argparse.Namespace) -> Dict[str, Any]:
    names = ("x0", "t1", "alpha", "t", "cycle")
    return {name: getattr(args, name) for name in names if getattr(args, name, None) not in (None, False)}


def _run_verify(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, flag_overrides(args), require_model=False)
    outdir = Path(config.output_dir)
    started = utc_now()
    report = run_verify(
        quick=args.quick,
        seed=config.rng_seed,
        convention=NConvention.from_name(config.n_convention),
        only=args.only or (),
    )
    write_report(outdir, "verify", config, {"verify": report}, started)
    if report.passed:
        logger.info("verify: %d checks passed", len(report.checks))
        return EXIT_OK
    failed = [check.name for check in report.checks if not check.passed]
    exc = VerifyFailed(f"検証に失敗しました: {', '.join(failed)}", failed=failed)
    logger.error("verify failed: %s", ", ".join(failed))
    write_error(outdir, "verify", exc, EXIT_VERIFY)
    return EXIT_VERIFY


def _argv_value(argv: Sequence[str], flag: str) -> Optional[str]:
    for index, token in enumerate(argv):
        if token == flag and index + 1 < len(argv):
            return argv[index + 1]
        if token.startswith(flag + "="):
            return token.split("=", 1)[1]
    return None


def _usage_error(argv: Sequence[str]) -> int:
    """引数の解析に失敗したときも error.json を残す。"""

    known = set(COMMAND_HELP) | {"verify"}
    command = next((token for token in argv if token in known), "feedback-lab")
    outdir = Path(_argv_value(argv, "--out") or os.environ.get("FEEDBACK_LAB_OUT") or "out")
    exc = ConfigError("コマンドライン引数が不正です", argv=list(argv))
    logger.error("%s: invalid command line %s", command, list(argv))
    write_error(outdir, command, exc, EXIT_CONFIG)
    return EXIT_CONFIG


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_environment()
    parser = build_parser()
    raw = list(argv) if argv is not None else sys.argv[1:]
    try:
        args = parser.parse_args(raw)
    except SystemExit as exc:
        if exc.code in (0, None):
            raise
        return _usage_error(raw)
    command: str = args.command
    outdir = Path(args.out or os.environ.get("FEEDBACK_LAB_OUT") or "out")

    try:
        if command == "verify":
            return _run_verify(args)
        config = load_run_config(args.config, flag_overrides(args))
        outdir = Path(config.output_dir)
        ctx = RunContext.from_config(config, command_options(args))
        started = utc_now()
        logger.info("Running %s", command)
        result = COMMANDS[command](ctx)
        write_report(outdir, command, config, result, started)
        return EXIT_OK
    except ConfigError as exc:
        logger.error("%s: configuration error: %s", command, exc.detail)
        write_error(outdir, command, exc, EXIT_CONFIG)
        return EXIT_CONFIG
    except LabError as exc:
        logger.error("%s failed (%s): %s", command, exc.code, exc.detail)
        write_error(outdir, command, exc, EXIT_NUMERIC)
        return EXIT_NUMERIC
    except Exception as exc:
        logger.exception("%s failed with an unexpected %s", command, type(exc).__name__)
        write_error(outdir, command, exc, EXIT_NUMERIC)
        return EXIT_NUMERIC


__all__: List[str] = ["EXIT_CONFIG", "EXIT_NUMERIC", "EXIT_OK", "EXIT_VERIFY", "build_parser", "main"]

"""レポート（JSON）・時系列（CSV）・エラー記録の書き出し。"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np

from apps.lab import __version__
from apps.lab.errors import LabError
from apps.lab.logging_utils import get_logger
from apps.lab.lyapunov import NConvention
from packages.shared_schemas import ErrorReport, ModelSpec, Provenance, ReportEnvelope, ReportMetadata, RunConfig

logger = get_logger(__name__)


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def model_hash(spec: ModelSpec) -> str:
    """モデル定義の正規化 JSON の sha256。"""

    payload = canonical_json(spec.model_dump(mode="json", exclude_none=True))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def build_provenance(config: RunConfig) -> Provenance:
    return Provenance(
        model_hash=model_hash(config.model),
        convention=NConvention.from_name(config.n_convention).name,
        thresholds=config.analysis.model_dump(mode="json"),
        seed=config.rng_seed,
        version=__version__,
    )


def to_jsonable(value: Any) -> Any:
    """numpy 型や pydantic モデルを含む値を JSON に落とせる形にする。"""

    if hasattr(value, "model_dump"):
        return to_jsonable(value.model_dump())
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return to_jsonable(value.item())
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def write_json(path: Path, data: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(data), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def write_report(
    outdir: Path,
    command: str,
    config: RunConfig,
    result: Dict[str, Any],
    started_at: str,
) -> Path:
    """``<outdir>/<command>.report.json`` を書く。時刻は metadata にだけ入れる。"""

    envelope = ReportEnvelope(
        command=command,
        provenance=build_provenance(config),
        result=to_jsonable(result),
        metadata=ReportMetadata(started_at=started_at, finished_at=utc_now(), workers=config.workers),
    )
    path = write_json(outdir / f"{command}.report.json", envelope)
    logger.info("Wrote %s", path)
    return path


def write_error(outdir: Path, command: str, exc: Exception, exit_code: int) -> Path:
    """``<outdir>/<command>.error.json`` を書く。"""

    if isinstance(exc, LabError):
        report = ErrorReport(command=command, code=exc.code, detail=exc.detail, context=to_jsonable(exc.context), exit_code=exit_code)
    else:
        report = ErrorReport(command=command, code=type(exc).__name__, detail=str(exc), exit_code=exit_code)
    path = write_json(outdir / f"{command}.error.json", report)
    logger.info("Wrote %s", path)
    return path


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[float]]) -> Path:
    """数値の表を CSV にする。行が無ければヘッダだけ書く。"""

    path.parent.mkdir(parents=True, exist_ok=True)
    table: List[Sequence[float]] = list(rows)
    data = np.asarray(table, dtype=float).reshape(len(table), len(header))
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="")
    return path


__all__ = [
    "build_provenance",
    "canonical_json",
    "model_hash",
    "to_jsonable",
    "utc_now",
    "write_csv",
    "write_error",
    "write_json",
    "write_report",
]

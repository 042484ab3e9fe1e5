"""設定ファイルのモデル定義から CyclicVectorField を組み立てる。"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Dict, List, Optional

import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from apps.lab.errors import ConfigError, InvalidParameter
from apps.lab.logging_utils import get_logger
from apps.lab.model.field import Box, CyclicVectorField, FeedbackSignature, JacobianMode
from apps.lab.model.zoo import build_zoo_model
from packages.shared_schemas import DomainSpec, ModelSpec

logger = get_logger(__name__)

_TRANSFORMATIONS = standard_transformations + (convert_xor,)
_HILL_X, _HILL_P = sp.symbols("hill_x hill_p")
_HILL = sp.Lambda((_HILL_X, _HILL_P), 1 / (1 + _HILL_X**_HILL_P))


def box_from_spec(spec: DomainSpec, n: int) -> Box:
    if spec.preset == "whole_space":
        return Box.whole_space(n)
    if spec.preset == "positive_orthant":
        return Box.positive_orthant(n)
    assert spec.lower is not None and spec.upper is not None
    if len(spec.lower) != n:
        raise ConfigError("domain の次元がモデルと一致しません", n=n, domain=len(spec.lower))
    lower = tuple(-math.inf if v is None else float(v) for v in spec.lower)
    upper = tuple(math.inf if v is None else float(v) for v in spec.upper)
    return Box(lower, upper)


def parse_components(expressions: List[str]) -> List[sp.Expr]:
    """成分式を sympy 式に変換する。使える記号は x1..xn, exp, hill のみ。"""

    n = len(expressions)
    symbols = sp.symbols(f"x1:{n + 1}")
    local_dict: Dict[str, object] = {f"x{i + 1}": s for i, s in enumerate(symbols)}
    local_dict.update({"exp": sp.exp, "hill": _HILL})
    parsed = []
    for index, text in enumerate(expressions, start=1):
        try:
            expr = parse_expr(text, local_dict=local_dict, transformations=_TRANSFORMATIONS)
        except (SyntaxError, TypeError, ValueError, sp.SympifyError) as exc:
            raise ConfigError(f"成分 {index} の式を解釈できません: {text}", error=str(exc)) from exc
        unknown = {str(s) for s in expr.free_symbols} - {str(s) for s in symbols}
        if unknown:
            raise ConfigError(f"成分 {index} に未知の記号があります", symbols=sorted(unknown))
        parsed.append(sp.sympify(expr))
    return parsed


def custom_field(
    expressions: List[str],
    domain: Optional[Box] = None,
    delta: Optional[List[int]] = None,
    name: str = "custom",
) -> CyclicVectorField:
    """式のリストから場を作る。ヤコビアンは記号微分で得る。

    巡回パターンからの逸脱はここでは拒否しない（check_class が検出する）。
    """

    exprs = parse_components(expressions)
    n = len(exprs)
    symbols = sp.symbols(f"x1:{n + 1}")
    jac_exprs = sp.Matrix(exprs).jacobian(symbols)
    rhs_fn = sp.lambdify(symbols, exprs, modules="numpy")
    jac_fn = sp.lambdify(symbols, jac_exprs.tolist(), modules="numpy")

    signature = None
    if n >= 3:
        try:
            signature = FeedbackSignature(n, tuple(delta)) if delta else FeedbackSignature.normalized(n)
        except InvalidParameter as exc:
            raise ConfigError(f"delta が不正です: {exc.detail}", delta=delta) from exc

    return CyclicVectorField(
        name=name,
        n=n,
        rhs=lambda x: np.asarray(rhs_fn(*x), dtype=float),
        jac=lambda x: np.asarray(jac_fn(*x), dtype=float),
        jacobian_mode=JacobianMode.ANALYTIC,
        domain=domain or Box.whole_space(n),
        signature=signature,
        params={"custom": list(expressions)},
    )


def load_model(spec: ModelSpec) -> CyclicVectorField:
    """ModelSpec から場を作る。zoo の失敗は ConfigError に付け替える。"""

    if spec.custom is not None:
        n = len(spec.custom)
        domain = box_from_spec(spec.domain, n) if spec.domain else None
        field = custom_field(spec.custom, domain=domain, delta=spec.delta)
        field = replace(field, sample_box=default_sample_box(field.domain))
        logger.info("Loaded custom model with n=%d", n)
        return field

    assert spec.name is not None
    try:
        field = build_zoo_model(spec.name, dict(spec.params))
    except InvalidParameter as exc:
        raise ConfigError(exc.detail, **exc.context) from exc
    if spec.domain is not None:
        field = replace(field, domain=box_from_spec(spec.domain, field.n))
    if spec.delta is not None:
        try:
            signature = FeedbackSignature(field.n, tuple(spec.delta), field.signature.branch if field.signature else None)
        except InvalidParameter as exc:
            raise ConfigError(f"delta が不正です: {exc.detail}", delta=spec.delta) from exc
        field = replace(field, signature=signature)
    logger.info("Loaded zoo model %s with params %s", spec.name, spec.params)
    return field


def default_sample_box(domain: Box, half_width: float = 2.0, inset: float = 0.05) -> Box:
    """定義域と [−w, w]ⁿ の共通部分を、有限な端だけ inset だけ内側に寄せた箱。"""

    lower = tuple(lo + inset if math.isfinite(lo) else -half_width for lo in domain.lower)
    upper = tuple(hi - inset if math.isfinite(hi) else half_width for hi in domain.upper)
    lower = tuple(max(lo, -half_width) for lo in lower)
    upper = tuple(min(hi, half_width) if hi > lo else hi for lo, hi in zip(lower, upper))
    return Box(lower, upper)


__all__ = ["box_from_spec", "custom_field", "default_sample_box", "load_model", "parse_components"]

"""独立したジョブ（初期値・方向・ε）を並列に流すための薄いラッパ。"""

from __future__ import annotations

from typing import Callable, Iterable, List, TypeVar

from joblib import Parallel, delayed

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(func: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """入力順を保ったまま func を適用する。workers=1 なら逐次実行。"""

    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    return list(Parallel(n_jobs=workers, prefer="threads")(delayed(func)(item) for item in items))


__all__ = ["parallel_map"]

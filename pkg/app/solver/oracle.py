#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""CPOP Slope Changepoints - 全探索オラクル

小さな n で変化点の全部分集合を列挙し、各部分集合の最小二乗解を
密な計画行列から直接求める。累積和や二次関数の更新は使わない。
"""

# Standard Library
import logging
from itertools import combinations
from typing import List, Sequence, Tuple

# Third Party Library
import numpy as np

# First Party Library
from app.shared.config import (
    CONDITIONAL_ORACLE_MAX_N,
    ORACLE_CHECK_REL_TOL,
    ORACLE_MAX_N,
)
from app.shared.errors import BadRange, OracleMismatch, TooLarge
from app.shared.quadfn import tolerance
from app.shared.segcost import PenaltyConfig, h_value, validate_series

# Local Library
from .engine import Segmentation

logger = logging.getLogger(__name__)


def _knots(n: int, taus: Sequence[int]) -> np.ndarray:
    knots = np.array([0, *taus, n], dtype=np.int64)
    if np.any(np.diff(knots) <= 0):
        raise BadRange(f"変化点が不正です: {list(taus)} (n={n})")
    return knots


def _design(n: int, knots: np.ndarray) -> np.ndarray:
    """境界値から各時刻の平均への線形写像（ハット基底）"""
    times = np.arange(1, n + 1)
    seg = np.searchsorted(knots, times, side="left") - 1
    left = knots[seg]
    right = knots[seg + 1]
    weight = (times - left) / (right - left)
    design = np.zeros((n, knots.size))
    rows = np.arange(n)
    design[rows, seg] = 1.0 - weight
    design[rows, seg + 1] = weight
    return design


def _penalty(knots: np.ndarray, cfg: PenaltyConfig) -> float:
    lengths = np.diff(knots)
    return sum(h_value(cfg, int(s)) for s in lengths) + cfg.beta * len(
        lengths
    )


def oracle_fit_given_taus(
    y, taus: Sequence[int], cfg: PenaltyConfig
) -> Tuple[np.ndarray, float]:
    """変化点を固定したときの境界値とペナルティ込みのコスト

    Returns:
        Tuple[np.ndarray, float]: (φ, 総コスト)
    """
    arr = validate_series(y)
    n = arr.size
    knots = _knots(n, taus)
    design = _design(n, knots)
    phis, *_ = np.linalg.lstsq(design, arr, rcond=None)
    # 先頭セグメントが長さ1なら φ_0 は定まらない
    if knots.size > 1 and knots[1] - knots[0] == 1:
        phis[0] = phis[1]
    residual = arr - design @ phis
    rss_cost = float(residual @ residual) / cfg.sigma2
    return phis, rss_cost + _penalty(knots, cfg)


def _pick(results: List[Tuple[float, Tuple[int, ...]]]) -> int:
    """最小コスト（同点は変化点が少ない順、辞書順）の位置"""
    best = min(cost for cost, _ in results)
    limit = best + tolerance(best)
    tied = [i for i, (cost, _) in enumerate(results) if cost <= limit]
    return min(tied, key=lambda i: (len(results[i][1]), results[i][1]))


def oracle_exhaustive(y, cfg: PenaltyConfig) -> Segmentation:
    """全部分集合の列挙による最適分割

    Raises:
        TooLarge: n が上限を超える場合
    """
    arr = validate_series(y)
    n = arr.size
    if n > ORACLE_MAX_N:
        raise TooLarge(f"全探索の上限を超えています: n={n} > {ORACLE_MAX_N}")

    results: List[Tuple[float, Tuple[int, ...]]] = []
    for m in range(n):
        for taus in combinations(range(1, n), m):
            _, cost = oracle_fit_given_taus(arr, taus, cfg)
            results.append((cost, taus))

    best_taus = results[_pick(results)][1]
    phis, cost = oracle_fit_given_taus(arr, best_taus, cfg)
    knots = _knots(n, best_taus)
    fitted = _design(n, knots) @ phis
    rss_cost = float(np.sum((arr - fitted) ** 2)) / cfg.sigma2
    logger.debug(
        f"全探索完了: n={n}, 部分集合数={len(results)}, taus={best_taus}"
    )
    return Segmentation(
        m=len(best_taus),
        taus=np.array(best_taus, dtype=np.int64),
        phis=phis,
        cost=cost,
        rss_cost=rss_cost,
        fitted=fitted,
        sigma2=cfg.sigma2,
        diagnostics={"subsets": len(results)},
    )


def oracle_conditional_cost(
    y, t: int, phi: float, cfg: PenaltyConfig
) -> float:
    """y_{1:t} を φ_t = phi の条件のもとで分割したときの最小コスト

    Raises:
        TooLarge: データ長が上限を超える場合
        BadRange: t が 1..n の外にある場合
    """
    arr = validate_series(y)
    if arr.size > CONDITIONAL_ORACLE_MAX_N:
        raise TooLarge(
            f"条件付き全探索の上限を超えています: "
            f"n={arr.size} > {CONDITIONAL_ORACLE_MAX_N}"
        )
    if not 1 <= t <= arr.size:
        raise BadRange(f"時刻が範囲外です: t={t}, n={arr.size}")

    head = arr[:t]
    best = np.inf
    for m in range(t):
        for taus in combinations(range(1, t), m):
            knots = _knots(t, taus)
            design = _design(t, knots)
            # 終端の境界値を固定し、残りを最小二乗で決める
            target = head - design[:, -1] * phi
            free = design[:, :-1]
            coef, *_ = np.linalg.lstsq(free, target, rcond=None)
            residual = target - free @ coef
            cost = float(residual @ residual) / cfg.sigma2
            best = min(best, cost + _penalty(knots, cfg))
    return float(best)


def cross_check(
    result: Segmentation,
    y,
    cfg: PenaltyConfig,
    rel_tol: float = ORACLE_CHECK_REL_TOL,
) -> Segmentation:
    """CPOP の結果を全探索と照合

    Raises:
        OracleMismatch: コストまたは変化点が一致しない場合
    """
    truth = oracle_exhaustive(y, cfg)
    gap = abs(result.cost - truth.cost)
    if gap > rel_tol * max(1.0, abs(truth.cost)):
        raise OracleMismatch(
            f"コストが一致しません: cpop={result.cost}, oracle={truth.cost}"
        )
    if not np.array_equal(result.taus, truth.taus):
        raise OracleMismatch(
            f"変化点が一致しません: cpop={result.taus.tolist()}, "
            f"oracle={truth.taus.tolist()}"
        )
    return truth

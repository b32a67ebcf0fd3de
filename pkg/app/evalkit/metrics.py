#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""CPOP Slope Changepoints - 評価指標"""

# Standard Library
import math
from typing import Any, Dict, Optional, Sequence, Tuple

# Third Party Library
import numpy as np
from scipy.spatial.distance import cdist

# First Party Library
from app.shared.config import TP_THRESHOLD_FRACTION
from app.shared.errors import BadRange, LengthMismatch


def _as_points(taus: Sequence[float]) -> np.ndarray:
    return np.asarray(taus, dtype=float).reshape(-1, 1)


def mse(fitted, true_mean) -> float:
    """平均の推定値の平均二乗誤差"""
    a = np.asarray(fitted, dtype=float).ravel()
    b = np.asarray(true_mean, dtype=float).ravel()
    if a.size != b.size:
        raise LengthMismatch(f"配列長が一致しません: {a.size} != {b.size}")
    if a.size == 0:
        return 0.0
    return float(np.mean((a - b) ** 2))


def hausdorff_scaled(
    true_taus: Sequence[int], est_taus: Sequence[int], n_s: int
) -> float:
    """最長の真のセグメント長 n_s で割ったハウスドルフ距離

    片方だけが空なら inf、両方空なら0。
    """
    if n_s < 1:
        raise BadRange(f"n_s は1以上が必要です: {n_s}")
    true_pts = _as_points(true_taus)
    est_pts = _as_points(est_taus)
    if true_pts.size == 0 and est_pts.size == 0:
        return 0.0
    if true_pts.size == 0 or est_pts.size == 0:
        return math.inf
    dist = cdist(true_pts, est_pts)
    directed = max(dist.min(axis=1).max(), dist.min(axis=0).max())
    return float(directed) / n_s


def tp_fp(
    true_taus: Sequence[int], est_taus: Sequence[int], threshold: float
) -> Tuple[float, float]:
    """真陽性と偽陽性の割合

    真の変化点から threshold 以内に推定値があれば検出とみなす（多対一を許す）。
    """
    if threshold < 0:
        raise BadRange(f"しきい値は0以上が必要です: {threshold}")
    true_pts = _as_points(true_taus)
    est_pts = _as_points(est_taus)
    n_true = true_pts.shape[0]
    n_est = est_pts.shape[0]

    if n_true and n_est:
        tp = int(np.sum(cdist(true_pts, est_pts).min(axis=1) <= threshold))
    else:
        tp = 0
    fp = max(0, n_est - tp)

    tp_proportion = tp / n_true if n_true else 1.0
    fp_proportion = fp / n_est if n_est else 0.0
    return tp_proportion, fp_proportion


def longest_segment(taus: Sequence[int], n: int) -> int:
    """変化点で区切ったセグメントの最大長"""
    knots = np.concatenate(([0], np.asarray(taus, dtype=np.int64), [n]))
    return int(np.diff(knots).max())


def default_threshold(n_s: int) -> float:
    """検出判定の既定距離（セグメント長の1/5）"""
    return n_s * TP_THRESHOLD_FRACTION


def metrics_report(
    true_taus: Sequence[int],
    true_mean,
    est_taus: Sequence[int],
    fitted,
    threshold: Optional[float] = None,
) -> Dict[str, Any]:
    """評価指標をまとめて計算"""
    n = int(np.asarray(true_mean).size)
    n_s = longest_segment(true_taus, n)
    if threshold is None:
        threshold = default_threshold(n_s)
    tp, fp = tp_fp(true_taus, est_taus, threshold)
    return {
        "n": n,
        "m_true": len(true_taus),
        "m_est": len(est_taus),
        "mse": mse(fitted, true_mean),
        "d_H": hausdorff_scaled(true_taus, est_taus, n_s),
        "n_s": n_s,
        "threshold": threshold,
        "tp_proportion": tp,
        "fp_proportion": fp,
    }

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""テスト用の補助関数"""

# Third Party Library
import numpy as np

# First Party Library
from app.shared.quadfn import Quadratic


def square(center: float, offset: float = 0.0) -> Quadratic:
    """(φ − center)² + offset"""
    return Quadratic(1.0, -2.0 * center, center * center + offset)


def random_series(
    rng: np.random.Generator, n: int, scale: float = 1.0
) -> np.ndarray:
    """ランダムな区分線形風のデータ"""
    trend = np.cumsum(rng.normal(0.0, 0.5, size=n))
    return trend + rng.normal(0.0, scale, size=n)


def direct_segment_cost(
    y: np.ndarray, s: int, t: int, phi_start: float, phi_end: float
) -> float:
    """セグメント (s, t] の残差平方和を直接計算（σ² = 1）"""
    j = np.arange(s + 1, t + 1)
    fitted = phi_start + (phi_end - phi_start) * (j - s) / (t - s)
    return float(np.sum((y[s:t] - fitted) ** 2))

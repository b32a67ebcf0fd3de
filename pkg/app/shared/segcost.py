#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""CPOP Slope Changepoints - 累積和とセグメントコスト係数"""

# Standard Library
import math
from dataclasses import dataclass
from typing import Literal, Tuple

# Third Party Library
import numpy as np

# Local Library
from .errors import (
    BadRange,
    EmptyData,
    InvalidPenalty,
    NonFiniteValue,
    SigmaNotPositive,
)
from .quadfn import SegmentQuadratic

HKind = Literal["zero", "gamma_log"]


@dataclass(frozen=True)
class PrefixSums:
    """Σy, Σy², Σ(j·y) の累積和（先頭は0、長さ n+1）"""

    s1: np.ndarray
    s2: np.ndarray
    sj: np.ndarray
    n: int


@dataclass(frozen=True)
class PenaltyConfig:
    """ペナルティ設定

    Attributes:
        beta: 変化点1つあたりのペナルティ（正）
        sigma2: コストを正規化するノイズ分散（正）
        h_kind: セグメント長ペナルティの種類
        gamma: gamma_log の係数 γ（h(s) = γ·log s）
    """

    beta: float
    sigma2: float = 1.0
    h_kind: HKind = "zero"
    gamma: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.sigma2) and self.sigma2 > 0):
            raise SigmaNotPositive(
                f"ノイズ分散は正の値が必要です: {self.sigma2}"
            )
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise InvalidPenalty(f"β は正の値が必要です: {self.beta}")
        if self.h_kind not in ("zero", "gamma_log"):
            raise InvalidPenalty(f"未対応の h です: {self.h_kind}")
        if self.h_kind == "gamma_log" and not (
            math.isfinite(self.gamma) and self.gamma >= 0
        ):
            raise InvalidPenalty(f"γ は0以上が必要です: {self.gamma}")

    @classmethod
    def bic(cls, n: int, sigma2: float = 1.0) -> "PenaltyConfig":
        """BIC ペナルティ（β = 2 log n, h = 0）"""
        return cls(beta=penalty_beta_default(n), sigma2=sigma2)


def validate_series(y) -> np.ndarray:
    """観測系列を float 配列に変換し検証"""
    arr = np.asarray(y, dtype=float).ravel()
    if arr.size == 0:
        raise EmptyData("データが空です")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue("データに NaN または無限大が含まれています")
    return arr


def build_prefix_sums(y) -> PrefixSums:
    """累積和を構築（左から順に加算）"""
    arr = validate_series(y)
    j = np.arange(1, arr.size + 1, dtype=float)
    zero = np.zeros(1)
    return PrefixSums(
        s1=np.concatenate((zero, np.cumsum(arr))),
        s2=np.concatenate((zero, np.cumsum(arr * arr))),
        sj=np.concatenate((zero, np.cumsum(j * arr))),
        n=int(arr.size),
    )


def segment_coefficients_many(
    ps: PrefixSums, starts: np.ndarray, t: int, sigma2: float
) -> Tuple[np.ndarray, ...]:
    """終点 t を共有する複数セグメント (s, t] の係数 A–F を一括計算

    Args:
        ps: 累積和
        starts: セグメント直前の変化点 s の配列（0 ≤ s < t）
        t: セグメント終点
        sigma2: ノイズ分散

    Returns:
        Tuple[np.ndarray, ...]: (A, B, C, D, E, F)
    """
    s = np.asarray(starts, dtype=np.int64)
    length = (t - s).astype(float)
    w1 = ps.s1[t] - ps.s1[s]
    w2 = ps.s2[t] - ps.s2[s]
    # Σ y_j (j − s)。長さ1では y_t そのものなので E が厳密に0になる
    wj = np.where(length == 1, w1, (ps.sj[t] - ps.sj[s]) - s * w1)

    lp1 = length + 1.0
    quad_a = lp1 * (2.0 * length + 1.0) / (6.0 * length * sigma2)
    cross_b = lp1 / sigma2 - lp1 * (2.0 * length + 1.0) / (
        3.0 * length * sigma2
    )
    lin_c = -2.0 * wj / (length * sigma2)
    const_d = w2 / sigma2
    lin_e = 2.0 * (wj / (length * sigma2) - w1 / sigma2)
    quad_f = (length - 1.0) * (2.0 * length - 1.0) / (6.0 * length * sigma2)
    return quad_a, cross_b, lin_c, const_d, lin_e, quad_f


def segment_coefficients(
    ps: PrefixSums, s: int, t: int, sigma2: float
) -> SegmentQuadratic:
    """セグメント (s, t] のコスト係数

    Raises:
        BadRange: s ≥ t、s < 0 または t > n の場合
        SigmaNotPositive: sigma2 ≤ 0 の場合
    """
    if not (0 <= s < t <= ps.n):
        raise BadRange(f"セグメント範囲が不正です: s={s}, t={t}, n={ps.n}")
    if not sigma2 > 0:
        raise SigmaNotPositive(f"ノイズ分散は正の値が必要です: {sigma2}")
    coefs = segment_coefficients_many(ps, np.array([s]), t, sigma2)
    return SegmentQuadratic(*(float(c[0]) for c in coefs))


def penalty_beta_default(n: int) -> float:
    """BIC の変化点ペナルティ 2·log(n)"""
    if n < 2:
        raise InvalidPenalty(f"BIC ペナルティには n ≥ 2 が必要です: {n}")
    return 2.0 * math.log(n)


def h_value(cfg: PenaltyConfig, seg_len: int) -> float:
    """セグメント長ペナルティ h(seg_len)"""
    if cfg.h_kind == "gamma_log":
        return cfg.gamma * math.log(seg_len)
    return 0.0


def h_values(cfg: PenaltyConfig, lengths: np.ndarray) -> np.ndarray:
    """h の配列版"""
    lengths = np.asarray(lengths, dtype=float)
    if cfg.h_kind == "gamma_log":
        return cfg.gamma * np.log(lengths)
    return np.zeros(lengths.shape)


def inequality_threshold(cfg: PenaltyConfig, n: int) -> float:
    """不等式枝刈りのしきい値 K = 2β + h(1) + h(n)"""
    return 2.0 * cfg.beta + h_value(cfg, 1) + h_value(cfg, n)

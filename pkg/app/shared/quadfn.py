#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""CPOP Slope Changepoints - 一変数二次関数の代数

境界値 φ の二次関数 quad·φ² + lin·φ + const_ を扱う。DP の各候補が持つ
コスト関数 f_τ^t はすべてこの形で保持する。
"""

# Standard Library
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import List, Optional, Tuple

# Third Party Library
import numpy as np

# Local Library
from .config import ABS_TOL, REL_TOL
from .errors import IdenticalFunctions, NegativeCurvature, UnboundedBelow


@dataclass(frozen=True, slots=True)
class Quadratic:
    """一変数二次関数 quad·φ² + lin·φ + const_"""

    quad: float
    lin: float
    const_: float


ZERO_QUADRATIC = Quadratic(0.0, 0.0, 0.0)


@dataclass(frozen=True, slots=True)
class SegmentQuadratic:
    """セグメントコストの (φ′, φ) 二変数二次形式

    A·φ² + B·φ′φ + C·φ + D + E·φ′ + F·φ′²
    """

    A: float
    B: float
    C: float
    D: float
    E: float
    F: float


class Ordering(IntEnum):
    """φ→−∞ での大小比較の結果"""

    FIRST = -1  # 1つ目が小さい
    EQUAL = 0
    SECOND = 1  # 2つ目が小さい


def tolerance(*values: float) -> float:
    """値の大きさに応じた許容誤差"""
    scale = max((abs(v) for v in values), default=0.0)
    return ABS_TOL + REL_TOL * scale


def is_close(a: float, b: float) -> bool:
    """許容誤差内で等しいか判定"""
    return abs(a - b) <= tolerance(a, b)


def evaluate(q: Quadratic, phi):
    """φ（スカラーまたは配列）での値を返す"""
    return q.quad * phi * phi + q.lin * phi + q.const_


def minimum(q: Quadratic) -> Tuple[float, float]:
    """最小点と最小値を返す

    Returns:
        Tuple[float, float]: (φ*, 最小値)。定数関数は φ*=0 とする

    Raises:
        UnboundedBelow: 下に有界でない場合
    """
    if q.quad > 0:
        phi_star = -q.lin / (2.0 * q.quad)
        return phi_star, q.const_ - q.lin * q.lin / (4.0 * q.quad)
    if q.quad == 0 and q.lin == 0:
        return 0.0, q.const_
    raise UnboundedBelow(
        f"最小値が存在しません: quad={q.quad}, lin={q.lin}"
    )


def _identical(q1: Quadratic, q2: Quadratic) -> bool:
    return (
        is_close(q1.quad, q2.quad)
        and is_close(q1.lin, q2.lin)
        and is_close(q1.const_, q2.const_)
    )


def _real_roots(q1: Quadratic, q2: Quadratic) -> List[float]:
    """q1 − q2 の実根を昇順で返す（重根は1つ）"""
    a = q1.quad - q2.quad
    b = q1.lin - q2.lin
    c = q1.const_ - q2.const_

    if abs(a) <= tolerance(q1.quad, q2.quad):
        if abs(b) <= tolerance(q1.lin, q2.lin):
            return []
        return [-c / b]

    disc = b * b - 4.0 * a * c
    disc_tol = REL_TOL * (b * b + abs(4.0 * a * c)) + ABS_TOL
    if abs(disc) <= disc_tol:
        return [-b / (2.0 * a)]
    if disc < 0:
        return []

    # 桁落ちを避ける解の公式
    qq = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    r1 = qq / a
    r2 = c / qq
    return sorted((r1, r2))


def crossings_after(
    q1: Quadratic, q2: Quadratic, phi_curr: float
) -> Optional[float]:
    """phi_curr より大きい q1 − q2 の最小の実根

    Args:
        q1: 比較する関数
        q2: 比較する関数
        phi_curr: 掃引位置（-math.inf 可）

    Returns:
        Optional[float]: 交点。存在しなければ None

    Raises:
        IdenticalFunctions: q1 と q2 が許容誤差内で一致する場合
    """
    if _identical(q1, q2):
        raise IdenticalFunctions("2つの関数が一致しています")
    after = [r for r in _real_roots(q1, q2) if r > phi_curr]
    return min(after) if after else None


def compare_at_neg_infinity(q1: Quadratic, q2: Quadratic) -> Ordering:
    """φ→−∞ の極限でどちらが小さいかを係数の順序で判定"""
    if not is_close(q1.quad, q2.quad):
        return Ordering.FIRST if q1.quad < q2.quad else Ordering.SECOND
    # lin·φ は φ→−∞ で lin が大きいほど小さい
    if not is_close(q1.lin, q2.lin):
        return Ordering.FIRST if q1.lin > q2.lin else Ordering.SECOND
    if not is_close(q1.const_, q2.const_):
        return Ordering.FIRST if q1.const_ < q2.const_ else Ordering.SECOND
    return Ordering.EQUAL


def minimize_out_start_many(
    prev_quad: np.ndarray,
    prev_lin: np.ndarray,
    prev_const: np.ndarray,
    seg: Tuple[np.ndarray, ...],
    beta: float,
    h_val: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """セグメント始点の値 φ′ を最小化で消去した二次関数を一括計算

    min_φ′ [prev(φ′) + Aφ² + Bφ′φ + Cφ + D + Eφ′ + Fφ′²] + β + h

    Args:
        prev_quad: 直前の関数の二次係数
        prev_lin: 直前の関数の一次係数
        prev_const: 直前の関数の定数項
        seg: セグメント係数の配列 (A, B, C, D, E, F)
        beta: 変化点ペナルティ
        h_val: セグメント長ペナルティ

    Returns:
        Tuple[np.ndarray, np.ndarray, np.ndarray]: (quad, lin, const_)

    Raises:
        NegativeCurvature: prev.quad + F < 0
        UnboundedBelow: prev.quad + F = 0 かつ一次の項が残る
    """
    A, B, C, D, E, F = seg
    q = prev_quad + F
    lin = prev_lin + E

    if np.any(q < -ABS_TOL):
        raise NegativeCurvature(f"φ′ の曲率が負です: {float(np.min(q))}")

    degenerate = np.abs(q) <= ABS_TOL
    if np.any(
        degenerate & ((np.abs(lin) > ABS_TOL) | (np.abs(B) > ABS_TOL))
    ):
        raise UnboundedBelow("φ′ について下に有界でありません")

    safe_q = np.where(degenerate, 1.0, q)
    out_quad = A - np.where(degenerate, 0.0, B * B / (4.0 * safe_q))
    out_lin = C - np.where(degenerate, 0.0, B * lin / (2.0 * safe_q))
    out_const = (
        prev_const
        + D
        - np.where(degenerate, 0.0, lin * lin / (4.0 * safe_q))
        + beta
        + h_val
    )
    return out_quad, out_lin, out_const


def minimize_out_start(
    prev: Quadratic, seg: SegmentQuadratic, beta: float, h_val: float
) -> Quadratic:
    """1候補分の部分最小化（minimize_out_start_many の単体版）"""
    quad, lin, const = minimize_out_start_many(
        np.array([prev.quad]),
        np.array([prev.lin]),
        np.array([prev.const_]),
        tuple(
            np.array([v])
            for v in (seg.A, seg.B, seg.C, seg.D, seg.E, seg.F)
        ),
        beta,
        np.array([h_val]),
    )
    return Quadratic(float(quad[0]), float(lin[0]), float(const[0]))


def minimum_many(
    quad: np.ndarray, lin: np.ndarray, const: np.ndarray
) -> np.ndarray:
    """各関数の最小値（下に有界でないものは -inf）"""
    values = np.full(quad.shape, -np.inf)
    convex = quad > 0
    values[convex] = const[convex] - lin[convex] ** 2 / (4.0 * quad[convex])
    flat = (quad == 0) & (lin == 0)
    values[flat] = const[flat]
    return values


def entry_points_after(
    quad: np.ndarray,
    lin: np.ndarray,
    const: np.ndarray,
    curr: Quadratic,
    phi_curr: float,
) -> np.ndarray:
    """現在の最適関数より真に小さくなり始める最初の φ を一括計算

    d = f_j − f_curr とし、φ_curr 以降で d が負に転じる根を返す。
    接するだけの重根は入らない。該当しなければ NaN。

    Args:
        quad: 候補関数の二次係数
        lin: 候補関数の一次係数
        const: 候補関数の定数項
        curr: 現在の最適関数
        phi_curr: 掃引位置（-math.inf 可）

    Returns:
        np.ndarray: 進入点（φ_curr 未満にはならない）
    """
    da = quad - curr.quad
    db = lin - curr.lin
    dc = const - curr.const_
    tol_a = ABS_TOL + REL_TOL * np.maximum(np.abs(quad), abs(curr.quad))
    tol_b = ABS_TOL + REL_TOL * np.maximum(np.abs(lin), abs(curr.lin))

    out = np.full(da.shape, np.nan)

    linear = np.abs(da) <= tol_a
    falling = linear & (db < -tol_b)
    out[falling] = -dc[falling] / db[falling]

    curved = ~linear
    if np.any(curved):
        a = da[curved]
        b = db[curved]
        c = dc[curved]
        res = np.full(a.shape, np.nan)
        disc = b * b - 4.0 * a * c
        disc_tol = REL_TOL * (b * b + np.abs(4.0 * a * c)) + ABS_TOL

        # 重根: 凹のときだけ根の先で負になる
        double = np.abs(disc) <= disc_tol
        concave_double = double & (a < 0)
        res[concave_double] = -b[concave_double] / (2.0 * a[concave_double])

        two = disc > disc_tol
        if np.any(two):
            a2, b2, c2 = a[two], b[two], c[two]
            qq = -0.5 * (b2 + np.copysign(np.sqrt(disc[two]), b2))
            r1 = qq / a2
            r2 = c2 / qq
            lo = np.minimum(r1, r2)
            hi = np.maximum(r1, r2)
            # 凸なら小さい根で下に入り、凹なら大きい根で入る
            res[two] = np.where(a2 > 0, lo, hi)
        out[curved] = res

    if math.isfinite(phi_curr):
        slack = ABS_TOL + REL_TOL * abs(phi_curr)
        late = out < phi_curr - slack
        out[late] = np.nan
        out = np.maximum(out, phi_curr)
    return out

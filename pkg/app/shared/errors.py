#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""CPOP Slope Changepoints - 例外定義"""


class CpopError(Exception):
    """このパッケージが送出する例外の基底クラス"""


# ===== 二次関数の代数 =====


class UnboundedBelow(CpopError):
    """二次関数が下に有界でない（最小値が存在しない）"""


class NegativeCurvature(CpopError):
    """部分最小化の曲率が負"""


class IdenticalFunctions(CpopError):
    """2つの二次関数が許容誤差内で一致し交点が定まらない"""


# ===== 入力データ =====


class DataError(CpopError):
    """入力データの不正"""


class EmptyData(DataError):
    """データが空"""


class NonFiniteValue(DataError):
    """NaN または無限大を含む"""


class TooShort(DataError):
    """データ長が処理に必要な長さに満たない"""


class LengthMismatch(DataError):
    """配列長が一致しない"""


class InputParseError(DataError):
    """入力ファイルを数値列として解釈できない"""


# ===== 設定・範囲 =====


class BadRange(CpopError):
    """セグメント範囲が不正"""


class SigmaNotPositive(CpopError):
    """ノイズ分散が正でない"""


class InvalidPenalty(CpopError):
    """ペナルティ設定が不正"""


class BadScenario(CpopError):
    """シミュレーションシナリオの不正"""


# ===== 数値計算 =====


class SingularSystem(CpopError):
    """境界値の連立方程式が特異"""


class SweepNotConverged(CpopError):
    """区間掃引が反復上限までに終わらない"""


class TooLarge(CpopError):
    """全探索オラクルの上限を超えるデータ長"""


class ZeroVariance(CpopError):
    """二階差分の MAD が 0 でノイズ分散を推定できない"""


class OracleMismatch(CpopError):
    """CPOP と全探索オラクルの結果が一致しない"""

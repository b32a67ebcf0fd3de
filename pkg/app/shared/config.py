#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""CPOP Slope Changepoints - 設定管理"""

# Standard Library
import os
from pathlib import Path
from typing import Any, Dict, List

# Third Party Library
import psutil

PROJECT_ROOT = Path(__file__).parent.parent.parent

# 数値許容誤差（関数の同一判定・根の判定・コストの同点判定に共通で使用）
NUMERIC_TOLERANCE: Dict[str, float] = {
    "rel": 1e-9,
    "abs": 1e-12,
}
REL_TOL: float = NUMERIC_TOLERANCE["rel"]
ABS_TOL: float = NUMERIC_TOLERANCE["abs"]

# 区間掃引の反復上限 = 関数数 × PER_FUNCTION + EXTRA
SWEEP_ITERATIONS_PER_FUNCTION: int = 4
SWEEP_ITERATIONS_EXTRA: int = 16

# 全探索オラクルの上限
ORACLE_MAX_N: int = 16  # oracle_exhaustive
CONDITIONAL_ORACLE_MAX_N: int = 12  # oracle_conditional_cost

# --oracle 照合時の相対許容誤差
ORACLE_CHECK_REL_TOL: float = 1e-8

# MAD の尺度定数 Φ^-1(0.75)
MAD_SCALE: float = 0.6744897501960817

# シナリオの既定値
SCENARIO_DEFAULTS: Dict[str, Any] = {
    "value_sd": 2.0,  # 節点値の標準偏差（分散4）
    "noise_sd": 1.0,  # 観測ノイズの標準偏差
    "seed": 0,
}

# 真陽性判定の距離 = 最長セグメント長 × この割合
TP_THRESHOLD_FRACTION: float = 0.2

# レポート出力
JSON_SIGNIFICANT_DIGITS: int = 12
DATA_FLOAT_FORMAT: str = "%.17g"  # シミュレーションデータは完全精度で保存
INF_SENTINEL: str = "inf"

# CLI 終了コード
EXIT_CODES: Dict[str, int] = {
    "success": 0,
    "parse_error": 2,
    "zero_variance": 3,
    "oracle_mismatch": 4,
}

# ベンチマーク CSV の列
BENCH_COLUMNS: List[str] = [
    "n",
    "m",
    "replicates",
    "time_mean",
    "time_sd",
    "tstar_mean",
    "that_mean",
    "tstar_sum_mean",
    "that_final_mean",
    "m_detected_mean",
]
PER_T_COLUMNS: List[str] = [
    "n",
    "m",
    "t",
    "tstar_mean",
    "tstar_sd",
    "that_mean",
    "that_sd",
]
EXPONENT_COLUMNS: List[str] = ["m_regime", "n_points", "exponent"]

# ベンチマークの m 指定に使える名前付きレジーム
M_REGIMES: List[str] = ["sqrt", "linear"]
LINEAR_REGIME_SEGMENT: int = 50  # "linear" は m = n/50


def get_bench_workers() -> int:
    """ベンチマークの並列ワーカー数を取得

    Returns:
        int: 並列数
            - 環境変数CPOP_THREADSが正の整数: その値
            - その他: 物理コア数（取得できなければ1）
    """
    raw = os.getenv("CPOP_THREADS", "").strip()
    if raw:
        try:
            value = int(raw)
        except ValueError:
            value = 0
        if value > 0:
            return value
    return psutil.cpu_count(logical=False) or 1


# バッチ処理ログ設定
LOG_CONFIG: Dict[str, Any] = {
    "log_dir": os.environ.get(
        "CPOP_LOG_DIR",
        str(PROJECT_ROOT / "logs"),
    ),
    "log_filename": "cpop.log",
    "logger_name": "app",
    "log_level": "INFO",
    "log_format": "%(asctime)s - %(levelname)s - %(message)s",
    # True:標準エラー出力にもログを出力
    "enable_console_output": os.environ.get("CPOP_LOG_CONSOLE", "")
    in ("1", "true", "yes"),
    # ログローテート設定
    "rotation_type": "time",  # 時間ベースローテート
    "when": "midnight",  # 毎日午前0時
    "interval": 1,  # 1日間隔
    "backup_count": 7,  # 7日分保持
    "date_suffix": "%Y-%m-%d",  # 日付フォーマット（例: cpop.log.2025-08-20）
}

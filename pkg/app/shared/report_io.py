#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""CPOP Slope Changepoints - 入出力（系列・JSON・CSV）"""

# Standard Library
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Optional, Union

# Third Party Library
import numpy as np
import pandas as pd

# Local Library
from .config import DATA_FLOAT_FORMAT, INF_SENTINEL, JSON_SIGNIFICANT_DIGITS
from .errors import EmptyData, InputParseError
from .segcost import validate_series

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def read_series(path: PathLike) -> np.ndarray:
    """改行区切りの実数列、または1列CSV（ヘッダー任意）を読み込む

    Args:
        path: 入力ファイル

    Returns:
        np.ndarray: 観測系列

    Raises:
        InputParseError: 数値列として解釈できない場合
        EmptyData: 数値が1つもない場合
        NonFiniteValue: NaN または無限大を含む場合
    """
    try:
        frame = pd.read_csv(
            path,
            header=None,
            dtype=str,
            na_filter=False,
            skip_blank_lines=True,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError as e:
        raise EmptyData(f"入力ファイルが空です: {path}") from e
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise InputParseError(f"入力ファイルを読み込めません: {e}") from e

    if frame.shape[1] != 1:
        raise InputParseError(
            f"1列の数値データが必要です（{frame.shape[1]}列）: {path}"
        )

    raw = frame.iloc[:, 0].str.strip()
    values = pd.to_numeric(raw, errors="coerce")

    # 先頭行だけが数値でなければヘッダーとみなす
    if (
        len(values) > 0
        and pd.isna(values.iloc[0])
        and raw.iloc[0].lower() != "nan"
    ):
        logger.debug(f"ヘッダー行をスキップ: {raw.iloc[0]}")
        raw = raw.iloc[1:]
        values = values.iloc[1:]

    bad = values.isna() & ~raw.str.lower().isin(["nan"])
    if bad.any():
        first = raw[bad].iloc[0]
        raise InputParseError(f"数値として解釈できない値があります: {first}")

    return validate_series(values.to_numpy(dtype=float))


def write_series(path: PathLike, y: np.ndarray) -> None:
    """系列を1列で保存（完全精度）"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({"y": np.asarray(y, dtype=float)}).to_csv(
        path,
        header=False,
        index=False,
        float_format=DATA_FLOAT_FORMAT,
        lineterminator="\n",
    )


def round_significant(value: float) -> Union[float, str]:
    """有効数字を揃える（無限大は文字列センチネル）"""
    if math.isinf(value):
        return INF_SENTINEL if value > 0 else f"-{INF_SENTINEL}"
    if value == 0 or math.isnan(value):
        return value
    return float(f"{value:.{JSON_SIGNIFICANT_DIGITS}g}")


def to_jsonable(obj: Any) -> Any:
    """numpy 型や無限大を含むオブジェクトを JSON 化できる形に変換"""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = round_significant(float(obj))
        if isinstance(value, float) and math.isnan(value):
            return None
        return value
    return obj


def dump_json(obj: Any) -> str:
    """JSON 文字列に変換"""
    return json.dumps(to_jsonable(obj), ensure_ascii=False, indent=2)


def write_json(obj: Any, path: Optional[PathLike] = None) -> str:
    """JSON を書き出し、同じ文字列を返す（path 省略時は書き出さない）"""
    text = dump_json(obj)
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    return text


def load_json(path: PathLike) -> Dict[str, Any]:
    """JSON オブジェクトを読み込む

    Raises:
        InputParseError: 読み込めない、またはオブジェクトでない場合
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise InputParseError(f"JSON を読み込めません: {path} - {e}") from e
    if not isinstance(data, dict):
        raise InputParseError(f"JSON オブジェクトが必要です: {path}")
    return data


def parse_number(value: Any) -> float:
    """JSON 上の数値（"inf" センチネル含む）を float に戻す"""
    if isinstance(value, str) and value.strip().lower() in (
        INF_SENTINEL,
        f"+{INF_SENTINEL}",
    ):
        return math.inf
    try:
        return float(value)
    except (TypeError, ValueError) as e:
        raise InputParseError(f"数値ではありません: {value}") from e


def write_table(frame: pd.DataFrame, path: Optional[PathLike] = None) -> str:
    """表を CSV で書き出し、同じ文字列を返す"""
    text = frame.to_csv(
        index=False,
        float_format=f"%.{JSON_SIGNIFICANT_DIGITS}g",
        lineterminator="\n",
    )
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    return text

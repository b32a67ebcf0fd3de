#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""テスト共通設定とフィクスチャ"""

# Standard Library
from pathlib import Path
from typing import Callable, Generator, Sequence
from unittest.mock import patch

# Third Party Library
import numpy as np
import pytest


@pytest.fixture(autouse=True)
def isolated_log_dir(tmp_path: Path) -> Generator[Path, None, None]:
    """ログ出力先を一時ディレクトリに差し替え（プロジェクトの logs/ を汚さない）"""
    log_dir = tmp_path / "logs"
    with patch.dict(
        "app.shared.config.LOG_CONFIG",
        {"log_dir": str(log_dir), "enable_console_output": False},
    ):
        yield log_dir


@pytest.fixture
def rng() -> np.random.Generator:
    """テスト用の乱数生成器"""
    return np.random.default_rng(20240601)


@pytest.fixture
def line_series() -> np.ndarray:
    """完全な直線 y = 1, 2, …, 10"""
    return np.arange(1.0, 11.0)


@pytest.fixture
def v_series() -> np.ndarray:
    """ノイズのない V 字（t=4 で傾きが変わる）"""
    return np.array([4.0, 3.0, 2.0, 1.0, 2.0, 3.0, 4.0])


@pytest.fixture
def series_file(tmp_path: Path) -> Callable[..., Path]:
    """数値列をファイルに書き出すファクトリ"""

    def _write(
        values: Sequence[object], name: str = "y.txt", header: str = ""
    ) -> Path:
        path = tmp_path / name
        lines = [header] if header else []
        lines.extend(str(v) for v in values)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return _write

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""CPOP Slope Changepoints - ベンチマークの並列実行"""

# Standard Library
import asyncio
import logging
import math
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple, Union

# Third Party Library
import numpy as np
import pandas as pd

# First Party Library
from app.evalkit.scenario import Scenario, simulate
from app.shared.config import (
    BENCH_COLUMNS,
    EXPONENT_COLUMNS,
    LINEAR_REGIME_SEGMENT,
    M_REGIMES,
    PER_T_COLUMNS,
    SCENARIO_DEFAULTS,
    get_bench_workers,
)
from app.shared.errors import BadScenario
from app.shared.segcost import PenaltyConfig
from app.solver.engine import CpopEngine, PruneOptions


@dataclass(frozen=True)
class BenchCell:
    """ベンチマークの1セル (n, m, 反復数)"""

    n: int
    m: int
    replicates: int
    regime: str


@dataclass(frozen=True)
class BenchSettings:
    """全セル共通の設定"""

    seed: int = SCENARIO_DEFAULTS["seed"]
    value_sd: float = SCENARIO_DEFAULTS["value_sd"]
    noise_sd: float = SCENARIO_DEFAULTS["noise_sd"]
    sigma: Optional[float] = None  # 省略時は noise_sd を既知とする
    beta: Optional[float] = None  # 省略時は BIC


@dataclass(frozen=True)
class ReplicateJob:
    cell_index: int
    cell: BenchCell
    replicate: int
    settings: BenchSettings


@dataclass
class ReplicateResult:
    """1反復の計測結果"""

    cell_index: int
    n: int
    m: int
    replicate: int
    seconds: float
    tstar: np.ndarray
    that: np.ndarray
    final_candidates: int
    m_detected: int


def resolve_m(n: int, m_value: Union[int, str]) -> Tuple[int, str]:
    """m の指定（整数またはレジーム名）を解決"""
    if isinstance(m_value, str):
        if m_value == "sqrt":
            return int(math.isqrt(n)), "sqrt"
        if m_value == "linear":
            return n // LINEAR_REGIME_SEGMENT, "linear"
        raise BadScenario(
            f"未対応の m レジームです: {m_value}（{', '.join(M_REGIMES)}）"
        )
    if isinstance(m_value, bool) or not isinstance(m_value, int):
        raise BadScenario(f"m は整数またはレジーム名が必要です: {m_value}")
    return m_value, f"m={m_value}"


def parse_grid(
    config: Dict[str, Any]
) -> Tuple[List[BenchCell], BenchSettings]:
    """ベンチマーク設定を解釈

    Raises:
        BadScenario: 設定が不正な場合
    """
    try:
        settings = BenchSettings(
            seed=int(config.get("seed", SCENARIO_DEFAULTS["seed"])),
            value_sd=float(
                config.get("value_sd", SCENARIO_DEFAULTS["value_sd"])
            ),
            noise_sd=float(
                config.get("noise_sd", SCENARIO_DEFAULTS["noise_sd"])
            ),
            sigma=(
                float(config["sigma"])
                if config.get("sigma") is not None
                else None
            ),
            beta=(
                float(config["beta"])
                if config.get("beta") is not None
                else None
            ),
        )
    except (TypeError, ValueError) as e:
        raise BadScenario(f"ベンチマーク設定を解釈できません: {e}") from e

    raw_cells = config.get("cells", [])
    if not isinstance(raw_cells, list):
        raise BadScenario("cells はリストが必要です")

    cells: List[BenchCell] = []
    for raw in raw_cells:
        if not isinstance(raw, dict) or "n" not in raw:
            raise BadScenario(f"セルには n が必要です: {raw}")
        n = raw["n"]
        replicates = raw.get("replicates", 1)
        if not isinstance(n, int) or n < 2:
            raise BadScenario(f"n は2以上の整数が必要です: {n}")
        if not isinstance(replicates, int) or replicates < 1:
            raise BadScenario(f"replicates は1以上が必要です: {replicates}")
        if "segment_length" in raw:
            length = raw["segment_length"]
            if not isinstance(length, int) or length < 1 or n % length:
                raise BadScenario(
                    f"segment_length は n の約数が必要です: {length}"
                )
            m, regime = n // length - 1, f"segment_length={length}"
        else:
            m, regime = resolve_m(n, raw.get("m", 0))
        if not 0 <= m <= n - 1:
            raise BadScenario(f"m は 0..n−1 が必要です: m={m}, n={n}")
        cells.append(BenchCell(n, m, replicates, regime))
    return cells, settings


def run_replicate(job: ReplicateJob) -> ReplicateResult:
    """1反復分のデータ生成と CPOP の実行（プロセスプールで実行）"""
    cell, settings = job.cell, job.settings
    scenario = Scenario(
        kind="random_equispaced",
        n=cell.n,
        m=cell.m,
        value_sd=settings.value_sd,
        noise_sd=settings.noise_sd,
        seed=settings.seed + job.replicate,
    )
    y, _ = simulate(scenario)
    sigma = settings.sigma if settings.sigma is not None else settings.noise_sd
    sigma2 = sigma * sigma if sigma > 0 else 1.0
    if settings.beta is not None:
        cfg = PenaltyConfig(beta=settings.beta, sigma2=sigma2)
    else:
        cfg = PenaltyConfig.bic(cell.n, sigma2)

    engine = CpopEngine(y, cfg, PruneOptions(trace=True))
    result = engine.run()
    return ReplicateResult(
        cell_index=job.cell_index,
        n=cell.n,
        m=cell.m,
        replicate=job.replicate,
        seconds=engine.elapsed,
        tstar=np.array([r.optimal_count for r in engine.records]),
        that=np.array([r.candidate_count for r in engine.records]),
        final_candidates=engine.records[-1].candidate_count,
        m_detected=result.m,
    )


class BenchRunner:
    """反復を並列に実行するクラス"""

    def __init__(
        self,
        cells: List[BenchCell],
        settings: BenchSettings,
        workers: Optional[int] = None,
    ):
        self.cells = cells
        self.settings = settings
        self.workers = workers or get_bench_workers()
        self.logger = logging.getLogger(__name__)

    def jobs(self) -> List[ReplicateJob]:
        return [
            ReplicateJob(index, cell, r, self.settings)
            for index, cell in enumerate(self.cells)
            for r in range(cell.replicates)
        ]

    async def run_job(
        self, job: ReplicateJob, executor: Optional[Executor]
    ) -> ReplicateResult:
        """1反復を非同期実行"""
        self.logger.debug(
            f"反復開始: n={job.cell.n}, m={job.cell.m}, r={job.replicate}"
        )
        loop = asyncio.get_running_loop()
        result = await loop.run_in_executor(executor, run_replicate, job)
        self.logger.debug(
            f"反復完了: n={job.cell.n}, m={job.cell.m}, r={job.replicate}, "
            f"{result.seconds:.3f}秒"
        )
        return result

    async def run_all(self) -> List[ReplicateResult]:
        """全反復を並列実行（同時実行数制限付き）"""
        jobs = self.jobs()
        self.logger.info(
            f"ベンチマーク開始: {len(self.cells)} セル, {len(jobs)} 反復 "
            f"(同時実行数上限: {self.workers})"
        )
        if not jobs:
            return []

        semaphore = asyncio.Semaphore(self.workers)
        executor: Optional[Executor] = None
        if self.workers > 1:
            executor = ProcessPoolExecutor(max_workers=self.workers)

        async def run_with_semaphore(job: ReplicateJob) -> ReplicateResult:
            async with semaphore:
                return await self.run_job(job, executor)

        try:
            results = await asyncio.gather(
                *(run_with_semaphore(job) for job in jobs)
            )
        finally:
            if executor is not None:
                executor.shutdown()

        # 並列数に関係なくセル順・反復順に並べる
        ordered = sorted(results, key=lambda r: (r.cell_index, r.replicate))
        self.logger.info(f"ベンチマーク完了: {len(ordered)} 反復")
        return ordered


def _sd(values: np.ndarray) -> float:
    return float(np.std(values, ddof=1)) if values.size > 1 else 0.0


def summarize(
    results: List[ReplicateResult], cells: List[BenchCell]
) -> pd.DataFrame:
    """セルごとの要約（実行時間、候補集合サイズ、検出数）"""
    rows = []
    for index, cell in enumerate(cells):
        mine = [r for r in results if r.cell_index == index]
        if not mine:
            continue
        seconds = np.array([r.seconds for r in mine])
        rows.append(
            {
                "n": cell.n,
                "m": cell.m,
                "replicates": len(mine),
                "time_mean": float(seconds.mean()),
                "time_sd": _sd(seconds),
                "tstar_mean": float(
                    np.mean(np.concatenate([r.tstar for r in mine]))
                ),
                "that_mean": float(
                    np.mean(np.concatenate([r.that for r in mine]))
                ),
                "tstar_sum_mean": float(
                    np.mean([r.tstar.sum() for r in mine])
                ),
                "that_final_mean": float(
                    np.mean([r.final_candidates for r in mine])
                ),
                "m_detected_mean": float(
                    np.mean([r.m_detected for r in mine])
                ),
            }
        )
    return pd.DataFrame(rows, columns=BENCH_COLUMNS)


def per_t_table(
    results: List[ReplicateResult], cells: List[BenchCell]
) -> pd.DataFrame:
    """時刻ごとの |T*_t| と |T̂_t| の反復平均と標準偏差"""
    frames = []
    for index, cell in enumerate(cells):
        mine = [r for r in results if r.cell_index == index]
        if not mine:
            continue
        tstar = np.vstack([r.tstar for r in mine])
        that = np.vstack([r.that for r in mine])
        ddof = 1 if len(mine) > 1 else 0
        frames.append(
            pd.DataFrame(
                {
                    "n": cell.n,
                    "m": cell.m,
                    "t": np.arange(1, cell.n + 1),
                    "tstar_mean": tstar.mean(axis=0),
                    "tstar_sd": tstar.std(axis=0, ddof=ddof),
                    "that_mean": that.mean(axis=0),
                    "that_sd": that.std(axis=0, ddof=ddof),
                }
            )
        )
    if not frames:
        return pd.DataFrame(columns=PER_T_COLUMNS)
    return pd.concat(frames, ignore_index=True)[PER_T_COLUMNS]


def scaling_exponents(
    summary: pd.DataFrame, cells: List[BenchCell]
) -> pd.DataFrame:
    """m のレジームごとに log(時間) を log(n) に回帰した傾き"""
    regimes = pd.DataFrame(
        {
            "n": [c.n for c in cells],
            "m": [c.m for c in cells],
            "m_regime": [c.regime for c in cells],
        }
    ).drop_duplicates(["n", "m"])
    if summary.empty or regimes.empty:
        return pd.DataFrame(columns=EXPONENT_COLUMNS)

    merged = summary.merge(regimes, on=["n", "m"], how="left")
    rows = []
    for regime, group in merged.groupby("m_regime", sort=True):
        group = group[group["time_mean"] > 0]
        if group["n"].nunique() < 2:
            continue
        slope, _ = np.polyfit(
            np.log(group["n"].to_numpy(dtype=float)),
            np.log(group["time_mean"].to_numpy(dtype=float)),
            1,
        )
        rows.append(
            {
                "m_regime": regime,
                "n_points": int(group["n"].nunique()),
                "exponent": float(slope),
            }
        )
    return pd.DataFrame(rows, columns=EXPONENT_COLUMNS)

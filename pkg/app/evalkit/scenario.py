#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""CPOP Slope Changepoints - シミュレーションとノイズ推定

乱数は numpy の Generator(PCG64DXSM(seed)) に固定する。random_equispaced
では節点値 (m+2 個, normal(0, value_sd)) を先に引き、続けて観測ノイズ
(standard_normal(n) * noise_sd) を引く。
"""

# Standard Library
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, Literal, Optional, Tuple

# Third Party Library
import numpy as np

# First Party Library
from app.shared.config import MAD_SCALE, SCENARIO_DEFAULTS
from app.shared.errors import BadScenario, TooShort, ZeroVariance
from app.shared.segcost import validate_series

logger = logging.getLogger(__name__)

ScenarioKind = Literal["random_equispaced", "explicit_knots"]
SCENARIO_KINDS: Tuple[str, ...] = ("random_equispaced", "explicit_knots")


@dataclass(frozen=True)
class Scenario:
    """シミュレーション設定

    Attributes:
        kind: random_equispaced（等間隔の変化点、ランダムな節点値）
            または explicit_knots（節点を直接指定）
        n: データ長
        m: 変化点数（random_equispaced）
        segment_length: セグメント長（m の代わりに指定可、m = n/長さ − 1）
        knot_times: 節点の時刻（explicit_knots、先頭0・末尾n）
        knot_values: 節点での平均値（explicit_knots）
        value_sd: 節点値の標準偏差
        noise_sd: 観測ノイズの標準偏差
        seed: 乱数シード
        name: 表示用の名前
    """

    kind: ScenarioKind
    n: int
    m: Optional[int] = None
    segment_length: Optional[int] = None
    knot_times: Tuple[int, ...] = ()
    knot_values: Tuple[float, ...] = ()
    value_sd: float = SCENARIO_DEFAULTS["value_sd"]
    noise_sd: float = SCENARIO_DEFAULTS["noise_sd"]
    seed: int = SCENARIO_DEFAULTS["seed"]
    name: str = ""

    def __post_init__(self) -> None:
        if self.kind not in SCENARIO_KINDS:
            raise BadScenario(f"未対応のシナリオ種別です: {self.kind}")
        if not isinstance(self.n, int) or self.n < 1:
            raise BadScenario(f"n は1以上の整数が必要です: {self.n}")
        for label, value in (
            ("value_sd", self.value_sd),
            ("noise_sd", self.noise_sd),
        ):
            if not (math.isfinite(value) and value >= 0):
                raise BadScenario(f"{label} は0以上が必要です: {value}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise BadScenario(f"seed は0以上の整数が必要です: {self.seed}")

        if self.kind == "random_equispaced":
            self._check_equispaced()
        else:
            self._check_knots()

    def _check_equispaced(self) -> None:
        if (self.m is None) == (self.segment_length is None):
            raise BadScenario("m と segment_length のどちらか一方を指定します")
        if self.segment_length is not None and (
            self.segment_length < 1 or self.n % self.segment_length
        ):
            raise BadScenario(
                f"segment_length は n の約数が必要です: "
                f"n={self.n}, segment_length={self.segment_length}"
            )
        m = self.changepoint_count
        if m < 0 or m > self.n - 1:
            raise BadScenario(f"m は 0..n−1 が必要です: m={m}, n={self.n}")

    def _check_knots(self) -> None:
        times = self.knot_times
        if len(times) < 2 or len(times) != len(self.knot_values):
            raise BadScenario("節点の時刻と値は同じ長さ（2以上）が必要です")
        if times[0] != 0 or times[-1] != self.n:
            raise BadScenario(
                f"節点は0で始まり n={self.n} で終わる必要があります"
            )
        if any(b <= a for a, b in zip(times, times[1:])):
            raise BadScenario("節点の時刻は狭義単調増加が必要です")
        if not all(math.isfinite(v) for v in self.knot_values):
            raise BadScenario("節点値に NaN または無限大が含まれています")

    @property
    def changepoint_count(self) -> int:
        """変化点数"""
        if self.kind == "explicit_knots":
            return len(self.knot_times) - 2
        if self.m is not None:
            return self.m
        return self.n // int(self.segment_length or 1) - 1

    def changepoints(self) -> np.ndarray:
        """真の変化点（内部の節点の時刻）"""
        if self.kind == "explicit_knots":
            return np.array(self.knot_times[1:-1], dtype=np.int64)
        m = self.changepoint_count
        i = np.arange(1, m + 1, dtype=np.int64)
        # round(i·n/(m+1)) を整数演算で
        return (2 * i * self.n + (m + 1)) // (2 * (m + 1))

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["knot_times"] = list(self.knot_times)
        data["knot_values"] = list(self.knot_values)
        return {k: v for k, v in data.items() if v not in (None, [], "")}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Scenario":
        """辞書（シナリオファイルの内容）から生成

        Raises:
            BadScenario: 未知のキーや型の誤りがある場合
        """
        known = set(cls.__dataclass_fields__) | {"description"}
        unknown = set(data) - known
        if unknown:
            raise BadScenario(f"未知のキーがあります: {sorted(unknown)}")
        params = dict(data)
        params.pop("description", None)
        try:
            if "knot_times" in params:
                params["knot_times"] = tuple(
                    _as_int(v) for v in params["knot_times"]
                )
                params.setdefault("kind", "explicit_knots")
                params.setdefault("n", params["knot_times"][-1])
            if "knot_values" in params:
                params["knot_values"] = tuple(
                    float(v) for v in params["knot_values"]
                )
            for key in ("n", "m", "segment_length", "seed"):
                if params.get(key) is not None:
                    params[key] = _as_int(params[key])
            for key in ("value_sd", "noise_sd"):
                if key in params:
                    params[key] = float(params[key])
            return cls(**params)
        except (TypeError, ValueError, IndexError) as e:
            raise BadScenario(f"シナリオを解釈できません: {e}") from e


def _as_int(value: Any) -> int:
    if isinstance(value, bool):
        raise ValueError(f"整数ではありません: {value}")
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"整数ではありません: {value}")
        return int(value)
    return int(value)


@dataclass
class Truth:
    """シミュレーションの真値"""

    taus: np.ndarray
    mean: np.ndarray
    knot_times: np.ndarray
    knot_values: np.ndarray
    scenario: Dict[str, Any] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.mean.size)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "m": int(self.taus.size),
            "taus": self.taus,
            "knot_times": self.knot_times,
            "knot_values": self.knot_values,
            "mean": self.mean,
            "scenario": self.scenario,
        }


def make_generator(seed: int) -> np.random.Generator:
    """シード固定の乱数生成器（PCG64DXSM）"""
    return np.random.Generator(np.random.PCG64DXSM(seed))


def simulate(sc: Scenario) -> Tuple[np.ndarray, Truth]:
    """連続区分線形の平均にガウスノイズを加えたデータを生成

    Returns:
        Tuple[np.ndarray, Truth]: (観測系列, 真値)
    """
    rng = make_generator(sc.seed)
    taus = sc.changepoints()
    knot_times = np.concatenate(([0], taus, [sc.n])).astype(np.int64)
    if sc.kind == "random_equispaced":
        knot_values = rng.normal(0.0, sc.value_sd, size=knot_times.size)
    else:
        knot_values = np.asarray(sc.knot_values, dtype=float)

    mean = np.interp(np.arange(1, sc.n + 1), knot_times, knot_values)
    if sc.noise_sd > 0:
        y = mean + rng.standard_normal(sc.n) * sc.noise_sd
    else:
        y = mean.copy()
    logger.debug(
        f"シミュレーション: kind={sc.kind}, n={sc.n}, "
        f"m={taus.size}, seed={sc.seed}"
    )
    truth = Truth(
        taus=taus,
        mean=mean,
        knot_times=knot_times,
        knot_values=knot_values,
        scenario=sc.to_dict(),
    )
    return y, truth


def zigzag_knots(
    segments: int, segment_length: int, low: float, high: float
) -> Tuple[Tuple[int, ...], Tuple[float, ...]]:
    """low と high を交互にとるジグザグの節点"""
    if segments < 1 or segment_length < 1:
        raise BadScenario(
            f"セグメント数と長さは1以上が必要です: "
            f"{segments}, {segment_length}"
        )
    times = tuple(i * segment_length for i in range(segments + 1))
    values = tuple(
        float(low if i % 2 == 0 else high) for i in range(segments + 1)
    )
    return times, values


def zigzag_scenario(
    segments: int = 9,
    segment_length: int = 150,
    low: float = 0.0,
    high: float = 15.0,
    noise_sd: float = 1.0,
    seed: int = 0,
) -> Scenario:
    """強いシグナルのジグザグシナリオ"""
    times, values = zigzag_knots(segments, segment_length, low, high)
    return Scenario(
        kind="explicit_knots",
        n=times[-1],
        knot_times=times,
        knot_values=values,
        noise_sd=noise_sd,
        seed=seed,
        name="zigzag",
    )


def estimate_sigma(y) -> float:
    """二階差分の MAD からノイズの標準偏差を推定

    Raises:
        TooShort: n < 3 の場合
        ZeroVariance: 推定分散が0の場合
    """
    arr = validate_series(y)
    if arr.size < 3:
        raise TooShort(f"σ の推定には n ≥ 3 が必要です: n={arr.size}")
    diffs = np.diff(arr, n=2)
    mad = np.median(np.abs(diffs - np.median(diffs)))
    variance = (mad / MAD_SCALE) ** 2
    if variance == 0:
        raise ZeroVariance("二階差分の MAD が0のため σ を推定できません")
    # 二階差分の分散は 6σ²
    return float(math.sqrt(variance / 6.0))

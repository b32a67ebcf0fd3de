#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""CPOP Slope Changepoints - 動的計画法エンジン

連続区分線形の平均に対する L0 ペナルティ付き最小二乗を厳密に解く。
各候補（変化点ベクトル τ）は境界値 φ の二次関数 f_τ^t を持ち、
関数枝刈り（どの φ でも最適でない候補は延長しない）と
不等式枝刈り（最小値が全体最小 + K を超える候補を捨てる）で候補集合を
小さく保つ。
"""

# Standard Library
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import (
    Callable,
    Dict,
    Iterator,
    List,
    Optional,
    Sequence,
    Tuple,
)

# Third Party Library
import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, solve_banded

# First Party Library
from app.shared.config import (
    ABS_TOL,
    REL_TOL,
    SWEEP_ITERATIONS_EXTRA,
    SWEEP_ITERATIONS_PER_FUNCTION,
)
from app.shared.errors import (
    BadRange,
    SingularSystem,
    SweepNotConverged,
    TooShort,
)
from app.shared.quadfn import (
    Ordering,
    Quadratic,
    compare_at_neg_infinity,
    entry_points_after,
    minimize_out_start_many,
    minimum_many,
    tolerance,
)
from app.shared.segcost import (
    PenaltyConfig,
    build_prefix_sums,
    h_value,
    h_values,
    inequality_threshold,
    segment_coefficients,
    segment_coefficients_many,
    validate_series,
)

logger = logging.getLogger(__name__)

Interval = Tuple[float, float]
TieKey = Tuple[int, Tuple[int, ...]]


class ChangeVector:
    """接頭辞を共有する変化点ベクトル（先頭の0は含めない）"""

    __slots__ = ("last", "parent", "length")

    def __init__(
        self, last: int = 0, parent: Optional["ChangeVector"] = None
    ):
        self.last = last
        self.parent = parent
        self.length = 0 if parent is None else parent.length + 1

    def extend(self, t: int) -> "ChangeVector":
        """末尾に変化点 t を追加した新しいベクトル"""
        if t <= self.last:
            raise BadRange(f"変化点は増加列である必要があります: {t}")
        return ChangeVector(t, self)

    def times(self) -> Tuple[int, ...]:
        """変化点の時刻（昇順）"""
        out: List[int] = []
        node: Optional[ChangeVector] = self
        while node is not None and node.parent is not None:
            out.append(node.last)
            node = node.parent
        return tuple(reversed(out))

    def tie_key(self) -> TieKey:
        """同点時の優先順（変化点が少ない順、次に辞書順）"""
        return self.length, self.times()

    def __repr__(self) -> str:
        return f"ChangeVector{self.times()}"


@dataclass(frozen=True)
class PruneOptions:
    """枝刈りと診断の切り替え"""

    functional: bool = True
    inequality: bool = True
    trace: bool = False


@dataclass(frozen=True)
class Candidate:
    """候補: 変化点ベクトル、現時刻のコスト関数、最適となる φ 区間"""

    tau: ChangeVector
    f: Quadratic
    intervals: Tuple[Interval, ...] = ()


@dataclass(frozen=True)
class StepRecord:
    """1時刻分の診断値"""

    t: int
    optimal_count: int  # |T*_t|
    candidate_count: int  # |T̂_t|
    seconds: float


@dataclass
class Segmentation:
    """推定結果"""

    m: int
    taus: np.ndarray
    phis: np.ndarray
    cost: float
    rss_cost: float
    fitted: np.ndarray
    sigma2: float
    diagnostics: Dict[str, object] = field(default_factory=dict)

    @property
    def n_params(self) -> int:
        """自由パラメータ数（境界値 m+2 個）"""
        return self.m + 2

    @property
    def knots(self) -> np.ndarray:
        """境界の時刻 (0, τ_1, …, τ_m, n)"""
        return np.concatenate(([0], self.taus, [len(self.fitted)])).astype(
            np.int64
        )


def _better(key_a: TieKey, key_b: TieKey) -> bool:
    return key_a < key_b


def _close_to(values: np.ndarray, ref: float) -> np.ndarray:
    scale = np.maximum(np.abs(values), abs(ref))
    return np.abs(values - ref) <= ABS_TOL + REL_TOL * scale


def sweep_intervals(
    quad: np.ndarray,
    lin: np.ndarray,
    const: np.ndarray,
    tie_key: Callable[[int], TieKey],
) -> List[List[Interval]]:
    """下側包絡線を φ = −∞ から掃引し、各関数が最小となる区間を求める

    Args:
        quad: 各関数の二次係数
        lin: 各関数の一次係数
        const: 各関数の定数項
        tie_key: 一致する関数の優先順を返す関数

    Returns:
        List[List[Interval]]: 関数ごとの区間リスト（空もありうる）

    Raises:
        SweepNotConverged: 反復上限までに掃引が終わらない場合
    """
    k = len(quad)
    out: List[List[Interval]] = [[] for _ in range(k)]
    if k == 0:
        return out

    def as_quadratic(j: int) -> Quadratic:
        return Quadratic(float(quad[j]), float(lin[j]), float(const[j]))

    # −∞ での最適関数は係数の順序で決める
    curr = 0
    for j in range(1, k):
        order = compare_at_neg_infinity(as_quadratic(curr), as_quadratic(j))
        if order == Ordering.SECOND or (
            order == Ordering.EQUAL and _better(tie_key(j), tie_key(curr))
        ):
            curr = j

    active = np.ones(k, dtype=bool)
    active[curr] = False
    start = -math.inf
    max_iterations = (
        SWEEP_ITERATIONS_PER_FUNCTION * k + SWEEP_ITERATIONS_EXTRA
    )

    for _ in range(max_iterations):
        idx = np.flatnonzero(active)
        entries = np.empty(0)
        if idx.size:
            # 現在の最適関数と一致する関数は優先順で1つに絞る
            same = (
                _close_to(quad[idx], quad[curr])
                & _close_to(lin[idx], lin[curr])
                & _close_to(const[idx], const[curr])
            )
            if same.any():
                for j in idx[same]:
                    if _better(tie_key(int(j)), tie_key(curr)):
                        curr = int(j)
                active[idx[same]] = False
                active[curr] = False
                idx = np.flatnonzero(active)

        if idx.size:
            entries = entry_points_after(
                quad[idx], lin[idx], const[idx], as_quadratic(curr), start
            )
            valid = ~np.isnan(entries)
            # 以降で下回らない関数は掃引から外す
            active[idx[~valid]] = False
            idx = idx[valid]
            entries = entries[valid]

        if idx.size == 0:
            out[curr].append((start, math.inf))
            return out

        phi_new = float(entries.min())
        near = entries <= phi_new + ABS_TOL + REL_TOL * abs(phi_new)
        contenders = idx[near]
        # 同じ点で入る関数は、その先で最も小さくなるものを選ぶ
        slope = 2.0 * quad[contenders] * phi_new + lin[contenders]
        pick = min(
            range(contenders.size),
            key=lambda i: (
                slope[i],
                quad[contenders[i]],
                tie_key(int(contenders[i])),
            ),
        )
        nxt = int(contenders[pick])

        if phi_new > start:
            out[curr].append((start, phi_new))
        # 追い越された関数も再び最小になりうる
        active[curr] = True
        active[nxt] = False
        curr = nxt
        start = phi_new

    raise SweepNotConverged(
        f"区間掃引が上限回数に達しました: 候補数={k}, 反復={max_iterations}"
    )


def compute_intervals(cands: Sequence[Candidate]) -> List[Candidate]:
    """候補ごとに最適となる φ 区間を計算して返す"""
    if not cands:
        return []
    quad = np.array([c.f.quad for c in cands], dtype=float)
    lin = np.array([c.f.lin for c in cands], dtype=float)
    const = np.array([c.f.const_ for c in cands], dtype=float)
    keys = [c.tau.tie_key() for c in cands]
    lists = sweep_intervals(quad, lin, const, lambda j: keys[j])
    return [replace(c, intervals=tuple(iv)) for c, iv in zip(cands, lists)]


def inequality_prune(
    cands: Sequence[Candidate], cfg: PenaltyConfig, n: int
) -> List[Candidate]:
    """最小値が全体最小 + K を超える候補を除く"""
    if not cands:
        return []
    mins = minimum_many(
        np.array([c.f.quad for c in cands], dtype=float),
        np.array([c.f.lin for c in cands], dtype=float),
        np.array([c.f.const_ for c in cands], dtype=float),
    )
    keep = _inequality_keep(mins, inequality_threshold(cfg, n))
    return [c for c, k in zip(cands, keep) if k]


def _inequality_keep(mins: np.ndarray, threshold: float) -> np.ndarray:
    global_min = float(mins.min())
    limit = global_min + threshold
    return mins <= limit + tolerance(limit)


def reconstruct_phis(
    y, taus: Sequence[int], sigma2: float
) -> Tuple[np.ndarray, float]:
    """変化点を固定して境界値 φ を求める

    隣接する境界だけが結合する三重対角の正規方程式を解く。先頭の
    セグメントが長さ1のとき φ_0 は定まらないので φ_0 = φ_{τ_1} とする。

    Args:
        y: 観測系列
        taus: 変化点（1..n−1 の増加列）
        sigma2: ノイズ分散

    Returns:
        Tuple[np.ndarray, float]: (φ, 残差コスト Σ残差²/σ²)

    Raises:
        BadRange: 変化点が範囲外または増加列でない場合
        SingularSystem: 連立方程式が解けない場合
    """
    arr = validate_series(y)
    n = arr.size
    knots = np.concatenate(([0], np.asarray(taus, dtype=np.int64), [n]))
    if np.any(np.diff(knots) <= 0):
        raise BadRange(f"変化点が不正です: {list(taus)} (n={n})")

    ps = build_prefix_sums(arr)
    k = knots.size
    diag = np.zeros(k)
    upper = np.zeros(k - 1)
    rhs = np.zeros(k)
    for i in range(k - 1):
        seg = segment_coefficients(
            ps, int(knots[i]), int(knots[i + 1]), sigma2
        )
        diag[i] += 2.0 * seg.F
        diag[i + 1] += 2.0 * seg.A
        upper[i] = seg.B
        rhs[i] -= seg.E
        rhs[i + 1] -= seg.C

    pinned_start = knots[1] - knots[0] == 1
    lo = 1 if pinned_start else 0
    size = k - lo
    banded = np.zeros((3, size))
    banded[0, 1:] = upper[lo:]
    banded[1, :] = diag[lo:]
    banded[2, :-1] = upper[lo:]
    try:
        solved = solve_banded((1, 1), banded, rhs[lo:])
    except (LinAlgError, ValueError) as e:
        raise SingularSystem(f"境界値の連立方程式が解けません: {e}") from e
    if not np.all(np.isfinite(solved)):
        raise SingularSystem("境界値の連立方程式が解けません")

    phis = np.empty(k)
    phis[lo:] = solved
    if pinned_start:
        phis[0] = phis[1]

    fitted = np.interp(np.arange(1, n + 1), knots, phis)
    rss_cost = float(np.sum((arr - fitted) ** 2) / sigma2)
    return phis, rss_cost


class CpopEngine:
    """CPOP の逐次計算

    step() を1回呼ぶごとに時刻 t を1つ進める。iter_steps() で途中の
    候補集合を観察でき、run() で最後まで進めて結果を返す。
    """

    def __init__(
        self,
        y,
        cfg: PenaltyConfig,
        opts: Optional[PruneOptions] = None,
    ):
        self.y = validate_series(y)
        self.n = int(self.y.size)
        if self.n < 2:
            raise TooShort(f"データ長は2以上が必要です: n={self.n}")
        self.cfg = cfg
        self.opts = opts or PruneOptions()
        self.ps = build_prefix_sums(self.y)
        self.threshold = inequality_threshold(cfg, self.n)
        self.t = 0

        # 候補集合（列ごとの配列で保持）
        self._taus: List[ChangeVector] = [ChangeVector()]
        self._last = np.zeros(1, dtype=np.int64)
        self._base_quad = np.zeros(1)
        self._base_lin = np.zeros(1)
        self._base_const = np.zeros(1)
        self._quad = np.zeros(1)
        self._lin = np.zeros(1)
        self._const = np.zeros(1)
        self._intervals: Optional[List[List[Interval]]] = None

        self.records: List[StepRecord] = []
        self.optimal_total = 0
        self.elapsed = 0.0

    @property
    def finished(self) -> bool:
        return self.t >= self.n

    @property
    def size(self) -> int:
        """現在の候補数"""
        return len(self._taus)

    def _tie_key(self, j: int) -> TieKey:
        return self._taus[j].tie_key()

    def step(self) -> StepRecord:
        """時刻を1つ進める"""
        if self.finished:
            raise BadRange(f"すでに最終時刻です: t={self.t}")
        began = time.perf_counter()
        t = self.t + 1
        entering = self.size

        # 各候補の関数を時刻 t へ更新
        seg = segment_coefficients_many(
            self.ps, self._last, t, self.cfg.sigma2
        )
        self._quad, self._lin, self._const = minimize_out_start_many(
            self._base_quad,
            self._base_lin,
            self._base_const,
            seg,
            self.cfg.beta,
            h_values(self.cfg, t - self._last),
        )

        if self.opts.functional:
            self._intervals = sweep_intervals(
                self._quad, self._lin, self._const, self._tie_key
            )
            optimal = np.array(
                [j for j, iv in enumerate(self._intervals) if iv],
                dtype=np.int64,
            )
        else:
            self._intervals = None
            optimal = np.arange(entering, dtype=np.int64)

        if t < self.n:
            self._extend(optimal, t)
            if self.opts.inequality:
                self._prune()

        self.t = t
        seconds = time.perf_counter() - began
        self.elapsed += seconds
        self.optimal_total += int(optimal.size)
        record = StepRecord(t, int(optimal.size), entering, seconds)
        if self.opts.trace:
            self.records.append(record)
        return record

    def _extend(self, optimal: np.ndarray, t: int) -> None:
        """T*_t の各候補に変化点 t を追加した候補を加える"""
        if optimal.size == 0:
            return
        self._taus.extend(self._taus[int(j)].extend(t) for j in optimal)
        self._last = np.concatenate(
            (self._last, np.full(optimal.size, t, dtype=np.int64))
        )
        # 新しい候補の出発点は親の f_τ^t
        self._base_quad = np.concatenate(
            (self._base_quad, self._quad[optimal])
        )
        self._base_lin = np.concatenate((self._base_lin, self._lin[optimal]))
        self._base_const = np.concatenate(
            (self._base_const, self._const[optimal])
        )
        self._quad = np.concatenate((self._quad, self._quad[optimal]))
        self._lin = np.concatenate((self._lin, self._lin[optimal]))
        self._const = np.concatenate((self._const, self._const[optimal]))
        if self._intervals is not None:
            self._intervals.extend([] for _ in range(optimal.size))

    def _prune(self) -> None:
        mins = minimum_many(self._quad, self._lin, self._const)
        keep = _inequality_keep(mins, self.threshold)
        if keep.all():
            return
        self._taus = [tau for tau, k in zip(self._taus, keep) if k]
        self._last = self._last[keep]
        self._base_quad = self._base_quad[keep]
        self._base_lin = self._base_lin[keep]
        self._base_const = self._base_const[keep]
        self._quad = self._quad[keep]
        self._lin = self._lin[keep]
        self._const = self._const[keep]
        if self._intervals is not None:
            self._intervals = [
                iv for iv, k in zip(self._intervals, keep) if k
            ]

    def iter_steps(self) -> Iterator[StepRecord]:
        """最終時刻まで1時刻ずつ進める"""
        while not self.finished:
            yield self.step()

    def candidates(self) -> List[Candidate]:
        """現在の候補集合（区間付き）"""
        intervals = self._intervals
        if intervals is None or len(intervals) != self.size:
            intervals = sweep_intervals(
                self._quad, self._lin, self._const, self._tie_key
            )
        return [
            Candidate(
                tau,
                Quadratic(
                    float(self._quad[j]),
                    float(self._lin[j]),
                    float(self._const[j]),
                ),
                tuple(intervals[j]),
            )
            for j, tau in enumerate(self._taus)
        ]

    def envelope(self, phi) -> np.ndarray:
        """候補関数の下側包絡線 min_τ f_τ^t(φ)"""
        grid = np.atleast_1d(np.asarray(phi, dtype=float))
        values = (
            self._quad[:, None] * grid[None, :] ** 2
            + self._lin[:, None] * grid[None, :]
            + self._const[:, None]
        )
        return values.min(axis=0)

    def best(self) -> Tuple[ChangeVector, float]:
        """最適な候補とその最小値（同点は変化点が少ない順、辞書順）"""
        mins = minimum_many(self._quad, self._lin, self._const)
        global_min = float(mins.min())
        tied = np.flatnonzero(mins <= global_min + tolerance(global_min))
        j = min((int(i) for i in tied), key=self._tie_key)
        return self._taus[j], float(mins[j])

    def run(self) -> Segmentation:
        """最終時刻まで計算して結果を返す"""
        for _ in self.iter_steps():
            pass
        tau, cost = self.best()
        taus = np.array(tau.times(), dtype=np.int64)
        phis, rss_cost = reconstruct_phis(self.y, taus, self.cfg.sigma2)
        knots = np.concatenate(([0], taus, [self.n]))
        fitted = np.interp(np.arange(1, self.n + 1), knots, phis)

        diagnostics: Dict[str, object] = {
            "elapsed": self.elapsed,
            "final_candidates": self.size,
            "optimal_total": self.optimal_total,
            "optimal_mean": self.optimal_total / self.n,
        }
        if self.opts.trace:
            diagnostics["trace"] = diagnostics_trace(self)
        logger.debug(
            f"CPOP 完了: n={self.n}, m={taus.size}, cost={cost:.6g}, "
            f"候補数={self.size}, 経過={self.elapsed:.3f}秒"
        )
        return Segmentation(
            m=int(taus.size),
            taus=taus,
            phis=phis,
            cost=cost,
            rss_cost=rss_cost,
            fitted=fitted,
            sigma2=self.cfg.sigma2,
            diagnostics=diagnostics,
        )


def cpop(
    y, cfg: PenaltyConfig, opts: Optional[PruneOptions] = None
) -> Segmentation:
    """L0 ペナルティ付き連続区分線形回帰の厳密解

    Args:
        y: 観測系列（長さ2以上）
        cfg: ペナルティ設定
        opts: 枝刈りの設定（既定はどちらも有効）

    Returns:
        Segmentation: 変化点、境界値、最適コスト、診断値
    """
    return CpopEngine(y, cfg, opts).run()


def diagnostics_trace(run: CpopEngine) -> pd.DataFrame:
    """時刻ごとの |T*_t|、|T̂_t|、経過時間の表"""
    return pd.DataFrame(
        {
            "t": [r.t for r in run.records],
            "tstar": [r.optimal_count for r in run.records],
            "that": [r.candidate_count for r in run.records],
            "seconds": [r.seconds for r in run.records],
        },
        columns=["t", "tstar", "that", "seconds"],
    )


def penalized_cost(
    y, taus: Sequence[int], phis: Sequence[float], cfg: PenaltyConfig
) -> float:
    """与えた (τ, φ) での目的関数値（残差 + h + β(m+1)）"""
    arr = validate_series(y)
    n = arr.size
    knots = np.concatenate(([0], np.asarray(taus, dtype=np.int64), [n]))
    fitted = np.interp(np.arange(1, n + 1), knots, np.asarray(phis, float))
    rss = float(np.sum((arr - fitted) ** 2) / cfg.sigma2)
    penalty = sum(h_value(cfg, int(s)) for s in np.diff(knots))
    return rss + penalty + cfg.beta * (len(knots) - 1)

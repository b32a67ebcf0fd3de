#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""CPOP エンジンのテスト"""

# Standard Library
import itertools
import math

# Third Party Library
import numpy as np
import pytest

# First Party Library
from app.shared.errors import BadRange, SweepNotConverged, TooShort
from app.shared.quadfn import Quadratic
from app.shared.segcost import PenaltyConfig, penalty_beta_default
from app.solver.engine import (
    Candidate,
    ChangeVector,
    CpopEngine,
    PruneOptions,
    compute_intervals,
    cpop,
    diagnostics_trace,
    inequality_prune,
    penalized_cost,
    reconstruct_phis,
    sweep_intervals,
)
from app.solver.oracle import oracle_conditional_cost, oracle_exhaustive
from tests.helpers import random_series, square

ALL_PRUNE_OPTIONS = [
    PruneOptions(functional=f, inequality=i)
    for f, i in itertools.product([True, False], repeat=2)
]


def _vector(*times: int) -> ChangeVector:
    tau = ChangeVector()
    for t in times:
        tau = tau.extend(t)
    return tau


class TestChangeVector:
    """ChangeVector のテストクラス"""

    def test_root(self):
        """根は変化点を持たない"""
        root = ChangeVector()
        assert root.times() == ()
        assert root.length == 0
        assert root.tie_key() == (0, ())

    def test_extend_shares_prefix(self):
        """延長しても親は変わらない"""
        parent = _vector(3)
        child = parent.extend(5)
        assert parent.times() == (3,)
        assert child.times() == (3, 5)
        assert child.parent is parent
        assert child.tie_key() == (2, (3, 5))

    @pytest.mark.parametrize("t", [3, 2])
    def test_extend_must_increase(self, t):
        """増加列でない延長"""
        with pytest.raises(BadRange):
            _vector(3).extend(t)

    def test_tie_key_order(self):
        """変化点が少ない順、次に辞書順"""
        keys = sorted(
            v.tie_key() for v in (_vector(2, 4), _vector(5), _vector(3))
        )
        assert keys == [(1, (3,)), (1, (5,)), (2, (2, 4))]


class TestSweepIntervals:
    """区間掃引のテストクラス"""

    def _cands(self, *functions):
        return [
            Candidate(_vector(*range(1, i + 1)), f)
            for i, f in enumerate(functions)
        ]

    def test_two_symmetric(self):
        """φ² は (−∞, 1]、(φ−2)² は [1, ∞) で最小"""
        out = compute_intervals(self._cands(square(0.0), square(2.0)))
        assert out[0].intervals == ((-math.inf, pytest.approx(1.0)),)
        assert out[1].intervals == ((pytest.approx(1.0), math.inf),)

    def test_dominated_candidate(self):
        """(φ−1)²+2 はどこでも最小にならない"""
        out = compute_intervals(
            self._cands(square(0.0), square(2.0), square(1.0, 2.0))
        )
        assert out[2].intervals == ()
        assert [len(c.intervals) for c in out[:2]] == [1, 1]

    def test_single_candidate(self):
        """1候補は実数全体で最小"""
        out = compute_intervals(self._cands(square(4.0)))
        assert out[0].intervals == ((-math.inf, math.inf),)

    def test_empty(self):
        """候補なし"""
        assert compute_intervals([]) == []

    def test_identical_functions_keep_preferred(self):
        """同一の関数は変化点の少ない候補だけが区間を持つ"""
        cands = [
            Candidate(_vector(2, 3), square(1.0)),
            Candidate(_vector(4), square(1.0)),
        ]
        out = compute_intervals(cands)
        assert out[0].intervals == ()
        assert out[1].intervals == ((-math.inf, math.inf),)

    def test_one_function_owning_two_intervals(self):
        """同じ関数が離れた2区間で最小になる"""
        # 0.5φ² + 0.5 は |φ| > 1 で φ² を下回る
        quad = np.array([1.0, 0.5])
        lin = np.array([0.0, 0.0])
        const = np.array([0.0, 0.5])
        out = sweep_intervals(quad, lin, const, lambda j: (j, ()))
        assert out[1][0][0] == -math.inf
        assert out[1][0][1] == pytest.approx(-1.0)
        assert out[1][1][0] == pytest.approx(1.0)
        assert out[1][1][1] == math.inf
        assert len(out[0]) == 1
        assert out[0][0] == (pytest.approx(-1.0), pytest.approx(1.0))

    def test_far_left_order_uses_coefficients(self):
        """交点が −1e12 より左でも −∞ 側の最適関数を係数で決める"""
        # 2φ² + 2e12·φ は (−2e12, 0) でだけ φ² を下回る
        quad = np.array([1.0, 2.0])
        lin = np.array([0.0, 2e12])
        const = np.array([0.0, 0.0])
        out = sweep_intervals(quad, lin, const, lambda j: (j, ()))

        assert out[0][0][0] == -math.inf
        assert out[0][0][1] == pytest.approx(-2e12)
        assert out[1] == [(pytest.approx(-2e12), pytest.approx(0.0))]
        assert out[0][1][1] == math.inf

    def test_iteration_cap_raises(self, mocker):
        """反復上限に達したら結果を返さずに例外"""
        mocker.patch("app.solver.engine.SWEEP_ITERATIONS_PER_FUNCTION", 0)
        mocker.patch("app.solver.engine.SWEEP_ITERATIONS_EXTRA", 1)
        quad = np.array([1.0, 1.0])
        lin = np.array([0.0, -4.0])
        const = np.array([0.0, 4.0])
        with pytest.raises(SweepNotConverged):
            sweep_intervals(quad, lin, const, lambda j: (j, ()))

    def test_iteration_cap_not_hit_normally(self):
        """同じ2関数は通常の上限内で掃引が終わる"""
        quad = np.array([1.0, 1.0])
        lin = np.array([0.0, -4.0])
        const = np.array([0.0, 4.0])
        out = sweep_intervals(quad, lin, const, lambda j: (j, ()))
        assert out[0] == [(-math.inf, pytest.approx(1.0))]
        assert out[1] == [(pytest.approx(1.0), math.inf)]

    def test_partition_matches_grid_minimum(self, rng):
        """区間は実数を分割し、各区間の所有者が格子上の最小を与える"""
        for _ in range(30):
            k = int(rng.integers(2, 9))
            quad = rng.uniform(0.2, 3.0, size=k)
            lin = rng.uniform(-10, 10, size=k)
            const = rng.uniform(-10, 10, size=k)
            out = sweep_intervals(quad, lin, const, lambda j: (j, ()))

            pieces = sorted(
                (lo, hi, j) for j, ivs in enumerate(out) for lo, hi in ivs
            )
            assert pieces[0][0] == -math.inf
            assert pieces[-1][1] == math.inf
            for (_, hi, _), (lo, _, _) in zip(pieces, pieces[1:]):
                assert lo == pytest.approx(hi)

            for lo, hi, j in pieces:
                a = max(lo, -50.0)
                b = min(hi, 50.0)
                if b - a < 1e-6:
                    continue
                grid = np.linspace(a, b, 7)[1:-1]
                values = (
                    quad[:, None] * grid**2
                    + lin[:, None] * grid
                    + const[:, None]
                )
                np.testing.assert_allclose(
                    values[j], values.min(axis=0), rtol=1e-9, atol=1e-9
                )


class TestInequalityPrune:
    """不等式枝刈りのテストクラス"""

    def test_threshold_example(self):
        """K = 10 で最小値 13.1 の候補だけが落ちる"""
        cands = [
            Candidate(_vector(*range(1, i + 1)), Quadratic(1.0, 0.0, c))
            for i, c in enumerate([3.0, 12.9, 13.1])
        ]
        kept = inequality_prune(cands, PenaltyConfig(beta=5.0), n=50)
        assert [c.f.const_ for c in kept] == [3.0, 12.9]

    def test_single_candidate(self):
        """1候補はそのまま"""
        cands = [Candidate(ChangeVector(), Quadratic(1.0, 2.0, 3.0))]
        assert inequality_prune(cands, PenaltyConfig(beta=1.0), n=5) == cands

    def test_empty(self):
        """候補なし"""
        assert inequality_prune([], PenaltyConfig(beta=1.0), n=5) == []


class TestReconstructPhis:
    """境界値の復元のテストクラス"""

    def test_exact_line(self, line_series):
        """直線データは φ = (0, 10) で残差0"""
        phis, rss = reconstruct_phis(line_series, [], 1.0)
        np.testing.assert_allclose(phis, [0.0, 10.0], atol=1e-9)
        assert rss == pytest.approx(0.0, abs=1e-12)

    def test_exact_v(self, v_series):
        """V字データは φ = (5, 1, 4) で残差0"""
        phis, rss = reconstruct_phis(v_series, [4], 1.0)
        np.testing.assert_allclose(phis, [5.0, 1.0, 4.0], atol=1e-9)
        assert rss == pytest.approx(0.0, abs=1e-12)

    def test_zero_data(self):
        """0のデータは φ も0"""
        phis, rss = reconstruct_phis(np.zeros(4), [2], 1.0)
        np.testing.assert_allclose(phis, [0.0, 0.0, 0.0], atol=1e-12)
        assert rss == 0.0

    def test_length_one_first_segment(self):
        """先頭が長さ1なら φ_0 = φ_{τ_1}"""
        y = np.array([3.0, 1.0, 2.0, 3.0, 5.0])
        phis, _ = reconstruct_phis(y, [1, 3], 1.0)
        assert phis[0] == phis[1]

    def test_matches_least_squares(self, rng):
        """密行列の最小二乗と一致する"""
        y = random_series(rng, 30)
        taus = [4, 11, 12, 25]
        phis, rss = reconstruct_phis(y, taus, 2.0)
        knots = np.array([0, *taus, 30])
        design = np.column_stack(
            [
                np.interp(np.arange(1, 31), knots, np.eye(knots.size)[i])
                for i in range(knots.size)
            ]
        )
        expected, *_ = np.linalg.lstsq(design, y, rcond=None)
        np.testing.assert_allclose(phis, expected, atol=1e-8)
        residual = y - design @ expected
        assert rss == pytest.approx(residual @ residual / 2.0, rel=1e-9)

    @pytest.mark.parametrize("taus", [[0], [10], [3, 3], [5, 2]])
    def test_bad_taus(self, line_series, taus):
        """範囲外や増加列でない変化点"""
        with pytest.raises(BadRange):
            reconstruct_phis(line_series, taus, 1.0)


class TestCpop:
    """cpop のテストクラス"""

    def test_exact_line(self, line_series):
        """直線データは変化点なし、コストは β"""
        cfg = PenaltyConfig(beta=penalty_beta_default(10))
        result = cpop(line_series, cfg)
        assert result.m == 0
        assert result.taus.tolist() == []
        assert result.cost == pytest.approx(4.6052, abs=1e-4)
        np.testing.assert_allclose(result.phis, [0.0, 10.0], atol=1e-8)
        assert result.rss_cost == pytest.approx(0.0, abs=1e-10)
        assert result.n_params == 2

    def test_exact_v(self, v_series):
        """V字データは t=4 の1変化点、コストは 2β"""
        result = cpop(v_series, PenaltyConfig(beta=0.1))
        assert result.taus.tolist() == [4]
        assert result.cost == pytest.approx(0.2, abs=1e-9)
        np.testing.assert_allclose(result.phis, [5.0, 1.0, 4.0], atol=1e-8)
        np.testing.assert_allclose(result.fitted, v_series, atol=1e-8)
        assert result.knots.tolist() == [0, 4, 7]

    @pytest.mark.parametrize("opts", ALL_PRUNE_OPTIONS)
    def test_pruning_does_not_change_result(self, rng, opts):
        """枝刈りの有無で結果は変わらない"""
        for n in (5, 9, 12):
            y = random_series(rng, n, scale=2.0)
            cfg = PenaltyConfig(beta=2.0)
            reference = cpop(y, cfg, PruneOptions(False, False))
            result = cpop(y, cfg, opts)
            assert result.cost == pytest.approx(reference.cost, rel=1e-8)
            assert result.taus.tolist() == reference.taus.tolist()

    @pytest.mark.parametrize(
        "h_kind, gamma", [("zero", 0.0), ("gamma_log", 1.0)]
    )
    def test_matches_oracle(self, rng, h_kind, gamma):
        """全探索と同じ最適コストと変化点"""
        for n in range(2, 11):
            y = random_series(rng, n, scale=1.5)
            for beta in (1.0, penalty_beta_default(n)):
                cfg = PenaltyConfig(beta=beta, h_kind=h_kind, gamma=gamma)
                result = cpop(y, cfg)
                truth = oracle_exhaustive(y, cfg)
                assert result.cost == pytest.approx(truth.cost, rel=1e-7)
                assert result.taus.tolist() == truth.taus.tolist()

    @pytest.mark.parametrize(
        "h_kind, gamma", [("zero", 0.0), ("gamma_log", 1.0)]
    )
    def test_changepoints_non_increasing_in_beta(self, rng, h_kind, gamma):
        """β を大きくしても変化点数は増えない"""
        betas = np.geomspace(0.05, 200.0, 25)
        for _ in range(6):
            y = random_series(rng, 40, scale=float(rng.uniform(0.2, 2.0)))
            counts = [
                cpop(
                    y, PenaltyConfig(beta=float(b), h_kind=h_kind, gamma=gamma)
                ).m
                for b in betas
            ]
            assert all(a >= b for a, b in zip(counts, counts[1:])), counts

    def test_cost_matches_penalized_objective(self, rng):
        """最適コストは復元した (τ, φ) での目的関数値と一致する"""
        y = random_series(rng, 80, scale=0.5)
        cfg = PenaltyConfig(
            beta=3.0, sigma2=0.25, h_kind="gamma_log", gamma=0.5
        )
        result = cpop(y, cfg)
        assert result.cost == pytest.approx(
            penalized_cost(y, result.taus, result.phis, cfg), rel=1e-7
        )

    def test_sigma_scales_residuals(self, v_series):
        """σ² は残差だけを割る"""
        y = v_series + np.array([0, 0.5, 0, 0, 0, -0.5, 0])
        result = cpop(y, PenaltyConfig(beta=100.0, sigma2=4.0))
        assert result.m == 0
        assert result.sigma2 == 4.0
        assert result.cost == pytest.approx(100.0 + result.rss_cost, rel=1e-9)

    def test_too_short(self):
        """n < 2 は扱わない"""
        with pytest.raises(TooShort):
            cpop([1.0], PenaltyConfig(beta=1.0))


class TestCpopEngine:
    """逐次計算と診断値のテストクラス"""

    def test_first_step(self, v_series):
        """t=1 では候補は τ=() の1つだけ"""
        engine = CpopEngine(v_series, PenaltyConfig(beta=0.1))
        record = engine.step()
        assert record.t == 1
        assert record.optimal_count == 1
        assert record.candidate_count == 1

    def test_step_after_finish(self, v_series):
        """最終時刻の先には進めない"""
        engine = CpopEngine(v_series, PenaltyConfig(beta=0.1))
        list(engine.iter_steps())
        assert engine.finished
        with pytest.raises(BadRange):
            engine.step()

    @pytest.mark.parametrize(
        "opts",
        [
            PruneOptions(functional=True, inequality=False, trace=True),
            PruneOptions(functional=False, inequality=False, trace=True),
        ],
    )
    def test_candidate_count_without_inequality(self, rng, opts):
        """不等式枝刈りなしでは |T̂_t| = Σ_{s<t} |T*_s| + 1"""
        engine = CpopEngine(
            random_series(rng, 12), PenaltyConfig(beta=1.0), opts
        )
        engine.run()
        optimal = [r.optimal_count for r in engine.records]
        entering = [r.candidate_count for r in engine.records]
        assert entering == [sum(optimal[:i]) + 1 for i in range(12)]

    def test_no_pruning_doubles(self, rng):
        """枝刈りなしでは候補数が毎時刻2倍になる"""
        opts = PruneOptions(functional=False, inequality=False, trace=True)
        engine = CpopEngine(
            random_series(rng, 8), PenaltyConfig(beta=1.0), opts
        )
        engine.run()
        assert [r.candidate_count for r in engine.records] == [
            2**i for i in range(8)
        ]

    def test_trace_frame(self, rng):
        """診断表は時刻ごとに1行"""
        opts = PruneOptions(trace=True)
        result = cpop(random_series(rng, 30), PenaltyConfig(beta=3.0), opts)
        trace = result.diagnostics["trace"]
        assert list(trace.columns) == ["t", "tstar", "that", "seconds"]
        assert trace["t"].tolist() == list(range(1, 31))
        assert (trace["tstar"] >= 1).all()
        assert (trace["tstar"] <= trace["that"]).all()

    def test_records_only_when_traced(self, v_series):
        """trace なしでは記録を残さないが合計は数える"""
        engine = CpopEngine(v_series, PenaltyConfig(beta=0.1))
        result = engine.run()
        assert engine.records == []
        assert engine.optimal_total >= len(v_series)
        assert result.diagnostics["optimal_mean"] == pytest.approx(
            engine.optimal_total / len(v_series)
        )
        assert "trace" not in result.diagnostics
        assert diagnostics_trace(engine).empty

    def test_envelope_matches_conditional_oracle(self, rng):
        """包絡線は φ_t を固定した全探索の最小コストと一致する"""
        y = random_series(rng, 8)
        cfg = PenaltyConfig(beta=1.5)
        engine = CpopEngine(y, cfg, PruneOptions(inequality=False))
        grid = np.linspace(-6.0, 6.0, 9)
        for record in engine.iter_steps():
            expected = [
                oracle_conditional_cost(y, record.t, float(phi), cfg)
                for phi in grid
            ]
            np.testing.assert_allclose(
                engine.envelope(grid), expected, rtol=1e-8, atol=1e-8
            )

    def test_candidates_cover_real_line(self, rng):
        """不等式枝刈りなしでは候補の区間が実数全体を覆う"""
        engine = CpopEngine(
            random_series(rng, 20),
            PenaltyConfig(beta=2.0),
            PruneOptions(inequality=False),
        )
        for _ in range(10):
            engine.step()
        cands = engine.candidates()
        assert len(cands) == engine.size
        pieces = sorted(iv for c in cands for iv in c.intervals)
        assert pieces[0][0] == -math.inf
        assert pieces[-1][1] == math.inf

    def test_best_prefers_fewer_changepoints(self, line_series):
        """直線データでは τ=() が最良"""
        engine = CpopEngine(line_series, PenaltyConfig(beta=0.5))
        list(engine.iter_steps())
        tau, cost = engine.best()
        assert tau.times() == ()
        assert cost == pytest.approx(0.5, abs=1e-9)


class TestPenalizedCost:
    """penalized_cost のテストクラス"""

    def test_line(self, line_series):
        """直線データ、変化点なしは β"""
        cfg = PenaltyConfig(beta=penalty_beta_default(10))
        cost = penalized_cost(line_series, [], [0.0, 10.0], cfg)
        assert cost == pytest.approx(cfg.beta)

    def test_v_exact(self, v_series):
        """正しい変化点では 2β"""
        cfg = PenaltyConfig(beta=0.1)
        cost = penalized_cost(v_series, [4], [5.0, 1.0, 4.0], cfg)
        assert cost == pytest.approx(0.2)

    def test_v_misplaced(self, v_series):
        """ずれた変化点では残差が残る"""
        cfg = PenaltyConfig(beta=0.1)
        phis, _ = reconstruct_phis(v_series, [3], 1.0)
        assert penalized_cost(v_series, [3], phis, cfg) > 0.2 + 1e-6

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""CPOP Slope Changepoints - コマンドライン メイン"""

# Standard Library
import asyncio
import json
import logging
import sys
from logging.handlers import TimedRotatingFileHandler
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

# Third Party Library
import click
import numpy as np
import pandas as pd

# First Party Library
from app.evalkit.metrics import metrics_report
from app.evalkit.scenario import (
    SCENARIO_KINDS,
    Scenario,
    estimate_sigma,
    simulate,
)
from app.shared.config import EXIT_CODES, LOG_CONFIG, get_bench_workers
from app.shared.errors import (
    CpopError,
    InputParseError,
    LengthMismatch,
    OracleMismatch,
    SigmaNotPositive,
    ZeroVariance,
)
from app.shared.report_io import (
    load_json,
    parse_number,
    read_series,
    write_json,
    write_series,
    write_table,
)
from app.shared.segcost import PenaltyConfig, penalty_beta_default
from app.solver.engine import PruneOptions, Segmentation, cpop
from app.solver.oracle import cross_check

# Local Library
from .bench_runner import (
    BenchRunner,
    parse_grid,
    per_t_table,
    scaling_exponents,
    summarize,
)


def setup_logging() -> logging.Logger:
    """ログ設定を初期化"""
    # ログディレクトリを作成
    log_dir = Path(LOG_CONFIG["log_dir"])
    log_dir.mkdir(parents=True, exist_ok=True)
    log_file = log_dir / LOG_CONFIG["log_filename"]
    level = getattr(logging, LOG_CONFIG["log_level"])
    formatter = logging.Formatter(LOG_CONFIG["log_format"])

    handlers: List[logging.Handler] = []

    # ファイルハンドラー（時間ベースローテート）
    file_handler: logging.Handler
    if LOG_CONFIG.get("rotation_type") == "time":
        rotating_handler = TimedRotatingFileHandler(
            log_file,
            when=LOG_CONFIG["when"],
            interval=LOG_CONFIG["interval"],
            backupCount=LOG_CONFIG["backup_count"],
            encoding="utf-8",
        )
        rotating_handler.suffix = LOG_CONFIG["date_suffix"]
        file_handler = rotating_handler
    else:
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
    file_handler.setLevel(level)
    file_handler.setFormatter(formatter)
    handlers.append(file_handler)

    # 標準出力は JSON 結果専用なのでコンソールログは標準エラーへ
    if LOG_CONFIG["enable_console_output"]:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(level)
        console_handler.setFormatter(formatter)
        handlers.append(console_handler)

    logger = logging.getLogger(LOG_CONFIG["logger_name"])
    logger.setLevel(level)

    # 既存のハンドラーを閉じてから差し替え
    for old in list(logger.handlers):
        old.close()
        logger.removeHandler(old)
    for handler in handlers:
        logger.addHandler(handler)

    logger.debug(f"ログファイル: {log_file}")
    return logger


def exit_code_for(error: Exception) -> int:
    """例外から終了コードを決める"""
    if isinstance(error, ZeroVariance):
        return EXIT_CODES["zero_variance"]
    if isinstance(error, OracleMismatch):
        return EXIT_CODES["oracle_mismatch"]
    if isinstance(error, CpopError):
        return EXIT_CODES["parse_error"]
    return 1


def fail(
    logger: logging.Logger, command: str, error: Exception, **context: Any
) -> None:
    """エラーを JSON で出力して終了"""
    code = exit_code_for(error)
    logger.error(
        f"{command} でエラーが発生: {error}",
        exc_info=not isinstance(error, CpopError),
    )
    error_result = {
        "success": False,
        "command": command,
        "error": str(error),
        "error_type": type(error).__name__,
        **context,
    }
    click.echo(json.dumps(error_result, ensure_ascii=False))
    logger.error(f"エラー結果: {error_result}")
    sys.exit(code)


def emit(text: str, out_path: Optional[Path]) -> None:
    """出力先がなければ標準出力へ"""
    if out_path is None:
        click.echo(text.rstrip("\n"))


# ===== fit =====


def resolve_sigma(
    y: np.ndarray, sigma: Optional[float]
) -> Tuple[float, str]:
    """σ を決める（--sigma が --estimate-sigma より優先、どちらもなければ推定）"""
    if sigma is not None:
        if not sigma > 0:
            raise SigmaNotPositive(f"--sigma は正の値が必要です: {sigma}")
        return float(sigma), "given"
    return estimate_sigma(y), "estimated"


def build_penalty(
    n: int, beta: Optional[float], gamma_log: Optional[float], sigma: float
) -> PenaltyConfig:
    """コマンド引数からペナルティ設定を作る"""
    beta_value = beta if beta is not None else penalty_beta_default(n)
    if gamma_log is None:
        return PenaltyConfig(beta=beta_value, sigma2=sigma * sigma)
    return PenaltyConfig(
        beta=beta_value,
        sigma2=sigma * sigma,
        h_kind="gamma_log",
        gamma=gamma_log,
    )


def fit_report(
    result: Segmentation,
    cfg: PenaltyConfig,
    opts: PruneOptions,
    sigma: float,
    sigma_source: str,
    oracle: Optional[Segmentation] = None,
) -> Dict[str, Any]:
    """推定結果の JSON レポート"""
    report: Dict[str, Any] = {
        "success": True,
        "n": len(result.fitted),
        "m": result.m,
        "taus": result.taus,
        "phis": result.phis,
        "cost": result.cost,
        "rss_cost": result.rss_cost,
        "beta": cfg.beta,
        "h": cfg.h_kind,
        "gamma": cfg.gamma if cfg.h_kind == "gamma_log" else None,
        "sigma": sigma,
        "sigma_source": sigma_source,
        "functional_pruning": opts.functional,
        "inequality_pruning": opts.inequality,
        "n_params": result.n_params,
        "final_candidates": result.diagnostics.get("final_candidates"),
        "fitted": result.fitted,
    }
    if oracle is not None:
        report["oracle"] = {
            "match": True,
            "cost": oracle.cost,
            "taus": oracle.taus,
        }
    trace = result.diagnostics.get("trace")
    if isinstance(trace, pd.DataFrame):
        report["trace"] = trace.to_dict(orient="records")
    return report


def fit_table(y: np.ndarray, result: Segmentation) -> pd.DataFrame:
    """時刻ごとの表（CSV 出力用）"""
    n = y.size
    table = pd.DataFrame(
        {
            "t": np.arange(1, n + 1),
            "y": y,
            "fitted": result.fitted,
            "changepoint": np.isin(np.arange(1, n + 1), result.taus).astype(
                int
            ),
        }
    )
    trace = result.diagnostics.get("trace")
    if isinstance(trace, pd.DataFrame):
        table = table.merge(trace, on="t", how="left")
    return table


@click.group()
def main() -> None:
    """CPOP: 傾きの変化点の厳密検出"""


@main.command()
@click.argument(
    "input_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
)
@click.option("--beta", type=float, help="変化点ペナルティ β（既定: 2 log n）")
@click.option(
    "--gamma-log",
    "gamma_log",
    type=float,
    help="セグメント長ペナルティ h(s) = γ log s の γ",
)
@click.option("--sigma", type=float, help="ノイズの標準偏差（推定より優先）")
@click.option(
    "--estimate-sigma",
    "estimate_flag",
    is_flag=True,
    help="二階差分の MAD から σ を推定（--sigma がなければ既定）",
)
@click.option("--no-func-prune", is_flag=True, help="関数枝刈りを無効化")
@click.option("--no-ineq-prune", is_flag=True, help="不等式枝刈りを無効化")
@click.option(
    "--oracle",
    "use_oracle",
    is_flag=True,
    help="全探索オラクルと照合（n ≤ 16）",
)
@click.option("--trace", is_flag=True, help="時刻ごとの候補数を出力")
@click.option(
    "--output",
    "output_format",
    type=click.Choice(["json", "csv"]),
    default="json",
    show_default=True,
    help="出力形式",
)
@click.option(
    "--out",
    "out_path",
    type=click.Path(dir_okay=False, path_type=Path),
    help="出力ファイル（省略時は標準出力）",
)
def fit(
    input_path: Path,
    beta: Optional[float],
    gamma_log: Optional[float],
    sigma: Optional[float],
    estimate_flag: bool,
    no_func_prune: bool,
    no_ineq_prune: bool,
    use_oracle: bool,
    trace: bool,
    output_format: str,
    out_path: Optional[Path],
) -> None:
    """系列の変化点を推定"""
    logger = setup_logging()
    logger.info("=== CPOP fit 開始 ===")
    logger.info(
        f"引数: input={input_path}, beta={beta}, gamma_log={gamma_log}, "
        f"sigma={sigma}, estimate_sigma={estimate_flag}, "
        f"no_func_prune={no_func_prune}, no_ineq_prune={no_ineq_prune}, "
        f"oracle={use_oracle}, trace={trace}, output={output_format}"
    )

    try:
        y = read_series(input_path)
        sigma_value, sigma_source = resolve_sigma(y, sigma)
        logger.info(f"σ = {sigma_value:.6g} ({sigma_source})")
        cfg = build_penalty(y.size, beta, gamma_log, sigma_value)
        opts = PruneOptions(
            functional=not no_func_prune,
            inequality=not no_ineq_prune,
            trace=trace,
        )
        result = cpop(y, cfg, opts)
        logger.info(
            f"推定完了: n={y.size}, m={result.m}, cost={result.cost:.6g}, "
            f"経過={result.diagnostics.get('elapsed', 0.0):.3f}秒"
        )

        oracle = None
        if use_oracle:
            oracle = cross_check(result, y, cfg)
            logger.info("オラクルと一致")

        if output_format == "csv":
            text = write_table(fit_table(y, result), out_path)
        else:
            report = fit_report(
                result, cfg, opts, sigma_value, sigma_source, oracle
            )
            text = write_json(report, out_path)
    except Exception as e:
        fail(logger, "fit", e, input=str(input_path))
        return

    emit(text, out_path)
    logger.info("=== CPOP fit 終了 ===")


# ===== simulate =====


def _parse_list(raw: Optional[str], cast) -> Optional[List[Any]]:
    if raw is None:
        return None
    try:
        return [cast(v) for v in raw.split(",") if v.strip()]
    except ValueError as e:
        raise InputParseError(f"リストを解釈できません: {raw}") from e


def build_scenario(
    scenario_path: Optional[Path], overrides: Dict[str, Any]
) -> Scenario:
    """シナリオファイルとコマンド引数からシナリオを作る"""
    data: Dict[str, Any] = {}
    if scenario_path is not None:
        data.update(load_json(scenario_path))
    data.update({k: v for k, v in overrides.items() if v is not None})
    if "kind" not in data:
        data["kind"] = (
            "explicit_knots" if "knot_times" in data else "random_equispaced"
        )
    return Scenario.from_dict(data)


def truth_path_for(out_path: Path) -> Path:
    """真値の JSON のパス（<stem>.truth.json）"""
    return out_path.with_suffix(".truth.json")


@main.command(name="simulate")
@click.option(
    "--scenario",
    "scenario_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="シナリオ JSON ファイル",
)
@click.option("--kind", type=click.Choice(list(SCENARIO_KINDS)))
@click.option("--n", "n", type=int, help="データ長")
@click.option("--m", "m", type=int, help="変化点数（random_equispaced）")
@click.option("--segment-length", type=int, help="セグメント長（m の代わり）")
@click.option("--knot-times", type=str, help="節点の時刻（カンマ区切り）")
@click.option("--knot-values", type=str, help="節点の値（カンマ区切り）")
@click.option("--value-sd", type=float, help="節点値の標準偏差")
@click.option("--noise-sd", type=float, help="ノイズの標準偏差")
@click.option("--seed", type=int, help="乱数シード")
@click.option(
    "--out",
    "out_path",
    type=click.Path(dir_okay=False, path_type=Path),
    required=True,
    help="データの出力先（真値は <stem>.truth.json）",
)
def simulate_cmd(
    scenario_path: Optional[Path],
    kind: Optional[str],
    n: Optional[int],
    m: Optional[int],
    segment_length: Optional[int],
    knot_times: Optional[str],
    knot_values: Optional[str],
    value_sd: Optional[float],
    noise_sd: Optional[float],
    seed: Optional[int],
    out_path: Path,
) -> None:
    """シナリオからデータを生成"""
    logger = setup_logging()
    logger.info("=== CPOP simulate 開始 ===")
    logger.info(
        f"引数: scenario={scenario_path}, kind={kind}, n={n}, m={m}, "
        f"seed={seed}, out={out_path}"
    )

    try:
        scenario = build_scenario(
            scenario_path,
            {
                "kind": kind,
                "n": n,
                "m": m,
                "segment_length": segment_length,
                "knot_times": _parse_list(knot_times, int),
                "knot_values": _parse_list(knot_values, float),
                "value_sd": value_sd,
                "noise_sd": noise_sd,
                "seed": seed,
            },
        )
        y, truth = simulate(scenario)
        write_series(out_path, y)
        truth_path = truth_path_for(out_path)
        write_json(truth.to_dict(), truth_path)
    except Exception as e:
        fail(logger, "simulate", e)
        return

    summary = {
        "success": True,
        "data": str(out_path),
        "truth": str(truth_path),
        "kind": scenario.kind,
        "n": scenario.n,
        "m": int(truth.taus.size),
        "seed": scenario.seed,
    }
    click.echo(json.dumps(summary, ensure_ascii=False))
    logger.info(f"成功結果: {summary}")
    logger.info("=== CPOP simulate 終了 ===")


# ===== bench =====


async def async_bench(
    config_path: Path,
    seed: Optional[int],
    workers: Optional[int],
    logger: logging.Logger,
) -> Tuple[pd.DataFrame, pd.DataFrame, pd.DataFrame]:
    """ベンチマークを実行して要約表を返す"""
    config = load_json(config_path)
    if seed is not None:
        config["seed"] = seed
    cells, settings = parse_grid(config)
    logger.info(f"セル数: {len(cells)}, seed={settings.seed}")

    runner = BenchRunner(cells, settings, workers or get_bench_workers())
    results = await runner.run_all()

    summary = summarize(results, cells)
    for row in summary.itertuples(index=False):
        logger.info(
            f"  n={row.n}, m={row.m}: 平均 {row.time_mean:.3f}秒, "
            f"平均|T*|={row.tstar_mean:.2f}, 平均|T̂|={row.that_mean:.2f}"
        )
    return summary, per_t_table(results, cells), scaling_exponents(
        summary, cells
    )


@main.command()
@click.argument(
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
)
@click.option(
    "--out",
    "out_path",
    type=click.Path(dir_okay=False, path_type=Path),
    help="要約 CSV の出力先（省略時は標準出力）",
)
@click.option(
    "--per-t",
    "per_t_path",
    type=click.Path(dir_okay=False, path_type=Path),
    help="時刻ごとの候補数 CSV の出力先",
)
@click.option(
    "--exponents",
    "exponents_path",
    type=click.Path(dir_okay=False, path_type=Path),
    help="計算量の指数 CSV の出力先",
)
@click.option("--seed", type=int, help="乱数シード（設定ファイルより優先）")
@click.option(
    "--workers",
    type=click.IntRange(min=1),
    help="並列数（既定: CPOP_THREADS または物理コア数）",
)
def bench(
    config_path: Path,
    out_path: Optional[Path],
    per_t_path: Optional[Path],
    exponents_path: Optional[Path],
    seed: Optional[int],
    workers: Optional[int],
) -> None:
    """ベンチマーク（実行時間と候補集合サイズ）"""
    logger = setup_logging()
    logger.info("=== CPOP bench 開始 ===")
    logger.info(
        f"引数: config={config_path}, out={out_path}, per_t={per_t_path}, "
        f"exponents={exponents_path}, seed={seed}, workers={workers}"
    )

    try:
        summary, per_t, exponents = asyncio.run(
            async_bench(config_path, seed, workers, logger)
        )
        text = write_table(summary, out_path)
        if per_t_path is not None:
            write_table(per_t, per_t_path)
        if exponents_path is not None:
            write_table(exponents, exponents_path)
    except Exception as e:
        fail(logger, "bench", e, config=str(config_path))
        return

    emit(text, out_path)
    logger.info("=== CPOP bench 終了 ===")


# ===== eval =====


def _require(data: Dict[str, Any], key: str, path: Path) -> Any:
    if key not in data:
        raise InputParseError(f"{path} に {key} がありません")
    return data[key]


def _as_taus(values: Any, path: Path) -> List[int]:
    try:
        return [int(v) for v in values]
    except (TypeError, ValueError) as e:
        raise InputParseError(f"{path} の taus を解釈できません: {e}") from e


def evaluate_files(
    truth_path: Path, fit_path: Path, threshold: Optional[float]
) -> Dict[str, Any]:
    """真値ファイルと推定結果ファイルから評価指標を計算"""
    truth = load_json(truth_path)
    fitted_report = load_json(fit_path)

    true_taus = _as_taus(_require(truth, "taus", truth_path), truth_path)
    true_mean = np.array(
        [parse_number(v) for v in _require(truth, "mean", truth_path)]
    )
    est_taus = _as_taus(_require(fitted_report, "taus", fit_path), fit_path)
    if "fitted" in fitted_report:
        fitted = np.array([parse_number(v) for v in fitted_report["fitted"]])
    else:
        raw_phis = _require(fitted_report, "phis", fit_path)
        phis = np.array([parse_number(v) for v in raw_phis])
        knots = np.array([0, *est_taus, true_mean.size])
        if knots.size != phis.size:
            raise LengthMismatch("phis の長さが taus と一致しません")
        fitted = np.interp(np.arange(1, true_mean.size + 1), knots, phis)

    if fitted.size != true_mean.size:
        raise LengthMismatch(
            f"系列長が一致しません: truth={true_mean.size}, fit={fitted.size}"
        )
    report = metrics_report(true_taus, true_mean, est_taus, fitted, threshold)
    return {"success": True, **report}


@main.command(name="eval")
@click.argument(
    "truth_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
)
@click.argument(
    "fit_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
)
@click.option(
    "--threshold",
    type=click.FloatRange(min=0),
    help="検出判定の距離（既定: 最長セグメント長の1/5）",
)
@click.option(
    "--out",
    "out_path",
    type=click.Path(dir_okay=False, path_type=Path),
    help="出力ファイル（省略時は標準出力）",
)
def eval_cmd(
    truth_path: Path,
    fit_path: Path,
    threshold: Optional[float],
    out_path: Optional[Path],
) -> None:
    """推定結果を真値と比較"""
    logger = setup_logging()
    logger.info("=== CPOP eval 開始 ===")
    logger.info(
        f"引数: truth={truth_path}, fit={fit_path}, threshold={threshold}"
    )

    try:
        report = evaluate_files(truth_path, fit_path, threshold)
        text = write_json(report, out_path)
    except Exception as e:
        fail(logger, "eval", e)
        return

    emit(text, out_path)
    logger.info(f"評価結果: {report}")
    logger.info("=== CPOP eval 終了 ===")


if __name__ == "__main__":
    main()

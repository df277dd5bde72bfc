"""
subpop のコマンドラインインターフェース

サブコマンド:

- ``synth``    合成イベントログを生成
- ``run``      (α, β) スイープを実行してレポートと図を出力
- ``stats``    データセットの統計量を表示
- ``codebook`` コードブックを構築して書き出す
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.codebook import build_codebook, export_codebook_tsv, save_codebook
from src.config import ExperimentConfig, parse_float_list, parse_modes, read_config_file
from src.dataset import (
    EventFormat,
    dataset_statistics,
    load_events,
    sample_top_items,
    save_events,
    temporal_split,
)
from src.errors import ConfigError, SubpopError
from src.experiment import run_experiment
from src.scorer import ScorerType
from src.synth import SynthConfig, generate

logger = logging.getLogger(__name__)

EXIT_INPUT = 3
EXIT_CONFIG = 5
EXIT_IO = 6


def _add_data_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", type=Path, help="イベントファイル (TSV / CSV)")
    parser.add_argument("--top-items", type=int, help="イベント数上位 N アイテムに絞り込む")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subpop",
        description="アイテム単位・サブID単位のパーソナライズド人気度による逐次推薦の評価",
    )
    parser.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="ログレベル")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="合成イベントログを生成")
    defaults = SynthConfig()
    synth.add_argument("--users", type=int, default=defaults.users)
    synth.add_argument("--items", type=int, default=defaults.items)
    synth.add_argument("--genres", type=int, default=defaults.genres)
    synth.add_argument("--events-per-user", type=int, default=defaults.events_per_user)
    synth.add_argument("--repeat-prob", type=float, default=defaults.repeat_prob)
    synth.add_argument("--pool-size", type=int, default=defaults.pool_size)
    synth.add_argument("--genre-affinity", type=float, default=defaults.genre_affinity)
    synth.add_argument("--zipf-exponent", type=float, default=defaults.zipf_exponent)
    synth.add_argument("--like-fraction", type=float, default=defaults.like_fraction)
    synth.add_argument("--seed", type=int, default=defaults.seed)
    synth.add_argument("--out", type=Path, required=True, help="出力するイベントTSV")

    run = commands.add_parser("run", help="(α, β) スイープを実行")
    run.add_argument("--config", type=Path, help="key = value 形式の設定ファイル")
    _add_data_arguments(run)
    run.add_argument("--holdout", dest="holdout_fraction", type=float, help="テストに回す割合 (既定 0.1)")
    run.add_argument("--split-cache", type=Path, help="分割のキャッシュTSV（あれば再利用）")
    run.add_argument("--eval-users", type=int, help="評価ユーザー数の上限")
    run.add_argument("--seed", type=int)
    run.add_argument("--scorer", choices=[t.value for t in ScorerType])
    run.add_argument("--logits", type=Path, help="外部ロジットファイル (scorer=external)")
    run.add_argument("--logits-default", type=float, help="疎形式ロジットの既定値")
    run.add_argument("--markov-smoothing", type=float)
    run.add_argument("--history-window", type=int)
    run.add_argument("--standardize-logits", action="store_true", default=None,
                     help="ベースロジットもZスコア化する")
    run.add_argument("--splits", type=int, help="サブID分割数 m")
    run.add_argument("--codebook-size", type=int, help="分割あたりのコード数 V")
    run.add_argument("--embedding-dim", type=int, help="埋め込み次元 d")
    run.add_argument("--svd-seed", type=int, help="SVDの乱数シード（評価ユーザーの抽出とは独立）")
    run.add_argument("--svd-tol", type=float)
    run.add_argument("--svd-max-iter", type=int)
    run.add_argument("--k", type=int, help="カットオフ (既定 40)")
    run.add_argument("--pps-epsilon", type=float)
    run.add_argument("--novelty-epsilon", type=float)
    run.add_argument("--mode", dest="modes", help="pps-only, spps-only, combined（カンマ区切り）または all")
    run.add_argument("--alpha-grid", help="α のリスト（カンマ区切り）")
    run.add_argument("--beta-grid", help="β のリスト（カンマ区切り）")
    run.add_argument("--alpha", type=float, help="単一の α")
    run.add_argument("--beta", type=float, help="単一の β")
    run.add_argument("--fixed-beta", type=float, help="combined モードで固定する β")
    run.add_argument("--thresholds", help="新規性の閾値（カンマ区切り）")
    run.add_argument("--match-tolerance", type=float)
    run.add_argument("--threads", type=int)
    run.add_argument("--out", type=Path, help="レポートTSV")
    run.add_argument("--plot", type=Path, help="トレードオフ曲線のSVG")
    run.add_argument("--dump-recs", type=Path, help="上位K推薦のTSV")
    run.add_argument("--dump-profiles", type=Path, help="プロファイルを書き出すディレクトリ")
    run.add_argument("--codebook-out", type=Path, help="コードブック (.npz)")

    stats = commands.add_parser("stats", help="データセットの統計量を表示")
    _add_data_arguments(stats)

    codebook = commands.add_parser("codebook", help="コードブックを構築して書き出す")
    experiment_defaults = ExperimentConfig()
    _add_data_arguments(codebook)
    codebook.add_argument("--holdout", type=float, default=0.1)
    codebook.add_argument("--splits", type=int, default=32)
    codebook.add_argument("--codebook-size", type=int, default=256)
    codebook.add_argument("--embedding-dim", type=int, default=256)
    codebook.add_argument("--svd-seed", type=int, default=experiment_defaults.svd_seed)
    codebook.add_argument("--svd-tol", type=float, default=experiment_defaults.svd_tol)
    codebook.add_argument("--svd-max-iter", type=int, default=experiment_defaults.svd_max_iter)
    codebook.add_argument("--out", type=Path, required=True, help="item_id, z_1..z_m のTSV")
    codebook.add_argument("--npz", type=Path, help="再読み込み用の .npz")
    return parser


_RUN_KEYS = (
    "data", "top_items", "holdout_fraction", "split_cache", "eval_users", "seed",
    "logits", "logits_default", "markov_smoothing", "history_window", "standardize_logits",
    "splits", "codebook_size", "embedding_dim", "svd_seed", "svd_tol", "svd_max_iter", "k",
    "pps_epsilon", "novelty_epsilon", "fixed_beta", "match_tolerance", "threads",
    "out", "plot", "dump_recs", "dump_profiles", "codebook_out",
)


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """既定値 < 設定ファイル < コマンドライン引数 の順に設定を合成"""
    overrides: Dict[str, Any] = {}
    if args.config is not None:
        overrides.update(read_config_file(args.config))
    cli: Dict[str, Any] = {key: getattr(args, key) for key in _RUN_KEYS}
    if args.scorer is not None:
        cli["scorer"] = ScorerType(args.scorer)
    if args.modes is not None:
        cli["modes"] = parse_modes(args.modes)
    if args.alpha_grid is not None and args.alpha is not None:
        raise ConfigError("--alpha と --alpha-grid は同時に指定できません")
    if args.beta_grid is not None and args.beta is not None:
        raise ConfigError("--beta と --beta-grid は同時に指定できません")
    if args.alpha_grid is not None:
        cli["alpha_grid"] = parse_float_list(args.alpha_grid)
    elif args.alpha is not None:
        cli["alpha_grid"] = (args.alpha,)
    if args.beta_grid is not None:
        cli["beta_grid"] = parse_float_list(args.beta_grid)
    elif args.beta is not None:
        cli["beta_grid"] = (args.beta,)
    if args.thresholds is not None:
        cli["thresholds"] = parse_float_list(args.thresholds)
    overrides.update({key: value for key, value in cli.items() if value is not None})
    return ExperimentConfig().with_overrides(overrides)


def _require_data(args: argparse.Namespace) -> Path:
    if args.data is None:
        raise ConfigError("--data を指定してください")
    return args.data


def _load(args: argparse.Namespace):
    path = _require_data(args)
    log = load_events(path, EventFormat.from_path(path))
    if args.top_items is not None:
        log = sample_top_items(log, args.top_items)
    return log


def cmd_synth(args: argparse.Namespace) -> None:
    cfg = SynthConfig(
        users=args.users,
        items=args.items,
        genres=args.genres,
        events_per_user=args.events_per_user,
        repeat_prob=args.repeat_prob,
        pool_size=args.pool_size,
        genre_affinity=args.genre_affinity,
        seed=args.seed,
        zipf_exponent=args.zipf_exponent,
        like_fraction=args.like_fraction,
    )
    save_events(generate(cfg), args.out)


def cmd_run(args: argparse.Namespace) -> None:
    result = run_experiment(config_from_args(args))
    print(result.summary())


def cmd_stats(args: argparse.Namespace) -> None:
    print(dataset_statistics(_load(args)).summary())


def cmd_codebook(args: argparse.Namespace) -> None:
    split = temporal_split(_load(args), args.holdout)
    cb = build_codebook(
        split.train, m=args.splits, V=args.codebook_size, d=args.embedding_dim,
        seed=args.svd_seed, tol=args.svd_tol, max_iter=args.svd_max_iter,
    )
    export_codebook_tsv(cb, split.train.item_ids, args.out)
    if args.npz is not None:
        save_codebook(cb, args.npz)
    logger.info("コードブックを書き出しました: %s", args.out)


_COMMANDS = {
    "synth": cmd_synth,
    "run": cmd_run,
    "stats": cmd_stats,
    "codebook": cmd_codebook,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    エントリポイント

    Returns
    -------
    int
        終了コード（0: 成功、2: 引数エラー、3: 入力、4: 数値計算、5: 設定、6: 入出力）
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        _COMMANDS[args.command](args)
    except SubpopError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    except ValueError as exc:
        # 区分のない値の誤りは設定エラーとして扱う
        logger.error("%s", exc)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        logger.error("%s", exc)
        return EXIT_INPUT
    except OSError as exc:
        logger.error("%s", exc)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())

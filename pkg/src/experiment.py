"""
(α, β) グリッドのスイープと実験パイプライン
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.codebook import Codebook, SubEmbeddingTable, build_codebook, save_codebook
from src.comparison import SignalComparison
from src.config import ExperimentConfig
from src.dataset import (
    EventFormat,
    load_events,
    load_split,
    sample_top_items,
    save_split,
    select_eval_users,
    temporal_split,
)
from src.errors import ConfigError, InputError, ReportIoError
from src.event_data import TemporalSplit
from src.fusion import FusionWeights, fuse, rank_top_k
from src.metrics import (
    DEFAULT_K,
    NOVELTY_EPSILON,
    RelevanceProfile,
    build_relevance,
    idcg_at_k,
    ndcg_at_k,
    novelty_at_k,
)
from src.popularity import (
    DEFAULT_EPSILON,
    build_profile,
    dump_profiles,
    pps_vector,
    spps_vector,
    standardize,
)
from src.results import MetricReport, ThresholdTable, TradeoffReport, TradeoffRow
from src.scorer import (
    BaseScorer,
    ScorerType,
    global_popularity_scorer,
    load_external_logits,
    markov_scorer,
    svd_dot_scorer,
)
from src.visualization import emit_plot

logger = logging.getLogger(__name__)

DEFAULT_GRID = tuple(round(0.1 * i, 1) for i in range(10))
DEFAULT_FIXED_BETA = 0.9
DEFAULT_THRESHOLDS = (0.0, 10.0, 12.0, 14.0)


class SweepMode(Enum):
    """どの重みを動かすか"""
    PPS_ONLY = "pps-only"
    SPPS_ONLY = "spps-only"
    COMBINED = "combined"


@dataclass(frozen=True)
class SweepSpec:
    """
    スイープするグリッド

    - PPS_ONLY: β=0 で alpha_grid を動かす
    - SPPS_ONLY: α=0 で beta_grid を動かす
    - COMBINED: β を固定して alpha_grid を動かす。beta_grid を与えた場合は
      その各値を固定値として順に使う

    グリッドを省略した場合は {0, 0.1, …, 0.9}。COMBINED の α は
    linspace(0, 1 − β, 10)。

    Attributes
    ----------
    mode : SweepMode
        スイープの種類
    alpha_grid : Tuple[float, ...]
        α の値
    beta_grid : Tuple[float, ...]
        β の値
    fixed_beta : float
        COMBINED で固定する β
    """
    mode: SweepMode
    alpha_grid: Tuple[float, ...] = ()
    beta_grid: Tuple[float, ...] = ()
    fixed_beta: float = DEFAULT_FIXED_BETA

    def __post_init__(self):
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        object.__setattr__(self, "beta_grid", tuple(float(b) for b in self.beta_grid))
        if self.mode is SweepMode.PPS_ONLY and self.beta_grid:
            raise ConfigError("pps-only では beta_grid を指定できません")
        if self.mode is SweepMode.SPPS_ONLY and self.alpha_grid:
            raise ConfigError("spps-only では alpha_grid を指定できません")
        # 全グリッド点の制約を構築時に検査する
        self.points()

    def points(self) -> List[FusionWeights]:
        """グリッド点を順に返す（α + β > 1 があれば WeightViolation）"""
        if self.mode is SweepMode.PPS_ONLY:
            return [FusionWeights(a, 0.0) for a in self.alpha_grid or DEFAULT_GRID]
        if self.mode is SweepMode.SPPS_ONLY:
            return [FusionWeights(0.0, b) for b in self.beta_grid or DEFAULT_GRID]
        points = []
        for beta in self.beta_grid or (self.fixed_beta,):
            alphas = self.alpha_grid or tuple(np.linspace(0.0, max(0.0, 1.0 - beta), 10))
            points.extend(FusionWeights(float(a), beta) for a in alphas)
        return points


@dataclass
class _UserOutcome:
    ndcg: np.ndarray
    novelty: np.ndarray
    recs: Optional[List[Tuple[np.ndarray, np.ndarray]]]


class _SweepRunner:
    """
    ユーザー単位の評価

    ベーススコアと標準化済み PPS / sPPS はユーザーごとに一度だけ計算し、
    全グリッド点で使い回します。
    """

    def __init__(
        self,
        split: TemporalSplit,
        cb: Codebook,
        scorer: BaseScorer,
        relevance: RelevanceProfile,
        points: Sequence[FusionWeights],
        k: int,
        epsilon: float,
        novelty_epsilon: float,
        standardize_logits: bool,
        keep_recs: bool,
    ):
        self.split = split
        self.cb = cb
        self.scorer = scorer
        self.relevance = relevance
        self.points = points
        self.k = k
        self.epsilon = epsilon
        self.novelty_epsilon = novelty_epsilon
        self.standardize_logits = standardize_logits
        self.keep_recs = keep_recs

    def is_evaluable(self, user: int) -> bool:
        history_length = self.split.train.user_offsets[user + 1] - self.split.train.user_offsets[user]
        return history_length > 0 and idcg_at_k(self.relevance.for_user(user), self.k) > 0

    def __call__(self, user: int) -> _UserOutcome:
        history = self.split.train.history(user)
        rel = self.relevance.for_user(user)
        profile = build_profile(history, self.cb, user)
        base = np.asarray(self.scorer.score(user, history), dtype=np.float64)
        if not np.all(np.isfinite(base)):
            raise InputError(f"ユーザー {user} のベーススコアに非有限値が含まれています")
        if self.standardize_logits:
            base = standardize(base).values
        pps_std = standardize(pps_vector(profile, self.cb.n_items, self.epsilon)).values
        spps_std = standardize(spps_vector(profile, self.cb, self.epsilon)).values

        ndcg = np.empty(len(self.points))
        novelty = np.empty(len(self.points))
        recs = [] if self.keep_recs else None
        for p, weights in enumerate(self.points):
            fused = fuse(base, pps_std, spps_std, weights)
            top = rank_top_k(fused, self.k)
            ndcg[p] = ndcg_at_k(top, rel, self.k)
            novelty[p] = novelty_at_k(top, profile, self.k, self.novelty_epsilon)
            if recs is not None:
                recs.append((top, fused[top]))
        return _UserOutcome(ndcg=ndcg, novelty=novelty, recs=recs)


def run_sweeps(
    split: TemporalSplit,
    cb: Codebook,
    scorer: BaseScorer,
    specs: Sequence[SweepSpec],
    k: int = DEFAULT_K,
    epsilon: float = DEFAULT_EPSILON,
    novelty_epsilon: float = NOVELTY_EPSILON,
    eval_users: Optional[Sequence[int]] = None,
    n_threads: int = 1,
    standardize_logits: bool = False,
    dump_recs: Optional[Union[str, Path]] = None,
) -> TradeoffReport:
    """
    複数のスイープを1回のユーザー走査でまとめて評価

    Parameters
    ----------
    split : TemporalSplit
        学習・テスト分割
    cb : Codebook
        学習データから作ったコードブック
    scorer : BaseScorer
        ベーススコアラー
    specs : Sequence[SweepSpec]
        スイープ（行の順序は specs の順、各 spec 内はグリッド順）
    k : int, optional
        カットオフ（デフォルト: 40）
    epsilon : float, optional
        PPS / sPPS の平滑化 ε
    novelty_epsilon : float, optional
        Novelty の確率の下限
    eval_users : Sequence[int], optional
        評価候補のユーザー（省略時はテストにイベントを持つ全ユーザー）
    n_threads : int, optional
        ユーザー単位の並列数（結果は並列数に依存しない）
    standardize_logits : bool, optional
        ベースロジットもZスコア化する
    dump_recs : str or Path, optional
        グリッド点ごとの上位Kを書き出すTSV

    Returns
    -------
    TradeoffReport
    """
    if not specs:
        raise ValueError("スイープが指定されていません")
    if cb.n_items != split.n_items or scorer.n_items != split.n_items:
        raise ValueError(
            f"アイテム数が一致しません: 分割 {split.n_items}, コードブック {cb.n_items}, "
            f"スコアラー {scorer.n_items}"
        )
    if not 1 <= k <= split.n_items:
        raise ConfigError(f"k は 1 以上 {split.n_items} 以下である必要があります: {k}")
    if n_threads < 1:
        raise ConfigError(f"n_threads は1以上である必要があります: {n_threads}")

    labelled: List[Tuple[str, FusionWeights]] = [
        (spec.mode.value, weights) for spec in specs for weights in spec.points()
    ]
    points = [weights for _, weights in labelled]

    relevance = build_relevance(split.test)
    candidates = relevance.users()
    if eval_users is not None:
        candidates = np.intersect1d(candidates, np.asarray(eval_users, dtype=np.int64))
    runner = _SweepRunner(
        split, cb, scorer, relevance, points, k, epsilon, novelty_epsilon,
        standardize_logits, keep_recs=dump_recs is not None,
    )
    users = np.array([u for u in candidates if runner.is_evaluable(int(u))], dtype=np.int64)
    excluded = len(candidates) - len(users)
    if len(users) == 0:
        raise InputError("評価できるユーザーがいません（学習履歴と正の関連度を持つユーザーが0人）")
    if excluded:
        logger.warning("学習履歴なし または IDCG=0 のため %d ユーザーを除外しました", excluded)
    logger.info(
        "スイープを開始します: %d 点 × %d ユーザー (K=%d, スレッド %d)",
        len(points), len(users), k, n_threads,
    )

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as executor:
            outcomes = list(executor.map(runner, users.tolist()))
    else:
        outcomes = [runner(u) for u in users.tolist()]

    ndcg = np.vstack([o.ndcg for o in outcomes])
    novelty = np.vstack([o.novelty for o in outcomes])
    rows = []
    details = []
    for p, (mode, weights) in enumerate(labelled):
        report = MetricReport.from_per_user(k, users, ndcg[:, p], novelty[:, p], excluded)
        details.append(report)
        rows.append(TradeoffRow(
            mode=mode,
            alpha=weights.alpha,
            beta=weights.beta,
            ndcg=report.ndcg_at_k,
            novelty=report.novelty_at_k,
            users_evaluated=report.users_evaluated,
            users_excluded=excluded,
        ))
        logger.debug("%s α=%.3f β=%.3f: NDCG %.4f, Novelty %.3f",
                     mode, weights.alpha, weights.beta, report.ndcg_at_k, report.novelty_at_k)

    cold_start = len(scorer.fallback_users)
    if cold_start:
        logger.warning("ベーススコアラーが %d ユーザーでグローバル人気度にフォールバックしました", cold_start)
    if dump_recs is not None:
        _write_recs(dump_recs, split, labelled, users, outcomes)
    return TradeoffReport(k=k, rows=rows, details=details, cold_start_users=cold_start)


def run_sweep(
    split: TemporalSplit,
    cb: Codebook,
    scorer: BaseScorer,
    spec: SweepSpec,
    k: int = DEFAULT_K,
    **kwargs,
) -> TradeoffReport:
    """1つのスイープを評価（引数は run_sweeps と同じ）"""
    return run_sweeps(split, cb, scorer, [spec], k=k, **kwargs)


def _write_recs(
    path: Union[str, Path],
    split: TemporalSplit,
    labelled: Sequence[Tuple[str, FusionWeights]],
    users: np.ndarray,
    outcomes: Sequence[_UserOutcome],
) -> None:
    user_ids = np.asarray(split.train.user_ids, dtype=object)
    item_ids = np.asarray(split.train.item_ids, dtype=object)
    frames = []
    for p, (mode, weights) in enumerate(labelled):
        for user, outcome in zip(users, outcomes):
            items, scores = outcome.recs[p]
            frames.append(pd.DataFrame({
                "mode": mode,
                "alpha": weights.alpha,
                "beta": weights.beta,
                "user": user_ids[user],
                "rank": np.arange(1, len(items) + 1),
                "item": item_ids[items],
                "score": scores,
            }))
    try:
        pd.concat(frames, ignore_index=True).to_csv(
            path, sep="\t", index=False, float_format="%.6f", lineterminator="\n"
        )
    except OSError as exc:
        raise ReportIoError(f"推薦リストを書き込めません: {path}") from exc
    logger.info("推薦リストを書き出しました: %s", path)


def threshold_table(
    report: TradeoffReport,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> ThresholdTable:
    """
    新規性の閾値 τ ごとに、Novelty >= τ の行の中で最大の NDCG

    該当する行がなければ None（表示は「—」）。モードごとに計算します。

    Parameters
    ----------
    report : TradeoffReport
        スイープ結果（1行以上）
    thresholds : Sequence[float], optional
        閾値（デフォルト: 0, 10, 12, 14）

    Returns
    -------
    ThresholdTable
    """
    if not report.rows:
        raise ValueError("レポートが空です")
    values: Dict[str, List[Optional[float]]] = {}
    for mode in report.modes():
        rows = report.rows_for(mode)
        values[mode] = [
            max((row.ndcg for row in rows if row.novelty >= tau), default=None)
            for tau in thresholds
        ]
    return ThresholdTable(k=report.k, thresholds=[float(t) for t in thresholds], values=values)


def build_specs(config: ExperimentConfig) -> List[SweepSpec]:
    """設定のモードごとに SweepSpec を作る"""
    specs = []
    for name in config.modes:
        mode = SweepMode(name)
        specs.append(SweepSpec(
            mode=mode,
            alpha_grid=() if mode is SweepMode.SPPS_ONLY else config.alpha_grid,
            beta_grid=() if mode is SweepMode.PPS_ONLY else config.beta_grid,
            fixed_beta=config.fixed_beta,
        ))
    return specs


def build_scorer(config: ExperimentConfig, split: TemporalSplit, cb: Codebook) -> BaseScorer:
    """設定に応じたベーススコアラー"""
    if config.scorer is ScorerType.GLOBAL_POPULARITY:
        return global_popularity_scorer(split.train)
    if config.scorer is ScorerType.MARKOV:
        return markov_scorer(split.train, smoothing=config.markov_smoothing)
    if config.scorer is ScorerType.SVD_DOT:
        table = SubEmbeddingTable.initialise(cb, seed=config.seed)
        return svd_dot_scorer(cb, table, train=split.train, history_window=config.history_window)
    return load_external_logits(
        config.logits,
        split.train.user_index,
        split.train.item_index,
        default=config.logits_default,
    )


@dataclass
class ExperimentResult:
    """
    run_experiment の出力

    Attributes
    ----------
    split : TemporalSplit
        使用した分割
    codebook : Codebook
        コードブック
    report : TradeoffReport
        全モードのスイープ結果
    thresholds : ThresholdTable
        閾値表
    comparison : SignalComparison, optional
        pps-only と spps-only の両方を実行した場合の比較
    """
    split: TemporalSplit
    codebook: Codebook
    report: TradeoffReport
    thresholds: ThresholdTable
    comparison: Optional[SignalComparison] = None

    def summary(self) -> str:
        parts = [self.report.summary(), "", self.thresholds.summary()]
        if self.comparison is not None:
            parts += ["", self.comparison.summary()]
        return "\n".join(parts)


def prepare_split(config: ExperimentConfig) -> TemporalSplit:
    """データを読み込み、アイテムを絞り込み、時系列分割する（キャッシュがあれば再利用）"""
    if config.split_cache is not None and Path(config.split_cache).exists():
        logger.info("分割キャッシュを使用します: %s", config.split_cache)
        return load_split(config.split_cache)
    if config.data is None:
        raise ConfigError("data（イベントファイル）が指定されていません")
    log = load_events(config.data, EventFormat.from_path(config.data))
    if config.top_items is not None:
        log = sample_top_items(log, config.top_items)
    split = temporal_split(log, config.holdout_fraction)
    if config.split_cache is not None:
        save_split(split, config.split_cache)
    return split


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """
    分割・コードブック・スコアラーを構築し、全モードをスイープして結果を書き出す

    Parameters
    ----------
    config : ExperimentConfig
        実験設定

    Returns
    -------
    ExperimentResult
    """
    split = prepare_split(config)
    cb = build_codebook(
        split.train,
        m=config.splits,
        V=config.codebook_size,
        d=config.embedding_dim,
        seed=config.svd_seed,
        tol=config.svd_tol,
        max_iter=config.svd_max_iter,
        n_oversamples=config.svd_oversamples,
        min_power_iters=config.svd_min_power_iters,
        n_jobs=config.threads,
    )
    if config.codebook_out is not None:
        save_codebook(cb, config.codebook_out)

    eval_users = None
    if config.eval_users is not None:
        candidates = np.unique(split.test.users)
        eval_users = select_eval_users(candidates, config.eval_users, config.seed)
        logger.info("評価ユーザーを %d 人に絞り込みました", len(eval_users))

    scorer = build_scorer(config, split, cb)
    specs = build_specs(config)
    report = run_sweeps(
        split, cb, scorer, specs,
        k=config.k,
        epsilon=config.pps_epsilon,
        novelty_epsilon=config.novelty_epsilon,
        eval_users=eval_users,
        n_threads=config.threads,
        standardize_logits=config.standardize_logits,
        dump_recs=config.dump_recs,
    )
    table = threshold_table(report, config.thresholds)

    comparison = None
    modes = report.modes()
    if SweepMode.PPS_ONLY.value in modes and SweepMode.SPPS_ONLY.value in modes:
        comparison = SignalComparison.from_report(report, tolerance=config.match_tolerance)

    if config.dump_profiles is not None:
        directory = Path(config.dump_profiles)
        directory.mkdir(parents=True, exist_ok=True)
        users = report.details[0].users
        profiles = [build_profile(split.train.history(u), cb, int(u)) for u in users]
        dump_profiles(profiles, directory / "item_counts.tsv", directory / "subid_counts.tsv")
    if config.out is not None:
        report.to_tsv(config.out)
        logger.info("レポートを書き出しました: %s", config.out)
    if config.plot is not None:
        emit_plot(report, config.plot)
        logger.info("図を書き出しました: %s", config.plot)
    return ExperimentResult(split=split, codebook=cb, report=report, thresholds=table, comparison=comparison)

"""
繰り返し消費とジャンル構造を持つ合成データの生成
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from src.errors import ConfigError
from src.event_data import EventLog, EventType
from src.rng import make_generator

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SynthConfig:
    """
    合成データの設定

    Attributes
    ----------
    users : int
        ユーザー数
    items : int
        アイテム数
    genres : int
        ジャンル数（アイテムは連続したブロックに分割）
    events_per_user : int
        ユーザーあたりのイベント数
    repeat_prob : float
        個人プールから再生する確率
    pool_size : int
        個人プールの大きさ（ジャンルの最小サイズ以下）
    genre_affinity : float
        プール外の再生がホームジャンルになる確率
    seed : int
        乱数シード
    zipf_exponent : float
        プール内の重み 1/rank^s の指数
    like_fraction : float
        既出アイテムの再生を like に置き換える割合
    start_timestamp : int
        タイムスタンプの基準
    mean_gap : int
        イベント間隔の平均（秒）
    """
    users: int = 200
    items: int = 500
    genres: int = 10
    events_per_user: int = 100
    repeat_prob: float = 0.8
    pool_size: int = 10
    genre_affinity: float = 0.9
    seed: int = 0
    zipf_exponent: float = 1.0
    like_fraction: float = 0.1
    start_timestamp: int = 1_600_000_000
    mean_gap: int = 3600

    def __post_init__(self):
        for name in ("users", "items", "genres", "events_per_user", "pool_size", "mean_gap"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} は正の整数である必要があります: {getattr(self, name)}")
        for name in ("repeat_prob", "genre_affinity", "like_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} は [0, 1] の範囲である必要があります: {value}")
        if self.genres > self.items:
            raise ConfigError(f"ジャンル数 {self.genres} がアイテム数 {self.items} を超えています")
        if self.pool_size > self.items // self.genres:
            raise ConfigError(
                f"pool_size {self.pool_size} はジャンルあたりのアイテム数 "
                f"{self.items // self.genres} 以下である必要があります"
            )
        if self.zipf_exponent < 0:
            raise ConfigError(f"zipf_exponent は非負である必要があります: {self.zipf_exponent}")
        if self.start_timestamp < 0:
            raise ConfigError(f"start_timestamp は非負である必要があります: {self.start_timestamp}")


def genre_blocks(cfg: SynthConfig) -> list:
    """ジャンルごとのアイテムインデックス"""
    return np.array_split(np.arange(cfg.items), cfg.genres)


def item_genres(cfg: SynthConfig) -> np.ndarray:
    """アイテム → ジャンル"""
    genres = np.empty(cfg.items, dtype=np.int64)
    for g, block in enumerate(genre_blocks(cfg)):
        genres[block] = g
    return genres


def _generate_user(cfg: SynthConfig, user: int, blocks: list) -> pd.DataFrame:
    rng = make_generator(cfg.seed, user)
    n = cfg.events_per_user
    genre = int(rng.integers(cfg.genres))
    genre_items = blocks[genre]
    pool = rng.choice(genre_items, size=cfg.pool_size, replace=False)
    weights = 1.0 / np.arange(1, cfg.pool_size + 1) ** cfg.zipf_exponent
    weights /= weights.sum()
    # プール外の新しい同ジャンルアイテム（ジャンル全体がプールなら全体から）
    fresh = np.setdiff1d(genre_items, pool)
    if fresh.size == 0:
        fresh = genre_items

    repeat = rng.random(n) < cfg.repeat_prob
    same_genre = rng.random(n) < cfg.genre_affinity
    pool_draws = pool[rng.choice(cfg.pool_size, size=n, p=weights)]
    genre_draws = rng.choice(fresh, size=n)
    uniform_draws = rng.integers(cfg.items, size=n)
    items = np.where(repeat, pool_draws, np.where(same_genre, genre_draws, uniform_draws))

    start = cfg.start_timestamp + int(rng.integers(0, cfg.mean_gap * n // 4 + 1))
    gaps = rng.integers(1, 2 * cfg.mean_gap, size=n)
    timestamps = start + np.cumsum(gaps)

    seen = pd.Series(items).duplicated().to_numpy()
    liked = seen & (rng.random(n) < cfg.like_fraction)
    events = np.where(liked, EventType.LIKE.code, EventType.PLAY.code)
    return pd.DataFrame({
        "user": np.full(n, user, dtype=np.int64),
        "item": items.astype(np.int64),
        "timestamp": timestamps.astype(np.int64),
        "event": events.astype(np.int8),
    })


def generate(cfg: SynthConfig) -> EventLog:
    """
    合成イベントログを生成

    各ユーザーにホームジャンルと個人プールを割り当て、各イベントで
    確率 repeat_prob でプールから（Zipf重み）、それ以外は確率
    genre_affinity で同ジャンルの新しいアイテム、残りはカタログ全体から
    一様に選びます。ユーザーごとに独立した乱数系列を使うため、同じ
    シードなら常に同じログになります。

    Parameters
    ----------
    cfg : SynthConfig
        設定

    Returns
    -------
    EventLog
        全アイテムをカタログに含むログ（ID は u00000 / i00000 形式）
    """
    blocks = genre_blocks(cfg)
    frame = pd.concat(
        [_generate_user(cfg, user, blocks) for user in range(cfg.users)],
        ignore_index=True,
    )
    log = EventLog.from_arrays(
        user_ids=[f"u{u:05d}" for u in range(cfg.users)],
        item_ids=[f"i{i:05d}" for i in range(cfg.items)],
        users=frame["user"].to_numpy(),
        items=frame["item"].to_numpy(),
        timestamps=frame["timestamp"].to_numpy(),
        event_types=frame["event"].to_numpy(),
    )
    logger.info(
        "合成データを生成しました (ユーザー %d, アイテム %d, イベント %d, seed=%d)",
        cfg.users, cfg.items, log.n_events, cfg.seed,
    )
    return log

"""
イベントログの読み込み・アイテムサンプリング・グローバル時系列分割
"""

import logging
import math
import re
from enum import Enum
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import pandas as pd

from src.errors import ConfigError, DegenerateSplit, EmptyLog, ParseError, ReportIoError
from src.event_data import EventLog, EventType, TemporalSplit
from src.results import DatasetStatistics
from src.rng import splitmix64

logger = logging.getLogger(__name__)

SPLIT_FORMAT_VERSION = 1
_COLUMNS = ["user", "item", "timestamp", "event"]
_EVENT_LOOKUP = {e.value: e.code for e in EventType}

PathLike = Union[str, Path]


class EventFormat(Enum):
    """入力ファイルの区切り形式"""
    TSV = "tsv"
    CSV = "csv"

    @property
    def separator(self) -> str:
        return "\t" if self is EventFormat.TSV else ","

    @classmethod
    def from_path(cls, path: PathLike) -> "EventFormat":
        """拡張子から推定（.csv 以外はTSV扱い）"""
        return cls.CSV if str(path).lower().endswith(".csv") else cls.TSV


def _is_header_text(value: str) -> bool:
    """数値として読めないタイムスタンプ欄はヘッダー"""
    value = value.strip()
    return value != "" and pd.isna(pd.to_numeric(value, errors="coerce"))


def load_events(path: PathLike, format: EventFormat = EventFormat.TSV) -> EventLog:
    """
    イベントファイルを読み込む

    各行は ``user, item, timestamp, event`` の4列。先頭行のタイムスタンプ列が
    数値でなければヘッダー行とみなして読み飛ばします。

    Parameters
    ----------
    path : str or Path
        入力ファイル
    format : EventFormat, optional
        区切り形式（デフォルト: TSV）

    Returns
    -------
    EventLog
        密なインデックスを構築済みのログ

    Raises
    ------
    ParseError
        列数・タイムスタンプ・イベント種別が不正な行があった場合
    EmptyLog
        有効なイベントが0件の場合
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"入力ファイルが見つかりません: {path}")

    try:
        raw = pd.read_csv(
            path,
            sep=format.separator,
            header=None,
            names=_COLUMNS + ["_extra"],
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
            engine="c",
        )
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        row = int(match.group(1)) if match else 0
        raise ParseError(row, "4列である必要があります") from exc
    except pd.errors.EmptyDataError:
        raise EmptyLog(f"イベントが含まれていません: {path}") from None
    raw = raw.fillna("")

    row_numbers = np.arange(1, len(raw) + 1)
    if len(raw) and _is_header_text(raw["timestamp"].iloc[0]):
        logger.debug("ヘッダー行を検出しました: %s", list(raw.iloc[0, :4]))
        raw = raw.iloc[1:]
        row_numbers = row_numbers[1:]
    if raw.empty:
        raise EmptyLog(f"イベントが含まれていません: {path}")

    extra = (raw["_extra"] != "").to_numpy()
    missing = (raw[_COLUMNS] == "").any(axis=1).to_numpy()
    bad_shape = np.flatnonzero(extra | missing)
    if bad_shape.size:
        raise ParseError(int(row_numbers[bad_shape[0]]), "4列である必要があります")

    timestamps = pd.to_numeric(raw["timestamp"].str.strip(), errors="coerce")
    bad_ts = np.flatnonzero(
        (timestamps.isna() | (timestamps < 0) | (timestamps % 1 != 0)).to_numpy()
    )
    if bad_ts.size:
        row = bad_ts[0]
        raise ParseError(
            int(row_numbers[row]),
            f"タイムスタンプが非負整数ではありません: {raw['timestamp'].iloc[row]!r}",
        )

    events = raw["event"].str.strip().str.lower().map(_EVENT_LOOKUP)
    bad_event = np.flatnonzero(events.isna().to_numpy())
    if bad_event.size:
        row = bad_event[0]
        raise ParseError(
            int(row_numbers[row]),
            f"未知のイベント種別です: {raw['event'].iloc[row]!r}",
        )

    frame = pd.DataFrame({
        "user": raw["user"].str.strip().to_numpy(),
        "item": raw["item"].str.strip().to_numpy(),
        "timestamp": timestamps.to_numpy().astype(np.int64),
        "event": events.to_numpy().astype(np.int8),
        "position": np.arange(len(raw), dtype=np.int64),
    })
    log = EventLog.from_frame(frame)
    logger.info(
        "イベントを読み込みました: %s (ユーザー %d, アイテム %d, イベント %d)",
        path, log.n_users, log.n_items, log.n_events,
    )
    return log


def save_events(log: EventLog, path: PathLike, format: EventFormat = EventFormat.TSV) -> None:
    """``user, item, timestamp, event`` のヘッダー付きで書き出す"""
    try:
        log.to_frame().to_csv(path, sep=format.separator, index=False, lineterminator="\n")
    except OSError as exc:
        raise ReportIoError(f"イベントを書き込めません: {path}") from exc
    logger.info("イベントを書き出しました: %s (%d 件)", path, log.n_events)


def _reindex(log: EventLog, keep_items: np.ndarray) -> EventLog:
    """残すアイテムでイベントを絞り込み、インデックスを詰め直す"""
    mask = np.isin(log.items, keep_items)
    kept_users = np.unique(log.users[mask])
    kept_items = np.unique(keep_items)
    user_map = np.full(log.n_users, -1, dtype=np.int64)
    user_map[kept_users] = np.arange(len(kept_users))
    item_map = np.full(log.n_items, -1, dtype=np.int64)
    item_map[kept_items] = np.arange(len(kept_items))
    return EventLog.from_arrays(
        user_ids=[log.user_ids[u] for u in kept_users],
        item_ids=[log.item_ids[i] for i in kept_items],
        users=user_map[log.users[mask]],
        items=item_map[log.items[mask]],
        timestamps=log.timestamps[mask],
        event_types=log.event_types[mask],
        positions=log.positions[mask],
    )


def sample_top_items(log: EventLog, n: int) -> EventLog:
    """
    人気上位 n アイテムのイベントだけを残す

    人気度は種別を問わない生のイベント数。同数の場合はアイテムIDの昇順で
    優先します。イベントが0件になったユーザーは除外されます。

    Parameters
    ----------
    log : EventLog
        入力ログ
    n : int
        残すアイテム数（1以上）

    Returns
    -------
    EventLog
        インデックスを詰め直したログ
    """
    if n < 1:
        raise ConfigError(f"nは1以上である必要があります: {n}")
    counts = log.item_counts()
    id_rank = np.argsort(np.asarray(log.item_ids, dtype=object), kind="stable")
    rank_of = np.empty_like(id_rank)
    rank_of[id_rank] = np.arange(len(id_rank))
    order = np.lexsort((rank_of, -counts))
    keep = np.sort(order[:n])
    sampled = _reindex(log, keep)
    logger.info(
        "人気上位 %d アイテムを抽出しました (イベント %d → %d, ユーザー %d → %d)",
        min(n, log.n_items), log.n_events, sampled.n_events, log.n_users, sampled.n_users,
    )
    return sampled


def temporal_split(log: EventLog, holdout_fraction: float = 0.1) -> TemporalSplit:
    """
    グローバル時系列分割

    全イベントを (タイムスタンプ, 入力順) で並べ、最後の
    ⌈holdout_fraction·|events|⌉ 件をテストにします。同時刻のイベントが
    分割位置をまたぐ場合は、その時刻のイベントをまとめてテスト側へ
    （学習が空になる場合は学習側へ）寄せます。

    Parameters
    ----------
    log : EventLog
        入力ログ（空でないこと）
    holdout_fraction : float, optional
        テストの割合（デフォルト: 0.1）

    Returns
    -------
    TemporalSplit
        インデックスを共有する学習・テストのログ

    Raises
    ------
    DegenerateSplit
        全イベントが同一時刻で分割できない場合
    """
    if not 0 < holdout_fraction < 1:
        raise ConfigError(f"holdout_fractionは(0, 1)の範囲である必要があります: {holdout_fraction}")
    if log.n_events == 0:
        raise EmptyLog("空のログは分割できません")

    order = np.lexsort((log.positions, log.timestamps))
    sorted_ts = log.timestamps[order]
    # 浮動小数の丸め誤差で切り上げが1件ずれないようにする
    n_test = math.ceil(round(holdout_fraction * log.n_events, 9))
    cut = log.n_events - n_test
    boundary = sorted_ts[cut]
    first_tied = int(np.searchsorted(sorted_ts, boundary, side="left"))
    if first_tied > 0:
        cut = first_tied
    else:
        cut = int(np.searchsorted(sorted_ts, boundary, side="right"))
        if cut >= log.n_events:
            raise DegenerateSplit("全てのイベントが同一時刻のため分割できません")
    split = split_at(log, int(sorted_ts[cut]), holdout_fraction)
    logger.info(
        "時系列分割: 分割時刻 %d, 学習 %d件, テスト %d件",
        split.split_timestamp, split.train.n_events, split.test.n_events,
    )
    return split


def split_at(log: EventLog, split_timestamp: int, holdout_fraction: float = 0.1) -> TemporalSplit:
    """split_timestamp より前を学習、以降をテストに分ける（インデックスは共有）"""
    is_test = log.timestamps >= split_timestamp
    return TemporalSplit(
        train=log.select(~is_test),
        test=log.select(is_test),
        split_timestamp=split_timestamp,
        holdout_fraction=holdout_fraction,
    )


def select_eval_users(candidates: Sequence[int], n: int, seed: int) -> np.ndarray:
    """
    評価ユーザーを決定的に n 人抽出

    各ユーザーに splitmix64(seed ⊕ user) の値を割り当て、小さい順に
    n 人を選びます。戻り値はインデックス昇順。

    Parameters
    ----------
    candidates : Sequence[int]
        候補ユーザーのインデックス
    n : int
        抽出人数（候補数以上なら全員）
    seed : int
        シード
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    if n >= len(candidates):
        return np.sort(candidates)
    keys = splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ candidates.astype(np.uint64))
    chosen = candidates[np.lexsort((candidates, keys))[:n]]
    return np.sort(chosen)


def dataset_statistics(log: EventLog) -> DatasetStatistics:
    """ユーザー数・アイテム数・系列長などの統計量"""
    lengths = log.user_lengths()
    lengths = lengths[lengths > 0]
    return DatasetStatistics(
        users=int(len(lengths)),
        items=int(np.count_nonzero(log.item_counts())),
        interactions=log.n_events,
        avg_len=float(lengths.mean()) if len(lengths) else 0.0,
        med_len=float(np.median(lengths)) if len(lengths) else 0.0,
    )


def save_split(split: TemporalSplit, path: PathLike) -> None:
    """
    分割結果をバージョン付きTSVとして保存

    1行目はヘッダーコメント、以降は ``user, item, timestamp, event, part`` 。
    """
    path = Path(path)
    train = split.train.to_frame().assign(part="train")
    test = split.test.to_frame().assign(part="test")
    header = (
        f"# subpop-split v{SPLIT_FORMAT_VERSION} "
        f"split_timestamp={split.split_timestamp} "
        f"holdout_fraction={split.holdout_fraction!r}\n"
    )
    try:
        with path.open("w", encoding="utf-8", newline="") as f:
            f.write(header)
            pd.concat([train, test], ignore_index=True).to_csv(
                f, sep="\t", index=False, header=False, lineterminator="\n"
            )
    except OSError as exc:
        raise ReportIoError(f"分割結果を書き込めません: {path}") from exc


def load_split(path: PathLike) -> TemporalSplit:
    """save_split で保存した分割結果を読み込む"""
    path = Path(path)
    with path.open(encoding="utf-8") as f:
        header = f.readline().split()
    if len(header) < 3 or header[1] != "subpop-split":
        raise ParseError(1, "分割キャッシュのヘッダーではありません")
    if header[2] != f"v{SPLIT_FORMAT_VERSION}":
        raise ParseError(1, f"未対応のバージョンです: {header[2]}")
    meta = dict(token.split("=", 1) for token in header[3:])

    frame = pd.read_csv(
        path, sep="\t", header=None, skiprows=1, dtype=str, keep_default_na=False,
        names=_COLUMNS + ["part"],
    )
    frame["timestamp"] = frame["timestamp"].astype(np.int64)
    frame["event"] = frame["event"].map(_EVENT_LOOKUP).astype(np.int8)
    frame["position"] = np.arange(len(frame), dtype=np.int64)
    log = EventLog.from_frame(frame)
    is_test = frame["part"].to_numpy()[log.positions] == "test"
    return TemporalSplit(
        train=log.select(~is_test),
        test=log.select(is_test),
        split_timestamp=int(meta["split_timestamp"]),
        holdout_fraction=float(meta["holdout_fraction"]),
    )

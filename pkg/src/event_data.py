from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Dict, Iterator, Optional, Sequence, Tuple

import numpy as np
import pandas as pd


class EventType(Enum):
    """インタラクションの種類"""
    PLAY = "play"
    LIKE = "like"
    SKIP = "skip"
    DISLIKE = "dislike"

    @property
    def code(self) -> int:
        """配列格納用の整数コード"""
        return _EVENT_CODES[self]

    @property
    def grade(self) -> int:
        """NDCG用の関連度ラベル"""
        return _EVENT_GRADES[self]

    @classmethod
    def parse(cls, raw: str) -> "EventType":
        """大文字小文字を区別せずに文字列から変換"""
        try:
            return cls(raw.strip().lower())
        except ValueError:
            raise ValueError(f"未知のイベント種別です: {raw!r}") from None

    @classmethod
    def from_code(cls, code: int) -> "EventType":
        return _EVENT_BY_CODE[int(code)]


_EVENT_CODES = {
    EventType.PLAY: 0,
    EventType.LIKE: 1,
    EventType.SKIP: 2,
    EventType.DISLIKE: 3,
}
_EVENT_BY_CODE = {code: event for event, code in _EVENT_CODES.items()}
_EVENT_GRADES = {
    EventType.LIKE: 2,
    EventType.PLAY: 1,
    EventType.SKIP: -1,
    EventType.DISLIKE: -2,
}

# コード順に並べた関連度ラベル（ベクトル化用）
GRADE_BY_CODE = np.array([_EVENT_GRADES[_EVENT_BY_CODE[c]] for c in range(4)], dtype=np.int8)


@dataclass(frozen=True)
class Event:
    """
    1件のインタラクション

    Attributes
    ----------
    user_id : str
        ユーザーID
    item_id : str
        アイテムID
    timestamp : int
        エポック秒
    event_type : EventType
        イベント種別
    """
    user_id: str
    item_id: str
    timestamp: int
    event_type: EventType

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError(f"タイムスタンプは非負である必要があります: {self.timestamp}")
        if not isinstance(self.event_type, EventType):
            raise ValueError(f"イベント種別が不正です: {self.event_type!r}")


@dataclass(frozen=True, eq=False)
class EventLog:
    """
    ユーザーごとに時系列順に並んだイベントログ（列指向）

    イベントは (ユーザー, タイムスタンプ, 入力順) の昇順に格納されます。
    構築後は読み取り専用で、複数スレッドから安全に参照できます。

    Attributes
    ----------
    user_ids : Tuple[str, ...]
        密なユーザーインデックス → ユーザーID
    item_ids : Tuple[str, ...]
        密なアイテムインデックス → アイテムID
    users : np.ndarray
        各イベントのユーザーインデックス
    items : np.ndarray
        各イベントのアイテムインデックス
    timestamps : np.ndarray
        各イベントのタイムスタンプ
    event_types : np.ndarray
        各イベントの種別コード（EventType.code）
    positions : np.ndarray
        入力ファイル上の順序（同時刻の順序付けに使用）
    """
    user_ids: Tuple[str, ...]
    item_ids: Tuple[str, ...]
    users: np.ndarray
    items: np.ndarray
    timestamps: np.ndarray
    event_types: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        n = len(self.users)
        for name in ("items", "timestamps", "event_types", "positions"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"列 {name} の長さがイベント数({n})と一致しません")
        if len(set(self.user_ids)) != len(self.user_ids):
            raise ValueError("ユーザーIDが重複しています")
        if len(set(self.item_ids)) != len(self.item_ids):
            raise ValueError("アイテムIDが重複しています")
        if n:
            if self.users.min() < 0 or self.users.max() >= len(self.user_ids):
                raise ValueError("ユーザーインデックスが範囲外です")
            if self.items.min() < 0 or self.items.max() >= len(self.item_ids):
                raise ValueError("アイテムインデックスが範囲外です")
            if self.timestamps.min() < 0:
                raise ValueError("タイムスタンプは非負である必要があります")
            same_user = self.users[1:] == self.users[:-1]
            if np.any(self.users[1:] < self.users[:-1]):
                raise ValueError("イベントがユーザー順に並んでいません")
            if np.any(same_user & (self.timestamps[1:] < self.timestamps[:-1])):
                raise ValueError("ユーザー内でタイムスタンプが減少しています")
        for name in ("users", "items", "timestamps", "event_types", "positions"):
            getattr(self, name).setflags(write=False)

    # ------------------------------------------------------------------
    # 構築
    # ------------------------------------------------------------------

    @classmethod
    def from_arrays(
        cls,
        user_ids: Sequence[str],
        item_ids: Sequence[str],
        users: np.ndarray,
        items: np.ndarray,
        timestamps: np.ndarray,
        event_types: np.ndarray,
        positions: Optional[np.ndarray] = None,
    ) -> "EventLog":
        """
        未整列の列からEventLogを構築

        Parameters
        ----------
        user_ids, item_ids : Sequence[str]
            インデックス → ID の対応
        users, items, timestamps, event_types : np.ndarray
            イベント列（任意の順序）
        positions : np.ndarray, optional
            入力順。省略時は与えられた順序
        """
        users = np.asarray(users, dtype=np.int32)
        if positions is None:
            positions = np.arange(len(users), dtype=np.int64)
        positions = np.asarray(positions, dtype=np.int64)
        timestamps = np.asarray(timestamps, dtype=np.int64)
        order = np.lexsort((positions, timestamps, users))
        return cls(
            user_ids=tuple(user_ids),
            item_ids=tuple(item_ids),
            users=users[order],
            items=np.asarray(items, dtype=np.int32)[order],
            timestamps=timestamps[order],
            event_types=np.asarray(event_types, dtype=np.int8)[order],
            positions=positions[order],
        )

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "EventLog":
        """
        文字列IDのDataFrameから構築

        列は ``user``, ``item``, ``timestamp``, ``event``（EventType.code）、
        任意で ``position``。インデックスはIDの昇順で割り当てます。
        """
        user_codes, user_ids = pd.factorize(frame["user"].astype(str), sort=True)
        item_codes, item_ids = pd.factorize(frame["item"].astype(str), sort=True)
        positions = frame["position"].to_numpy() if "position" in frame else None
        return cls.from_arrays(
            user_ids=[str(u) for u in user_ids],
            item_ids=[str(i) for i in item_ids],
            users=user_codes,
            items=item_codes,
            timestamps=frame["timestamp"].to_numpy(),
            event_types=frame["event"].to_numpy(),
            positions=positions,
        )

    @classmethod
    def from_events(cls, events: Sequence[Event]) -> "EventLog":
        """Eventのシーケンスから構築（入力順を保持）"""
        frame = pd.DataFrame({
            "user": [e.user_id for e in events],
            "item": [e.item_id for e in events],
            "timestamp": np.array([e.timestamp for e in events], dtype=np.int64),
            "event": np.array([e.event_type.code for e in events], dtype=np.int8),
        })
        return cls.from_frame(frame)

    def select(self, mask: np.ndarray) -> "EventLog":
        """インデックスを保ったままイベントの部分集合を取り出す"""
        return EventLog(
            user_ids=self.user_ids,
            item_ids=self.item_ids,
            users=self.users[mask],
            items=self.items[mask],
            timestamps=self.timestamps[mask],
            event_types=self.event_types[mask],
            positions=self.positions[mask],
        )

    # ------------------------------------------------------------------
    # 参照
    # ------------------------------------------------------------------

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_events(self) -> int:
        return len(self.users)

    @cached_property
    def user_index(self) -> Dict[str, int]:
        """ユーザーID → 密なインデックス"""
        return {user_id: idx for idx, user_id in enumerate(self.user_ids)}

    @cached_property
    def item_index(self) -> Dict[str, int]:
        """アイテムID → 密なインデックス"""
        return {item_id: idx for idx, item_id in enumerate(self.item_ids)}

    @cached_property
    def user_offsets(self) -> np.ndarray:
        """ユーザー u のイベントは offsets[u]:offsets[u+1]"""
        return np.searchsorted(self.users, np.arange(self.n_users + 1)).astype(np.int64)

    def history(self, user: int) -> np.ndarray:
        """ユーザーのアイテム系列（時系列順）"""
        start, end = self.user_offsets[user], self.user_offsets[user + 1]
        return self.items[start:end]

    def user_lengths(self) -> np.ndarray:
        """ユーザーごとのイベント数"""
        return np.diff(self.user_offsets)

    def active_users(self) -> np.ndarray:
        """イベントを1件以上持つユーザーのインデックス"""
        return np.flatnonzero(self.user_lengths() > 0)

    def item_counts(self) -> np.ndarray:
        """アイテムごとの総イベント数"""
        return np.bincount(self.items, minlength=self.n_items)

    def events(self) -> Iterator[Event]:
        """Eventとして順に取り出す"""
        for u, i, t, e in zip(self.users, self.items, self.timestamps, self.event_types):
            yield Event(
                user_id=self.user_ids[u],
                item_id=self.item_ids[i],
                timestamp=int(t),
                event_type=EventType.from_code(e),
            )

    def to_frame(self) -> pd.DataFrame:
        """文字列ID・イベント名のDataFrameに変換"""
        user_ids = np.asarray(self.user_ids, dtype=object)
        item_ids = np.asarray(self.item_ids, dtype=object)
        names = np.array([EventType.from_code(c).value for c in range(4)], dtype=object)
        return pd.DataFrame({
            "user": user_ids[self.users] if self.n_events else np.array([], dtype=object),
            "item": item_ids[self.items] if self.n_events else np.array([], dtype=object),
            "timestamp": self.timestamps,
            "event": names[self.event_types] if self.n_events else np.array([], dtype=object),
        })


@dataclass(frozen=True)
class TemporalSplit:
    """
    グローバル時系列分割

    Attributes
    ----------
    train : EventLog
        学習期間のイベント
    test : EventLog
        テスト期間のイベント
    split_timestamp : int
        分割時刻（train < split_timestamp <= test）
    holdout_fraction : float
        テストに割り当てた割合
    """
    train: EventLog
    test: EventLog
    split_timestamp: int
    holdout_fraction: float

    def __post_init__(self):
        if not 0 < self.holdout_fraction < 1:
            raise ValueError(
                f"holdout_fractionは(0, 1)の範囲である必要があります: {self.holdout_fraction}"
            )
        if self.train.n_events and self.train.timestamps.max() >= self.split_timestamp:
            raise ValueError("学習イベントが分割時刻以降を含んでいます")
        if self.test.n_events and self.test.timestamps.min() < self.split_timestamp:
            raise ValueError("テストイベントが分割時刻より前を含んでいます")
        if self.train.item_ids != self.test.item_ids or self.train.user_ids != self.test.user_ids:
            raise ValueError("学習とテストでインデックスが一致しません")

    @property
    def n_items(self) -> int:
        return self.train.n_items

    @property
    def n_users(self) -> int:
        return self.train.n_users

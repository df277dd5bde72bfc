"""
ベースとなる逐次推薦スコア（ロジット）

全てのスコアラーは全カタログ |I| に対する有限値のベクトルを返します。
構築後は不変で、``score`` は異なるユーザーに対して並行に呼び出せます。
"""

import logging
import threading
from abc import ABC, abstractmethod
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Set, Union

import numpy as np
import pandas as pd
from scipy import sparse

from src.codebook import Codebook, SubEmbeddingTable, reconstruct_all
from src.errors import DimensionMismatch, MissingUser, NonFiniteScore, ParseError
from src.event_data import EventLog

logger = logging.getLogger(__name__)

# 確率0の対数の代わりに使う下限
LOG_FLOOR = -50.0


class ScorerType(Enum):
    """ベーススコアラーの種類"""
    GLOBAL_POPULARITY = "globalpop"
    MARKOV = "markov"
    SVD_DOT = "svddot"
    EXTERNAL = "external"


class BaseScorer(ABC):
    """
    ベーススコアラーのインターフェース

    Attributes
    ----------
    n_items : int
        カタログのアイテム数
    """

    def __init__(self, n_items: int):
        self.n_items = n_items

    @abstractmethod
    def score(self, user: int, history: np.ndarray) -> np.ndarray:
        """
        全アイテムに対するロジットを返す

        Parameters
        ----------
        user : int
            ユーザーインデックス
        history : np.ndarray
            学習期間のアイテム系列（時系列順）

        Returns
        -------
        np.ndarray
            長さ n_items の有限値ベクトル
        """

    @property
    def fallback_users(self) -> Set[int]:
        """フォールバックしたユーザー（該当するスコアラーのみ）"""
        return set()


class GlobalPopularityScorer(BaseScorer):
    """全ユーザー共通の log(1 + 学習期間の総回数)"""

    def __init__(self, train: EventLog):
        if train.n_events == 0:
            raise ValueError("学習ログが空です")
        super().__init__(train.n_items)
        self.logits = np.log1p(train.item_counts().astype(np.float64))
        self.logits.setflags(write=False)

    def score(self, user: int, history: np.ndarray) -> np.ndarray:
        return self.logits.copy()


def global_popularity_scorer(train: EventLog) -> GlobalPopularityScorer:
    return GlobalPopularityScorer(train)


class MarkovScorer(BaseScorer):
    """
    一次マルコフ遷移によるスコアラー

    遷移回数は全ユーザーの学習系列から集計します。ユーザーの最後の
    アイテムが遷移元として一度も現れない場合はグローバル人気度に
    フォールバックし、そのユーザーを記録します。

    Attributes
    ----------
    smoothing : float
        加算スムージング
    transitions : scipy.sparse.csr_matrix
        |I|×|I| の遷移回数
    """

    def __init__(self, train: EventLog, smoothing: float = 0.0):
        if train.n_events == 0:
            raise ValueError("学習ログが空です")
        if smoothing < 0:
            raise ValueError(f"smoothing は非負である必要があります: {smoothing}")
        super().__init__(train.n_items)
        self.smoothing = smoothing
        same_user = train.users[1:] == train.users[:-1]
        sources = train.items[:-1][same_user].astype(np.int64)
        targets = train.items[1:][same_user].astype(np.int64)
        self.transitions = sparse.csr_matrix(
            (np.ones(len(sources), dtype=np.float64), (sources, targets)),
            shape=(self.n_items, self.n_items),
        )
        self.transitions.sum_duplicates()
        self.row_totals = np.asarray(self.transitions.sum(axis=1)).ravel()
        self.fallback = GlobalPopularityScorer(train)
        self._fallback_users: Set[int] = set()
        self._lock = threading.Lock()
        logger.info("マルコフ遷移を集計しました (遷移 %d 件)", len(sources))

    @property
    def fallback_users(self) -> Set[int]:
        with self._lock:
            return set(self._fallback_users)

    def score(self, user: int, history: np.ndarray) -> np.ndarray:
        if len(history) == 0 or self.row_totals[history[-1]] == 0:
            with self._lock:
                self._fallback_users.add(user)
            return self.fallback.score(user, history)
        source = int(history[-1])
        row = self.transitions[source].toarray().ravel()
        probs = (row + self.smoothing) / (self.row_totals[source] + self.smoothing * self.n_items)
        logits = np.full(self.n_items, LOG_FLOOR)
        positive = probs > 0
        logits[positive] = np.maximum(np.log(probs[positive]), LOG_FLOOR)
        return logits


def markov_scorer(train: EventLog, smoothing: float = 0.0) -> MarkovScorer:
    return MarkovScorer(train, smoothing)


class SvdDotScorer(BaseScorer):
    """
    再構成埋め込みの内積によるスコアラー

    ユーザーベクトルは直近 history_window 件の埋め込みの平均。
    """

    def __init__(
        self,
        cb: Codebook,
        table: SubEmbeddingTable,
        history_window: int = 50,
    ):
        table.check(cb)
        if history_window < 1:
            raise ValueError(f"history_window は1以上である必要があります: {history_window}")
        super().__init__(cb.n_items)
        self.embeddings = reconstruct_all(cb, table)
        self.embeddings.setflags(write=False)
        self.history_window = history_window

    def score(self, user: int, history: np.ndarray) -> np.ndarray:
        if len(history) == 0:
            return np.zeros(self.n_items)
        recent = np.asarray(history[-self.history_window:], dtype=np.int64)
        user_vector = self.embeddings[recent].mean(axis=0)
        return self.embeddings @ user_vector


def svd_dot_scorer(
    cb: Codebook,
    table: SubEmbeddingTable,
    train: Optional[EventLog] = None,
    history_window: int = 50,
) -> SvdDotScorer:
    """
    SvdDotScorer を生成

    train は整合性の確認にのみ使います（アイテム数がコードブックと一致すること）。
    """
    if train is not None and train.n_items != cb.n_items:
        raise DimensionMismatch(
            f"学習ログのアイテム数 {train.n_items} がコードブック {cb.n_items} と一致しません"
        )
    return SvdDotScorer(cb, table, history_window=history_window)


class ExternalLogits(BaseScorer):
    """
    外部で計算済みのロジット

    Attributes
    ----------
    logits : Dict[int, np.ndarray]
        ユーザーインデックス → 長さ |I| のロジット
    """

    def __init__(self, logits: Dict[int, np.ndarray], n_items: int, user_ids=None):
        super().__init__(n_items)
        for user, vector in logits.items():
            if len(vector) != n_items:
                raise DimensionMismatch(f"ユーザー {user} のロジット長 {len(vector)} が {n_items} ではありません")
            vector.setflags(write=False)
        self.logits = logits
        self.user_ids = user_ids

    def _user_label(self, user: int) -> str:
        return self.user_ids[user] if self.user_ids is not None else str(user)

    def require_users(self, users: Iterable[int]) -> None:
        """評価対象ユーザーが全て含まれていることを確認"""
        for user in users:
            if int(user) not in self.logits:
                raise MissingUser(self._user_label(int(user)))

    def score(self, user: int, history: np.ndarray) -> np.ndarray:
        if user not in self.logits:
            raise MissingUser(self._user_label(user))
        return self.logits[user].copy()


def load_external_logits(
    path: Union[str, Path],
    user_index: Mapping[str, int],
    item_index: Mapping[str, int],
    default: Optional[float] = None,
    eval_users: Optional[Iterable[int]] = None,
) -> ExternalLogits:
    """
    外部ロジットファイルを読み込む

    形式は2種類（TSV、列数で判別）:

    - 密形式: ``user<TAB>s_1,…,s_|I|``（アイテムインデックス順）
    - 疎形式: ``user<TAB>item<TAB>score``。記載のないアイテムには default を使用

    Parameters
    ----------
    path : str or Path
        ファイルパス
    user_index, item_index : Mapping[str, int]
        ID → 密なインデックス
    default : float, optional
        疎形式で記載のないアイテムの値（疎形式では必須）
    eval_users : Iterable[int], optional
        指定時は全員が含まれることを検証

    Raises
    ------
    MissingUser
        評価対象ユーザーがファイルにない場合
    NonFiniteScore
        NaN や無限大が含まれる場合
    """
    frame = pd.read_csv(
        path, sep="\t", header=None, dtype=str, keep_default_na=False, comment="#",
    )
    n_items = len(item_index)
    logits: Dict[int, np.ndarray] = {}

    if frame.shape[1] == 2:
        for row, (user_id, values) in enumerate(frame.itertuples(index=False, name=None), start=1):
            if user_id not in user_index:
                logger.debug("未知のユーザーを読み飛ばします: %s", user_id)
                continue
            try:
                vector = np.array([float(v) for v in values.split(",")], dtype=np.float64)
            except ValueError:
                raise ParseError(row, "スコアを数値に変換できません") from None
            if not np.all(np.isfinite(vector)):
                raise NonFiniteScore(row)
            if len(vector) != n_items:
                raise DimensionMismatch(f"{row}行目: スコア数 {len(vector)} が {n_items} ではありません")
            logits[user_index[user_id]] = vector
    elif frame.shape[1] == 3:
        if default is None or not np.isfinite(default):
            raise ValueError("疎形式のロジットには有限の default が必要です")
        scores = pd.to_numeric(frame[2], errors="coerce").to_numpy()
        bad = np.flatnonzero(~np.isfinite(scores))
        if bad.size:
            raise NonFiniteScore(int(bad[0]) + 1)
        dropped = 0
        for user_id, item_id, value in zip(frame[0], frame[1], scores):
            if user_id not in user_index or item_id not in item_index:
                dropped += 1
                continue
            user = user_index[user_id]
            if user not in logits:
                logits[user] = np.full(n_items, float(default))
            logits[user][item_index[item_id]] = value
        if dropped:
            logger.warning("未知のユーザーまたはアイテムの行を %d 行読み飛ばしました: %s", dropped, path)
    else:
        raise ParseError(1, f"外部ロジットの列数 {frame.shape[1]} は2または3である必要があります")

    user_ids = [None] * len(user_index)
    for user_id, idx in user_index.items():
        user_ids[idx] = user_id
    external = ExternalLogits(logits, n_items, user_ids=user_ids)
    if eval_users is not None:
        external.require_users(eval_users)
    logger.info("外部ロジットを読み込みました: %s (%d ユーザー)", path, len(logits))
    return external

"""
パーソナライズド人気度 (PPS) とサブID単位の人気度 (sPPS)
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Union

import numpy as np
import pandas as pd

from src.codebook import Codebook
from src.errors import IndexOutOfRange, ReportIoError

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1.0


@dataclass(frozen=True, eq=False)
class UserPopularityProfile:
    """
    1ユーザーの学習履歴から数えた回数

    Attributes
    ----------
    user : int
        ユーザーインデックス
    item_counts : Dict[int, int]
        アイテム → 回数 c_i（0回のアイテムは含まない）
    subid_counts : np.ndarray
        m×V の表。subid_counts[j, k] は分割 j でサブID k が現れた回数
    history_length : int
        学習履歴の長さ |S_u|
    """
    user: int
    item_counts: Dict[int, int]
    subid_counts: np.ndarray
    history_length: int

    def __post_init__(self):
        if sum(self.item_counts.values()) != self.history_length:
            raise ValueError("アイテム回数の合計が履歴長と一致しません")
        if self.subid_counts.ndim != 2:
            raise ValueError("subid_counts は m×V の2次元配列である必要があります")
        split_totals = self.subid_counts.sum(axis=1)
        if np.any(split_totals != self.history_length):
            raise ValueError("各分割のサブID回数の合計が履歴長と一致しません")
        self.subid_counts.setflags(write=False)

    def count(self, item: int) -> int:
        return self.item_counts.get(item, 0)

    def item_count_vector(self, n_items: int) -> np.ndarray:
        """長さ n_items の回数ベクトル"""
        counts = np.zeros(n_items, dtype=np.int64)
        if self.item_counts:
            items = np.fromiter(self.item_counts.keys(), dtype=np.int64)
            counts[items] = np.fromiter(self.item_counts.values(), dtype=np.int64)
        return counts


def build_profile(user_history: Iterable[int], cb: Codebook, user: int = -1) -> UserPopularityProfile:
    """
    学習履歴からアイテム回数とサブID回数を数える

    Parameters
    ----------
    user_history : Iterable[int]
        アイテムインデックスの系列
    cb : Codebook
        コードブック
    user : int, optional
        ユーザーインデックス（記録用）

    Returns
    -------
    UserPopularityProfile

    Raises
    ------
    IndexOutOfRange
        履歴にコードブック範囲外のアイテムがある場合
    """
    if not isinstance(user_history, np.ndarray):
        user_history = list(user_history)
    history = np.asarray(user_history, dtype=np.int64)
    if history.size and (history.min() < 0 or history.max() >= cb.n_items):
        raise IndexOutOfRange(f"履歴にコードブック範囲 [0, {cb.n_items}) 外のアイテムがあります")

    items, counts = np.unique(history, return_counts=True)
    subid_counts = np.zeros((cb.m, cb.V), dtype=np.int64)
    if history.size:
        codes = cb.codes[history]
        for j in range(cb.m):
            subid_counts[j] = np.bincount(codes[:, j], minlength=cb.V)
    return UserPopularityProfile(
        user=user,
        item_counts={int(i): int(c) for i, c in zip(items, counts)},
        subid_counts=subid_counts,
        history_length=int(history.size),
    )


def _check_epsilon(epsilon: float) -> None:
    if epsilon <= 0:
        raise ValueError(f"epsilon は正である必要があります: {epsilon}")


def pps_raw(profile: UserPopularityProfile, item: int, epsilon: float = DEFAULT_EPSILON) -> float:
    """PPS_i = log(c_i + ε)"""
    _check_epsilon(epsilon)
    return float(np.log(profile.count(item) + epsilon))


def spps_raw(
    profile: UserPopularityProfile,
    item: int,
    cb: Codebook,
    epsilon: float = DEFAULT_EPSILON,
) -> float:
    """sPPS_i = Σ_j log(c_j[z_j(i)] + ε)"""
    _check_epsilon(epsilon)
    if not 0 <= item < cb.n_items:
        raise IndexOutOfRange(f"アイテムインデックス {item} は [0, {cb.n_items}) の範囲外です")
    counts = profile.subid_counts[np.arange(cb.m), cb.codes[item]]
    return float(np.sum(np.log(counts + epsilon)))


def pps_vector(profile: UserPopularityProfile, n_items: int, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """全アイテムの PPS_i"""
    _check_epsilon(epsilon)
    return np.log(profile.item_count_vector(n_items) + epsilon)


def spps_vector(profile: UserPopularityProfile, cb: Codebook, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """全アイテムの sPPS_i"""
    _check_epsilon(epsilon)
    log_counts = np.log(profile.subid_counts + epsilon)
    return log_counts[np.arange(cb.m)[None, :], cb.codes].sum(axis=1)


@dataclass(frozen=True, eq=False)
class StandardizedScores:
    """
    Zスコア化したスコア

    Attributes
    ----------
    values : np.ndarray
        標準化後の値
    mu : float
        元の平均
    sigma : float
        元の母標準偏差（0なら values は全て0）
    """
    values: np.ndarray
    mu: float
    sigma: float


def standardize(raw: np.ndarray) -> StandardizedScores:
    """
    全候補アイテムに対するZスコア化（母標準偏差）

    Parameters
    ----------
    raw : np.ndarray
        長さ |I| のスコア（|I| >= 1）

    Returns
    -------
    StandardizedScores
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size == 0:
        raise ValueError("空のベクトルは標準化できません")
    mu = float(raw.mean())
    sigma = float(raw.std())
    if sigma == 0.0 or np.all(raw == raw[0]):
        return StandardizedScores(values=np.zeros_like(raw), mu=mu, sigma=0.0)
    return StandardizedScores(values=(raw - mu) / sigma, mu=mu, sigma=sigma)


def dump_profiles(
    profiles: Iterable[UserPopularityProfile],
    item_path: Union[str, Path],
    subid_path: Union[str, Path],
) -> None:
    """
    プロファイルをデバッグ用TSVに書き出す

    ``user, item, count`` と ``user, split, code, count`` の2ファイル。
    """
    item_rows = []
    subid_rows = []
    for profile in profiles:
        for item, count in sorted(profile.item_counts.items()):
            item_rows.append((profile.user, item, count))
        splits, codes = np.nonzero(profile.subid_counts)
        for j, k in zip(splits, codes):
            subid_rows.append((profile.user, int(j), int(k), int(profile.subid_counts[j, k])))
    try:
        pd.DataFrame(item_rows, columns=["user", "item", "count"]).to_csv(
            item_path, sep="\t", index=False, lineterminator="\n"
        )
        pd.DataFrame(subid_rows, columns=["user", "split", "code", "count"]).to_csv(
            subid_path, sep="\t", index=False, lineterminator="\n"
        )
    except OSError as exc:
        raise ReportIoError(f"プロファイルを書き込めません: {item_path}") from exc
    logger.info("プロファイルを書き出しました: %s, %s", item_path, subid_path)

"""
NDCG@K（段階的関連度）とパーソナライズド Novelty@K
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd

from src.errors import DuplicateInRecs, EmptyHistory
from src.event_data import GRADE_BY_CODE, EventLog
from src.popularity import UserPopularityProfile

DEFAULT_K = 40
NOVELTY_EPSILON = 1e-8


@dataclass(frozen=True)
class RelevanceProfile:
    """
    テスト期間から作る関連度ラベル

    Attributes
    ----------
    grades : Dict[int, Dict[int, int]]
        ユーザー → (アイテム → 関連度 {2, 1, -1, -2})
    """
    grades: Dict[int, Dict[int, int]]

    def for_user(self, user: int) -> Dict[int, int]:
        return self.grades.get(user, {})

    def users(self) -> np.ndarray:
        """ラベルを持つユーザー（昇順）"""
        return np.array(sorted(self.grades), dtype=np.int64)


def build_relevance(test: EventLog) -> RelevanceProfile:
    """
    テストイベントから (ユーザー, アイテム) ごとに1つの関連度を決める

    絶対値が最大のラベルを残し、絶対値が同じ場合は後のイベントを採用します。

    Parameters
    ----------
    test : EventLog
        テスト期間のイベント

    Returns
    -------
    RelevanceProfile
    """
    if test.n_events == 0:
        return RelevanceProfile(grades={})
    grades = GRADE_BY_CODE[test.event_types].astype(np.int64)
    frame = pd.DataFrame({
        "user": test.users,
        "item": test.items,
        "grade": grades,
        "magnitude": np.abs(grades),
        # ユーザー内は時系列順に格納されている
        "order": np.arange(test.n_events),
    })
    kept = (
        frame.sort_values(["user", "item", "magnitude", "order"])
        .drop_duplicates(["user", "item"], keep="last")
    )
    result: Dict[int, Dict[int, int]] = {}
    for user, item, grade in zip(kept["user"], kept["item"], kept["grade"]):
        result.setdefault(int(user), {})[int(item)] = int(grade)
    return RelevanceProfile(grades=result)


def dcg_at_k(recs: Sequence[int], rel: Dict[int, int], k: int) -> float:
    """負のラベルと未評価アイテムは関連度0"""
    gains = np.array([max(rel.get(int(item), 0), 0) for item in recs[:k]], dtype=np.float64)
    discounts = np.log2(np.arange(2, len(gains) + 2))
    return float(np.sum(gains / discounts))


def idcg_at_k(rel: Dict[int, int], k: int) -> float:
    """ユーザーの正の関連度を降順に並べた場合のDCG"""
    gains = np.sort(np.array([g for g in rel.values() if g > 0], dtype=np.float64))[::-1][:k]
    discounts = np.log2(np.arange(2, len(gains) + 2))
    return float(np.sum(gains / discounts))


def ndcg_at_k(recs: Sequence[int], rel: Dict[int, int], k: int = DEFAULT_K) -> Optional[float]:
    """
    NDCG@K

    Parameters
    ----------
    recs : Sequence[int]
        推薦リスト（重複なし、順位順）
    rel : Dict[int, int]
        ユーザーの関連度
    k : int
        カットオフ（k <= len(recs)）

    Returns
    -------
    float or None
        IDCG=0 のユーザーは評価対象外として None

    Raises
    ------
    DuplicateInRecs
        推薦リストに重複がある場合
    """
    recs = [int(item) for item in recs]
    if len(set(recs)) != len(recs):
        raise DuplicateInRecs("推薦リストに重複したアイテムがあります")
    if not 1 <= k <= len(recs):
        raise ValueError(f"k は 1 以上 {len(recs)} 以下である必要があります: {k}")
    ideal = idcg_at_k(rel, k)
    if ideal == 0.0:
        return None
    return dcg_at_k(recs, rel, k) / ideal


def novelty_at_k(
    recs: Sequence[int],
    profile: UserPopularityProfile,
    k: int = DEFAULT_K,
    epsilon: float = NOVELTY_EPSILON,
) -> float:
    """
    Novelty@K = (1/K) Σ −log2(max(c_i / Σc, ε))

    Parameters
    ----------
    recs : Sequence[int]
        推薦リスト（順位順）
    profile : UserPopularityProfile
        学習履歴の回数
    k : int
        カットオフ（k <= len(recs)）
    epsilon : float
        確率の下限

    Raises
    ------
    EmptyHistory
        学習履歴が空の場合
    """
    if profile.history_length == 0:
        raise EmptyHistory(f"ユーザー {profile.user} の学習履歴が空です")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon は (0, 1) の範囲である必要があります: {epsilon}")
    if not 1 <= k <= len(recs):
        raise ValueError(f"k は 1 以上 {len(recs)} 以下である必要があります: {k}")
    counts = np.array([profile.count(int(item)) for item in recs[:k]], dtype=np.float64)
    probs = np.maximum(counts / profile.history_length, epsilon)
    # p=1 で -0.0 にならないよう 0 を足す
    return float(np.mean(-np.log2(probs))) + 0.0

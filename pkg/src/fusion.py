"""
ベースロジットと標準化済み PPS / sPPS の凸結合
"""

from dataclasses import dataclass

import numpy as np

from src.errors import DimensionMismatch, WeightViolation

# α + β <= 1 の判定に使う許容誤差（0.7 + 0.3 などの丸め誤差を吸収）
_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class FusionWeights:
    """
    融合重み

    Attributes
    ----------
    alpha : float
        PPS の重み
    beta : float
        sPPS の重み
    """
    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0) or not (0.0 <= self.beta <= 1.0):
            raise WeightViolation(
                f"α, β は [0, 1] の範囲である必要があります: α={self.alpha}, β={self.beta}"
            )
        if self.alpha + self.beta > 1.0 + _WEIGHT_TOL:
            raise WeightViolation(
                f"α + β は1以下である必要があります: α={self.alpha}, β={self.beta}"
            )

    @property
    def gamma(self) -> float:
        """ベースロジットの重み γ = 1 − α − β"""
        return max(0.0, 1.0 - self.alpha - self.beta)


@dataclass(frozen=True, eq=False)
class ScoreVector:
    """
    1ユーザー分のスコア一式

    Attributes
    ----------
    base : np.ndarray
        ベーススコアラーのロジット
    pps_std : np.ndarray
        標準化済み PPS
    spps_std : np.ndarray
        標準化済み sPPS
    fused : np.ndarray
        融合後のスコア
    """
    base: np.ndarray
    pps_std: np.ndarray
    spps_std: np.ndarray
    fused: np.ndarray

    def __post_init__(self):
        n = len(self.base)
        for name in ("pps_std", "spps_std", "fused"):
            vector = getattr(self, name)
            if len(vector) != n:
                raise DimensionMismatch(f"{name} の長さ {len(vector)} が {n} ではありません")
        for name in ("base", "pps_std", "spps_std", "fused"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} に非有限値が含まれています")


def fuse(
    base: np.ndarray,
    pps_std: np.ndarray,
    spps_std: np.ndarray,
    w: FusionWeights,
) -> np.ndarray:
    """
    γ·base + α·PPS_std + β·sPPS_std

    Parameters
    ----------
    base, pps_std, spps_std : np.ndarray
        同じ長さのスコア
    w : FusionWeights
        重み

    Returns
    -------
    np.ndarray
        融合スコア
    """
    if not (len(base) == len(pps_std) == len(spps_std)):
        raise DimensionMismatch(
            f"スコアの長さが一致しません: {len(base)}, {len(pps_std)}, {len(spps_std)}"
        )
    return w.gamma * np.asarray(base) + w.alpha * np.asarray(pps_std) + w.beta * np.asarray(spps_std)


def score_vector(
    base: np.ndarray,
    pps_std: np.ndarray,
    spps_std: np.ndarray,
    w: FusionWeights,
) -> ScoreVector:
    """融合を行い、入力と結果をまとめて返す"""
    return ScoreVector(base=base, pps_std=pps_std, spps_std=spps_std, fused=fuse(base, pps_std, spps_std, w))


def rank_top_k(fused: np.ndarray, k: int) -> np.ndarray:
    """
    スコア上位 k アイテムを降順に返す

    同点はアイテムインデックスの昇順。

    Parameters
    ----------
    fused : np.ndarray
        スコア
    k : int
        件数（1 <= k <= |I|）

    Returns
    -------
    np.ndarray
        アイテムインデックス（長さ k）
    """
    scores = np.asarray(fused)
    n = len(scores)
    if not 1 <= k <= n:
        raise ValueError(f"k は 1 以上 {n} 以下である必要があります: {k}")
    if k == n:
        return np.lexsort((np.arange(n), -scores))
    candidates = np.argpartition(-scores, k - 1)[:k]
    threshold = scores[candidates].min()
    above = np.flatnonzero(scores > threshold)
    tied = np.flatnonzero(scores == threshold)[: k - len(above)]
    chosen = np.concatenate([above, tied])
    return chosen[np.lexsort((chosen, -scores[chosen]))]

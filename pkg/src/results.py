from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from src.errors import ReportIoError

MISSING_CELL = "—"


@dataclass
class DatasetStatistics:
    """
    データセットの統計量

    Attributes
    ----------
    users : int
        イベントを持つユーザー数
    items : int
        イベントを持つアイテム数
    interactions : int
        総イベント数
    avg_len : float
        ユーザーあたりの平均イベント数
    med_len : float
        ユーザーあたりのイベント数の中央値
    """
    users: int
    items: int
    interactions: int
    avg_len: float
    med_len: float

    def summary(self) -> str:
        """
        統計量を表形式の文字列で返す

        Returns
        -------
        str
            統計量のサマリー
        """
        lines = [
            f"ユーザー数: {self.users}",
            f"アイテム数: {self.items}",
            f"インタラクション数: {self.interactions}",
            f"平均系列長: {self.avg_len:.0f}",
            f"系列長の中央値: {self.med_len:.0f}",
        ]
        return "\n".join(lines)


@dataclass
class MetricReport:
    """
    1つの設定に対する評価結果

    Attributes
    ----------
    k : int
        カットオフ
    ndcg_at_k : float
        評価ユーザー平均のNDCG@K
    novelty_at_k : float
        評価ユーザー平均のNovelty@K
    users : np.ndarray
        評価ユーザーのインデックス（昇順）
    per_user_ndcg : np.ndarray
        ユーザーごとのNDCG@K
    per_user_novelty : np.ndarray
        ユーザーごとのNovelty@K
    users_excluded : int
        除外ユーザー数（IDCG=0 または学習履歴なし）
    """
    k: int
    ndcg_at_k: float
    novelty_at_k: float
    users: np.ndarray
    per_user_ndcg: np.ndarray
    per_user_novelty: np.ndarray
    users_excluded: int = 0

    def __post_init__(self):
        if not (len(self.users) == len(self.per_user_ndcg) == len(self.per_user_novelty)):
            raise ValueError("ユーザーごとの評価値の長さが一致しません")

    @classmethod
    def from_per_user(
        cls,
        k: int,
        users: np.ndarray,
        ndcg: np.ndarray,
        novelty: np.ndarray,
        users_excluded: int = 0,
    ) -> "MetricReport":
        """ユーザーごとの値から平均を計算して生成（固定順の総和）"""
        ndcg = np.asarray(ndcg, dtype=np.float64)
        novelty = np.asarray(novelty, dtype=np.float64)
        return cls(
            k=k,
            ndcg_at_k=float(np.sum(ndcg) / len(ndcg)) if len(ndcg) else 0.0,
            novelty_at_k=float(np.sum(novelty) / len(novelty)) if len(novelty) else 0.0,
            users=np.asarray(users, dtype=np.int64),
            per_user_ndcg=ndcg,
            per_user_novelty=novelty,
            users_excluded=users_excluded,
        )

    @property
    def users_evaluated(self) -> int:
        return len(self.users)

    def summary(self) -> str:
        """
        結果のサマリーを文字列で返す

        Returns
        -------
        str
            結果のサマリー
        """
        lines = [
            f"NDCG@{self.k}: {self.ndcg_at_k:.4f}",
            f"Novelty@{self.k}: {self.novelty_at_k:.4f}",
            f"評価ユーザー数: {self.users_evaluated}",
            f"除外ユーザー数: {self.users_excluded}",
        ]
        return "\n".join(lines)


@dataclass(frozen=True)
class TradeoffRow:
    """スイープの1グリッド点の集計値"""
    mode: str
    alpha: float
    beta: float
    ndcg: float
    novelty: float
    users_evaluated: int
    users_excluded: int


@dataclass
class TradeoffReport:
    """
    (α, β) スイープの結果

    行ごとにユーザー単位の評価値も保持するため、閾値表や図は
    再ランキングせずに作り直せます。

    Attributes
    ----------
    k : int
        カットオフ
    rows : List[TradeoffRow]
        グリッド点ごとの集計
    details : List[MetricReport]
        rows と同じ順序のユーザー単位の評価
    cold_start_users : int
        ベーススコアラーがフォールバックしたユーザー数
    """
    k: int
    rows: List[TradeoffRow] = field(default_factory=list)
    details: List[MetricReport] = field(default_factory=list)
    cold_start_users: int = 0

    def __post_init__(self):
        if len(self.rows) != len(self.details):
            raise ValueError("rows と details の長さが一致しません")

    def modes(self) -> List[str]:
        """出現順のモード一覧"""
        return list(dict.fromkeys(row.mode for row in self.rows))

    def rows_for(self, mode: str) -> List[TradeoffRow]:
        return [row for row in self.rows if row.mode == mode]

    def to_frame(self) -> pd.DataFrame:
        """出力用のDataFrame"""
        return pd.DataFrame(
            [
                {
                    "mode": row.mode,
                    "alpha": row.alpha,
                    "beta": row.beta,
                    f"ndcg@{self.k}": row.ndcg,
                    f"novelty@{self.k}": row.novelty,
                    "users_evaluated": row.users_evaluated,
                    "users_excluded": row.users_excluded,
                }
                for row in self.rows
            ],
            columns=[
                "mode", "alpha", "beta", f"ndcg@{self.k}", f"novelty@{self.k}",
                "users_evaluated", "users_excluded",
            ],
        )

    def to_tsv(self, path: Union[str, Path]) -> None:
        """TSVとして書き出す（書式固定でバイト単位で再現可能）"""
        try:
            self.to_frame().to_csv(
                path, sep="\t", index=False, float_format="%.6f", lineterminator="\n"
            )
        except OSError as exc:
            raise ReportIoError(f"レポートを書き込めません: {path}") from exc

    def summary(self) -> str:
        """
        結果のサマリーを文字列で返す

        Returns
        -------
        str
            結果のサマリー
        """
        lines = [f"{'mode':<10} {'alpha':>5} {'beta':>5} {'NDCG@' + str(self.k):>9} {'Nov@' + str(self.k):>8}"]
        for row in self.rows:
            lines.append(
                f"{row.mode:<10} {row.alpha:>5.2f} {row.beta:>5.2f} "
                f"{row.ndcg:>9.4f} {row.novelty:>8.3f}"
            )
        if self.cold_start_users:
            lines.append(f"コールドスタートのフォールバック: {self.cold_start_users}ユーザー")
        return "\n".join(lines)


@dataclass
class ThresholdTable:
    """
    新規性の閾値ごとの最大NDCG

    Attributes
    ----------
    k : int
        カットオフ
    thresholds : List[float]
        新規性の閾値 τ
    values : Dict[str, List[Optional[float]]]
        モード → 閾値ごとの最大NDCG（該当なしは None）
    """
    k: int
    thresholds: List[float]
    values: Dict[str, List[Optional[float]]]

    def value(self, mode: str, threshold: float) -> Optional[float]:
        return self.values[mode][self.thresholds.index(threshold)]

    def to_frame(self) -> pd.DataFrame:
        """モードを行、閾値を列とした表（該当なしは「—」）"""
        columns = [f"novelty>={t:g}" for t in self.thresholds]
        data = {
            mode: [MISSING_CELL if v is None else f"{v:.4f}" for v in values]
            for mode, values in self.values.items()
        }
        return pd.DataFrame.from_dict(data, orient="index", columns=columns)

    def summary(self) -> str:
        """
        表を文字列で返す

        Returns
        -------
        str
            閾値表
        """
        return f"NDCG@{self.k}\n" + self.to_frame().to_string()

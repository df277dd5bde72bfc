from dataclasses import dataclass
from typing import List, Optional, Sequence

from src.results import TradeoffReport, TradeoffRow

PPS_MODE = "pps-only"
SPPS_MODE = "spps-only"


@dataclass(frozen=True)
class MatchedPair:
    """
    NDCG がほぼ等しい PPS 点と sPPS 点の組

    Attributes
    ----------
    pps : TradeoffRow
        pps-only の行
    spps : TradeoffRow
        spps-only の行
    """
    pps: TradeoffRow
    spps: TradeoffRow

    @property
    def ndcg_gap(self) -> float:
        """|NDCG(sPPS) − NDCG(PPS)|"""
        return abs(self.spps.ndcg - self.pps.ndcg)

    @property
    def novelty_gain(self) -> float:
        """PPS に対する sPPS の新規性の相対増加"""
        if self.pps.novelty > 0:
            return (self.spps.novelty - self.pps.novelty) / self.pps.novelty
        return float("inf") if self.spps.novelty > 0 else 0.0


class SignalComparison:
    """
    同程度の精度における PPS と sPPS の新規性の比較

    pps-only と spps-only のスイープから、NDCG の差が tolerance 以下の
    全ての組を作ります。

    Attributes
    ----------
    tolerance : float
        NDCG の差の許容幅
    pairs : List[MatchedPair]
        新規性の相対増加が大きい順の組
    """

    def __init__(
        self,
        pps_rows: Sequence[TradeoffRow],
        spps_rows: Sequence[TradeoffRow],
        tolerance: float = 0.01,
    ):
        """
        Parameters
        ----------
        pps_rows : Sequence[TradeoffRow]
            pps-only スイープの行
        spps_rows : Sequence[TradeoffRow]
            spps-only スイープの行
        tolerance : float, optional
            NDCG の差の許容幅（デフォルト: 0.01）
        """
        if tolerance < 0:
            raise ValueError(f"tolerance は非負である必要があります: {tolerance}")
        self.tolerance = tolerance
        pairs = [
            MatchedPair(pps=p, spps=s)
            for p in pps_rows
            for s in spps_rows
            if abs(s.ndcg - p.ndcg) <= tolerance
        ]
        # 同じ増加率なら NDCG の差が小さい組を先に
        self.pairs: List[MatchedPair] = sorted(pairs, key=lambda pair: (-pair.novelty_gain, pair.ndcg_gap))

    @classmethod
    def from_report(cls, report: TradeoffReport, tolerance: float = 0.01) -> "SignalComparison":
        """pps-only と spps-only の両方を含むレポートから生成"""
        pps_rows = report.rows_for(PPS_MODE)
        spps_rows = report.rows_for(SPPS_MODE)
        if not pps_rows or not spps_rows:
            raise ValueError("pps-only と spps-only の両方の行が必要です")
        return cls(pps_rows, spps_rows, tolerance)

    def best_pair(self) -> Optional[MatchedPair]:
        """新規性の相対増加が最大の組（組がなければ None）"""
        return self.pairs[0] if self.pairs else None

    def spps_more_novel(self, min_gain: float = 0.05) -> bool:
        """相対増加が min_gain 以上の組が少なくとも1つあるか"""
        best = self.best_pair()
        return best is not None and best.novelty_gain >= min_gain

    def summary(self) -> str:
        """
        比較結果のサマリーを文字列で返す

        Returns
        -------
        str
            比較結果のサマリー
        """
        lines = [f"同程度の精度での比較（|ΔNDCG| <= {self.tolerance:g}）: {len(self.pairs)} 組"]
        best = self.best_pair()
        if best is None:
            lines.append("条件を満たす組はありません")
            return "\n".join(lines)
        lines += [
            f"PPS  α={best.pps.alpha:.2f}: NDCG {best.pps.ndcg:.4f}, Novelty {best.pps.novelty:.3f}",
            f"sPPS β={best.spps.beta:.2f}: NDCG {best.spps.ndcg:.4f}, Novelty {best.spps.novelty:.3f}",
            f"新規性の相対増加: {best.novelty_gain:+.1%}",
        ]
        return "\n".join(lines)

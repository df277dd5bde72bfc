import os
from pathlib import Path
from typing import Optional, Tuple, Union

import matplotlib
import matplotlib.font_manager as fm
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns
from matplotlib.figure import Figure

from src.errors import ReportIoError
from src.results import ThresholdTable, TradeoffReport


def setup_japanese_font():
    """日本語フォントを設定する（Streamlitアプリ用、seabornベース）"""
    font_paths = [
        '/usr/share/fonts/opentype/noto/NotoSansCJK-Regular.ttc',
        '/usr/share/fonts/truetype/noto/NotoSansCJK-Regular.ttc',
        '/System/Library/Fonts/ヒラギノ角ゴシック W4.ttc',  # macOS
        'C:\\Windows\\Fonts\\msgothic.ttc',  # Windows
    ]
    fallback = ['Noto Sans CJK JP', 'Noto Sans JP', 'DejaVu Sans']
    font_file = next((p for p in font_paths if os.path.exists(p)), None)
    plt.rcParams['font.family'] = 'sans-serif'
    if font_file:
        fm.fontManager.addfont(font_file)
        font_name = fm.FontProperties(fname=font_file).get_name()
        plt.rcParams['font.sans-serif'] = [font_name] + fallback
    else:
        plt.rcParams['font.sans-serif'] = fallback
    plt.rcParams['axes.unicode_minus'] = False
    sns.set_context("notebook", font_scale=1.1)
    sns.set_style("whitegrid", {
        'font.family': 'sans-serif',
        'font.sans-serif': plt.rcParams['font.sans-serif'],
    })


# カラーパレット（PPS は赤、sPPS は青、両方の統合は緑）
COLORS = {
    'pps-only': '#e74c3c',
    'spps-only': '#3498db',
    'combined': '#2ecc71',
    'neutral': '#95a5a6',
}

MODE_LABELS = {
    'pps-only': 'PPS (sweep α, β=0)',
    'spps-only': 'sPPS (sweep β, α=0)',
    'combined': 'PPS + sPPS (sweep α, fixed β)',
}

# SVG をバイト単位で再現させるための設定
_SVG_RC = {
    'svg.hashsalt': 'subpop-tradeoff',
    'svg.fonttype': 'path',
    'font.family': 'sans-serif',
    'font.sans-serif': ['DejaVu Sans'],
    'axes.unicode_minus': True,
}


def _weight_label(mode: str, alpha: float, beta: float) -> str:
    return f"β={beta:.2f}" if mode == 'spps-only' else f"α={alpha:.2f}"


def emit_plot(report: TradeoffReport, path: Union[str, Path]) -> None:
    """
    精度と新規性のトレードオフ曲線をSVGで書き出す

    横軸 Novelty@K、縦軸 NDCG@K。モードごとに1本の折れ線を描き、
    各線には ``curve-<mode>`` の gid を付けます。同じ入力からは
    常に同じバイト列になります。

    Parameters
    ----------
    report : TradeoffReport
        2行以上のスイープ結果
    path : str or Path
        出力先

    Raises
    ------
    ValueError
        行数が2未満の場合
    ReportIoError
        書き込みに失敗した場合
    """
    if len(report.rows) < 2:
        raise ValueError(f"図には2行以上の結果が必要です: {len(report.rows)}行")

    with matplotlib.rc_context(_SVG_RC):
        fig = Figure(figsize=(7, 5))
        ax = fig.add_subplot(1, 1, 1)
        for mode in report.modes():
            rows = report.rows_for(mode)
            ax.plot(
                [row.novelty for row in rows],
                [row.ndcg for row in rows],
                marker='o',
                linewidth=2,
                color=COLORS.get(mode, COLORS['neutral']),
                label=MODE_LABELS.get(mode, mode),
                gid=f"curve-{mode}",
            )
        ax.set_xlabel(f"Novelty@{report.k}")
        ax.set_ylabel(f"NDCG@{report.k}")
        ax.set_title("Accuracy / novelty trade-off")
        ax.grid(True, alpha=0.3, linestyle=':')
        ax.legend(loc='best')
        fig.tight_layout()
        try:
            fig.savefig(path, format='svg', metadata={'Date': None})
        except OSError as exc:
            raise ReportIoError(f"図を書き込めません: {path}") from exc


def plot_tradeoff(
    report: TradeoffReport,
    annotate: bool = True,
    figsize: Tuple[int, int] = (10, 6)
) -> plt.Figure:
    """
    トレードオフ曲線（アプリ表示用）

    Parameters
    ----------
    report : TradeoffReport
        スイープ結果
    annotate : bool, optional
        各点に α / β を表示するか（デフォルト: True）
    figsize : Tuple[int, int], optional
        図のサイズ

    Returns
    -------
    plt.Figure
        matplotlibのfigureオブジェクト
    """
    frame = report.to_frame()
    frame['系列'] = frame['mode'].map(lambda m: MODE_LABELS.get(m, m))
    palette = {MODE_LABELS.get(m, m): COLORS.get(m, COLORS['neutral']) for m in report.modes()}

    fig, ax = plt.subplots(figsize=figsize)
    sns.lineplot(
        data=frame, x=f"novelty@{report.k}", y=f"ndcg@{report.k}", hue='系列',
        palette=palette, marker='o', sort=False, linewidth=2.5, ax=ax,
    )
    if annotate:
        for row in report.rows:
            ax.annotate(
                _weight_label(row.mode, row.alpha, row.beta),
                (row.novelty, row.ndcg),
                textcoords='offset points', xytext=(4, 4), fontsize=8,
                color=COLORS.get(row.mode, COLORS['neutral']),
            )
    ax.set_xlabel(f'個人化新規性 Novelty@{report.k}', fontsize=12, fontweight='bold')
    ax.set_ylabel(f'NDCG@{report.k}', fontsize=12, fontweight='bold')
    ax.set_title('精度と新規性のトレードオフ', fontsize=14, fontweight='bold', pad=15)
    ax.grid(True, alpha=0.3, linestyle=':')
    fig.tight_layout()
    return fig


def plot_threshold_table(
    table: ThresholdTable,
    figsize: Tuple[int, int] = (10, 5)
) -> plt.Figure:
    """
    新規性の閾値ごとの最大NDCGを棒グラフで表示

    該当なしの閾値は棒を描きません。
    """
    records = [
        {'閾値': f"≥{tau:g}", '系列': MODE_LABELS.get(mode, mode), 'NDCG': value}
        for mode, values in table.values.items()
        for tau, value in zip(table.thresholds, values)
        if value is not None
    ]
    fig, ax = plt.subplots(figsize=figsize)
    if not records:
        ax.text(0.5, 0.5, '閾値を満たすグリッド点がありません', ha='center', va='center',
                transform=ax.transAxes)
        ax.axis('off')
        return fig
    palette = {MODE_LABELS.get(m, m): COLORS.get(m, COLORS['neutral']) for m in table.values}
    sns.barplot(data=pd.DataFrame(records), x='閾値', y='NDCG', hue='系列',
                palette=palette, ax=ax)
    ax.set_xlabel('新規性の閾値 τ', fontsize=12, fontweight='bold')
    ax.set_ylabel(f'最大 NDCG@{table.k}', fontsize=12, fontweight='bold')
    ax.set_title('新規性の閾値ごとの最大NDCG', fontsize=14, fontweight='bold', pad=15)
    fig.tight_layout()
    return fig


def plot_signal_profile(
    pps_std: np.ndarray,
    spps_std: np.ndarray,
    history_items: Optional[np.ndarray] = None,
    figsize: Tuple[int, int] = (8, 6)
) -> plt.Figure:
    """
    1ユーザーの標準化 PPS と sPPS の散布図

    履歴にあるアイテムを強調表示します。未消費のアイテムは PPS が
    全て同じ値になる一方、sPPS はサブIDの共有によって差が付きます。
    """
    seen = np.zeros(len(pps_std), dtype=bool)
    if history_items is not None and len(history_items):
        seen[np.asarray(history_items, dtype=np.int64)] = True
    frame = pd.DataFrame({
        'PPS (標準化)': pps_std,
        'sPPS (標準化)': spps_std,
        'アイテム': np.where(seen, '消費済み', '未消費'),
    })
    fig, ax = plt.subplots(figsize=figsize)
    sns.scatterplot(
        data=frame, x='PPS (標準化)', y='sPPS (標準化)', hue='アイテム',
        palette={'消費済み': COLORS['pps-only'], '未消費': COLORS['spps-only']},
        alpha=0.6, s=25, ax=ax,
    )
    ax.set_title('アイテム単位とサブID単位の人気度', fontsize=14, fontweight='bold', pad=15)
    ax.grid(True, alpha=0.3, linestyle=':')
    fig.tight_layout()
    return fig

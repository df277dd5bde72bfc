"""
ライブラリの使用例

合成データで PPS のみ / sPPS のみ / 統合 の3種類のスイープを実行し、
トレードオフ表・閾値表・同精度での比較を表示します。
"""

import logging
import sys
from pathlib import Path

# プロジェクトのルートディレクトリをパスに追加
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.codebook import build_codebook
from src.comparison import SignalComparison
from src.dataset import dataset_statistics, temporal_split
from src.experiment import SweepMode, SweepSpec, run_sweeps, threshold_table
from src.scorer import markov_scorer
from src.synth import SynthConfig, generate
from src.visualization import emit_plot


def main():
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    log = generate(SynthConfig(users=500, items=1000, genres=20, events_per_user=150,
                               repeat_prob=0.8, genre_affinity=0.9, seed=7))
    print(dataset_statistics(log).summary())

    split = temporal_split(log, holdout_fraction=0.1)
    cb = build_codebook(split.train, m=8, V=64, d=64, seed=7)
    scorer = markov_scorer(split.train)

    specs = [SweepSpec(mode) for mode in SweepMode]
    report = run_sweeps(split, cb, scorer, specs, k=40, n_threads=4)

    print()
    print(report.summary())
    print()
    print(threshold_table(report).summary())
    print()
    print(SignalComparison.from_report(report).summary())

    emit_plot(report, "tradeoff.svg")
    print("\n図を tradeoff.svg に書き出しました")


if __name__ == "__main__":
    main()

import sys
from pathlib import Path

# プロジェクトのルートディレクトリをパスに追加
root_dir = Path(__file__).parent.parent
sys.path.insert(0, str(root_dir))

import streamlit as st
import matplotlib
matplotlib.use('Agg')  # バックエンドを明示的に設定
import matplotlib.pyplot as plt

from src.codebook import build_codebook
from src.comparison import SignalComparison
from src.dataset import dataset_statistics, temporal_split
from src.errors import SubpopError
from src.experiment import SweepMode, SweepSpec, build_scorer, run_sweeps, threshold_table
from src.config import ExperimentConfig
from src.popularity import build_profile, pps_vector, spps_vector, standardize
from src.scorer import ScorerType
from src.synth import SynthConfig, generate
from src.visualization import (
    plot_signal_profile,
    plot_threshold_table,
    plot_tradeoff,
    setup_japanese_font,
)


@st.cache_resource
def _init_font():
    setup_japanese_font()
    return True


@st.cache_resource(show_spinner=False)
def _prepare(synth: SynthConfig, holdout: float, m: int, V: int, seed: int):
    """合成データ・分割・コードブックを作る（設定ごとにキャッシュ）"""
    log = generate(synth)
    split = temporal_split(log, holdout)
    cb = build_codebook(split.train, m=m, V=V, d=m, seed=seed)
    return log, split, cb


# ページ設定
st.set_page_config(
    page_title="Personalised Popularity Explorer",
    page_icon="🎧",
    layout="wide",
    initial_sidebar_state="expanded"
)

# フォント設定を初期化
_init_font()

st.title("🎧 パーソナライズド人気度 トレードオフ探索ツール")

st.markdown("""
<div style="background-color: #f0f2f6; padding: 20px; border-radius: 10px; margin-bottom: 20px;">
    <p style="font-size: 16px; line-height: 1.6;">
        ユーザー自身の再生回数にもとづく<b>アイテム単位の人気度 (PPS)</b> と、
        SVD コードブックで似たアイテム同士が共有する<b>サブID単位の人気度 (sPPS)</b> を
        ベーススコアに混ぜたとき、精度 (NDCG) と個人化新規性 (Novelty) がどう変わるかを確認できます。
    </p>
    <details>
        <summary style="cursor: pointer; color: #1f77b4; font-weight: bold;">🎯 このツールの使い方</summary>
        <ol style="margin-top: 10px; line-height: 1.6;">
            <li><b>合成データを設定</b>: 左のサイドバーで繰り返し率やジャンル構造を選択</li>
            <li><b>スイープを選択</b>: PPS のみ / sPPS のみ / 両方の統合</li>
            <li><b>結果を確認</b>: トレードオフ曲線・閾値表・同精度での比較</li>
        </ol>
    </details>
</div>
""", unsafe_allow_html=True)

# サイドバー: データ設定
st.sidebar.header("🔧 合成データ")
users = st.sidebar.number_input("ユーザー数", min_value=10, max_value=5000, value=300, step=10)
items = st.sidebar.number_input("アイテム数", min_value=50, max_value=10000, value=600, step=50)
genres = st.sidebar.number_input("ジャンル数", min_value=1, max_value=100, value=12, step=1)
events_per_user = st.sidebar.number_input("ユーザーあたりイベント数", min_value=5, max_value=1000, value=120, step=5)
repeat_prob = st.sidebar.slider("繰り返し確率", 0.0, 1.0, 0.8, 0.05,
                                help="個人プールから再生する確率")
genre_affinity = st.sidebar.slider("ジャンル親和性", 0.0, 1.0, 0.9, 0.05,
                                   help="プール外の再生がホームジャンルになる確率")
pool_size = st.sidebar.number_input("個人プールの大きさ", min_value=1, max_value=200, value=10, step=1)
seed = st.sidebar.number_input("シード", min_value=0, value=0, step=1)

with st.sidebar.expander("⚙️ 詳細設定"):
    holdout = st.slider("テストに回す割合", 0.05, 0.5, 0.1, 0.05)
    m = st.number_input("分割数 m", min_value=1, max_value=64, value=8, step=1)
    V = st.number_input("コード数 V", min_value=2, max_value=1024, value=32, step=2)
    k = st.number_input("カットオフ K", min_value=1, max_value=200, value=40, step=1)
    scorer_type = st.selectbox(
        "ベーススコアラー",
        [ScorerType.MARKOV, ScorerType.GLOBAL_POPULARITY, ScorerType.SVD_DOT],
        format_func=lambda x: {
            ScorerType.MARKOV: "一次マルコフ",
            ScorerType.GLOBAL_POPULARITY: "グローバル人気度",
            ScorerType.SVD_DOT: "埋め込み内積",
        }[x],
    )
    fixed_beta = st.slider("統合モードで固定する β", 0.0, 1.0, 0.9, 0.05)
    tolerance = st.slider("同精度とみなす NDCG の差", 0.0, 0.05, 0.01, 0.005)

modes = st.sidebar.multiselect(
    "スイープ",
    [SweepMode.PPS_ONLY, SweepMode.SPPS_ONLY, SweepMode.COMBINED],
    default=[SweepMode.PPS_ONLY, SweepMode.SPPS_ONLY, SweepMode.COMBINED],
    format_func=lambda x: {
        SweepMode.PPS_ONLY: "PPS のみ (α)",
        SweepMode.SPPS_ONLY: "sPPS のみ (β)",
        SweepMode.COMBINED: "統合 (β固定で α)",
    }[x],
)

try:
    synth = SynthConfig(
        users=int(users), items=int(items), genres=int(genres),
        events_per_user=int(events_per_user), repeat_prob=float(repeat_prob),
        pool_size=int(pool_size), genre_affinity=float(genre_affinity), seed=int(seed),
    )
    with st.spinner("データとコードブックを準備中..."):
        log, split, cb = _prepare(synth, float(holdout), int(m), int(V), int(seed))

    st.header("📈 データセット")
    stats = dataset_statistics(log)
    col1, col2, col3, col4 = st.columns(4)
    col1.metric("ユーザー数", stats.users)
    col2.metric("アイテム数", stats.items)
    col3.metric("インタラクション数", stats.interactions)
    col4.metric("平均系列長", f"{stats.avg_len:.0f}")
    st.caption(f"学習 {split.train.n_events} 件 / テスト {split.test.n_events} 件（分割時刻 {split.split_timestamp}）")

    if not modes:
        st.warning("スイープを1つ以上選択してください。")
        st.stop()

    config = ExperimentConfig(scorer=scorer_type, splits=int(m), embedding_dim=int(m), seed=int(seed))
    specs = [SweepSpec(mode=mode, fixed_beta=float(fixed_beta)) for mode in modes]
    with st.spinner("スイープを実行中..."):
        scorer = build_scorer(config, split, cb)
        report = run_sweeps(split, cb, scorer, specs, k=int(k))
    table = threshold_table(report)

    tab1, tab2, tab3, tab4 = st.tabs(["📉 トレードオフ", "📋 閾値表", "⚖️ 同精度での比較", "🔍 ユーザー別"])

    with tab1:
        st.subheader("精度と新規性のトレードオフ")
        fig = plot_tradeoff(report)
        st.pyplot(fig)
        plt.close(fig)
        st.dataframe(report.to_frame(), use_container_width=True)
        if report.cold_start_users:
            st.info(f"ベーススコアラーが {report.cold_start_users} ユーザーでグローバル人気度にフォールバックしました")

    with tab2:
        st.subheader("新規性の閾値ごとの最大NDCG")
        st.dataframe(table.to_frame(), use_container_width=True)
        fig = plot_threshold_table(table)
        st.pyplot(fig)
        plt.close(fig)

    with tab3:
        st.subheader("PPS と sPPS の比較")
        if SweepMode.PPS_ONLY in modes and SweepMode.SPPS_ONLY in modes:
            comparison = SignalComparison.from_report(report, tolerance=float(tolerance))
            best = comparison.best_pair()
            if best is None:
                st.warning("NDCG の差が許容幅に収まる組がありません。許容幅を広げてください。")
            else:
                col1, col2, col3 = st.columns(3)
                col1.metric("PPS の Novelty", f"{best.pps.novelty:.3f}", f"α={best.pps.alpha:.2f}")
                col2.metric("sPPS の Novelty", f"{best.spps.novelty:.3f}", f"β={best.spps.beta:.2f}")
                col3.metric("相対増加", f"{best.novelty_gain:+.1%}")
                if comparison.spps_more_novel():
                    st.success("✅ 同程度の精度で、sPPS の方が新規性の高い推薦になっています")
                else:
                    st.info("📊 同程度の精度で、新規性に5%以上の差は見られません")
            st.text(comparison.summary())
        else:
            st.info("「PPS のみ」と「sPPS のみ」の両方を選択すると比較できます。")

    with tab4:
        st.subheader("1ユーザーの人気度シグナル")
        user = st.selectbox("ユーザー", list(range(split.n_users)),
                            format_func=lambda u: split.train.user_ids[u])
        history = split.train.history(user)
        if len(history) == 0:
            st.warning("このユーザーには学習期間の履歴がありません。")
        else:
            profile = build_profile(history, cb, user)
            pps_std = standardize(pps_vector(profile, cb.n_items)).values
            spps_std = standardize(spps_vector(profile, cb)).values
            fig = plot_signal_profile(pps_std, spps_std, history)
            st.pyplot(fig)
            plt.close(fig)

except SubpopError as e:
    st.error(f"❌ 設定エラー: {str(e)}")
    st.info("左のサイドバーで設定を見直してください。")

st.markdown("---")

st.markdown("""
<div style="text-align: center; padding: 20px; background-color: #f0f2f6; border-radius: 10px;">
    <p style="margin: 0; color: #666;">
        <small>Powered by Streamlit | パーソナライズド人気度 (PPS / sPPS)</small>
    </p>
</div>
""", unsafe_allow_html=True)

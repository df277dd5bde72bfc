import logging

import numpy as np
import pytest

from src.codebook import SubEmbeddingTable, reconstruct_all
from src.errors import DimensionMismatch, MissingUser, NonFiniteScore
from src.scorer import (
    LOG_FLOOR,
    ExternalLogits,
    global_popularity_scorer,
    load_external_logits,
    markov_scorer,
    svd_dot_scorer,
)
from tests.conftest import make_log


@pytest.fixture
def markov_log():
    """A→B が2回、A→C が1回、C からの遷移なし"""
    return make_log([
        ("x", "A", 1, "play"), ("x", "B", 2, "play"), ("x", "A", 3, "play"), ("x", "B", 4, "play"),
        ("y", "A", 5, "play"), ("y", "C", 6, "play"),
    ])


class TestGlobalPopularity:
    """GlobalPopularityScorerのテスト"""

    def test_log1p_counts(self, markov_log):
        """log(1 + 総回数)."""
        scorer = global_popularity_scorer(markov_log)
        assert scorer.score(0, np.array([0])) == pytest.approx(np.log1p([3, 2, 1]))

    def test_returns_copy(self, markov_log):
        """戻り値を書き換えても内部状態は変わらない."""
        scorer = global_popularity_scorer(markov_log)
        scores = scorer.score(0, np.array([]))
        scores[:] = 0.0
        assert scorer.score(0, np.array([]))[0] == pytest.approx(np.log(4))


class TestMarkov:
    """MarkovScorerのテスト"""

    def test_transition_logits(self, markov_log):
        """最後のアイテムからの遷移確率の対数."""
        scorer = markov_scorer(markov_log)
        logits = scorer.score(0, np.array([1, 0]))
        assert logits[0] == LOG_FLOOR
        assert logits[1] == pytest.approx(np.log(2 / 3))
        assert logits[2] == pytest.approx(np.log(1 / 3))
        assert scorer.fallback_users == set()

    def test_smoothing(self, markov_log):
        """加算スムージング."""
        scorer = markov_scorer(markov_log, smoothing=1.0)
        logits = scorer.score(0, np.array([0]))
        assert logits == pytest.approx(np.log([1 / 6, 3 / 6, 2 / 6]))

    def test_fallback_to_global_popularity(self, markov_log):
        """遷移元にない最後のアイテムはグローバル人気度へ."""
        scorer = markov_scorer(markov_log)
        logits = scorer.score(1, np.array([0, 2]))
        assert logits == pytest.approx(np.log1p([3, 2, 1]))
        assert scorer.fallback_users == {1}

    def test_empty_history_falls_back(self, markov_log):
        """履歴が空でもフォールバック."""
        scorer = markov_scorer(markov_log)
        scorer.score(4, np.array([], dtype=np.int64))
        assert 4 in scorer.fallback_users

    def test_all_finite(self, synth_split):
        """全アイテムに有限値."""
        scorer = markov_scorer(synth_split.train)
        for user in range(5):
            assert np.all(np.isfinite(scorer.score(user, synth_split.train.history(user))))

    def test_negative_smoothing(self, markov_log):
        """smoothingは非負."""
        with pytest.raises(ValueError, match="smoothing"):
            markov_scorer(markov_log, smoothing=-0.1)


class TestSvdDot:
    """SvdDotScorerのテスト"""

    def test_mean_of_recent_embeddings(self, shared_codebook):
        """直近の埋め込みの平均との内積."""
        table = SubEmbeddingTable.initialise(shared_codebook, seed=1)
        embeddings = reconstruct_all(shared_codebook, table)
        scorer = svd_dot_scorer(shared_codebook, table, history_window=2)
        expected = embeddings @ embeddings[[1, 3]].mean(axis=0)
        assert scorer.score(0, np.array([0, 1, 3])) == pytest.approx(expected)

    def test_empty_history(self, shared_codebook):
        """履歴が空なら全て0."""
        scorer = svd_dot_scorer(shared_codebook, SubEmbeddingTable.initialise(shared_codebook))
        assert scorer.score(0, np.array([])).tolist() == [0.0] * 4

    def test_item_count_mismatch(self, shared_codebook, tiny_log):
        """学習ログとコードブックのアイテム数が違えばエラー."""
        table = SubEmbeddingTable.initialise(shared_codebook)
        with pytest.raises(DimensionMismatch):
            svd_dot_scorer(shared_codebook, table, train=tiny_log)


class TestExternalLogits:
    """外部ロジットのテスト"""

    users = {"u1": 0, "u2": 1}
    items = {"A": 0, "B": 1, "C": 2}

    def _write(self, tmp_path, text):
        path = tmp_path / "logits.tsv"
        path.write_text(text, encoding="utf-8")
        return path

    def test_dense(self, tmp_path):
        """密形式."""
        path = self._write(tmp_path, "u1\t0.5,-1.0,2.0\nu2\t0,0,1\n")
        external = load_external_logits(path, self.users, self.items)
        assert external.score(0, np.array([])).tolist() == [0.5, -1.0, 2.0]
        assert external.score(1, np.array([])).tolist() == [0.0, 0.0, 1.0]

    def test_sparse_with_default(self, tmp_path):
        """疎形式では記載のないアイテムに default."""
        path = self._write(tmp_path, "u1\tB\t2.5\nu1\tC\t1.0\n")
        external = load_external_logits(path, self.users, self.items, default=-3.0)
        assert external.score(0, np.array([])).tolist() == [-3.0, 2.5, 1.0]

    def test_sparse_unknown_rows_warned(self, tmp_path, caplog):
        """疎形式で未知のユーザー・アイテムの行は件数を警告して読み飛ばす."""
        path = self._write(tmp_path, "u1\tB\t2.5\nu1\tZ\t9.0\nu9\tA\t1.0\n")
        with caplog.at_level(logging.WARNING, logger="src.scorer"):
            external = load_external_logits(path, self.users, self.items, default=0.0)
        assert external.score(0, np.array([])).tolist() == [0.0, 2.5, 0.0]
        warnings = [r for r in caplog.records if r.levelno == logging.WARNING]
        assert len(warnings) == 1
        assert "2 行" in warnings[0].getMessage()

    def test_sparse_requires_default(self, tmp_path):
        """疎形式は default が必須."""
        path = self._write(tmp_path, "u1\tB\t2.5\n")
        with pytest.raises(ValueError, match="default"):
            load_external_logits(path, self.users, self.items)

    def test_non_finite(self, tmp_path):
        """非有限値の行を報告."""
        path = self._write(tmp_path, "u2\t0,0,1\nu1\t0.1,nan,0.3\n")
        with pytest.raises(NonFiniteScore) as exc_info:
            load_external_logits(path, self.users, self.items)
        assert exc_info.value.row == 2

    def test_wrong_length(self, tmp_path):
        """スコア数がアイテム数と違えばエラー."""
        path = self._write(tmp_path, "u1\t0.1,0.2\n")
        with pytest.raises(DimensionMismatch):
            load_external_logits(path, self.users, self.items)

    def test_missing_eval_user(self, tmp_path):
        """評価対象ユーザーがなければエラー."""
        path = self._write(tmp_path, "u1\t0.5,-1.0,2.0\n")
        with pytest.raises(MissingUser, match="u2"):
            load_external_logits(path, self.users, self.items, eval_users=[0, 1])

    def test_score_unknown_user(self):
        """ロジットのないユーザーのスコアはエラー."""
        external = ExternalLogits({0: np.zeros(3)}, 3, user_ids=["u1", "u2"])
        with pytest.raises(MissingUser, match="u2"):
            external.score(1, np.array([]))

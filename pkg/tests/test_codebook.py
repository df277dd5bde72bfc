import numpy as np
import pytest

from src.codebook import (
    Codebook,
    SubEmbeddingTable,
    assign_codes,
    build_codebook,
    build_interaction_matrix,
    code_of,
    dense_singular_values,
    export_codebook_tsv,
    load_codebook,
    reconstruct_all,
    reconstruct_embedding,
    save_codebook,
    truncated_svd,
)
from src.dataset import temporal_split
from src.errors import ConfigError, ConvergenceFailure, DimensionMismatch, EmptyLog, IndexOutOfRange, RankTooLarge
from src.synth import SynthConfig, generate, item_genres
from tests.conftest import make_log


def _matrix_with_spectrum(rows, cols, spectrum, seed=0):
    """特異値が既知の行列"""
    rng = np.random.default_rng(seed)
    u, _ = np.linalg.qr(rng.standard_normal((rows, len(spectrum))))
    v, _ = np.linalg.qr(rng.standard_normal((cols, len(spectrum))))
    return (u * np.asarray(spectrum)) @ v.T


class TestInteractionMatrix:
    """build_interaction_matrixのテスト"""

    def test_binary(self, tiny_log):
        """繰り返しは1にまとめる."""
        matrix = build_interaction_matrix(tiny_log)
        assert matrix.shape == (3, 5)
        assert matrix.nnz == 6
        assert set(matrix.data) == {1.0}
        assert matrix[0].toarray().ravel().tolist() == [1, 1, 0, 0, 0]

    def test_empty(self, tiny_log):
        """空の学習ログはエラー."""
        with pytest.raises(EmptyLog, match="空"):
            build_interaction_matrix(tiny_log.select(tiny_log.timestamps > 100))


class TestTruncatedSvd:
    """truncated_svdのテスト"""

    def test_matches_known_spectrum(self):
        """既知の特異値を再現."""
        spectrum = [10.0, 8.0, 6.0, 4.0, 2.0, 1.0, 0.5]
        matrix = _matrix_with_spectrum(30, 20, spectrum)
        factors, sigma = truncated_svd(matrix, rank=4, seed=1, tol=1e-12, max_iter=2000)
        assert sigma == pytest.approx(spectrum[:4], rel=1e-6)
        assert factors.shape == (20, 4)
        # 因子の列ノルムは特異値
        assert np.linalg.norm(factors, axis=0) == pytest.approx(sigma, rel=1e-6)

    def test_matches_dense_reference(self):
        """密行列の参照実装と一致."""
        rng = np.random.default_rng(5)
        matrix = rng.standard_normal((25, 12))
        _, sigma = truncated_svd(matrix, rank=3, seed=0, tol=1e-12, max_iter=2000)
        assert sigma == pytest.approx(dense_singular_values(matrix)[:3], rel=1e-6)

    def test_sparse_input(self, synth_split):
        """疎行列のまま分解できる."""
        matrix = build_interaction_matrix(synth_split.train)
        _, sigma = truncated_svd(matrix, rank=3, tol=1e-10, max_iter=2000)
        assert sigma == pytest.approx(dense_singular_values(matrix)[:3], rel=1e-5)

    def test_deterministic(self):
        """同じシードなら同じ結果."""
        matrix = _matrix_with_spectrum(15, 10, [5.0, 3.0, 1.0])
        first, _ = truncated_svd(matrix, rank=2, seed=3)
        second, _ = truncated_svd(matrix, rank=2, seed=3)
        assert np.array_equal(first, second)

    def test_rank_deficient(self):
        """数値ランクを超える rank でも収束し、残りの特異値は0."""
        base = _matrix_with_spectrum(3, 40, [3.0, 2.0, 1.0])
        matrix = np.vstack([base] * 10)
        factors, sigma = truncated_svd(matrix, rank=6)
        assert sigma[:3] == pytest.approx(dense_singular_values(matrix)[:3], rel=1e-6)
        assert sigma[3:].tolist() == [0.0, 0.0, 0.0]
        assert factors.shape == (40, 6)
        assert np.all(factors[:, 3:] == 0.0)

    def test_rank_too_large(self):
        """rank は min(行数, 列数) 以下."""
        with pytest.raises(RankTooLarge):
            truncated_svd(np.ones((4, 3)), rank=4)
        with pytest.raises(RankTooLarge):
            truncated_svd(np.ones((4, 3)), rank=0)

    def test_convergence_failure(self):
        """反復回数が足りなければ収束失敗."""
        matrix = _matrix_with_spectrum(15, 10, [5.0, 3.0, 1.0])
        with pytest.raises(ConvergenceFailure, match="1回"):
            truncated_svd(matrix, rank=2, max_iter=1)


class TestAssignCodes:
    """assign_codesのテスト"""

    def test_equal_frequency(self):
        """各コードに同数のアイテム."""
        factors = np.random.default_rng(0).standard_normal((10, 2))
        cb = assign_codes(factors, np.array([2.0, 1.0]), V=5)
        for j in range(2):
            assert cb.histogram(j).tolist() == [2, 2, 2, 2, 2]

    def test_order_follows_factor(self):
        """因子の値が小さいほど小さいコード."""
        factors = np.array([[0.3], [-1.0], [2.0], [0.0]])
        cb = assign_codes(factors, np.array([1.0]), V=2)
        assert cb.codes[:, 0].tolist() == [1, 0, 1, 0]

    def test_ties_by_index(self):
        """同値のアイテムはインデックス順."""
        cb = assign_codes(np.zeros((4, 1)), np.array([1.0]), V=2)
        assert cb.codes[:, 0].tolist() == [0, 0, 1, 1]

    def test_scale_invariant(self):
        """列ごとの正のスケールではコードが変わらない."""
        factors = np.random.default_rng(3).standard_normal((30, 2))
        raw = assign_codes(factors, np.array([4.0, 2.0]), V=6)
        scaled = assign_codes(factors * np.array([4.0, 2.0]), np.array([4.0, 2.0]), V=6)
        assert np.array_equal(raw.codes, scaled.codes)

    def test_parallel_matches_serial(self):
        """並列数によらず同じコード."""
        factors = np.random.default_rng(1).standard_normal((50, 6))
        sigma = np.sort(np.random.default_rng(2).uniform(1, 2, 6))[::-1]
        serial = assign_codes(factors, sigma, V=7)
        parallel = assign_codes(factors, sigma, V=7, n_jobs=4)
        assert np.array_equal(serial.codes, parallel.codes)


class TestBuildCodebook:
    """build_codebookのテスト"""

    def test_shape(self, synth_codebook, synth_split):
        """|I|×m のコードと d/m 次元のサブ埋め込み."""
        assert synth_codebook.codes.shape == (synth_split.n_items, 4)
        assert synth_codebook.V == 8
        assert synth_codebook.sub_dim == 2
        assert synth_codebook.d == 8

    def test_balanced(self, synth_codebook):
        """全分割で等頻度."""
        for j in range(synth_codebook.m):
            hist = synth_codebook.histogram(j)
            assert hist.sum() == synth_codebook.n_items
            assert hist.max() - hist.min() <= 1

    def test_singular_values_descending(self, synth_codebook):
        """特異値は降順."""
        assert np.all(np.diff(synth_codebook.singular_values) <= 0)

    def test_dimension_not_multiple(self, synth_split):
        """d は m の倍数."""
        with pytest.raises(ConfigError, match="倍数"):
            build_codebook(synth_split.train, m=3, V=4, d=8)

    def test_duplicate_users(self):
        """同じ履歴のユーザーばかりで低ランクな行列でも構築できる."""
        log = make_log([
            ("u1", "A", 1, "play"), ("u1", "B", 2, "play"),
            ("u2", "A", 3, "play"), ("u2", "B", 4, "play"),
            ("u3", "A", 5, "play"), ("u3", "B", 6, "play"),
            ("u4", "A", 7, "play"), ("u4", "B", 8, "play"), ("u4", "C", 9, "play"),
        ])
        cb = build_codebook(log, m=3, V=2, d=3)
        assert cb.codes.shape == (3, 3)

    def test_same_genre_shares_codes(self):
        """同じジャンルのアイテムは別ジャンルより多くのサブIDを共有."""
        cfg = SynthConfig(users=200, items=240, genres=6, events_per_user=60, repeat_prob=0.5,
                          pool_size=8, genre_affinity=1.0, seed=0)
        split = temporal_split(generate(cfg), 0.1)
        cb = build_codebook(split.train, m=8, V=8, d=8, seed=0)
        genres = item_genres(cfg)[[int(item_id[1:]) for item_id in split.train.item_ids]]
        shared = (cb.codes[:, None, :] == cb.codes[None, :, :]).sum(axis=-1)
        same = genres[:, None] == genres[None, :]
        off_diagonal = ~np.eye(len(genres), dtype=bool)
        assert shared[same & off_diagonal].mean() > 2 * shared[~same].mean()


class TestCodebook:
    """Codebookのテスト"""

    def test_code_out_of_range(self):
        """コードは [0, V)."""
        with pytest.raises(ValueError, match="範囲"):
            Codebook(codes=np.array([[0], [3]]), V=3, sub_dim=1,
                     item_factors=np.zeros((2, 1)), singular_values=np.array([1.0]))

    def test_ascending_singular_values(self):
        """特異値が昇順ならエラー."""
        with pytest.raises(ValueError, match="降順"):
            Codebook(codes=np.zeros((2, 2), dtype=np.int32), V=1, sub_dim=1,
                     item_factors=np.zeros((2, 2)), singular_values=np.array([1.0, 2.0]))

    def test_code_of(self, shared_codebook):
        """アイテムのサブIDの組."""
        assert code_of(shared_codebook, 2) == (1, 2)
        with pytest.raises(IndexOutOfRange):
            code_of(shared_codebook, 4)


class TestSubEmbeddings:
    """サブ埋め込みと再構成のテスト"""

    def test_initialise(self, shared_codebook):
        """[-1/√d, 1/√d] の一様乱数で決定的に初期化."""
        table = SubEmbeddingTable.initialise(shared_codebook, seed=9)
        assert table.weights.shape == (2, 3, 2)
        assert np.all(np.abs(table.weights) <= 1 / np.sqrt(4))
        assert np.array_equal(table.weights, SubEmbeddingTable.initialise(shared_codebook, seed=9).weights)

    def test_shape_mismatch(self, shared_codebook):
        """形状が合わないテーブルはエラー."""
        with pytest.raises(DimensionMismatch):
            reconstruct_all(shared_codebook, SubEmbeddingTable(np.zeros((2, 2, 2))))

    def test_reconstruct_concatenates(self, shared_codebook):
        """コードに従ってサブ埋め込みを連結."""
        weights = np.arange(12, dtype=np.float64).reshape(2, 3, 2)
        table = SubEmbeddingTable(weights)
        # アイテム2のコードは (1, 2)
        expected = np.concatenate([weights[0, 1], weights[1, 2]])
        assert np.array_equal(reconstruct_embedding(shared_codebook, table, 2), expected)

    def test_shared_code_shares_block(self, shared_codebook):
        """同じサブIDを持つアイテムは同じブロックを共有."""
        table = SubEmbeddingTable.initialise(shared_codebook)
        embeddings = reconstruct_all(shared_codebook, table)
        assert embeddings.shape == (4, 4)
        assert np.array_equal(embeddings[0, :2], embeddings[1, :2])
        assert np.array_equal(embeddings[2, 2:], embeddings[3, 2:])
        for item in range(4):
            assert np.array_equal(embeddings[item], reconstruct_embedding(shared_codebook, table, item))


class TestPersistence:
    """保存・書き出しのテスト"""

    def test_npz_roundtrip(self, shared_codebook, tmp_path):
        """保存したコードブックを読み直せる."""
        path = tmp_path / "cb.npz"
        save_codebook(shared_codebook, path)
        loaded = load_codebook(path)
        assert np.array_equal(loaded.codes, shared_codebook.codes)
        assert loaded.V == 3
        assert loaded.sub_dim == 2
        assert np.array_equal(loaded.singular_values, shared_codebook.singular_values)

    def test_export_tsv(self, shared_codebook, tmp_path):
        """ヘッダーコメント付きのTSV."""
        path = tmp_path / "cb.tsv"
        export_codebook_tsv(shared_codebook, ["a", "b", "c", "d"], path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "# subpop-codebook v1 m=2 V=3"
        assert lines[1] == "item_id\tz_1\tz_2"
        assert lines[3] == "b\t0\t1"

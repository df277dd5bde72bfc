import pandas as pd
import pytest

from src.cli import build_parser, config_from_args, main
from src.errors import ConfigError
from src.scorer import ScorerType


@pytest.fixture
def events_path(tmp_path):
    """CLIで生成した小さな合成データ"""
    path = tmp_path / "events.tsv"
    code = main([
        "--log-level", "WARNING", "synth", "--users", "40", "--items", "60", "--genres", "4",
        "--events-per-user", "30", "--pool-size", "5", "--seed", "2", "--out", str(path),
    ])
    assert code == 0
    return path


class TestParser:
    """引数解析のテスト"""

    def test_precedence(self, tmp_path):
        """既定値 < 設定ファイル < コマンドライン."""
        conf = tmp_path / "run.conf"
        conf.write_text("k = 20\nsplits = 8\nembedding_dim = 64\n", encoding="utf-8")
        args = build_parser().parse_args(["run", "--config", str(conf), "--k", "10", "--scorer", "globalpop"])
        config = config_from_args(args)
        assert config.k == 10
        assert config.splits == 8
        assert config.scorer is ScorerType.GLOBAL_POPULARITY
        assert config.codebook_size == 256

    def test_single_weights(self):
        """--alpha / --beta は1点のグリッド."""
        args = build_parser().parse_args(["run", "--mode", "pps-only,spps-only", "--alpha", "0.3", "--beta", "0.2"])
        config = config_from_args(args)
        assert config.modes == ("pps-only", "spps-only")
        assert config.alpha_grid == (0.3,)
        assert config.beta_grid == (0.2,)

    def test_alpha_and_grid(self):
        """--alpha と --alpha-grid は同時に指定できない."""
        args = build_parser().parse_args(["run", "--alpha", "0.3", "--alpha-grid", "0,0.5"])
        with pytest.raises(ConfigError, match="--alpha"):
            config_from_args(args)

    def test_svd_seed_independent(self):
        """--svd-seed と --seed は別々に指定できる."""
        args = build_parser().parse_args(["run", "--seed", "3", "--svd-seed", "7", "--svd-tol", "1e-9"])
        config = config_from_args(args)
        assert config.seed == 3
        assert config.svd_seed == 7
        assert config.svd_tol == 1e-9

    def test_codebook_svd_defaults(self):
        """codebook の SVD 引数は実験設定の既定値."""
        args = build_parser().parse_args(["codebook", "--out", "cb.tsv"])
        assert args.svd_seed == 0
        assert args.svd_tol == 1e-7
        assert args.svd_max_iter == 300

    def test_unknown_subcommand(self):
        """未知のサブコマンドは終了コード2."""
        with pytest.raises(SystemExit) as exc_info:
            main(["train"])
        assert exc_info.value.code == 2


class TestCommands:
    """サブコマンドのテスト"""

    def test_synth(self, events_path):
        """ヘッダー付きのイベントTSVを書き出す."""
        frame = pd.read_csv(events_path, sep="\t")
        assert list(frame.columns) == ["user", "item", "timestamp", "event"]
        assert len(frame) == 40 * 30

    def test_stats(self, events_path, capsys):
        """統計量を表示."""
        assert main(["stats", "--data", str(events_path)]) == 0
        assert "インタラクション数: 1200" in capsys.readouterr().out

    def test_codebook(self, events_path, tmp_path):
        """コードブックのTSVと .npz."""
        out = tmp_path / "cb.tsv"
        code = main([
            "codebook", "--data", str(events_path), "--splits", "4", "--codebook-size", "8",
            "--embedding-dim", "8", "--out", str(out), "--npz", str(tmp_path / "cb.npz"),
        ])
        assert code == 0
        assert out.read_text(encoding="utf-8").startswith("# subpop-codebook v1 m=4 V=8")
        assert (tmp_path / "cb.npz").exists()

    def test_codebook_svd_flags(self, events_path, tmp_path):
        """--svd-seed と --svd-tol を受け付け、同じシードなら同じコード."""
        outputs = []
        for name in ("a.tsv", "b.tsv"):
            out = tmp_path / name
            code = main([
                "codebook", "--data", str(events_path), "--splits", "4", "--codebook-size", "8",
                "--embedding-dim", "8", "--svd-seed", "5", "--svd-tol", "1e-9", "--out", str(out),
            ])
            assert code == 0
            outputs.append(out.read_text(encoding="utf-8"))
        assert outputs[0] == outputs[1]

    def test_run(self, events_path, tmp_path, capsys):
        """スイープを実行してレポートと図を書き出す."""
        code = main([
            "run", "--data", str(events_path), "--scorer", "markov", "--splits", "4",
            "--codebook-size", "8", "--embedding-dim", "8", "--k", "10", "--mode", "all",
            "--alpha-grid", "0,0.5", "--beta-grid", "0,0.5", "--threads", "2",
            "--out", str(tmp_path / "report.tsv"), "--plot", str(tmp_path / "curve.svg"),
        ])
        assert code == 0
        report = pd.read_csv(tmp_path / "report.tsv", sep="\t")
        assert list(report["mode"].unique()) == ["pps-only", "spps-only", "combined"]
        assert (tmp_path / "curve.svg").exists()
        assert "NDCG@10" in capsys.readouterr().out


class TestExitCodes:
    """終了コードのテスト"""

    def test_missing_file(self, tmp_path):
        """存在しない入力は3."""
        assert main(["stats", "--data", str(tmp_path / "none.tsv")]) == 3

    def test_parse_error(self, tmp_path):
        """不正な行は3."""
        path = tmp_path / "bad.tsv"
        path.write_text("u1\tA\t1\tplay\nu1\tB\tlater\tplay\n", encoding="utf-8")
        assert main(["stats", "--data", str(path)]) == 3

    def test_config_error(self, events_path):
        """不正な重みは5."""
        code = main(["run", "--data", str(events_path), "--splits", "4", "--embedding-dim", "8",
                     "--codebook-size", "8", "--k", "10", "--mode", "combined",
                     "--alpha-grid", "0.6", "--fixed-beta", "0.6"])
        assert code == 5

    def test_missing_data(self):
        """--data がなければ5."""
        assert main(["stats"]) == 5

    def test_rank_too_large(self, events_path, tmp_path):
        """行列サイズを超える分割数は数値計算エラーの4."""
        code = main(["codebook", "--data", str(events_path), "--splits", "100",
                     "--embedding-dim", "100", "--codebook-size", "8", "--out", str(tmp_path / "cb.tsv")])
        assert code == 4

    def test_unwritable_output(self, tmp_path):
        """書き込めない出力先は6."""
        code = main(["synth", "--users", "5", "--items", "20", "--genres", "2", "--pool-size", "2",
                     "--out", str(tmp_path / "missing" / "events.tsv")])
        assert code == 6

    def test_top_items_zero(self, events_path):
        """--top-items 0 は設定エラーの5."""
        assert main(["stats", "--data", str(events_path), "--top-items", "0"]) == 5

    def test_holdout_out_of_range(self, events_path, tmp_path):
        """(0, 1) の外の --holdout は5."""
        code = main(["codebook", "--data", str(events_path), "--holdout", "1.5", "--splits", "4",
                     "--codebook-size", "8", "--embedding-dim", "8", "--out", str(tmp_path / "cb.tsv")])
        assert code == 5

    def test_dimension_not_multiple(self, events_path, tmp_path):
        """m の倍数でない --embedding-dim は5."""
        code = main(["codebook", "--data", str(events_path), "--splits", "3", "--codebook-size", "8",
                     "--embedding-dim", "8", "--out", str(tmp_path / "cb.tsv")])
        assert code == 5

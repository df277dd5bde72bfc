import numpy as np
import pytest

from src.event_data import Event, EventLog, EventType, TemporalSplit


class TestEventType:
    """EventTypeのテスト"""

    def test_grades(self):
        """関連度ラベルの対応."""
        assert EventType.LIKE.grade == 2
        assert EventType.PLAY.grade == 1
        assert EventType.SKIP.grade == -1
        assert EventType.DISLIKE.grade == -2

    def test_parse_is_case_insensitive(self):
        """大文字・前後の空白を許容."""
        assert EventType.parse(" Like ") is EventType.LIKE
        assert EventType.parse("SKIP") is EventType.SKIP

    def test_parse_unknown(self):
        """未知の種別はエラー."""
        with pytest.raises(ValueError, match="未知のイベント種別"):
            EventType.parse("share")

    def test_code_roundtrip(self):
        """整数コードから元の種別に戻る."""
        for event_type in EventType:
            assert EventType.from_code(event_type.code) is event_type


class TestEvent:
    """Eventのテスト"""

    def test_negative_timestamp(self):
        """負のタイムスタンプはエラー."""
        with pytest.raises(ValueError, match="非負"):
            Event(user_id="u", item_id="i", timestamp=-1, event_type=EventType.PLAY)


class TestEventLog:
    """EventLogのテスト"""

    def test_dense_indices_sorted_by_id(self, tiny_log):
        """IDの昇順で密なインデックスを割り当てる."""
        assert tiny_log.user_ids == ("u1", "u2", "u3")
        assert tiny_log.item_ids == ("A", "B", "C", "D", "E")
        assert tiny_log.n_events == 10

    def test_history_is_chronological(self, tiny_log):
        """ユーザーの履歴は時系列順."""
        assert tiny_log.history(0).tolist() == [0, 1, 0, 0]
        assert tiny_log.history(1).tolist() == [1, 2, 1]
        assert tiny_log.history(2).tolist() == [3, 4, 4]

    def test_item_counts(self, tiny_log):
        """アイテムごとのイベント数（種別を問わない）."""
        assert tiny_log.item_counts().tolist() == [3, 3, 1, 1, 2]

    def test_user_lengths(self, tiny_log):
        """ユーザーごとのイベント数."""
        assert tiny_log.user_lengths().tolist() == [4, 3, 3]
        assert tiny_log.active_users().tolist() == [0, 1, 2]

    def test_same_timestamp_keeps_input_order(self):
        """同時刻のイベントは入力順."""
        log = EventLog.from_arrays(
            user_ids=["u"], item_ids=["a", "b", "c"],
            users=np.zeros(3), items=np.array([2, 0, 1]),
            timestamps=np.array([5, 5, 5]), event_types=np.zeros(3),
        )
        assert log.history(0).tolist() == [2, 0, 1]

    def test_columns_are_read_only(self, tiny_log):
        """構築後の列は書き換えられない."""
        with pytest.raises(ValueError):
            tiny_log.items[0] = 1

    def test_events_roundtrip(self, tiny_log):
        """Eventとして取り出して再構築しても同じ."""
        rebuilt = EventLog.from_events(list(tiny_log.events()))
        assert rebuilt.user_ids == tiny_log.user_ids
        assert np.array_equal(rebuilt.items, tiny_log.items)
        assert np.array_equal(rebuilt.event_types, tiny_log.event_types)

    def test_to_frame(self, tiny_log):
        """DataFrameにはIDとイベント名が入る."""
        frame = tiny_log.to_frame()
        assert list(frame.columns) == ["user", "item", "timestamp", "event"]
        assert frame.iloc[3].tolist() == ["u1", "A", 8, "like"]

    def test_select_keeps_indices(self, tiny_log):
        """部分集合もインデックスを共有する."""
        subset = tiny_log.select(tiny_log.timestamps < 5)
        assert subset.item_ids == tiny_log.item_ids
        assert subset.n_events == 4
        assert subset.history(2).tolist() == []

    def test_unsorted_columns_rejected(self):
        """ユーザー順でない列はエラー."""
        with pytest.raises(ValueError, match="ユーザー順"):
            EventLog(
                user_ids=("a", "b"), item_ids=("x",),
                users=np.array([1, 0]), items=np.array([0, 0]),
                timestamps=np.array([1, 2]), event_types=np.array([0, 0]),
                positions=np.array([0, 1]),
            )


class TestTemporalSplit:
    """TemporalSplitのテスト"""

    def test_train_after_split_rejected(self, tiny_log):
        """分割時刻以降の学習イベントはエラー."""
        with pytest.raises(ValueError, match="学習イベント"):
            TemporalSplit(
                train=tiny_log.select(tiny_log.timestamps <= 5),
                test=tiny_log.select(tiny_log.timestamps > 5),
                split_timestamp=5,
                holdout_fraction=0.5,
            )

    def test_holdout_range(self, tiny_log):
        """holdout_fractionは(0, 1)."""
        with pytest.raises(ValueError, match="holdout_fraction"):
            TemporalSplit(
                train=tiny_log, test=tiny_log.select(tiny_log.timestamps > 100),
                split_timestamp=100, holdout_fraction=1.0,
            )

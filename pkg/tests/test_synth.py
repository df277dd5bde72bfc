import numpy as np
import pytest

from src.errors import ConfigError
from src.event_data import EventType
from src.synth import SynthConfig, generate, genre_blocks, item_genres


class TestSynthConfig:
    """SynthConfigのテスト"""

    def test_defaults(self):
        """デフォルト値で生成できる."""
        cfg = SynthConfig()
        assert cfg.users == 200
        assert cfg.repeat_prob == 0.8

    @pytest.mark.parametrize("kwargs,message", [
        ({"users": 0}, "users"),
        ({"repeat_prob": 1.5}, "repeat_prob"),
        ({"genre_affinity": -0.1}, "genre_affinity"),
        ({"items": 5, "genres": 6, "pool_size": 1}, "ジャンル数"),
        ({"items": 20, "genres": 4, "pool_size": 6}, "pool_size"),
        ({"zipf_exponent": -1.0}, "zipf_exponent"),
    ])
    def test_invalid(self, kwargs, message):
        """不正な設定は ConfigError."""
        with pytest.raises(ConfigError, match=message):
            SynthConfig(**kwargs)

    def test_genre_blocks(self):
        """アイテムを連続したブロックに分割."""
        cfg = SynthConfig(items=10, genres=3, pool_size=3)
        assert [len(b) for b in genre_blocks(cfg)] == [4, 3, 3]
        assert item_genres(cfg).tolist() == [0, 0, 0, 0, 1, 1, 1, 2, 2, 2]


class TestGenerate:
    """generateのテスト"""

    def test_deterministic(self, synth_config):
        """同じ設定なら同じログ."""
        first = generate(synth_config)
        second = generate(synth_config)
        assert np.array_equal(first.items, second.items)
        assert np.array_equal(first.timestamps, second.timestamps)
        assert np.array_equal(first.event_types, second.event_types)

    def test_seed_changes_log(self):
        """シードが違えば別のログ."""
        a = generate(SynthConfig(users=10, items=50, genres=5, pool_size=5, seed=1))
        b = generate(SynthConfig(users=10, items=50, genres=5, pool_size=5, seed=2))
        assert not np.array_equal(a.items, b.items)

    def test_full_catalogue(self, synth_config):
        """全ユーザー・全アイテムがインデックスに含まれる."""
        log = generate(synth_config)
        assert log.n_users == synth_config.users
        assert log.n_items == synth_config.items
        assert log.n_events == synth_config.users * synth_config.events_per_user
        assert log.user_ids[0] == "u00000"
        assert log.item_ids[-1] == "i00119"

    def test_single_item_pool(self):
        """繰り返し確率1・プール1なら同じアイテムだけ."""
        log = generate(SynthConfig(users=5, items=20, genres=2, events_per_user=10,
                                   repeat_prob=1.0, pool_size=1))
        for user in range(5):
            assert len(np.unique(log.history(user))) == 1

    def test_single_genre(self):
        """ジャンル親和性1なら全てホームジャンル."""
        cfg = SynthConfig(users=8, items=40, genres=4, events_per_user=30,
                          repeat_prob=0.0, genre_affinity=1.0, pool_size=2)
        log = generate(cfg)
        genres = item_genres(cfg)
        for user in range(cfg.users):
            assert len(np.unique(genres[log.history(user)])) == 1

    def test_likes_only_on_repeats(self, synth_config):
        """like は既出アイテムの再生にのみ付く."""
        log = generate(synth_config)
        for user in range(synth_config.users):
            start, end = log.user_offsets[user], log.user_offsets[user + 1]
            seen = set()
            for item, event in zip(log.items[start:end], log.event_types[start:end]):
                if event == EventType.LIKE.code:
                    assert item in seen
                seen.add(item)

    def test_timestamps_increase(self, synth_config):
        """ユーザー内のタイムスタンプは狭義単調増加."""
        log = generate(synth_config)
        for user in range(synth_config.users):
            start, end = log.user_offsets[user], log.user_offsets[user + 1]
            assert np.all(np.diff(log.timestamps[start:end]) > 0)

    @pytest.mark.parametrize("seed", range(5))
    def test_no_repeats_mostly_distinct(self, seed):
        """繰り返しなし・ジャンルなしなら (ユーザー, アイテム) はほぼ重複しない."""
        cfg = SynthConfig(users=50, items=2000, genres=4, events_per_user=40, repeat_prob=0.0,
                          genre_affinity=0.0, pool_size=5, seed=seed)
        log = generate(cfg)
        pairs = np.unique(np.stack([log.users, log.items], axis=1), axis=0)
        assert len(pairs) / log.n_events > 0.9

    def test_repeat_prob_concentrates_top_item(self):
        """繰り返し確率が高いほど最多アイテムの割合が大きい."""
        shares = []
        for repeat_prob in (0.2, 0.5, 0.8):
            per_seed = []
            for seed in range(20):
                cfg = SynthConfig(users=20, items=200, genres=4, events_per_user=100,
                                  repeat_prob=repeat_prob, pool_size=10, seed=seed)
                log = generate(cfg)
                per_seed.extend(np.bincount(log.history(user)).max() / cfg.events_per_user
                                for user in range(cfg.users))
            shares.append(np.mean(per_seed))
        assert shares[0] < shares[1] < shares[2]

"""Pytest configuration and common fixtures."""

import numpy as np
import pytest

from src.codebook import Codebook, build_codebook
from src.dataset import temporal_split
from src.event_data import Event, EventLog, EventType
from src.synth import SynthConfig, generate


def make_log(rows):
    """(user, item, timestamp, event名) のリストから EventLog を作る."""
    return EventLog.from_events([
        Event(user_id=u, item_id=i, timestamp=t, event_type=EventType(e)) for u, i, t, e in rows
    ])


@pytest.fixture
def tiny_log():
    """3ユーザー・5アイテム・10イベントの手書きログ."""
    return make_log([
        ("u1", "A", 1, "play"),
        ("u1", "B", 2, "play"),
        ("u1", "A", 3, "play"),
        ("u2", "B", 4, "play"),
        ("u2", "C", 5, "skip"),
        ("u3", "D", 6, "play"),
        ("u3", "E", 7, "like"),
        ("u1", "A", 8, "like"),
        ("u2", "B", 9, "play"),
        ("u3", "E", 10, "dislike"),
    ])


@pytest.fixture
def identity_codebook():
    """m=1・単射コードのコードブック (|I|=6)."""
    n = 6
    return Codebook(
        codes=np.arange(n, dtype=np.int32)[:, None],
        V=n,
        sub_dim=1,
        item_factors=np.arange(n, dtype=np.float64)[:, None],
        singular_values=np.array([1.0]),
    )


@pytest.fixture
def shared_codebook():
    """4アイテム・2分割。アイテム0と1は分割0のコードを共有."""
    codes = np.array([[0, 0], [0, 1], [1, 2], [2, 2]], dtype=np.int32)
    return Codebook(
        codes=codes,
        V=3,
        sub_dim=2,
        item_factors=codes.astype(np.float64),
        singular_values=np.array([2.0, 1.0]),
    )


@pytest.fixture(scope="session")
def synth_config():
    """テスト用の小さな合成データ設定."""
    return SynthConfig(users=80, items=120, genres=6, events_per_user=40,
                       repeat_prob=0.8, pool_size=8, genre_affinity=0.9, seed=3)


@pytest.fixture(scope="session")
def synth_split(synth_config):
    """合成データの時系列分割."""
    return temporal_split(generate(synth_config), 0.1)


@pytest.fixture(scope="session")
def synth_codebook(synth_split):
    """合成データの学習部分から作ったコードブック."""
    return build_codebook(synth_split.train, m=4, V=8, d=8, seed=0)

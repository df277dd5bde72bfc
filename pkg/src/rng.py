"""
乱数生成

シードの導出には splitmix64 ミキサーを使い、乱数列そのものは
カウンタベースの Philox 生成器 (numpy) から取り出します。
どちらも公開された固定アルゴリズムなので、同じシードからは
実装言語によらず同じ系列が再現できます。
"""

from typing import Union

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)


def splitmix64(x: Union[int, np.ndarray]) -> np.ndarray:
    """
    splitmix64 の1ステップ（ベクトル化）

    Parameters
    ----------
    x : int or np.ndarray
        64bit符号なし整数として解釈される入力

    Returns
    -------
    np.ndarray
        uint64 の混合結果（入力と同じ形状）
    """
    z = np.atleast_1d(np.asarray(x, dtype=np.uint64)).copy()
    with np.errstate(over="ignore"):
        z += _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MUL1
        z = (z ^ (z >> np.uint64(27))) * _MUL2
        z = z ^ (z >> np.uint64(31))
    return z


def derive_seed(seed: int, *keys: int) -> int:
    """
    基底シードと任意個のキーから64bitシードを導出

    ユーザー単位の生成など、並列実行しても結果が変わらない
    独立系列を作るために使います。
    """
    state = int(splitmix64(seed & _MASK64)[0])
    for key in keys:
        state = int(splitmix64((state ^ (key & _MASK64)) & _MASK64)[0])
    return state


def make_generator(seed: int, *keys: int) -> np.random.Generator:
    """Philox を用いた決定的な numpy Generator を返す"""
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, *keys)))

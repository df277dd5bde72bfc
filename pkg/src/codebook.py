"""
RecJPQ方式のサブアイテムコードブック

学習データのユーザー×アイテム行列を truncated SVD で分解し、
各分割 j について第 j 因子列の分位点で V 個のコードに量子化します。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import sparse

from src.errors import (
    ConfigError,
    ConvergenceFailure,
    DimensionMismatch,
    EmptyLog,
    IndexOutOfRange,
    RankTooLarge,
    ReportIoError,
)
from src.event_data import EventLog
from src.rng import make_generator

logger = logging.getLogger(__name__)

CODEBOOK_FORMAT_VERSION = 1

PathLike = Union[str, Path]


@dataclass(frozen=True, eq=False)
class Codebook:
    """
    アイテム → m 個のサブIDの対応表

    Attributes
    ----------
    codes : np.ndarray
        |I|×m のサブID表（各値は [0, V)）
    V : int
        分割あたりのコード数
    sub_dim : int
        サブ埋め込みの次元 (d / m)
    item_factors : np.ndarray
        割り当てに使った |I|×m のSVD因子（σ倍済み）
    singular_values : np.ndarray
        m 個の特異値（降順）
    """
    codes: np.ndarray
    V: int
    sub_dim: int
    item_factors: np.ndarray
    singular_values: np.ndarray

    def __post_init__(self):
        if self.codes.ndim != 2:
            raise ValueError("codes は2次元配列である必要があります")
        if self.V < 1 or self.sub_dim < 1:
            raise ValueError("V と sub_dim は正の整数である必要があります")
        if self.codes.size and (self.codes.min() < 0 or self.codes.max() >= self.V):
            raise ValueError(f"コードは [0, {self.V}) の範囲である必要があります")
        if self.item_factors.shape != self.codes.shape:
            raise DimensionMismatch("item_factors と codes の形状が一致しません")
        if len(self.singular_values) != self.m:
            raise DimensionMismatch("特異値の個数が分割数と一致しません")
        if np.any(np.diff(self.singular_values) > 0):
            raise ValueError("特異値は降順である必要があります")
        self.codes.setflags(write=False)

    @property
    def m(self) -> int:
        """分割数"""
        return self.codes.shape[1]

    @property
    def n_items(self) -> int:
        return self.codes.shape[0]

    @property
    def d(self) -> int:
        """再構成される埋め込みの次元"""
        return self.m * self.sub_dim

    def histogram(self, split: int) -> np.ndarray:
        """分割 split におけるコードごとのアイテム数"""
        return np.bincount(self.codes[:, split], minlength=self.V)


@dataclass(frozen=True, eq=False)
class SubEmbeddingTable:
    """
    分割ごとの V×sub_dim サブ埋め込み

    Attributes
    ----------
    weights : np.ndarray
        m×V×sub_dim の配列
    """
    weights: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 3:
            raise DimensionMismatch("weights は m×V×sub_dim の3次元配列である必要があります")

    @classmethod
    def initialise(cls, cb: Codebook, seed: int = 0) -> "SubEmbeddingTable":
        """[-1/√d, 1/√d] の一様乱数で初期化"""
        bound = 1.0 / np.sqrt(cb.d)
        rng = make_generator(seed, cb.m, cb.V, cb.sub_dim)
        return cls(rng.uniform(-bound, bound, size=(cb.m, cb.V, cb.sub_dim)))

    def check(self, cb: Codebook) -> None:
        if self.weights.shape != (cb.m, cb.V, cb.sub_dim):
            raise DimensionMismatch(
                f"サブ埋め込みの形状 {self.weights.shape} がコードブック "
                f"({cb.m}, {cb.V}, {cb.sub_dim}) と一致しません"
            )


def build_interaction_matrix(train: EventLog) -> sparse.csr_matrix:
    """
    二値のユーザー×アイテム行列

    同じアイテムへの繰り返しは1にまとめます。

    Parameters
    ----------
    train : EventLog
        学習ログ（空でないこと）

    Returns
    -------
    scipy.sparse.csr_matrix
        |U|×|I| の二値行列
    """
    if train.n_events == 0:
        raise EmptyLog("学習ログが空です")
    matrix = sparse.csr_matrix(
        (
            np.ones(train.n_events, dtype=np.float64),
            (train.users.astype(np.int64), train.items.astype(np.int64)),
        ),
        shape=(train.n_users, train.n_items),
    )
    matrix.sum_duplicates()
    matrix.data[:] = 1.0
    return matrix


def dense_singular_values(matrix) -> np.ndarray:
    """
    MᵀM の固有値から特異値を求める密行列の参照実装（降順）

    小さな行列の検証用です。
    """
    dense = matrix.toarray() if sparse.issparse(matrix) else np.asarray(matrix, dtype=np.float64)
    gram = dense.T @ dense if dense.shape[0] >= dense.shape[1] else dense @ dense.T
    eigenvalues = np.linalg.eigvalsh(gram)
    return np.sqrt(np.clip(eigenvalues, 0.0, None))[::-1]


def _orthonormal(block: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(block)
    return q


def truncated_svd(
    matrix,
    rank: int,
    seed: int = 0,
    tol: float = 1e-7,
    max_iter: int = 300,
    n_oversamples: int = 8,
    min_power_iters: int = 2,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    ランダム化部分空間反復による truncated SVD

    特異値の推定値の相対変化が tol 未満になった時点で収束とみなします。
    σ_1·eps·max(rows, cols) 以下の特異値は数値ランクの外として判定から外し、
    0 として返します。

    Parameters
    ----------
    matrix : array-like or scipy.sparse matrix
        rows×cols の実行列
    rank : int
        求める特異値の個数
    seed : int, optional
        初期乱数行列のシード（デフォルト: 0）
    tol : float, optional
        収束判定の相対許容誤差（デフォルト: 1e-7）
    max_iter : int, optional
        最大反復回数（デフォルト: 300）
    n_oversamples : int, optional
        オーバーサンプリング列数（デフォルト: 8）
    min_power_iters : int, optional
        最小のべき乗反復回数（デフォルト: 2）

    Returns
    -------
    item_factors : np.ndarray
        cols×rank の右特異ベクトルを特異値倍したもの
    singular_values : np.ndarray
        rank 個の特異値（降順）

    Raises
    ------
    RankTooLarge
        rank が 1 未満または min(rows, cols) を超える場合
    ConvergenceFailure
        max_iter 回で収束しない場合
    """
    n_rows, n_cols = matrix.shape
    if rank < 1 or rank > min(n_rows, n_cols):
        raise RankTooLarge(
            f"rank は 1 以上 min(行数, 列数)={min(n_rows, n_cols)} 以下である必要があります: {rank}"
        )
    if tol <= 0:
        raise ConfigError(f"tol は正である必要があります: {tol}")

    n_samples = min(rank + n_oversamples, n_rows, n_cols)
    rng = make_generator(seed, n_rows, n_cols)
    omega = rng.standard_normal((n_cols, n_samples))
    q = _orthonormal(np.asarray(matrix @ omega))

    previous: Optional[np.ndarray] = None
    for iteration in range(1, max_iter + 1):
        z = _orthonormal(np.asarray(matrix.T @ q))
        q = _orthonormal(np.asarray(matrix @ z))
        # B = QᵀA を Aᵀ Q の転置として計算する（疎行列のまま扱える）
        b = np.asarray(matrix.T @ q).T
        _, sigma, vt = np.linalg.svd(b, full_matrices=False)
        current = sigma[:rank]
        if previous is not None and iteration >= min_power_iters:
            # 数値ランクを下回る特異値は丸め誤差なので収束判定から外す
            floor = max(current[0], previous[0]) * np.finfo(np.float64).eps * max(n_rows, n_cols)
            active = np.maximum(current, previous) > floor
            scale = np.maximum(previous, max(floor, np.finfo(np.float64).tiny))
            change = np.abs(current - previous) / scale
            delta = float(np.max(change[active])) if np.any(active) else 0.0
            logger.debug("SVD反復 %d: 特異値の相対変化 %.3e", iteration, delta)
            if delta < tol:
                logger.info("truncated SVD が %d 回で収束しました (rank=%d)", iteration, rank)
                if not np.all(active):
                    logger.warning(
                        "行列の数値ランク %d が rank=%d より小さいため、残りの特異値は0とみなします",
                        int(np.sum(active)), rank,
                    )
                    current = np.where(active, current, 0.0)
                vectors = vt[:rank].T
                # 符号の任意性を除く（各列の絶対値最大成分を正に）
                pivots = np.argmax(np.abs(vectors), axis=0)
                signs = np.sign(vectors[pivots, np.arange(rank)])
                signs[signs == 0] = 1.0
                return vectors * signs * current, current
        previous = current
    raise ConvergenceFailure(max_iter)


def _split_codes(column: np.ndarray, V: int) -> np.ndarray:
    n = len(column)
    order = np.lexsort((np.arange(n), column))
    codes = np.empty(n, dtype=np.int32)
    codes[order] = (np.arange(n, dtype=np.int64) * V) // n
    return codes


def assign_codes(
    item_factors: np.ndarray,
    singular_values: np.ndarray,
    V: int,
    sub_dim: int = 1,
    n_jobs: int = 1,
) -> Codebook:
    """
    SVD因子を分割ごとに等頻度で量子化してコードブックを作る

    分割 j ではアイテムを第 j 列の値（同値はインデックス）で昇順に並べ、
    V 個の連続した等頻度バケットに分けます。バケット番号がコードです。

    Parameters
    ----------
    item_factors : np.ndarray
        |I|×m の因子
    singular_values : np.ndarray
        m 個の特異値
    V : int
        分割あたりのコード数
    sub_dim : int, optional
        サブ埋め込みの次元（デフォルト: 1）
    n_jobs : int, optional
        分割単位の並列数（結果は並列数に依存しない）

    Returns
    -------
    Codebook
    """
    if V < 1:
        raise ConfigError(f"V は1以上である必要があります: {V}")
    factors = np.asarray(item_factors, dtype=np.float64)
    if factors.ndim != 2 or factors.shape[0] == 0:
        raise DimensionMismatch("item_factors は空でない |I|×m 行列である必要があります")
    m = factors.shape[1]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as executor:
            columns = list(executor.map(lambda j: _split_codes(factors[:, j], V), range(m)))
    else:
        columns = [_split_codes(factors[:, j], V) for j in range(m)]
    codes = np.column_stack(columns)
    cb = Codebook(
        codes=codes,
        V=V,
        sub_dim=sub_dim,
        item_factors=factors,
        singular_values=np.asarray(singular_values, dtype=np.float64),
    )
    if logger.isEnabledFor(logging.DEBUG):
        for j in range(m):
            hist = cb.histogram(j)
            logger.debug("分割 %d: コードあたり %d〜%d アイテム", j, hist.min(), hist.max())
    return cb


def build_codebook(
    train: EventLog,
    m: int,
    V: int,
    d: int,
    seed: int = 0,
    tol: float = 1e-7,
    max_iter: int = 300,
    n_oversamples: int = 8,
    min_power_iters: int = 2,
    n_jobs: int = 1,
) -> Codebook:
    """
    学習ログからコードブックを構築する

    Parameters
    ----------
    train : EventLog
        学習ログ
    m : int
        分割数
    V : int
        分割あたりのコード数
    d : int
        埋め込み次元（m の倍数）
    seed, tol, max_iter, n_oversamples, min_power_iters
        truncated_svd に渡す値
    n_jobs : int, optional
        分割単位の並列数
    """
    if d % m != 0:
        raise ConfigError(f"埋め込み次元 d={d} は分割数 m={m} の倍数である必要があります")
    matrix = build_interaction_matrix(train)
    logger.info(
        "相互作用行列 %d×%d (非ゼロ %d) を分解します", matrix.shape[0], matrix.shape[1], matrix.nnz
    )
    factors, sigma = truncated_svd(
        matrix, rank=m, seed=seed, tol=tol, max_iter=max_iter,
        n_oversamples=n_oversamples, min_power_iters=min_power_iters,
    )
    return assign_codes(factors, sigma, V=V, sub_dim=d // m, n_jobs=n_jobs)


def code_of(cb: Codebook, item: int) -> Tuple[int, ...]:
    """アイテムのサブID (m 個の組)"""
    if not 0 <= item < cb.n_items:
        raise IndexOutOfRange(f"アイテムインデックス {item} は [0, {cb.n_items}) の範囲外です")
    return tuple(int(z) for z in cb.codes[item])


def reconstruct_embedding(cb: Codebook, table: SubEmbeddingTable, item: int) -> np.ndarray:
    """code(item) に従って m 個のサブ埋め込みを連結した d 次元ベクトル"""
    table.check(cb)
    codes = np.asarray(code_of(cb, item))
    return table.weights[np.arange(cb.m), codes].reshape(-1)


def reconstruct_all(cb: Codebook, table: SubEmbeddingTable) -> np.ndarray:
    """全アイテムの埋め込み（|I|×d）"""
    table.check(cb)
    return table.weights[np.arange(cb.m)[None, :], cb.codes].reshape(cb.n_items, cb.d)


def save_codebook(cb: Codebook, path: PathLike) -> None:
    """バージョン付きの .npz として保存"""
    try:
        with open(path, "wb") as f:
            np.savez(
                f,
                version=np.int64(CODEBOOK_FORMAT_VERSION),
                codes=cb.codes,
                V=np.int64(cb.V),
                sub_dim=np.int64(cb.sub_dim),
                item_factors=cb.item_factors,
                singular_values=cb.singular_values,
            )
    except OSError as exc:
        raise ReportIoError(f"コードブックを書き込めません: {path}") from exc


def load_codebook(path: PathLike) -> Codebook:
    """save_codebook で保存したコードブックを読み込む"""
    with np.load(path) as data:
        version = int(data["version"])
        if version != CODEBOOK_FORMAT_VERSION:
            raise ValueError(f"未対応のコードブック形式です: v{version}")
        return Codebook(
            codes=data["codes"].copy(),
            V=int(data["V"]),
            sub_dim=int(data["sub_dim"]),
            item_factors=data["item_factors"].copy(),
            singular_values=data["singular_values"].copy(),
        )


def export_codebook_tsv(cb: Codebook, item_ids, path: PathLike) -> None:
    """``item_id, z_1, …, z_m`` のTSVとして書き出す"""
    frame = pd.DataFrame(cb.codes, columns=[f"z_{j + 1}" for j in range(cb.m)])
    frame.insert(0, "item_id", list(item_ids))
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(f"# subpop-codebook v{CODEBOOK_FORMAT_VERSION} m={cb.m} V={cb.V}\n")
            frame.to_csv(f, sep="\t", index=False, lineterminator="\n")
    except OSError as exc:
        raise ReportIoError(f"コードブックを書き込めません: {path}") from exc

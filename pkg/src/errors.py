"""
subpopの例外階層

各例外はCLIの終了コード区分 ``exit_code`` を持ちます。
入力検証系の例外は ``ValueError`` も継承するため、組み込み例外で
捕捉している呼び出し側もそのまま動作します。
"""


class SubpopError(Exception):
    """subpopの全例外の基底クラス"""
    exit_code = 1


# ---------------------------------------------------------------------------
# 入力エラー (終了コード 3)
# ---------------------------------------------------------------------------

class InputError(SubpopError, ValueError):
    """入力データに起因するエラー"""
    exit_code = 3


class ParseError(InputError):
    """
    イベントログの行が不正

    Attributes
    ----------
    row : int
        1始まりの行番号
    reason : str
        不正の理由
    """

    def __init__(self, row: int, reason: str):
        self.row = row
        self.reason = reason
        super().__init__(f"{row}行目: {reason}")


class EmptyLog(InputError):
    """有効なイベントが1件もない"""


class DegenerateSplit(InputError):
    """時系列分割ができない（タイムスタンプが全て同一など）"""


class MissingUser(InputError):
    """外部ロジットに評価対象ユーザーが含まれていない"""

    def __init__(self, user_id: str):
        self.user_id = user_id
        super().__init__(f"外部ロジットにユーザー {user_id!r} がありません")


class NonFiniteScore(InputError):
    """外部ロジットに非有限値が含まれている"""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"{row}行目: 非有限のスコアが含まれています")


class DuplicateInRecs(InputError):
    """推薦リストに重複アイテムがある"""


class EmptyHistory(InputError):
    """学習期間の履歴が空のユーザー"""


class DimensionMismatch(InputError):
    """配列・テーブルの次元が一致しない"""


class IndexOutOfRange(InputError, IndexError):
    """アイテムインデックスが範囲外"""


# ---------------------------------------------------------------------------
# 数値計算エラー (終了コード 4)
# ---------------------------------------------------------------------------

class NumericalError(SubpopError):
    """数値計算の失敗"""
    exit_code = 4


class ConvergenceFailure(NumericalError):
    """truncated SVDが許容誤差内に収束しなかった"""

    def __init__(self, max_iter: int):
        self.max_iter = max_iter
        super().__init__(f"{max_iter}回の反復で特異値が収束しませんでした")


class RankTooLarge(NumericalError, ValueError):
    """要求ランクが行列サイズに対して不正"""


# ---------------------------------------------------------------------------
# 設定エラー (終了コード 5)
# ---------------------------------------------------------------------------

class ConfigError(SubpopError, ValueError):
    """設定値が不正"""
    exit_code = 5


class WeightViolation(ConfigError):
    """融合重み (α, β) が凸結合の条件を満たさない"""


# ---------------------------------------------------------------------------
# 入出力エラー (終了コード 6)
# ---------------------------------------------------------------------------

class ReportIoError(SubpopError, OSError):
    """レポート・図の書き出しに失敗"""
    exit_code = 6

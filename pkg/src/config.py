"""
実験設定と key = value 形式の設定ファイル
"""

import configparser
import logging
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

from src.errors import ConfigError
from src.scorer import ScorerType

logger = logging.getLogger(__name__)

_SECTION = "subpop"

SWEEP_MODES = ("pps-only", "spps-only", "combined")


def parse_float_list(raw: str) -> Tuple[float, ...]:
    """``0, 0.1, 0.2`` → (0.0, 0.1, 0.2)"""
    try:
        return tuple(float(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"数値のリストとして解釈できません: {raw!r}") from None


def parse_modes(raw: str) -> Tuple[str, ...]:
    """``pps-only,combined`` や ``all`` をモード名のタプルに"""
    names = [v.strip().lower() for v in raw.split(",") if v.strip()]
    if names == ["all"]:
        return SWEEP_MODES
    for name in names:
        if name not in SWEEP_MODES:
            raise ConfigError(f"未知のスイープモードです: {name!r} ({', '.join(SWEEP_MODES)}, all)")
    return tuple(dict.fromkeys(names))


def _parse_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"真偽値として解釈できません: {raw!r}")


def _optional(convert: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(raw: str) -> Any:
        return None if raw.strip() in ("", "none") else convert(raw.strip())
    return parse


@dataclass(frozen=True)
class ExperimentConfig:
    """
    1回の実験に必要な全パラメータ

    既定値は評価プロトコルの値（K=40、直近10%をテスト、m=32、V=256 など）。
    """
    data: Optional[Path] = None
    top_items: Optional[int] = None
    holdout_fraction: float = 0.1
    split_cache: Optional[Path] = None
    eval_users: Optional[int] = None
    seed: int = 0

    scorer: ScorerType = ScorerType.MARKOV
    logits: Optional[Path] = None
    logits_default: Optional[float] = None
    markov_smoothing: float = 0.0
    history_window: int = 50
    standardize_logits: bool = False

    splits: int = 32
    codebook_size: int = 256
    embedding_dim: int = 256
    svd_seed: int = 0
    svd_tol: float = 1e-7
    svd_max_iter: int = 300
    svd_oversamples: int = 8
    svd_min_power_iters: int = 2

    k: int = 40
    pps_epsilon: float = 1.0
    novelty_epsilon: float = 1e-8
    modes: Tuple[str, ...] = ("pps-only",)
    alpha_grid: Tuple[float, ...] = ()
    beta_grid: Tuple[float, ...] = ()
    fixed_beta: float = 0.9
    thresholds: Tuple[float, ...] = (0.0, 10.0, 12.0, 14.0)
    match_tolerance: float = 0.01
    threads: int = 1

    out: Optional[Path] = None
    plot: Optional[Path] = None
    dump_recs: Optional[Path] = None
    dump_profiles: Optional[Path] = None
    codebook_out: Optional[Path] = None

    def __post_init__(self):
        if not 0 < self.holdout_fraction < 1:
            raise ConfigError(f"holdout_fraction は (0, 1) の範囲である必要があります: {self.holdout_fraction}")
        for name in ("splits", "codebook_size", "embedding_dim", "k", "threads",
                     "history_window", "svd_max_iter"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} は1以上である必要があります: {getattr(self, name)}")
        if self.embedding_dim % self.splits != 0:
            raise ConfigError(
                f"embedding_dim={self.embedding_dim} は splits={self.splits} の倍数である必要があります"
            )
        if self.top_items is not None and self.top_items < 1:
            raise ConfigError(f"top_items は1以上である必要があります: {self.top_items}")
        if self.eval_users is not None and self.eval_users < 1:
            raise ConfigError(f"eval_users は1以上である必要があります: {self.eval_users}")
        if self.pps_epsilon <= 0:
            raise ConfigError(f"pps_epsilon は正である必要があります: {self.pps_epsilon}")
        if not 0 < self.novelty_epsilon < 1:
            raise ConfigError(f"novelty_epsilon は (0, 1) の範囲である必要があります: {self.novelty_epsilon}")
        if self.markov_smoothing < 0:
            raise ConfigError(f"markov_smoothing は非負である必要があります: {self.markov_smoothing}")
        if not 0 <= self.fixed_beta <= 1:
            raise ConfigError(f"fixed_beta は [0, 1] の範囲である必要があります: {self.fixed_beta}")
        if not self.modes:
            raise ConfigError("スイープモードが指定されていません")
        for mode in self.modes:
            if mode not in SWEEP_MODES:
                raise ConfigError(f"未知のスイープモードです: {mode!r}")
        if self.scorer is ScorerType.EXTERNAL and self.logits is None:
            raise ConfigError("scorer=external には logits の指定が必要です")
        if self.match_tolerance < 0:
            raise ConfigError(f"match_tolerance は非負である必要があります: {self.match_tolerance}")

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentConfig":
        """設定ファイルを読み込む（未知のキーはエラー）"""
        return cls().with_overrides(read_config_file(path))

    def with_overrides(self, overrides: Dict[str, Any]) -> "ExperimentConfig":
        """None でない値だけを上書きした新しい設定"""
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ConfigError(f"未知の設定キーです: {', '.join(unknown)}")
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def _scorer_type(raw: str) -> ScorerType:
    try:
        return ScorerType(raw.strip().lower())
    except ValueError:
        names = ", ".join(t.value for t in ScorerType)
        raise ConfigError(f"未知のスコアラーです: {raw!r} ({names})") from None


_CONVERTERS: Dict[str, Callable[[str], Any]] = {
    "data": _optional(Path),
    "top_items": _optional(int),
    "holdout_fraction": float,
    "split_cache": _optional(Path),
    "eval_users": _optional(int),
    "seed": int,
    "scorer": _scorer_type,
    "logits": _optional(Path),
    "logits_default": _optional(float),
    "markov_smoothing": float,
    "history_window": int,
    "standardize_logits": _parse_bool,
    "splits": int,
    "codebook_size": int,
    "embedding_dim": int,
    "svd_seed": int,
    "svd_tol": float,
    "svd_max_iter": int,
    "svd_oversamples": int,
    "svd_min_power_iters": int,
    "k": int,
    "pps_epsilon": float,
    "novelty_epsilon": float,
    "modes": parse_modes,
    "alpha_grid": parse_float_list,
    "beta_grid": parse_float_list,
    "fixed_beta": float,
    "thresholds": parse_float_list,
    "match_tolerance": float,
    "threads": int,
    "out": _optional(Path),
    "plot": _optional(Path),
    "dump_recs": _optional(Path),
    "dump_profiles": _optional(Path),
    "codebook_out": _optional(Path),
}


# コマンドラインのフラグ名と同じキーも受け付ける
_ALIASES = {"mode": "modes", "holdout": "holdout_fraction"}


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    ``key = value`` 形式の設定ファイルを辞書に変換

    ``#`` 以降はコメント、リストはカンマ区切り。キーのハイフンは
    アンダースコアとして扱い、``mode`` と ``holdout`` はコマンドラインと
    同じ名前で指定できます。

    Raises
    ------
    ConfigError
        未知のキーや変換できない値がある場合
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"設定ファイルを読み込めません: {path}") from exc

    parser = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#",), inline_comment_prefixes=("#",),
        interpolation=None,
    )
    try:
        parser.read_string(f"[{_SECTION}]\n{text}", source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"設定ファイルの書式が不正です: {path}: {exc}") from exc

    values: Dict[str, Any] = {}
    for raw_key, raw_value in parser.items(_SECTION):
        key = raw_key.replace("-", "_")
        key = _ALIASES.get(key, key)
        if key not in _CONVERTERS:
            raise ConfigError(f"未知の設定キーです: {raw_key}")
        try:
            values[key] = _CONVERTERS[key](raw_value)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{raw_key} の値が不正です: {raw_value!r}") from None
    logger.info("設定ファイルを読み込みました: %s (%d 項目)", path, len(values))
    return values

"""Flat ``key = value`` run configuration shared by every CLI subcommand."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

from .embeddings import LEXICON_ORDER, N_LEXICONS
from .errors import ConfigError, MissingInputError
from .model import ModelConfig
from .training import TrainConfig


def _ints(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in v.replace("(", "").replace(")", "").split(",") if x.strip())


def _strs(v: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in v.split(",") if x.strip())


def _opt_float(v: str) -> float | None:
    return None if v.strip().lower() in ("none", "off", "") else float(v)


def _opt_str(v: str) -> str | None:
    return v.strip() or None


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # model
    filter_sizes: tuple[int, ...] = (2, 3, 4, 5)
    feature_maps: int = 500
    bottleneck_dim: int = 100
    highway_depth: int = 2
    # training
    learning_rate: float = 3e-4
    batch_size: int = 16
    epochs: int = 25
    l2_norm_constraint: float | None = 0.2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # experiments
    folds: int = 10
    parallel: int = 1
    combos: tuple[str, ...] = ()
    sweep_feature_maps: tuple[int, ...] = ()
    # inputs
    word_vectors: str | None = None
    word_dim: int = 300
    lexicons: tuple[str, ...] = ()
    lexicon_names: tuple[str, ...] = LEXICON_ORDER
    tagset: tuple[str, ...] = ()
    dataset: str | None = None
    dataset_format: str = "raw"
    eval_dataset: str | None = None
    iwv_cache: str | None = None
    checkpoint: str | None = None
    out: str = "runs/default"

    def model_config(self, num_classes: int, embed_dim: int) -> ModelConfig:
        return ModelConfig(
            filter_sizes=self.filter_sizes,
            feature_maps=self.feature_maps,
            bottleneck_dim=self.bottleneck_dim,
            highway_depth=self.highway_depth,
            num_classes=num_classes,
            embed_dim=embed_dim,
            seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            l2_norm_constraint=self.l2_norm_constraint,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
            seed=self.seed,
        )

    def input_paths(self) -> dict[str, str]:
        paths = {k: getattr(self, k) for k in ("word_vectors", "dataset", "eval_dataset", "iwv_cache", "checkpoint")}
        paths.update({f"lexicon:{n}": p for n, p in zip(self.lexicon_names, self.lexicons)})
        return {k: v for k, v in paths.items() if v}

    def validate(self) -> "RunConfig":
        problems = []
        if len(self.lexicons) not in (0, N_LEXICONS):
            problems.append(f"expected 0 or {N_LEXICONS} lexicon paths, got {len(self.lexicons)}")
        if len(self.lexicon_names) != N_LEXICONS or len(set(self.lexicon_names)) != N_LEXICONS:
            problems.append(f"lexicon_names must list {N_LEXICONS} distinct names")
        for name in ("folds", "parallel", "word_dim"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.folds < 2:
            problems.append("folds must be >= 2")
        if self.dataset_format not in ("raw", "tagged"):
            problems.append(f"dataset_format must be raw or tagged, got {self.dataset_format!r}")
        try:
            self.model_config(2, 1)
            self.train_config()
        except ConfigError as exc:
            problems.extend(exc.violations)
        if problems:
            raise ConfigError(problems)
        for key, path in self.input_paths().items():
            if not Path(path).exists():
                raise MissingInputError(f"{key}: no such file: {path}")
        return self

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_PARSERS = {
    "filter_sizes": _ints,
    "sweep_feature_maps": _ints,
    "lexicons": _strs,
    "lexicon_names": _strs,
    "tagset": _strs,
    "combos": lambda v: _strs(v.upper()),
    "l2_norm_constraint": _opt_float,
    "word_vectors": _opt_str,
    "dataset": _opt_str,
    "eval_dataset": _opt_str,
    "iwv_cache": _opt_str,
    "checkpoint": _opt_str,
}
KEYS = {f.name for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    if key not in KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    if key in _PARSERS:
        return _PARSERS[key](raw)
    default = RunConfig.__dataclass_fields__[key].default
    try:
        return type(default)(raw.strip())
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        values[key.strip()] = value.strip()
    return values


def load_run_config(path=None, overrides: Mapping[str, str] | None = None) -> RunConfig:
    """File values, then ``overrides`` (from flags) on top; nothing validated yet."""
    raw: dict[str, str] = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise MissingInputError(f"config: no such file: {path}")
        raw.update(parse_config_text(p.read_text(encoding="utf-8"), str(p)))
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(**{k: _convert(k, str(v)) for k, v in raw.items()})


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(map(str, v))
        elif v is None:
            v = "none" if f.name == "l2_norm_constraint" else ""
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"

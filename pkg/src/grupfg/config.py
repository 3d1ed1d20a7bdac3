"""Flat ``section.key = value`` run configuration.

Recognised keys (defaults in brackets)::

    model.kind                gru-pfg | gru | mlp | gru-pfg-primary-only | gru-pfg-cosine  [gru-pfg]
    model.hidden_size         int                                    [64]
    train.epochs              int                                    [100]
    train.learning_rate       float                                  [2e-4]
    train.optimizer           adam | sgd                             [adam]
    train.beta1               float                                  [0.9]
    train.beta2               float                                  [0.999]
    train.adam_eps            float                                  [1e-8]
    train.early_stop_patience int                                    [10]
    train.grad_clip_norm      float | none                           [3.0]
    train.seed                int, overridden by $PFG_SEED            [0]
    split.train               YYYY-MM-DD:YYYY-MM-DD                  [2007-01-01:2014-12-31]
    split.valid               YYYY-MM-DD:YYYY-MM-DD                  [2015-01-01:2016-12-31]
    split.test                YYYY-MM-DD:YYYY-MM-DD                  [2017-01-01:2020-12-31]
    split.train_days          int; with valid_days/test_days, splits by day count instead
    split.valid_days          int
    split.test_days           int
    split.drop_last_date      bool                                   [true]

Blank lines and ``#`` comments are ignored. Unknown keys are errors.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .baselines import KINDS
from .data import SplitSpec
from .errors import ConfigError, GruPfgError
from .train import TrainConfig

SEED_ENV = "PFG_SEED"

_TRAIN_KEYS = {
    "train.epochs": ("epochs", int),
    "train.learning_rate": ("learning_rate", float),
    "train.optimizer": ("optimizer", str),
    "train.beta1": ("beta1", float),
    "train.beta2": ("beta2", float),
    "train.adam_eps": ("adam_eps", float),
    "train.early_stop_patience": ("early_stop_patience", int),
    "train.grad_clip_norm": ("grad_clip_norm", "optional_float"),
    "train.seed": ("seed", int),
    "model.kind": ("model_kind", str),
    "model.hidden_size": ("hidden_size", int),
}
_SPLIT_KEYS = {"split.train", "split.valid", "split.test", "split.train_days", "split.valid_days",
               "split.test_days", "split.drop_last_date"}


@dataclass
class SplitOptions:
    ranges: SplitSpec = field(default_factory=SplitSpec)
    counts: tuple[int, int, int] | None = None
    drop_last_date: bool = True

    def resolve(self, dates) -> SplitSpec:
        if self.counts is None:
            return self.ranges
        return SplitSpec.from_counts(dates, *self.counts)


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitOptions = field(default_factory=SplitOptions)

    def to_text(self) -> str:
        lines = []
        for key, (attr, _) in _TRAIN_KEYS.items():
            value = getattr(self.train, attr)
            lines.append(f"{key} = {'none' if value is None else value}")
        if self.split.counts is None:
            for name, rng in self.split.ranges.as_dict().items():
                lines.append(f"split.{name} = {rng}")
        else:
            for name, n in zip(("train", "valid", "test"), self.split.counts):
                lines.append(f"split.{name}_days = {n}")
        lines.append(f"split.drop_last_date = {str(self.split.drop_last_date).lower()}")
        return "\n".join(lines) + "\n"


def _parse_bool(key: str, raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {raw!r}")


def _convert(key: str, raw: str, kind):
    try:
        if kind == "optional_float":
            return None if raw.lower() == "none" else float(raw)
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from exc


def _parse_range(key: str, raw: str):
    try:
        start, end = raw.split(":")
        return start.strip(), end.strip()
    except ValueError as exc:
        raise ConfigError(f"{key}: expected START:END, got {raw!r}") from exc


def parse_config(text: str, env: dict | None = None) -> RunConfig:
    env = os.environ if env is None else env
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _TRAIN_KEYS and key not in _SPLIT_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = raw
    if env.get(SEED_ENV):
        values["train.seed"] = env[SEED_ENV]

    train_kwargs = {}
    for key, (attr, kind) in _TRAIN_KEYS.items():
        if key in values:
            train_kwargs[attr] = _convert(key, values[key], kind)
    if train_kwargs.get("model_kind", "gru-pfg") not in KINDS:
        raise ConfigError(f"model.kind must be one of {', '.join(KINDS)}")
    try:
        train_cfg = TrainConfig(**train_kwargs)
        defaults = SplitSpec()
        ranges = SplitSpec(
            _parse_range("split.train", values["split.train"]) if "split.train" in values else defaults.train,
            _parse_range("split.valid", values["split.valid"]) if "split.valid" in values else defaults.valid,
            _parse_range("split.test", values["split.test"]) if "split.test" in values else defaults.test,
        )
    except ConfigError:
        raise
    except (GruPfgError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    count_keys = ("split.train_days", "split.valid_days", "split.test_days")
    present = [k in values for k in count_keys]
    counts = None
    if any(present):
        if not all(present):
            raise ConfigError("split.train_days, split.valid_days and split.test_days must be given together")
        counts = tuple(_convert(k, values[k], int) for k in count_keys)
    drop = _parse_bool("split.drop_last_date", values["split.drop_last_date"]) if "split.drop_last_date" in values else True
    return RunConfig(train_cfg, SplitOptions(ranges, counts, drop))


def load_config(path, env: dict | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, env)

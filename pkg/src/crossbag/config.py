"""Flat JSON run configuration.

Every key has a default, so an empty config file (or none at all) is
valid. Unknown keys and type violations are rejected by name. The same
file drives training, evaluation, and the synthetic benchmark generator;
``--seed``, ``--mode``, and ``--scoring`` can be overridden on the CLI.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .attention import MODES, SCORINGS
from .errors import ConfigError


@dataclass
class Config:
    # run identity
    seed: int = 7
    mode: str = "C2SA"              # ATT | CRSA | C2SA
    scoring: str = "cosine"         # cosine | dot
    threads: int = 1

    # model geometry
    word_dim: int = 50
    pos_dim: int = 5
    n_filters: int = 100
    window: int = 3
    keep_prob: float = 0.5          # dropout keep probability
    max_len: int = 120
    clip: int = 30

    # training
    superbag_size: int = 3
    batch_size: int = 32            # superbags per update
    epochs: int = 15
    lr: float = 0.01
    max_bag_size: int = 20
    na_ratio: float = 1.0           # NA superbags per non-NA superbag, per epoch
    freeze_word_emb: bool = False

    # evaluation
    exclude_train_pairs: bool = False
    p_at_n: tuple = (100, 200, 300)
    figures: bool = True            # render PNGs next to the CSVs

    # synthetic benchmark
    synth_relations: int = 10
    synth_vocab_size: int = 200
    synth_triggers_per_relation: int = 3
    synth_sentences_per_bag: int = 4
    synth_bags_per_relation: int = 50
    synth_sentence_noise: float = 0.3
    synth_noisy_bag_rate: float = 0.31
    synth_test_bags_per_relation: int = 10

    # paths (subcommand flags override)
    word_vectors: str | None = None
    train_corpus: str | None = None
    test_corpus: str | None = None
    dev_corpus: str | None = None   # per-epoch sentence F1 when set
    relations: str | None = None    # optional relation-name file, one per line
    out_dir: str = "out"


_RANGE_CHECKS = {
    "threads": lambda v: v >= 1,
    "word_dim": lambda v: v >= 1,
    "pos_dim": lambda v: v >= 1,
    "n_filters": lambda v: v >= 1,
    "window": lambda v: v >= 1,
    "keep_prob": lambda v: 0.0 < v <= 1.0,
    "max_len": lambda v: v >= 2,
    "clip": lambda v: v >= 1,
    "superbag_size": lambda v: v >= 1,
    "batch_size": lambda v: v >= 1,
    "epochs": lambda v: v >= 1,
    "lr": lambda v: v > 0.0,
    "max_bag_size": lambda v: v >= 1,
    "na_ratio": lambda v: v >= 0.0,
    "synth_relations": lambda v: v >= 2,
    "synth_vocab_size": lambda v: v >= 1,
    "synth_triggers_per_relation": lambda v: v >= 1,
    "synth_sentences_per_bag": lambda v: v >= 1,
    "synth_bags_per_relation": lambda v: v >= 1,
    "synth_sentence_noise": lambda v: 0.0 <= v <= 1.0,
    "synth_noisy_bag_rate": lambda v: 0.0 <= v <= 1.0,
    "synth_test_bags_per_relation": lambda v: v >= 1,
}


def _coerce(name: str, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(isinstance(v, int) for v in value):
            raise ConfigError(f"{name}: expected a list of integers, got {value!r}")
        return tuple(value)
    if default is None or isinstance(default, str):
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string or null, got {value!r}")
        return value
    raise ConfigError(f"{name}: unsupported config type")


def validate(cfg: Config) -> Config:
    if cfg.mode not in MODES:
        raise ConfigError(f"mode: must be one of {list(MODES)}, got {cfg.mode!r}")
    if cfg.scoring not in SCORINGS:
        raise ConfigError(f"scoring: must be one of {list(SCORINGS)}, got {cfg.scoring!r}")
    for name, check in _RANGE_CHECKS.items():
        if not check(getattr(cfg, name)):
            raise ConfigError(f"{name}: out of range ({getattr(cfg, name)!r})")
    return cfg


def from_mapping(data: dict) -> Config:
    defaults = Config()
    known = {f.name for f in dataclasses.fields(Config)}
    values = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{key}: unknown config key")
        values[key] = _coerce(key, getattr(defaults, key), value)
    return validate(dataclasses.replace(defaults, **values))


def load_config(path: str | None) -> Config:
    if path is None:
        return validate(Config())
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return from_mapping(data)


def to_mapping(cfg: Config) -> dict:
    data = dataclasses.asdict(cfg)
    data["p_at_n"] = list(cfg.p_at_n)
    return data

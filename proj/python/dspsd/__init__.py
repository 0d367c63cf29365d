"""Smart Ponzi scheme detection on temporal transaction graphs."""

import json as _json

from . import _dspsd
from ._dspsd import ConfigError, DataError, NotFoundError, kfold_split, prf

__all__ = [
    "ConfigError",
    "DataError",
    "NotFoundError",
    "default_config",
    "detect",
    "evaluate",
    "generate",
    "importance",
    "kfold_split",
    "prf",
    "train",
]


def _config_text(config):
    if config is None:
        return ""
    return _json.dumps(config)


def default_config():
    """Training settings as a dict."""
    return _json.loads(_dspsd.default_config())


def generate(out_dir, seed=7, recipe="default"):
    """Write a seeded synthetic dataset; returns the manifest counts."""
    return _dspsd.generate(str(out_dir), seed, recipe)


def importance(data_dir, top=80, smooth_idf=False):
    """TF-IDF opcode importance as (opcode, score, class) tuples."""
    return _dspsd.importance(str(data_dir), top, smooth_idf)


def train(data_dir, out_path, config=None):
    """Train on a dataset directory and write a model file. Returns per-epoch losses."""
    return _dspsd.train(str(data_dir), str(out_path), _config_text(config))


def detect(model_path, data_dir, ids=()):
    """Score accounts; every contract when ids is empty."""
    return _dspsd.detect(str(model_path), str(data_dir), list(ids))


def evaluate(data_dir, config=None, folds=10):
    """k-fold cross-validation; returns per-fold and mean precision, recall and F."""
    return _dspsd.evaluate(str(data_dir), _config_text(config), folds)

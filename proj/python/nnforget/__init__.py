"""Python front end for the nnforget C++ library.

Configs are plain dicts using the same keys as the JSON config files.
"""

import json

from ._core import (  # noqa: F401
    ConfigError,
    DataError,
    DenseNet,
    FitError,
    FormatError,
    NnforgetError,
    PhaseError,
    ShapeError,
    cosine_similarity,
    eval_model,
    events_from_jsonl,
    family_names,
    fit_curve,
    hidden_states,
    init_network,
    load_network,
    logits,
    loss,
    recall_distribution,
    save_network,
    softmax_scaled,
    version,
)
from . import _core

__version__ = _core.version().split("+")[0]


def default_config():
    return json.loads(_core.default_config_json())


def make_config(**overrides):
    """Defaults updated with ``overrides``, validated by the C++ side."""
    cfg = default_config()
    cfg.update(overrides)
    return json.loads(_core.normalize_config_json(json.dumps(cfg)))


def _phase(fn, config, verbose):
    return json.loads(fn(json.dumps(config), verbose))


def run_pipeline(config, verbose=False):
    return _phase(_core.run_pipeline, config, verbose)


def pretrain(config, verbose=False):
    return _phase(_core.pretrain, config, verbose)


def prototypes(config, verbose=False):
    return _phase(_core.prototypes, config, verbose)


def continue_training(config, verbose=False):
    return _phase(_core.continue_training, config, verbose)


def fit(config, verbose=False):
    return _phase(_core.fit, config, verbose)


def plot(config, verbose=False):
    return _phase(_core.plot, config, verbose)


def compare_models(t, y):
    return json.loads(_core.compare_models_json(list(t), list(y)))

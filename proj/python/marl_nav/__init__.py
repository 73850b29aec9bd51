"""Python bindings for the multi-robot navigation simulator and PPO trainer."""

import json

from ._marl_nav import (
    ConfigError,
    NumericError,
    World,
    cli,
    preset_names,
    selftest,
    step_kinematics,
)
from . import _marl_nav


def preset(name):
    """Resolved preset config as a dict."""
    return json.loads(_marl_nav.preset_json(name))


def train(config, out_dir=""):
    """Train from a config dict (may name a "preset"). Returns a summary dict."""
    result = _marl_nav.train_json(json.dumps(config), out_dir)
    result["checkpoint"] = json.loads(result["checkpoint"])
    return result


def evaluate(checkpoint, experiment=None, episodes=500, seed=0, deterministic=False):
    """Evaluate a checkpoint file and return the report as a dict."""
    return json.loads(_marl_nav.evaluate_json(str(checkpoint), experiment, episodes, seed, deterministic))


__all__ = [
    "ConfigError",
    "NumericError",
    "World",
    "cli",
    "evaluate",
    "preset",
    "preset_names",
    "selftest",
    "step_kinematics",
    "train",
]

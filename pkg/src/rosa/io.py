"""JSON formats for models, policies, constraint systems and solve reports.

Model::

    {"n_states", "n_obs", "n_actions", "alpha": [s][a][s'], "obs_of": [s],
     "reward": [s][a], "mu": [s], "gamma"}

Policy: ``{"pi": [o][a]}``.  Floats are written with ``repr`` precision, so
a model survives a round trip bit for bit and identical inputs give
byte-identical files.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .pomdp import InvalidInput, PomdpModel, as_obs_policy

MODEL_KEYS = ("n_states", "n_obs", "n_actions", "alpha", "obs_of", "reward", "mu", "gamma")


def model_to_json(model: PomdpModel) -> dict:
    return {
        "n_states": model.n_states,
        "n_obs": model.n_obs,
        "n_actions": model.n_actions,
        "alpha": model.alpha.tolist(),
        "obs_of": model.obs_of.tolist(),
        "reward": model.reward.tolist(),
        "mu": model.mu.tolist(),
        "gamma": model.gamma,
    }


def _array(doc, key, shape):
    try:
        arr = np.array(doc[key], dtype=float)
    except (ValueError, TypeError) as exc:
        raise InvalidInput(f"model field {key!r} is not a numeric array") from exc
    if arr.shape != shape:
        raise InvalidInput(f"model field {key!r} has shape {arr.shape}, expected {shape}")
    return arr


def model_from_json(doc) -> PomdpModel:
    if not isinstance(doc, dict):
        raise InvalidInput("model document must be a JSON object")
    missing = [k for k in MODEL_KEYS if k not in doc]
    if missing:
        raise InvalidInput(f"model is missing field(s): {', '.join(missing)}")
    try:
        S, O, A = int(doc["n_states"]), int(doc["n_obs"]), int(doc["n_actions"])
        gamma = float(doc["gamma"])
    except (ValueError, TypeError) as exc:
        raise InvalidInput("n_states, n_obs, n_actions and gamma must be numbers") from exc
    alpha = _array(doc, "alpha", (S, A, S))
    obs_of = _array(doc, "obs_of", (S,))
    reward = _array(doc, "reward", (S, A))
    mu = _array(doc, "mu", (S,))
    return PomdpModel(alpha=alpha, obs_of=obs_of, reward=reward, mu=mu, gamma=gamma, n_obs=O)


def policy_to_json(pi) -> dict:
    return {"pi": np.asarray(pi, dtype=float).tolist()}


def policy_from_json(doc, model: PomdpModel) -> np.ndarray:
    if not isinstance(doc, dict) or "pi" not in doc:
        raise InvalidInput('policy document must be an object with key "pi"')
    try:
        pi = np.array(doc["pi"], dtype=float)
    except (ValueError, TypeError) as exc:
        raise InvalidInput("policy entries must be numbers in a rectangular array") from exc
    return as_obs_policy(model, pi)


def read_json(path):
    """Parse a UTF-8 JSON file; malformed content raises :class:`InvalidInput`."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from exc


def write_json(doc, path):
    text = json.dumps(doc, indent=1, allow_nan=True) + "\n"
    if path is None or str(path) == "-":
        print(text, end="")
    else:
        Path(path).write_text(text, encoding="utf-8")


def load_model(path) -> PomdpModel:
    return model_from_json(read_json(path))


def save_model(model: PomdpModel, path):
    write_json(model_to_json(model), path)


def load_policy(path, model: PomdpModel) -> np.ndarray:
    return policy_from_json(read_json(path), model)

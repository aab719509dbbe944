"""Versioned JSON documents for fitted models.

Trees are stored as nested nodes, network weights as flat lists with their
shapes. JSON floats are written with ``repr`` precision, so a round trip
reproduces predictions bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ._tree import Tree
from .boosting import GradientBoostedTreesRegressor
from .forest import RandomForestRegressor
from .lstm import LSTMRegressor

FORMAT_VERSION = 1

_KINDS = {
    RandomForestRegressor: "random_forest",
    GradientBoostedTreesRegressor: "gbt",
    LSTMRegressor: "lstm",
}


def _json_params(model) -> dict:
    out = {}
    for k, v in model.get_params().items():
        out[k] = list(v) if isinstance(v, tuple) else v
    return out


def model_to_dict(model) -> dict:
    kind = _KINDS.get(type(model))
    if kind is None:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    doc = {"format": "wearable-anxiety-model", "version": FORMAT_VERSION, "kind": kind,
           "params": _json_params(model), "n_features": int(model.n_features_in_)}
    if kind == "random_forest":
        doc["trees"] = [t.to_node() for t in model.trees_]
    elif kind == "gbt":
        doc["base_score"] = model.base_score_
        doc["trees"] = [t.to_node() for t in model.trees_]
    else:
        doc["weights"] = {
            k: {"shape": list(v.shape), "dtype": str(v.dtype), "data": v.ravel().tolist()}
            for k, v in model.params_.items()
        }
        doc["loss_curve"] = model.loss_curve_.tolist()
    return doc


def model_from_dict(doc: dict):
    if doc.get("format") != "wearable-anxiety-model":
        raise ValueError("not a model document")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model document version {doc.get('version')!r}")
    kind = doc["kind"]
    params = dict(doc["params"])
    if kind == "random_forest":
        model = RandomForestRegressor(**params)
        model.trees_ = [Tree.from_node(n) for n in doc["trees"]]
    elif kind == "gbt":
        model = GradientBoostedTreesRegressor(**params)
        model.base_score_ = float(doc["base_score"])
        model.trees_ = [Tree.from_node(n) for n in doc["trees"]]
    elif kind == "lstm":
        params["units"] = tuple(params["units"])
        model = LSTMRegressor(**params)
        model.params_ = {
            k: np.asarray(w["data"], dtype=w["dtype"]).reshape(w["shape"])
            for k, w in doc["weights"].items()
        }
        model.loss_curve_ = np.asarray(doc["loss_curve"])
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    model.n_features_in_ = int(doc["n_features"])
    return model


def save_model(model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)), encoding="utf-8")


def load_model(path: str | Path):
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

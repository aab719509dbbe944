from .base import Dataset
from .boosting import GradientBoostedTreesRegressor
from .forest import RandomForestRegressor
from .lstm import LSTMRegressor
from .serialize import load_model, model_from_dict, model_to_dict, save_model

__all__ = [
    "Dataset",
    "GradientBoostedTreesRegressor",
    "LSTMRegressor",
    "RandomForestRegressor",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "save_model",
]

"""Leave-one-out training harness for binary grade prediction over cubes."""

from .dataset import CubeDataset, Sample, load_dataset
from .loocv import (AggregateReport, FoldResult, SkippedFold, aggregate_folds,
                    loocv)
from .models import build_model, parameter_count
from .train import TrainConfig, TrainResult, predict, train_one

__all__ = [
    "AggregateReport", "CubeDataset", "FoldResult", "Sample", "SkippedFold",
    "TrainConfig", "TrainResult", "aggregate_folds", "build_model",
    "load_dataset", "loocv", "parameter_count", "predict", "train_one",
]

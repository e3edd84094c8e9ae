"""Binary stochastic filtering: trainable Bernoulli gates for feature
selection, neuron pruning and convolution-kernel pruning."""

__version__ = "0.1.0"

from .bsf import BsfChannel, BsfElement, importances, read_snapshot_csv, write_snapshot_csv
from .builders import build_cnn, build_mlp
from .data import Dataset, load_csv, load_idx, one_hot, standardize
from .errors import (
    BsfError, ConfigurationError, DimensionError, DivergenceError, FormatError, InputError, ParseError,
    PruningError, SelectionError, StateError,
)
from .frames import render_frame
from .metrics import accuracy, silhouette_coefficient
from .network import Network
from .optim import AdamConfig
from .tensor import RngStream
from .thresholds import PruneThreshold
from .training import CVResult, RunReport, TrainConfig, evaluate, fine_tune, kfold_cv, train
from .workflows import prune_kernels, prune_neurons, select_features

__all__ = [
    "AdamConfig", "BsfChannel", "BsfElement", "BsfError", "CVResult", "ConfigurationError", "Dataset",
    "DimensionError", "DivergenceError", "FormatError", "InputError", "Network", "ParseError",
    "PruneThreshold", "PruningError", "RngStream", "RunReport", "SelectionError", "StateError",
    "TrainConfig", "accuracy", "build_cnn", "build_mlp", "evaluate", "fine_tune", "importances",
    "kfold_cv", "load_csv", "load_idx", "one_hot", "prune_kernels", "prune_neurons",
    "read_snapshot_csv", "render_frame", "select_features", "silhouette_coefficient", "standardize",
    "train", "write_snapshot_csv",
]

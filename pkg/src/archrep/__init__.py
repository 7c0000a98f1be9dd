"""Graph-aided Transformer representations of neural network architectures.

Networks are encoded as token sequences plus an adjacency matrix, passed
through blocks whose attention is restricted to graph neighbours, and pooled
into a vector from which latency or accuracy is predicted.
"""

__version__ = "0.1.0"

from .autodiff import Tape, Tensor, backward, check_gradients, constant, parameter
from .blocks import BlockConfig
from .checkpoint import Checkpoint, load_checkpoint, load_model, save_checkpoint
from .data import (
    DatasetFile,
    SyntheticConfig,
    generate_synthetic,
    load_dataset,
    oracle_accuracy,
    oracle_latency,
    save_dataset,
    split_dataset,
)
from .encoding import EncodingConfig, encode_graph, positional_encode, tokenize
from .errors import (
    ArchRepError,
    ConfigurationError,
    DimensionError,
    GradientError,
    GraphValidationError,
    NonDeterministicError,
    NumericalError,
    VocabularyError,
)
from .graph import NetworkGraph, OpDescriptor, validate_graph
from .metrics import MetricReport, PredictionRecord, metric_acc_delta, metric_kendall, metric_mape
from .predictor import Model, ModelConfig, predict_accuracy, predict_latency
from .training import Adam, TrainConfig, evaluate, lr_at, mse_loss, train

__all__ = [
    "Adam",
    "ArchRepError",
    "BlockConfig",
    "Checkpoint",
    "ConfigurationError",
    "DatasetFile",
    "DimensionError",
    "EncodingConfig",
    "GradientError",
    "GraphValidationError",
    "MetricReport",
    "Model",
    "ModelConfig",
    "NetworkGraph",
    "NonDeterministicError",
    "NumericalError",
    "OpDescriptor",
    "PredictionRecord",
    "SyntheticConfig",
    "Tape",
    "Tensor",
    "TrainConfig",
    "VocabularyError",
    "backward",
    "check_gradients",
    "constant",
    "encode_graph",
    "evaluate",
    "generate_synthetic",
    "load_checkpoint",
    "load_dataset",
    "load_model",
    "lr_at",
    "metric_acc_delta",
    "metric_kendall",
    "metric_mape",
    "mse_loss",
    "oracle_accuracy",
    "oracle_latency",
    "parameter",
    "positional_encode",
    "predict_accuracy",
    "predict_latency",
    "save_checkpoint",
    "save_dataset",
    "split_dataset",
    "tokenize",
    "train",
    "validate_graph",
]

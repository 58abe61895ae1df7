"""Self-contrastive graph diffusion embeddings for attributed-graph node clustering."""

from .evaluate import ClusterResult, MetricsReport, kmeans, metrics
from .graph import AttributedGraph, GraphOperators, KernelParams, load_dataset
from .objective import build_operators
from .presets import PRESETS, get_preset
from .trainer import TrainConfig, TrainingDiverged, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "AttributedGraph",
    "ClusterResult",
    "GraphOperators",
    "KernelParams",
    "MetricsReport",
    "PRESETS",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "build_operators",
    "get_preset",
    "kmeans",
    "load_dataset",
    "metrics",
    "train",
]

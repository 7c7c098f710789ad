"""Semantic graph convolutional networks on a small numpy autodiff core."""
from .graphstore import Graph, DatasetManifest, load_citation_dataset, make_splits
from .routing import ModelParams, RoutingConfig, forward_disentangled
from .training import TrainConfig, TrainReport, grad_check, init_params, train

__all__ = [
    "DatasetManifest",
    "Graph",
    "ModelParams",
    "RoutingConfig",
    "TrainConfig",
    "TrainReport",
    "forward_disentangled",
    "grad_check",
    "init_params",
    "load_citation_dataset",
    "make_splits",
    "train",
]

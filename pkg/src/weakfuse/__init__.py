"""Weak-supervision toolkit: label-model aggregation, entropy-budgeted subset
selection and a classifier-guided conditional GAN, trained jointly."""
from .data import WeakDataset, load_dataset, synth_dataset
from .label_model import ABSTAIN
from .selection import BACKEND as SELECTION_BACKEND
from .train import TrainConfig, TrainState, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "ABSTAIN",
    "SELECTION_BACKEND",
    "TrainConfig",
    "TrainState",
    "WeakDataset",
    "evaluate",
    "load_dataset",
    "synth_dataset",
    "train",
]

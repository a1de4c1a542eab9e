"""Temporal Unet for sample-level action recognition on WiFi CSI series."""
__version__ = "0.1.0"

from .model import TUnetConfig, build, forward, backward, predict, load_checkpoint, save_checkpoint
from .optim import AdamState, TrainConfig, adam_step, lr_at_epoch, train_epoch
from .data import CsiSeries, DatasetSplit, load_dataset, normalize, synth_generate, to_detection_labels
from .metrics import ap_at, confusion, mean_ap, per_series_accuracy

__all__ = [
    "TUnetConfig", "build", "forward", "backward", "predict", "load_checkpoint", "save_checkpoint",
    "AdamState", "TrainConfig", "adam_step", "lr_at_epoch", "train_epoch",
    "CsiSeries", "DatasetSplit", "load_dataset", "normalize", "synth_generate", "to_detection_labels",
    "ap_at", "confusion", "mean_ap", "per_series_accuracy",
]

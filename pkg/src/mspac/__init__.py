"""Cross-modality (RGB-IR) re-identification with multi-scale part-aware
cascading attention and a marginal exponential center loss, on a small
NumPy autodiff engine."""

from .config import RunConfig
from .data import SynthConfig, generate_dataset
from .encoder import EncoderConfig
from .losses import LossConfig, mecen_loss
from .metrics import EvalMode, cmc, evaluate, mean_ap
from .model import Model
from .mspac import MspacConfig, cascade
from .optim import SGD, OptimConfig

__all__ = [
    "EncoderConfig",
    "EvalMode",
    "LossConfig",
    "Model",
    "MspacConfig",
    "OptimConfig",
    "RunConfig",
    "SGD",
    "SynthConfig",
    "cascade",
    "cmc",
    "evaluate",
    "generate_dataset",
    "mean_ap",
    "mecen_loss",
]

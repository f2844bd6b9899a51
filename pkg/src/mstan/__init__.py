"""Multi-scale temporal alignment network for risk prediction on irregular series."""

from .metrics import MetricsReport, evaluate, threshold_sweep
from .model import ModelConfig, backward, forward, init_params, load_checkpoint, save_checkpoint
from .seqdata import Dataset, IrregularSeries, PaddedBatch, load_records, make_batch, preprocess
from .synthgen import GenConfig, bayes_reference, generate_dataset
from .training import TrainConfig, TrainHistory, bce_loss, grad_check, train

__version__ = "0.1.0"

from .batches import PrefixBatch, SequenceBatch, make_batches, make_prefix_batches
from .checkpoint import load_checkpoint, save_checkpoint
from .decoding import generate_caption
from .lstm import LstmCaptioner, LstmConfig
from .training import TrainResult, TrainSchedule, evaluate_loss, train
from .transformer import (
    TransformerCaptioner,
    TransformerConfig,
    VisualEncoder,
    VisualMemory,
    sinusoidal_positions,
)

__all__ = [
    "PrefixBatch",
    "SequenceBatch",
    "make_batches",
    "make_prefix_batches",
    "load_checkpoint",
    "save_checkpoint",
    "generate_caption",
    "LstmCaptioner",
    "LstmConfig",
    "TrainResult",
    "TrainSchedule",
    "evaluate_loss",
    "train",
    "TransformerCaptioner",
    "TransformerConfig",
    "VisualEncoder",
    "VisualMemory",
    "sinusoidal_positions",
]

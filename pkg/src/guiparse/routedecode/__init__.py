"""Route-then-predict demonstrator: token router, toy decoders, training and comparison."""

from .experiment import ExperimentConfig, compare_decoders, format_table
from .infer import PARSE_QUERY, InferResult, ground, infer
from .loss import LossResult, TrainConfig, matched_loss
from .model import (
    DecoderModel,
    ModelConfig,
    adapt_vision,
    decode_coords,
    decode_discrete,
    init_model,
    load_model,
    save_model,
    zero_heads,
)
from .tokens import LabelVocab, StreamToken, Tag, TokenEvent, default_vocab, route
from .train import TrainingDiverged, TrainResult, train

__all__ = [
    "DecoderModel",
    "ExperimentConfig",
    "InferResult",
    "LabelVocab",
    "LossResult",
    "ModelConfig",
    "PARSE_QUERY",
    "StreamToken",
    "Tag",
    "TokenEvent",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "adapt_vision",
    "compare_decoders",
    "decode_coords",
    "decode_discrete",
    "default_vocab",
    "format_table",
    "ground",
    "infer",
    "init_model",
    "load_model",
    "matched_loss",
    "route",
    "save_model",
    "train",
    "zero_heads",
]

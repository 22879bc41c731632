"""Neural graph-to-text: encoder/decoder model, training, and decoding."""

from .data import (
    N_RELATIONS,
    UNLABELED_RELATION,
    EncodedInstance,
    encode_graph_instance,
    encode_pairs,
    encode_sequence_instance,
)
from .decoding import beam_search, generate_text
from .model import Graph2Text, ModelConfig, sinusoidal_positions
from .training import TrainConfig, TrainResult, pretrain_finetune, token_accuracy, train_model
from .vocab import BOS, EOS, PAD, UNK, Vocab, token_vocab_from_pairs, type_vocab

__all__ = [
    "N_RELATIONS",
    "UNLABELED_RELATION",
    "EncodedInstance",
    "encode_graph_instance",
    "encode_pairs",
    "encode_sequence_instance",
    "beam_search",
    "generate_text",
    "Graph2Text",
    "ModelConfig",
    "sinusoidal_positions",
    "TrainConfig",
    "TrainResult",
    "pretrain_finetune",
    "token_accuracy",
    "train_model",
    "BOS",
    "EOS",
    "PAD",
    "UNK",
    "Vocab",
    "token_vocab_from_pairs",
    "type_vocab",
]

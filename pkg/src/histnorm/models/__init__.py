from .attention import multi_head_attention, soft_attention
from .cells import gru_cell_step, lstm_cell_step, rnn_cell_step
from .checkpoint import load_checkpoint, save_checkpoint
from .config import CHAR_COUNTERPART, PRESETS, PROFILES, ConfigError, ModelConfig, make_config
from .seq2seq import Batch, DecoderState, EncoderOutput, Seq2Seq, make_batch, param_shapes

__all__ = [
    "Batch", "CHAR_COUNTERPART", "ConfigError", "DecoderState", "EncoderOutput", "ModelConfig",
    "PRESETS", "PROFILES", "Seq2Seq", "gru_cell_step", "load_checkpoint", "lstm_cell_step",
    "make_batch", "make_config", "multi_head_attention", "param_shapes", "rnn_cell_step",
    "save_checkpoint", "soft_attention",
]
